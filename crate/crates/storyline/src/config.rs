//! Flat `key = value` run configuration. Later lines override earlier
//! ones; `#` starts a comment. Command-line flags are applied after the
//! file, so the precedence is flag > file > default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use storyline_core::model::{Ablation, ModelConfig, SentLoss, Strategy, TrainConfig};

use crate::error::{self, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Greedy,
    Nucleus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_steps: Option<usize>,
    pub posttrain_epochs: usize,
    pub strategy: StrategyKind,
    pub p: f64,
    pub max_len: usize,
    /// Kept for provenance; generation runs one story at a time.
    pub infer_batch_size: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub bleu_smoothing: bool,
    pub rouge_l_beta: f64,
    pub stories: Option<PathBuf>,
    pub conllu: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub sentence_embeddings: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub donor: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub book: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Record split that generate and evaluate read.
    pub split: String,
    /// Row label written by evaluate.
    pub label: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            seed: 42,
            epochs: 5,
            batch_size: 64,
            learning_rate: 8e-5,
            max_steps: None,
            posttrain_epochs: 30,
            strategy: StrategyKind::Nucleus,
            p: 0.9,
            max_len: 200,
            infer_batch_size: 15,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            bleu_smoothing: true,
            rouge_l_beta: 1.0,
            stories: None,
            conllu: None,
            events: None,
            word_vectors: None,
            sentence_embeddings: None,
            vocab: None,
            data: None,
            checkpoint: None,
            init: None,
            donor: None,
            generated: None,
            book: None,
            out: None,
            split: "test".into(),
            label: "full".into(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got `{v}`"
        ))),
    }
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        match key {
            "layers" => m.layers = num(key, v)?,
            "heads" => m.heads = num(key, v)?,
            "model_dim" => m.model_dim = num(key, v)?,
            "ffn_dim" => m.ffn_dim = num(key, v)?,
            "vocab_size" => m.vocab_size = num(key, v)?,
            "max_positions" => m.max_positions = num(key, v)?,
            "max_sentences" => m.max_sentences = num(key, v)?,
            "beta" => m.beta = num(key, v)?,
            "delta" => m.delta = num(key, v)?,
            "lambda" => m.lambda = num(key, v)?,
            "sent_loss" => {
                m.sent_loss = match v {
                    "floor" => SentLoss::Floor,
                    "hinge" => SentLoss::Hinge,
                    _ => {
                        return Err(Error::Config(format!(
                            "sent_loss: expected floor or hinge, got `{v}`"
                        )))
                    }
                }
            }
            "dropout" => m.dropout = num(key, v)?,
            "init_std" => m.init_std = num(key, v)?,
            "use_cm" => m.use_cm = flag(key, v)?,
            "use_sen" => m.use_sen = flag(key, v)?,
            "use_leading" => m.use_leading = flag(key, v)?,
            "use_events" => m.use_events = flag(key, v)?,
            "combined_input" => m.combined_input = flag(key, v)?,
            "ablate" => {
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let a = Ablation::parse(name).ok_or_else(|| {
                        Error::Config(format!("ablate: unknown ablation `{name}`"))
                    })?;
                    m.apply(a);
                }
            }
            "seed" => self.seed = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "max_steps" => {
                self.max_steps = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "posttrain_epochs" => self.posttrain_epochs = num(key, v)?,
            "strategy" => {
                self.strategy = match v {
                    "greedy" => StrategyKind::Greedy,
                    "nucleus" => StrategyKind::Nucleus,
                    _ => {
                        return Err(Error::Config(format!(
                            "strategy: expected greedy or nucleus, got `{v}`"
                        )))
                    }
                }
            }
            "p" => self.p = num(key, v)?,
            "max_len" => self.max_len = num(key, v)?,
            "infer_batch_size" => self.infer_batch_size = num(key, v)?,
            "valid_fraction" => self.valid_fraction = num(key, v)?,
            "test_fraction" => self.test_fraction = num(key, v)?,
            "bleu_smoothing" => self.bleu_smoothing = flag(key, v)?,
            "rouge_l_beta" => self.rouge_l_beta = num(key, v)?,
            "stories" => self.stories = path(v),
            "conllu" => self.conllu = path(v),
            "events" => self.events = path(v),
            "word_vectors" => self.word_vectors = path(v),
            "sentence_embeddings" => self.sentence_embeddings = path(v),
            "vocab" => self.vocab = path(v),
            "data" => self.data = path(v),
            "checkpoint" => self.checkpoint = path(v),
            "init" => self.init = path(v),
            "donor" => self.donor = path(v),
            "generated" => self.generated = path(v),
            "book" => self.book = path(v),
            "out" => self.out = path(v),
            "split" => {
                if !["train", "valid", "test"].contains(&v) {
                    return Err(Error::Config(format!(
                        "split: expected train, valid or test, got `{v}`"
                    )));
                }
                self.split = v.into()
            }
            "label" => self.label = v.into(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = error::read_to_string(path)?;
        self.apply_text(&text, path)
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    pub fn render(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("layers", m.layers.to_string());
        kv("heads", m.heads.to_string());
        kv("model_dim", m.model_dim.to_string());
        kv("ffn_dim", m.ffn_dim.to_string());
        kv("vocab_size", m.vocab_size.to_string());
        kv("max_positions", m.max_positions.to_string());
        kv("max_sentences", m.max_sentences.to_string());
        kv("beta", m.beta.to_string());
        kv("delta", m.delta.to_string());
        kv("lambda", m.lambda.to_string());
        kv(
            "sent_loss",
            match m.sent_loss {
                SentLoss::Floor => "floor".into(),
                SentLoss::Hinge => "hinge".into(),
            },
        );
        kv("dropout", m.dropout.to_string());
        kv("init_std", m.init_std.to_string());
        kv("use_cm", m.use_cm.to_string());
        kv("use_sen", m.use_sen.to_string());
        kv("use_leading", m.use_leading.to_string());
        kv("use_events", m.use_events.to_string());
        kv("combined_input", m.combined_input.to_string());
        kv("seed", self.seed.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv(
            "max_steps",
            self.max_steps.map_or("none".into(), |n| n.to_string()),
        );
        kv("posttrain_epochs", self.posttrain_epochs.to_string());
        kv(
            "strategy",
            match self.strategy {
                StrategyKind::Greedy => "greedy".into(),
                StrategyKind::Nucleus => "nucleus".into(),
            },
        );
        kv("p", self.p.to_string());
        kv("max_len", self.max_len.to_string());
        kv("infer_batch_size", self.infer_batch_size.to_string());
        kv("valid_fraction", self.valid_fraction.to_string());
        kv("test_fraction", self.test_fraction.to_string());
        kv("bleu_smoothing", self.bleu_smoothing.to_string());
        kv("rouge_l_beta", self.rouge_l_beta.to_string());
        for (k, p) in [
            ("stories", &self.stories),
            ("conllu", &self.conllu),
            ("events", &self.events),
            ("word_vectors", &self.word_vectors),
            ("sentence_embeddings", &self.sentence_embeddings),
            ("vocab", &self.vocab),
            ("data", &self.data),
            ("checkpoint", &self.checkpoint),
            ("init", &self.init),
            ("donor", &self.donor),
            ("generated", &self.generated),
            ("book", &self.book),
            ("out", &self.out),
        ] {
            kv(k, show(p));
        }
        kv("split", self.split.clone());
        kv("label", self.label.clone());
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            max_steps: self.max_steps,
        }
    }

    pub fn sampling(&self) -> Strategy {
        match self.strategy {
            StrategyKind::Greedy => Strategy::Greedy,
            StrategyKind::Nucleus => Strategy::Nucleus(self.p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        let (v, t) = (self.valid_fraction, self.test_fraction);
        if !(v >= 0.0 && t >= 0.0 && v + t < 1.0) {
            return Err(Error::Config(
                "valid_fraction + test_fraction must lie in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}
