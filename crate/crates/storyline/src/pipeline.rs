//! The pipeline commands. Each writes its outputs plus `config.txt` and
//! `manifest.json` into its output directory and returns the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use storyline_core::corpus::{
    build_record, delexicalize, delexicalize_story, segment_for_posttraining, split_sentences,
    train_bpe, BpeVocab, CorpusError, EmbeddingTable, NameLexicon, StoryRecord,
    MAX_STORY_SENTENCES,
};
use storyline_core::events::{
    build_event_graph, extract_sequence, parse_conllu_documents, serialize_events, ConlluError,
    RoleMap,
};
use storyline_core::metrics::{perplexity_from_nll, MetricReport, ReportOptions, StoryTriple};
use storyline_core::model::{self, Example, GenerateOptions, Model, ModelConfig, StepLog};
use storyline_core::tensor::seeded_rng;

use crate::checkpoint::{self, architecture_hash};
use crate::config::RunConfig;
use crate::error::{self, Error, Result};
use crate::formats::{
    metrics_row, read_events, read_jsonl, read_sentence_embeddings, read_word_vectors,
    repetition_tsv, write_events, write_graph, write_jsonl, GeneratedLine, RecordLine, StoryLine,
    TABLE_COLUMNS,
};
use crate::manifest::{file_hash, Manifest};

pub const EVENTS_FILE: &str = "events.tsv";
pub const GRAPH_FILE: &str = "graph.tsv";
pub const VOCAB_FILE: &str = "vocab.json";
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];
pub const TRAIN_LOG: &str = "train_log.csv";
pub const GENERATED_FILE: &str = "generated.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TSV: &str = "metrics.tsv";
pub const REPETITION_TSV: &str = "repetition.tsv";
pub const TABLE_FILE: &str = "table.tsv";

pub fn records_file(split: &str) -> String {
    format!("{split}.records.jsonl")
}

fn need<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))
}

fn conllu_error(path: &Path, e: ConlluError) -> Error {
    let line = match &e {
        ConlluError::Malformed { line, .. }
        | ConlluError::HeadOutOfRange { line, .. }
        | ConlluError::RootCount { line, .. }
        | ConlluError::MissingStoryId { line } => *line,
    };
    let msg = e.to_string();
    let msg = msg
        .strip_prefix(&format!("line {line}: "))
        .unwrap_or(&msg)
        .to_string();
    Error::parse(path, line, msg)
}

fn conllu_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(input).map_err(error::io(input))? {
        let p = entry.map_err(error::io(input))?.path();
        if p.extension().is_some_and(|e| e == "conllu") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Events and event graph from a CoNLL-U file or a directory of them.
pub fn extract(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let input = need(&cfg.conllu, "conllu")?;
    let roles = RoleMap::default();
    let mut rows = Vec::new();
    let mut surfaces = Vec::new();
    let mut seen = BTreeSet::new();
    let mut manifest = Manifest::new("extract", cfg);
    let mut sentences = 0;
    for path in conllu_inputs(input)? {
        let text = error::read_to_string(&path)?;
        for doc in parse_conllu_documents(&text).map_err(|e| conllu_error(&path, e))? {
            if !seen.insert(doc.story_id.clone()) {
                return Err(Error::format(
                    &path,
                    format!("duplicate story_id {}", doc.story_id),
                ));
            }
            let seq = extract_sequence(&doc.sentences, &roles);
            sentences += seq.len();
            rows.push((doc.story_id, serialize_events(&seq)));
            surfaces.push(seq.surfaces());
        }
        manifest.input(&path.display().to_string(), &path)?;
    }
    let graph = build_event_graph(&surfaces);
    write_events(&out.join(EVENTS_FILE), &rows)?;
    write_graph(&out.join(GRAPH_FILE), &graph)?;
    manifest.counts.insert("stories".into(), rows.len());
    manifest.counts.insert("sentences".into(), sentences);
    manifest.counts.insert("triples".into(), graph.len());
    manifest.output(out, EVENTS_FILE)?;
    manifest.output(out, GRAPH_FILE)?;
    manifest.finish(out, cfg)?;
    Ok(manifest)
}

pub fn read_vocab(path: &Path) -> Result<BpeVocab> {
    serde_json::from_str(&error::read_to_string(path)?)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn write_vocab(path: &Path, vocab: &BpeVocab) -> Result<()> {
    error::write(
        path,
        serde_json::to_string(vocab).expect("vocab serialises") + "\n",
    )
}

/// Loads the embedding source of `cfg`: sentence embeddings if given,
/// otherwise word vectors.
fn embedding_table(cfg: &RunConfig, manifest: &mut Manifest) -> Result<(EmbeddingTable, bool)> {
    if let Some(p) = &cfg.sentence_embeddings {
        manifest.input("sentence_embeddings", p)?;
        return Ok((read_sentence_embeddings(p)?, true));
    }
    if let Some(p) = &cfg.word_vectors {
        manifest.input("word_vectors", p)?;
        return Ok((read_word_vectors(p)?, false));
    }
    Err(Error::Config(
        "prepare needs `word_vectors` or `sentence_embeddings`".into(),
    ))
}

/// Vocabulary from `cfg.vocab`, or BPE trained on the given delexicalised
/// stories and their event surfaces.
fn vocabulary<'a>(
    cfg: &RunConfig,
    texts: impl Iterator<Item = &'a (Vec<String>, Vec<Option<String>>)>,
    manifest: &mut Manifest,
) -> Result<BpeVocab> {
    if let Some(p) = &cfg.vocab {
        manifest.input("vocab", p)?;
        let vocab = read_vocab(p)?;
        if vocab.sep_count() < cfg.model.max_sentences {
            return Err(Error::Config(format!(
                "vocabulary has {} separators but max_sentences is {}",
                vocab.sep_count(),
                cfg.model.max_sentences
            )));
        }
        return Ok(vocab);
    }
    let lexicon = NameLexicon::bundled();
    let mut corpus = Vec::new();
    for (sents, events) in texts {
        corpus.extend(delexicalize_story(sents, &lexicon));
        corpus.extend(events.iter().flatten().map(|e| delexicalize(e, &lexicon)));
    }
    Ok(train_bpe(
        corpus.iter().map(String::as_str),
        cfg.model.vocab_size,
        cfg.model.max_sentences,
    )?)
}

fn write_records(out: &Path, split: &str, records: &[StoryRecord], vocab: &BpeVocab) -> Result<()> {
    let lines: Vec<RecordLine> = records
        .iter()
        .map(|r| RecordLine::from_record(r, vocab))
        .collect();
    write_jsonl(&out.join(records_file(split)), &lines)
}

/// Split sizes for `n` stories: `(train, valid, test)`.
pub fn split_sizes(n: usize, valid_fraction: f64, test_fraction: f64) -> (usize, usize, usize) {
    let test = ((n as f64 * test_fraction).round() as usize).min(n);
    let valid = ((n as f64 * valid_fraction).round() as usize).min(n - test);
    (n - valid - test, valid, test)
}

/// Records, vocabulary and train/valid/test split of a story corpus.
pub fn prepare(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let stories_path = need(&cfg.stories, "stories")?;
    let events_path = need(&cfg.events, "events")?;
    let mut manifest = Manifest::new("prepare", cfg);
    manifest.input("stories", stories_path)?;
    manifest.input("events", events_path)?;
    let stories: Vec<StoryLine> = read_jsonl(stories_path)?;
    let mut events: BTreeMap<String, Vec<Option<String>>> = BTreeMap::new();
    for (id, slots) in read_events(events_path)? {
        if events.insert(id.clone(), slots).is_some() {
            return Err(Error::format(
                events_path,
                format!("duplicate story_id {id}"),
            ));
        }
    }
    let story_ids: BTreeSet<&str> = stories.iter().map(|s| s.story_id.as_str()).collect();
    let event_ids: BTreeSet<&str> = events.keys().map(String::as_str).collect();
    if story_ids != event_ids {
        let missing: Vec<&str> = story_ids.difference(&event_ids).copied().collect();
        let extra: Vec<&str> = event_ids.difference(&story_ids).copied().collect();
        return Err(Error::Invalid(format!(
            "story ids differ between stories and events: no events for {missing:?}, no story for {extra:?}"
        )));
    }

    let mut order: Vec<&str> = story_ids.iter().copied().collect();
    order.shuffle(&mut seeded_rng(cfg.seed));
    let (_, n_valid, n_test) = split_sizes(order.len(), cfg.valid_fraction, cfg.test_fraction);
    let split_of: BTreeMap<&str, &str> = order
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < n_test {
                "test"
            } else if i < n_test + n_valid {
                "valid"
            } else {
                "train"
            };
            (*id, s)
        })
        .collect();

    let by_id: BTreeMap<&str, (Vec<String>, Vec<Option<String>>)> = stories
        .iter()
        .map(|s| {
            (
                s.story_id.as_str(),
                (s.sentences.clone(), events[&s.story_id].clone()),
            )
        })
        .collect();
    let train_texts = by_id
        .iter()
        .filter(|(id, _)| split_of[**id] == "train")
        .map(|(_, v)| v);
    let vocab = vocabulary(cfg, train_texts, &mut manifest)?;
    let (mut table, from_file) = embedding_table(cfg, &mut manifest)?;
    let lexicon = NameLexicon::bundled();

    let mut splits: BTreeMap<&str, Vec<StoryRecord>> =
        SPLITS.iter().map(|s| (*s, Vec::new())).collect();
    for (id, (sents, slots)) in &by_id {
        if !from_file {
            let kept = &sents[..sents.len().min(MAX_STORY_SENTENCES)];
            table.fill_from_words(id, kept);
        }
        let r = build_record(id, sents, slots, &vocab, &lexicon, &table)?;
        splits.get_mut(split_of[id]).unwrap().push(r);
    }
    write_vocab(&out.join(VOCAB_FILE), &vocab)?;
    manifest.output(out, VOCAB_FILE)?;
    for (split, records) in &splits {
        write_records(out, split, records, &vocab)?;
        manifest.counts.insert((*split).into(), records.len());
        manifest.output(out, &records_file(split))?;
    }
    manifest.counts.insert("vocab".into(), vocab.len());
    manifest.finish(out, cfg)?;
    Ok(manifest)
}

/// Post-training records from one long text: non-overlapping 11-sentence
/// windows, all in the train split.
pub fn prepare_book(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let book_path = need(&cfg.book, "book")?;
    let events_path = need(&cfg.events, "events")?;
    let mut manifest = Manifest::new("prepare-book", cfg);
    manifest.input("book", book_path)?;
    manifest.input("events", events_path)?;
    let sentences = split_sentences(&error::read_to_string(book_path)?);
    let rows = read_events(events_path)?;
    let [(book_id, slots)] = rows.as_slice() else {
        return Err(Error::format(
            events_path,
            format!("expected one book, found {} rows", rows.len()),
        ));
    };
    if slots.len() != sentences.len() {
        return Err(CorpusError::EventCount {
            story_id: book_id.clone(),
            sentences: sentences.len(),
            events: slots.len(),
        }
        .into());
    }
    let windows = segment_for_posttraining(&sentences);
    let mut offset = 0;
    let mut raw_windows = Vec::new();
    for (k, (leading, targets)) in windows.iter().enumerate() {
        let mut raw = vec![leading.clone()];
        raw.extend(targets.iter().cloned());
        let ev = slots[offset..offset + raw.len()].to_vec();
        offset += raw.len();
        raw_windows.push((format!("{book_id}-w{k:03}"), (raw, ev)));
    }
    let vocab = vocabulary(cfg, raw_windows.iter().map(|(_, v)| v), &mut manifest)?;
    let (mut table, from_file) = embedding_table(cfg, &mut manifest)?;
    let lexicon = NameLexicon::bundled();
    let mut records = Vec::new();
    for (id, (raw, ev)) in &raw_windows {
        if !from_file {
            table.fill_from_words(id, raw);
        }
        records.push(build_record(id, raw, ev, &vocab, &lexicon, &table)?);
    }
    write_vocab(&out.join(VOCAB_FILE), &vocab)?;
    manifest.output(out, VOCAB_FILE)?;
    for split in SPLITS {
        let rs: &[StoryRecord] = if split == "train" { &records } else { &[] };
        write_records(out, split, rs, &vocab)?;
        manifest.counts.insert(split.into(), rs.len());
        manifest.output(out, &records_file(split))?;
    }
    manifest.counts.insert("sentences".into(), sentences.len());
    manifest.counts.insert("windows".into(), records.len());
    manifest.counts.insert("vocab".into(), vocab.len());
    manifest.finish(out, cfg)?;
    Ok(manifest)
}

/// A prepared data directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub vocab: BpeVocab,
    pub vocab_hash: String,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let vp = dir.join(VOCAB_FILE);
        Ok(Dataset {
            dir: dir.to_path_buf(),
            vocab: read_vocab(&vp)?,
            vocab_hash: file_hash(&vp)?,
        })
    }

    pub fn records(&self, split: &str) -> Result<Vec<RecordLine>> {
        read_jsonl(&self.dir.join(records_file(split)))
    }

    pub fn examples(&self, split: &str, cfg: &ModelConfig) -> Result<Vec<Example>> {
        let path = self.dir.join(records_file(split));
        self.records(split)?
            .iter()
            .map(|line| {
                let r = line
                    .to_record()
                    .map_err(|m| Error::format(&path, format!("{}: {m}", line.story_id)))?;
                Ok(Example::from_record(&r, &self.vocab, cfg)?)
            })
            .collect()
    }

    /// The run's model config with the table size of this vocabulary.
    pub fn model_config(&self, cfg: &RunConfig) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab.len(),
            ..cfg.model.clone()
        }
    }
}

/// Loads a checkpoint and checks it against the run's architecture and
/// vocabulary. Switches turned off either at training time or now stay off.
fn load_checked(
    path: &Path,
    data: &Dataset,
    cfg: &RunConfig,
) -> Result<(Model, checkpoint::CheckpointMeta)> {
    let (model, meta) = checkpoint::load(path)?;
    let want = data.model_config(cfg);
    if architecture_hash(&want, &data.vocab_hash) != meta.config_hash {
        return Err(Error::Invalid(format!(
            "config hash mismatch: checkpoint {} was trained with a different architecture or vocabulary",
            path.display()
        )));
    }
    let trained = &meta.config;
    let resolved = ModelConfig {
        use_cm: want.use_cm && trained.use_cm,
        use_sen: want.use_sen && trained.use_sen,
        use_leading: want.use_leading && trained.use_leading,
        use_events: want.use_events && trained.use_events,
        ..want
    };
    let lineage = model.lineage.clone();
    let steps = model.trained_steps;
    let mut model = Model::from_params(resolved, model.params)?;
    model.lineage = lineage;
    model.trained_steps = steps;
    Ok((model, meta))
}

fn run_training(cfg: &RunConfig, out: &Path, post: bool) -> Result<Manifest> {
    cfg.validate()?;
    let data = Dataset::open(need(&cfg.data, "data")?)?;
    let mcfg = data.model_config(cfg);
    let mut manifest = Manifest::new(if post { "posttrain" } else { "train" }, cfg);
    manifest.input("vocab", &data.dir.join(VOCAB_FILE))?;
    let mut model = match &cfg.init {
        Some(p) => {
            manifest.input("init", &p.join(checkpoint::PARAMS_FILE))?;
            load_checked(p, &data, cfg)?.0
        }
        None => Model::new(mcfg.clone(), cfg.seed)?,
    };
    if let Some(p) = &cfg.donor {
        manifest.input("donor", &p.join(checkpoint::PARAMS_FILE))?;
        let (donor, _) = checkpoint::load(p)?;
        model::transfer_encoder_weights(&donor, &mut model)?;
    }
    let train_set = data.examples("train", &model.config)?;
    let valid_set = if post {
        Vec::new()
    } else {
        data.examples("valid", &model.config)?
    };
    let start = Instant::now();
    let mut log = String::from("step,epoch,l_lm,l_sent,l_overall,wall_clock_s\n");
    let mut on_step = |s: &StepLog| {
        let sent = s.loss.sent.map_or(String::new(), |x| x.to_string());
        writeln!(
            log,
            "{},{},{},{},{},{:.3}",
            s.step,
            s.epoch,
            s.loss.lm,
            sent,
            s.loss.overall,
            start.elapsed().as_secs_f64()
        )
        .unwrap();
    };
    let report = if post {
        model::posttrain(
            &mut model,
            &train_set,
            cfg.posttrain_epochs,
            &cfg.train_config(),
            &mut on_step,
        )?
    } else {
        model::train(
            &mut model,
            &train_set,
            &valid_set,
            &cfg.train_config(),
            &mut on_step,
        )?
    };
    error::write(&out.join(TRAIN_LOG), &log)?;
    checkpoint::save(out, &model, &data.vocab_hash)?;
    for f in [checkpoint::PARAMS_FILE, checkpoint::SIDECAR_FILE] {
        manifest.output(out, f)?;
    }
    manifest
        .counts
        .insert("train_examples".into(), train_set.len());
    manifest
        .counts
        .insert("valid_examples".into(), valid_set.len());
    manifest.counts.insert("steps".into(), report.steps.len());
    if let Some(b) = report.best_epoch {
        manifest.counts.insert("best_epoch".into(), b);
    }
    manifest.lineage = model.lineage.clone();
    manifest.finish(out, cfg)?;
    Ok(manifest)
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    run_training(cfg, out, false)
}

pub fn posttrain(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    run_training(cfg, out, true)
}

/// Stories for every record of `cfg.split`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let data = Dataset::open(need(&cfg.data, "data")?)?;
    let ckpt = need(&cfg.checkpoint, "checkpoint")?;
    let (model, _) = load_checked(ckpt, &data, cfg)?;
    let mut resolved = cfg.clone();
    resolved.model = ModelConfig {
        vocab_size: cfg.model.vocab_size,
        ..model.config.clone()
    };
    let mut manifest = Manifest::new("generate", &resolved);
    manifest.input("checkpoint", &ckpt.join(checkpoint::PARAMS_FILE))?;
    let records = data.records(&cfg.split)?;
    let mut lines = Vec::with_capacity(records.len());
    let mut untrained = 0;
    for (i, r) in records.iter().enumerate() {
        let events = r
            .to_record()
            .map_err(|m| Error::Invalid(format!("record {}: {m}", r.story_id)))?
            .events;
        let opts = GenerateOptions {
            strategy: cfg.sampling(),
            max_len: cfg.max_len,
            seed: cfg.seed.wrapping_add(i as u64),
        };
        let g = model::generate(&model, &data.vocab, &r.leading, &events, &opts)?;
        untrained += usize::from(g.untrained);
        lines.push(GeneratedLine {
            story_id: r.story_id.clone(),
            text: g.text,
            hit_eos: g.hit_eos,
            untrained: g.untrained,
        });
    }
    write_jsonl(&out.join(GENERATED_FILE), &lines)?;
    manifest.output(out, GENERATED_FILE)?;
    manifest.counts.insert("stories".into(), lines.len());
    manifest.counts.insert("untrained".into(), untrained);
    manifest.lineage = model.lineage.clone();
    manifest.finish(out, &resolved)?;
    Ok(manifest)
}

/// The metric report of a generated file against its records.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let data = Dataset::open(need(&cfg.data, "data")?)?;
    let gen_path = need(&cfg.generated, "generated")?;
    let mut manifest = Manifest::new("evaluate", cfg);
    manifest.input("generated", gen_path)?;
    let generated: Vec<GeneratedLine> = read_jsonl(gen_path)?;
    let records: BTreeMap<String, RecordLine> = data
        .records(&cfg.split)?
        .into_iter()
        .map(|r| (r.story_id.clone(), r))
        .collect();
    let refs: Vec<(String, String)> = generated
        .iter()
        .map(|g| {
            records
                .get(&g.story_id)
                .map(|r| (r.leading.clone(), r.reference_text()))
                .ok_or_else(|| {
                    Error::Invalid(format!(
                        "generated story {} has no {} record",
                        g.story_id, cfg.split
                    ))
                })
        })
        .collect::<Result<_>>()?;
    let triples: Vec<StoryTriple<'_>> = generated
        .iter()
        .zip(&refs)
        .map(|(g, (l, r))| StoryTriple {
            leading: l,
            generated: &g.text,
            reference: r,
        })
        .collect();

    let ppl = match &cfg.checkpoint {
        Some(p) => {
            let (model, _) = load_checked(p, &data, cfg)?;
            let ids: BTreeSet<&str> = generated.iter().map(|g| g.story_id.as_str()).collect();
            let mut nll = Vec::new();
            for ex in data.examples(&cfg.split, &model.config)? {
                if ids.contains(ex.story_id.as_str()) {
                    nll.extend(model::token_nll(&model, &ex)?);
                }
            }
            Some(perplexity_from_nll(&nll)?)
        }
        None => None,
    };
    let table = match &cfg.word_vectors {
        Some(p) => {
            manifest.input("word_vectors", p)?;
            Some(read_word_vectors(p)?)
        }
        None => None,
    };
    let tables: Vec<(&str, &EmbeddingTable)> = table.iter().map(|t| ("word_vectors", t)).collect();
    let opts = ReportOptions {
        bleu_smoothing: cfg.bleu_smoothing,
        rouge_l_beta: cfg.rouge_l_beta,
    };
    let report = MetricReport::compute(&triples, ppl, &tables, &opts)?;
    error::write(
        &out.join(METRICS_JSON),
        serde_json::to_string_pretty(&report).expect("report serialises") + "\n",
    )?;
    error::write(
        &out.join(METRICS_TSV),
        format!(
            "{}\n{}\n",
            TABLE_COLUMNS.join("\t"),
            metrics_row(&cfg.label, &report)
        ),
    )?;
    error::write(&out.join(REPETITION_TSV), repetition_tsv(&report))?;
    for f in [METRICS_JSON, METRICS_TSV, REPETITION_TSV] {
        manifest.output(out, f)?;
    }
    manifest.counts.insert("stories".into(), generated.len());
    manifest.finish(out, cfg)?;
    Ok(manifest)
}

/// Merges evaluated runs into one table, a row per `(label, run dir)`.
pub fn report(cfg: &RunConfig, runs: &[(String, PathBuf)], out: &Path) -> Result<Manifest> {
    let mut manifest = Manifest::new("report", cfg);
    let mut s = TABLE_COLUMNS.join("\t") + "\n";
    for (label, dir) in runs {
        let p = dir.join(METRICS_JSON);
        let r: MetricReport = serde_json::from_str(&error::read_to_string(&p)?)
            .map_err(|e| Error::format(&p, e.to_string()))?;
        manifest.input(label, &p)?;
        s += &metrics_row(label, &r);
        s.push('\n');
    }
    error::write(&out.join(TABLE_FILE), s)?;
    manifest.output(out, TABLE_FILE)?;
    manifest.counts.insert("rows".into(), runs.len());
    manifest.finish(out, cfg)?;
    Ok(manifest)
}
