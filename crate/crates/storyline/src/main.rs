use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use storyline::config::RunConfig;
use storyline::{pipeline, Error, Result};

/// Event-conditioned story generation pipeline.
///
/// Settings resolve as flag > config file > default. Every command writes
/// the resolved `config.txt` and a `manifest.json` to its output directory.
#[derive(Parser)]
#[command(version = env!("STORYLINE_VERSION"), propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Extract event sequences and the event graph from CoNLL-U parses.
    Extract {
        /// A .conllu file or a directory of them.
        input: Option<PathBuf>,
    },
    /// Build vocabulary and train/valid/test records. With --book, builds
    /// post-training windows from one long text instead.
    Prepare,
    /// Train on prepared records, keeping the best validation parameters.
    Train,
    /// Continue training on book windows; the result is tagged "ke".
    Posttrain,
    /// Generate a story for every record of the chosen split.
    Generate,
    /// Score generated stories against their references.
    Evaluate,
    /// Merge evaluated runs into one table.
    Report {
        /// Runs as LABEL=DIR, one table row each.
        #[arg(required = true)]
        runs: Vec<String>,
    },
}

#[derive(Args)]
struct Opts {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Comma list of cm, sen, leading, events.
    #[arg(long, global = true)]
    ablate: Option<String>,
    /// Same as --ablate events.
    #[arg(long, global = true)]
    no_events: bool,
    /// greedy or nucleus.
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    stories: Option<PathBuf>,
    #[arg(long, global = true)]
    conllu: Option<PathBuf>,
    #[arg(long, global = true)]
    events: Option<PathBuf>,
    #[arg(long, global = true)]
    word_vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    sentence_embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    init: Option<PathBuf>,
    #[arg(long, global = true)]
    donor: Option<PathBuf>,
    #[arg(long, global = true)]
    generated: Option<PathBuf>,
    #[arg(long, global = true)]
    book: Option<PathBuf>,
    /// train, valid or test.
    #[arg(long, global = true)]
    split: Option<String>,
    #[arg(long, global = true)]
    label: Option<String>,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let strings = [
            ("seed", &self.seed),
            ("beta", &self.beta),
            ("delta", &self.delta),
            ("lambda", &self.lambda),
            ("ablate", &self.ablate),
            ("strategy", &self.strategy),
            ("p", &self.p),
            ("epochs", &self.epochs),
            ("split", &self.split),
            ("label", &self.label),
        ];
        for (k, v) in strings {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        let paths = [
            ("out", &self.out),
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
        ];
        for (k, v) in paths {
            if let Some(v) = v {
                cfg.set(k, &v.to_string_lossy())?;
            }
        }
        if self.no_events {
            cfg.model.use_events = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.opts.resolve()?;
    if let Command::Extract { input: Some(p) } = &cli.command {
        cfg.conllu = Some(p.clone());
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("`out` is required (--out DIR)".into()))?;
    let manifest = match &cli.command {
        Command::Extract { .. } => pipeline::extract(&cfg, &out)?,
        Command::Prepare if cfg.book.is_some() => pipeline::prepare_book(&cfg, &out)?,
        Command::Prepare => pipeline::prepare(&cfg, &out)?,
        Command::Train => pipeline::train(&cfg, &out)?,
        Command::Posttrain => pipeline::posttrain(&cfg, &out)?,
        Command::Generate => pipeline::generate(&cfg, &out)?,
        Command::Evaluate => pipeline::evaluate(&cfg, &out)?,
        Command::Report { runs } => {
            let runs = runs
                .iter()
                .map(|r| {
                    r.split_once('=')
                        .map(|(l, d)| (l.to_string(), PathBuf::from(d)))
                        .ok_or_else(|| {
                            Error::Config(format!("report expects LABEL=DIR, got `{r}`"))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            pipeline::report(&cfg, &runs, &out)?
        }
    };
    let counts: Vec<String> = manifest
        .counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    eprintln!(
        "{}: wrote {} ({})",
        manifest.command,
        out.display(),
        counts.join(" ")
    );
    if manifest.counts.get("untrained").is_some_and(|&n| n > 0) {
        eprintln!(
            "warning: {} stories generated from an untrained model",
            manifest.counts["untrained"]
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
