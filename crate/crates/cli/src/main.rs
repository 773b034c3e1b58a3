use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;

use settings::Settings;

/// Configuration or usage problem detected by the command-line layer.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "wkd",
    version,
    about = "Distill VAE topic models with a Wasserstein + soft-label loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the vocabulary and BoW cache from a TSV corpus.
    Prepare(Opts),
    /// Train the combined-input teacher once.
    TrainTeacher(Opts),
    /// Train students against a frozen teacher over several seeds.
    Distill(Opts),
    /// Score a checkpoint's topics with NPMI and CV.
    Eval(Opts),
    /// Tabulate medians and deltas across coherence reports.
    Compare {
        #[command(flatten)]
        opts: Opts,
        /// Coherence report CSV files.
        reports: Vec<PathBuf>,
    },
    /// Parameter counts and compression for the bundled presets.
    Params(Opts),
}

/// Flags shared by every subcommand. Each overrides the INI key of the
/// same name (dashes become underscores).
#[derive(Args, Debug, Default)]
struct Opts {
    /// Flat INI file with default settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TSV corpus for `prepare`; the prepared directory otherwise.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Write synthetic embeddings of the given dims (`teacher,student`).
    #[arg(long)]
    synth_embeddings: Option<String>,
    #[arg(long)]
    teacher_emb: Option<String>,
    /// Teacher embedding width for `params`.
    #[arg(long)]
    teacher_dim: Option<usize>,
    /// Student embedding width for `params`.
    #[arg(long)]
    student_dim: Option<usize>,
    #[arg(long)]
    student_emb: Option<String>,
    /// Number of topics.
    #[arg(long)]
    k: Option<usize>,
    /// Teacher hidden layers; defaults to the preset for `--preset`.
    #[arg(long)]
    depth: Option<usize>,
    /// Dataset name for the bundled depth presets (`20ng`, `m10`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Dirichlet concentration of the prior (default 1/K).
    #[arg(long)]
    prior_alpha: Option<f64>,
    /// Teacher checkpoint directory.
    #[arg(long)]
    teacher: Option<String>,
    /// Checkpoint directory to evaluate or compare.
    #[arg(long)]
    checkpoint: Option<String>,
    /// Model label written into reports.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    top_n: Option<usize>,
    /// Topic-word ranking: `decoded` (normalized decoder weights) or `raw` beta.
    #[arg(long)]
    ranking: Option<String>,
    /// Which topic vector feeds the teacher decoder for soft labels:
    /// `own` or `student`.
    #[arg(long)]
    teacher_theta: Option<String>,
    /// Drop the Wasserstein term from the distillation loss.
    #[arg(long)]
    no_2w: bool,
    /// Drop the soft-label term from the distillation loss.
    #[arg(long)]
    no_ce: bool,
    #[arg(long)]
    out: Option<String>,
}

impl Opts {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::from_ini_file(p)?,
            None => Settings::default(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.set(k, v);
            }
        };
        put("dataset", self.dataset.clone());
        put("vocab_size", self.vocab_size.map(|v| v.to_string()));
        put("synth_embeddings", self.synth_embeddings.clone());
        put("teacher_emb", self.teacher_emb.clone());
        put("student_emb", self.student_emb.clone());
        put("teacher_dim", self.teacher_dim.map(|v| v.to_string()));
        put("student_dim", self.student_dim.map(|v| v.to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("depth", self.depth.map(|v| v.to_string()));
        put("preset", self.preset.clone());
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("temperature", self.temperature.map(|v| v.to_string()));
        put("runs", self.runs.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("prior_alpha", self.prior_alpha.map(|v| v.to_string()));
        put("teacher", self.teacher.clone());
        put("checkpoint", self.checkpoint.clone());
        put("tag", self.tag.clone());
        put("top_n", self.top_n.map(|v| v.to_string()));
        put("ranking", self.ranking.clone());
        put("teacher_theta", self.teacher_theta.clone());
        put("no_2w", self.no_2w.then(|| "true".into()));
        put("no_ce", self.no_ce.then(|| "true".into()));
        put("out", self.out.clone());
        Ok(s)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<wkd::Error>() {
            return e.exit_code() as u8;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    commands::init_threads()?;
    match cli.command {
        Command::Prepare(o) => commands::prepare(&o.settings()?),
        Command::TrainTeacher(o) => commands::train_teacher(&o.settings()?),
        Command::Distill(o) => commands::distill(&o.settings()?),
        Command::Eval(o) => commands::eval(&o.settings()?),
        Command::Compare { opts, reports } => commands::compare(&opts.settings()?, &reports),
        Command::Params(o) => commands::params(&o.settings()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
