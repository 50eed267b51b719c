//! The `earl` command line: configuration, run-directory artifacts and the
//! pipeline driver.
//!
//! | subcommand | reads | writes |
//! |---|---|---|
//! | `gen-data` | | `corpus.json` |
//! | `sft` | `corpus.json` | `sft.ckpt`, `sft_loss.csv` |
//! | `train` | `corpus.json`, `sft.ckpt` | `rl.ckpt`, `metrics.csv` |
//! | `eval` | `corpus.json`, `rl.ckpt` (else `sft.ckpt`) | `eval.csv` |
//! | `score` | `corpus.json`, candidate file | breakdown JSON on stdout |
//! | `analyze` | `corpus.json`, `sft.ckpt` | `entropy_hist.csv/svg`, `token_classes.csv`, `top_tokens.csv`, `heatmap_<id>.csv/svg` |
//! | `ablate` | `corpus.json`, `sft.ckpt` | `ablation.csv` |
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime. Every error is
//! printed as one line `error:<kind>: <message>`.

pub mod checkpoint;
pub mod config;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{ablation_csv, heatmap_csv, heatmap_svg};
use crate::minirtl::Vocab;
use crate::policy::PolicyParams;
use crate::reward::score_text;
use crate::taskgen::Corpus;
use checkpoint::CheckpointError;
use config::{ConfigError, RunConfig};
use pipeline::StageError;

pub const CORPUS_FILE: &str = "corpus.json";
pub const SFT_CKPT: &str = "sft.ckpt";
pub const RL_CKPT: &str = "rl.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl ToString) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    /// `error:<kind>: <message>` on a single line.
    pub fn line(&self) -> String {
        format!("error:{}: {}", self.kind.name(), self.message.replace(['\n', '\r'], " "))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::Read { .. } => ErrorKind::Usage,
            _ => ErrorKind::Validation,
        };
        CliError::new(kind, e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let kind = match e {
            CheckpointError::Io(_) => ErrorKind::Runtime,
            _ => ErrorKind::Validation,
        };
        CliError::new(kind, e)
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::new(ErrorKind::Runtime, e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "earl", version, about = "Entropy-gated RL with verifiable rewards on MiniRTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and persist the task corpus.
    GenData,
    /// Supervised initialization from the corpus.
    Sft,
    /// RL from the SFT checkpoint.
    Train {
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the heldout split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a candidate source file against one task.
    Score {
        #[arg(long)]
        task: String,
        #[arg(long)]
        candidate: PathBuf,
    },
    /// Token-entropy study on heldout rollouts.
    Analyze {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Quantile ablation grid.
    Ablate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the effective configuration as JSON.
    ShowConfig,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let err = CliError::new(ErrorKind::Usage, first.trim_start_matches("error: "));
            eprintln!("{}", err.line());
            return err.kind.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.workers {
        if n == 0 {
            return Err(CliError::new(ErrorKind::Usage, "--workers must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::new(ErrorKind::Runtime, e))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::new(ErrorKind::Runtime, format!("{}: {e}", path.display())))
}

fn read_corpus(dir: &Path) -> Result<Corpus, CliError> {
    let path = dir.join(CORPUS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::new(ErrorKind::Runtime, format!("{}: {e} (run gen-data first)", path.display())))?;
    Corpus::from_json(&text).map_err(|e| CliError::new(ErrorKind::Validation, format!("{}: {e}", path.display())))
}

fn read_ckpt(path: &Path, vocab: &Vocab, hint: &str) -> Result<PolicyParams, CliError> {
    if !path.exists() {
        return Err(CliError::new(
            ErrorKind::Runtime,
            format!("{} not found (run {hint} first)", path.display()),
        ));
    }
    Ok(checkpoint::load(path, vocab)?)
}

fn save_ckpt(path: &Path, params: &PolicyParams) -> Result<(), CliError> {
    checkpoint::save(path, params).map_err(|e| CliError::new(ErrorKind::Runtime, e))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = Vocab::minirtl();
    let dir = cfg.out_dir.as_path();
    if !matches!(command, Command::ShowConfig | Command::Score { .. }) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new(ErrorKind::Runtime, format!("{}: {e}", dir.display())))?;
    }
    match command {
        Command::ShowConfig => print!("{}", cfg.to_json()),
        Command::GenData => {
            let corpus = pipeline::gen_data(cfg)?;
            write(dir, CORPUS_FILE, corpus.to_json())?;
            println!(
                "corpus: {} train, {} heldout -> {}",
                corpus.train().count(),
                corpus.heldout().count(),
                dir.join(CORPUS_FILE).display()
            );
        }
        Command::Sft => {
            let corpus = read_corpus(dir)?;
            let (params, log) = pipeline::run_sft(cfg, &corpus, vocab)?;
            save_ckpt(&dir.join(SFT_CKPT), &params)?;
            let mut csv = String::from("step,lr,loss\n");
            for s in &log.steps {
                csv.push_str(&format!("{},{},{}\n", s.step, s.lr, s.loss));
            }
            write(dir, "sft_loss.csv", csv)?;
            println!(
                "sft: {} steps, final loss {:.4}",
                log.steps.len(),
                log.steps.last().map_or(f64::NAN, |s| s.loss)
            );
        }
        Command::Train { init } => {
            let corpus = read_corpus(dir)?;
            let init_path = init.clone().unwrap_or_else(|| dir.join(SFT_CKPT));
            let sft = read_ckpt(&init_path, vocab, "sft")?;
            let (params, log) = pipeline::run_rl(cfg, &corpus, &sft, vocab)?;
            save_ckpt(&dir.join(RL_CKPT), &params)?;
            write(dir, METRICS_FILE, log.to_csv())?;
            let last = log.metrics.last();
            println!(
                "train: {} steps ({} skipped), final mean reward {:.4}",
                log.metrics.len(),
                log.skipped_steps.len(),
                last.map_or(f64::NAN, |m| m.mean_reward)
            );
        }
        Command::Eval { checkpoint } => {
            let corpus = read_corpus(dir)?;
            let path = checkpoint.clone().unwrap_or_else(|| {
                let rl = dir.join(RL_CKPT);
                if rl.exists() {
                    rl
                } else {
                    dir.join(SFT_CKPT)
                }
            });
            let params = read_ckpt(&path, vocab, "sft or train")?;
            let report = pipeline::run_eval(cfg, &corpus, &params, vocab)?;
            write(dir, EVAL_FILE, report.to_csv())?;
            let summary: Vec<String> = report.pass_at.iter().map(|(k, p)| format!("pass@{k} {p:.4}")).collect();
            println!("eval {}: {}", path.display(), summary.join(", "));
        }
        Command::Score { task, candidate } => {
            let corpus = read_corpus(dir)?;
            let t = corpus
                .get(task)
                .ok_or_else(|| CliError::new(ErrorKind::Validation, format!("unknown task id `{task}`")))?;
            let text = std::fs::read_to_string(candidate)
                .map_err(|e| CliError::new(ErrorKind::Usage, format!("{}: {e}", candidate.display())))?;
            let b = score_text(vocab, &text, t, &cfg.reward);
            println!("{}", serde_json::to_string(&b).expect("breakdown serializes"));
        }
        Command::Analyze { checkpoint } => {
            let corpus = read_corpus(dir)?;
            let path = checkpoint.clone().unwrap_or_else(|| dir.join(SFT_CKPT));
            let params = read_ckpt(&path, vocab, "sft")?;
            let study = pipeline::run_analysis(cfg, &corpus, &params, vocab)?;
            let r = &study.report;
            write(dir, "entropy_hist.csv", r.histogram_csv())?;
            write(dir, "entropy_hist.svg", r.histogram_svg())?;
            write(dir, "token_classes.csv", r.classes_csv())?;
            write(dir, "top_tokens.csv", r.top_tokens_csv(vocab))?;
            let top = (vocab.len() as f64).ln();
            for (id, recs) in &study.heatmaps {
                write(dir, &format!("heatmap_{id}.csv"), heatmap_csv(recs))?;
                write(dir, &format!("heatmap_{id}.svg"), heatmap_svg(recs, top))?;
            }
            println!(
                "analyze: {} tokens, median {:.4}, mean {:.4}, {:.1}% below {}",
                r.summary.tokens,
                r.summary.median,
                r.summary.mean,
                100.0 * r.summary.fraction_below,
                r.summary.threshold
            );
        }
        Command::Ablate { checkpoint } => {
            let corpus = read_corpus(dir)?;
            let path = checkpoint.clone().unwrap_or_else(|| dir.join(SFT_CKPT));
            let params = read_ckpt(&path, vocab, "sft")?;
            let rows = pipeline::run_ablation(cfg, &corpus, &params, vocab);
            write(dir, ABLATION_FILE, ablation_csv(&rows))?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("ablate: {} rows, {} failed", rows.len(), failed);
        }
    }
    Ok(())
}
