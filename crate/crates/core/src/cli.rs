//! Command-line front end: `gen`, `train` and `report`.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage, configuration or input
//! error, 3 training divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{config_to_string, load_config};
use crate::datagen::{class_counts, load_dataset, save_dataset, synth_dataset, ClassProfile, Dataset};
use crate::error::{Error, Result};
use crate::model::save_checkpoint;
use crate::report::{load_metrics, mean_std, save_metrics, write_report, CONFUSION_CSV};
use crate::trainer::{run_experiment, RunResult, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Seed fallback when `--seed` is absent.
pub const SEED_ENV: &str = "SEMIFORGE_SEED";

#[derive(Debug, Parser)]
#[command(name = "semiforge", version, about = "Class-imbalanced semi-supervised training on synthetic data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic imbalanced dataset and print its class counts.
    Gen(GenArgs),
    /// Train on a dataset; writes metrics, checkpoints and a summary.
    Train(TrainArgs),
    /// Turn metrics streams into CSV plot data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of classes.
    #[arg(long = "K")]
    pub k: usize,
    /// Labeled head-class count.
    #[arg(long = "N1")]
    pub n1: usize,
    /// Unlabeled count of class 1.
    #[arg(long = "M1")]
    pub m1: usize,
    /// Labeled imbalance ratio.
    #[arg(long)]
    pub gamma_l: f64,
    /// Unlabeled imbalance ratio; below 1 reverses the profile.
    #[arg(long)]
    pub gamma_u: f64,
    /// Feature dimension.
    #[arg(short = 'd', long = "dim", default_value_t = 8)]
    pub dim: usize,
    /// Minimum distance between class centers.
    #[arg(long, default_value_t = 3.5)]
    pub class_sep: f64,
    #[arg(long, default_value_t = 200)]
    pub test_per_class: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// `key = value` configuration file; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// First seed; later runs use consecutive seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Replace the confidence-decay bank with a FIFO queue.
    #[arg(long)]
    pub no_bank: bool,
    /// Disable hard-example reweighting and the lowered threshold.
    #[arg(long)]
    pub no_oheml: bool,
    /// Disable embedding alignment.
    #[arg(long)]
    pub no_ea: bool,
    /// Disable semantic pseudo-label mixing.
    #[arg(long)]
    pub no_plce: bool,
    /// Disable the balanced classifier.
    #[arg(long)]
    pub no_bc: bool,
    /// Comma-separated components to disable (`bank,oheml,ea,plce,bc`), or
    /// `all` for the plain FixMatch baseline.
    #[arg(long, value_delimiter = ',')]
    pub ablate: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files, one per run.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Maps an error to its process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_)
        | Error::InvalidProfile(_)
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::Io { .. } => EXIT_USAGE,
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::OracleFailure(_) | Error::Inconsistent(_) | Error::Unavailable => EXIT_INTERNAL,
    }
}

/// Parses arguments and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Writes to stdout, ignoring failures such as a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn counts_table(ds: &Dataset) -> String {
    let (l, u, t) = (ds.labeled_counts(), ds.unlabeled_counts(), ds.test_counts());
    let mut out = String::from("class  labeled  unlabeled  test\n");
    for k in 0..ds.k {
        let _ = writeln!(out, "{k:>5}  {:>7}  {:>9}  {:>4}", l[k], u[k], t[k]);
    }
    let sum = |v: &[usize]| v.iter().sum::<usize>();
    let _ = writeln!(out, "total  {:>7}  {:>9}  {:>4}", sum(&l), sum(&u), sum(&t));
    out
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let profile = ClassProfile { k: a.k, n1: a.n1, m1: a.m1, gamma_l: a.gamma_l, gamma_u: a.gamma_u };
    class_counts(&profile)?;
    let seed = a.seed.or(env_seed()?).unwrap_or(0);
    let ds = synth_dataset(&profile, a.dim, a.class_sep, a.test_per_class, seed)?;
    save_dataset(&ds, &a.out)?;
    emit(&counts_table(&ds));
    emit(&format!("wrote {}\n", a.out.display()));
    Ok(())
}

/// Resolves the configuration for `train`: file (or defaults), then seed
/// and ablation overrides.
pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed.or(env_seed()?) {
        cfg.seed = seed;
    }
    let f = &mut cfg.flags;
    f.use_bank &= !a.no_bank;
    f.use_oheml &= !a.no_oheml;
    f.use_ea &= !a.no_ea;
    f.use_plce &= !a.no_plce;
    f.use_balanced &= !a.no_bc;
    for item in &a.ablate {
        match item.trim() {
            "all" => *f = crate::trainer::Ablation::BASELINE,
            "bank" => f.use_bank = false,
            "oheml" => f.use_oheml = false,
            "ea" => f.use_ea = false,
            "plce" => f.use_plce = false,
            "bc" => f.use_balanced = false,
            "" => {}
            other => return Err(Error::Config(format!("unknown component {other:?} in --ablate"))),
        }
    }
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_summary(seed: u64, run: &RunResult, dir: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed {seed}:");
    match run.best_metrics() {
        Some(b) => {
            let _ = writeln!(s, "  best epoch        {}", b.epoch);
            let _ = writeln!(s, "  best accuracy     {:.4}", b.acc_headline);
            let _ = writeln!(s, "  standard head     {:.4}", b.acc_std);
            let _ = writeln!(s, "  balanced head     {:.4}", b.acc_bal);
            let _ = writeln!(s, "  per-class         {}", fmt_vec(&b.acc_per_class));
            let _ = writeln!(s, "  confusion matrix  {}", dir.join(CONFUSION_CSV).display());
        }
        None => {
            let _ = writeln!(s, "  no epochs trained");
        }
    }
    s
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(a)?;
    let ds = load_dataset(&a.dataset)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut summary = String::new();
    let mut best_accs = Vec::new();
    let mut per_class: Vec<Vec<f64>> = Vec::new();
    for i in 0..a.seeds {
        let seed = cfg.seed + i as u64;
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let dir = a.out.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_file(&dir.join("config.txt"), &config_to_string(&run_cfg))?;
        let run = run_experiment(&run_cfg, &ds, |_, _| {})?;
        save_metrics(&run.metrics, dir.join("metrics.jsonl"))?;
        save_checkpoint(&run.final_params, dir.join("final.ckpt"))?;
        save_checkpoint(&run.best_params, dir.join("best.ckpt"))?;
        if !run.metrics.is_empty() {
            write_report(std::slice::from_ref(&run.metrics), &dir)?;
        }
        if let Some(b) = run.best_metrics() {
            best_accs.push(b.acc_headline);
            per_class.push(b.acc_per_class.clone());
        }
        summary.push_str(&run_summary(seed, &run, &dir));
    }
    if !best_accs.is_empty() {
        let (m, s) = mean_std(&best_accs);
        let _ = writeln!(summary, "over {} run(s):", best_accs.len());
        let _ = writeln!(summary, "  best accuracy     {:.4} ± {:.4}", m, s);
        let k = per_class[0].len();
        let cols: Vec<String> = (0..k)
            .map(|c| {
                let v: Vec<f64> = per_class.iter().map(|p| p[c]).collect();
                let (m, s) = mean_std(&v);
                format!("{m:.4} ± {s:.4}")
            })
            .collect();
        let _ = writeln!(summary, "  per-class         [{}]", cols.join(", "));
    }
    write_file(&a.out.join("summary.txt"), &summary)?;
    emit(&summary);
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let runs = a.metrics.iter().map(load_metrics).collect::<Result<Vec<_>>>()?;
    if runs.iter().any(Vec::is_empty) {
        return Err(Error::invalid("a metrics file has no records"));
    }
    for p in write_report(&runs, &a.out)? {
        emit(&format!("wrote {}\n", p.display()));
    }
    Ok(())
}
