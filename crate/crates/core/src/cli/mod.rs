//! Command-line front end: `train`, `score` and `benchmark`.
//!
//! Settings are layered: defaults, then `--manifest`, then `--config` (a
//! key-value file or a bundled preset), then flags, then `--set key=value`.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

mod run;
mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datakit::DataError;
use crate::models::ModelError;
use crate::netblocks::NetError;
use crate::trainer::TrainError;

pub use run::{
    load_data, mean_stdev, run_benchmark, run_score, run_train, table_entry, BenchmarkReport,
    RunManifest, ScoreOutput, SeedFailure, SeedResult, TrainSummary, FAILED_MARKER, MANIFEST,
    REPORT, RUN_CONF, STANDARDIZER,
};
pub use spec::{load_config_text, parse_seeds, preset, preset_names, DataSource, RunSpec, SynthSpec};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SSADVAE_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{} already exists (use --force to replace it)", .0.display())]
    Exists(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("seed {seed} failed (partial results in {}): {source}", dir.display())]
    BenchmarkFailed {
        dir: PathBuf,
        seed: u64,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Exists(_) => 1,
            CliError::Train(TrainError::Config(_)) => 1,
            CliError::Train(e) if e.is_numerical() => 3,
            CliError::Model(ModelError::NonFinite { .. }) => 3,
            CliError::Model(ModelError::InvalidObjective(_)) => 1,
            CliError::Model(ModelError::Net(NetError::InvalidSpec(_))) => 1,
            CliError::BenchmarkFailed { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ssadvae", version, about = "Semi-supervised anomaly detection with VAEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an ensemble on one split and save it.
    Train(RunArgs),
    /// Score rows with a saved ensemble.
    Score(ScoreArgs),
    /// Split, train and evaluate once per seed; report mean ± stdev AUROC.
    Benchmark(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with numeric features and one label column.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic data: d,n[,shift[,anomalies[,seed]]].
    #[arg(long)]
    pub synth: Option<String>,
    /// Label column: `last`, `none`, a zero-based index or a header name.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Label value that marks an anomaly.
    #[arg(long)]
    pub positive: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SettingArgs {
    /// Key-value config file, or a preset name (cardio, thyroid, ...).
    #[arg(long)]
    pub config: Option<String>,
    /// Manifest of an earlier run to start from.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// vae, mml, dp or hybrid.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub gamma_l: Option<String>,
    #[arg(long)]
    pub gamma_p: Option<String>,
    /// Seed list such as `0-9` or `1,5,7`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// Number of ensemble members.
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta_kl: Option<String>,
    #[arg(long)]
    pub beta_cubo: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    /// Any other setting, e.g. `--set warmup_epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub settings: SettingArgs,
    /// Output root; defaults to $SSADVAE_OUT, then `runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing run directory with the same digest.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Monte-Carlo samples per row.
    #[arg(long)]
    pub samples: Option<String>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn apply_data(spec: &mut RunSpec, data: &DataArgs) -> Result<(), CliError> {
    if data.dataset.is_some() && data.synth.is_some() {
        return Err(usage("--dataset and --synth are mutually exclusive"));
    }
    if let Some(p) = &data.dataset {
        spec.data = Some(DataSource::Csv { path: p.clone() });
    }
    let pairs = [
        ("synth", &data.synth),
        ("label_column", &data.label_column),
        ("positive", &data.positive),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            spec.set(k, v).map_err(usage)?;
        }
    }
    Ok(())
}

/// Builds the effective spec from all layers.
pub fn resolve_spec(data: &DataArgs, s: &SettingArgs) -> Result<RunSpec, CliError> {
    let mut spec = match &s.manifest {
        Some(p) => RunManifest::read(p)?.spec,
        None => RunSpec::default(),
    };
    let method = match &s.method {
        Some(m) => m.parse().map_err(usage)?,
        None => spec.method,
    };
    if let Some(c) = &s.config {
        let (text, origin) = load_config_text(c, method).map_err(usage)?;
        spec.apply_text(&text, &origin).map_err(usage)?;
    }
    apply_data(&mut spec, data)?;
    let flags = [
        ("method", &s.method),
        ("gamma_l", &s.gamma_l),
        ("gamma_p", &s.gamma_p),
        ("seeds", &s.seeds),
        ("epochs", &s.epochs),
        ("ensemble", &s.ensemble),
        ("alpha", &s.alpha),
        ("beta_kl", &s.beta_kl),
        ("beta_cubo", &s.beta_cubo),
        ("gamma", &s.gamma),
        ("lr", &s.lr),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            spec.set(k, v).map_err(|e| usage(format!("--{}: {e}", k.replace('_', "-"))))?;
        }
    }
    for kv in &s.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        spec.set(k.trim(), v.trim()).map_err(usage)?;
    }
    Ok(spec)
}

fn out_root(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Executes a parsed command, writing human-readable results to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    match cli.command {
        Command::Train(a) => {
            let spec = resolve_spec(&a.data, &a.settings)?;
            let s = run_train(&spec, &out_root(&a.out), a.force)?;
            writeln!(stdout, "{}", s.dir.display()).map_err(io)?;
            writeln!(stdout, "test auroc {:.4}", s.test_auroc).map_err(io)?;
        }
        Command::Benchmark(a) => {
            let spec = resolve_spec(&a.data, &a.settings)?;
            let (dir, report) = run_benchmark(&spec, &out_root(&a.out), a.force)?;
            writeln!(stdout, "{}", dir.display()).map_err(io)?;
            writeln!(
                stdout,
                "{} {} auroc {}",
                report.dataset,
                report.method,
                report.table.as_deref().unwrap_or("n/a")
            )
            .map_err(io)?;
        }
        Command::Score(a) => {
            let manifest = RunManifest::read(&a.model.join(MANIFEST))?;
            let mut spec = manifest.spec;
            spec.data = None;
            apply_data(&mut spec, &a.data)?;
            if let Some(s) = &a.samples {
                spec.set("samples_score", s).map_err(usage)?;
            }
            let out = run_score(&spec, &a.model)?;
            match &a.out {
                Some(p) => out.write_csv(p)?,
                None => stdout.write_all(out.to_csv_string().as_bytes()).map_err(io)?,
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let mut shown = e.to_string();
            let _ = writeln!(stderr, "error: {shown}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let msg = s.to_string();
                // many variants already embed their source's message
                if !shown.contains(&msg) {
                    let _ = writeln!(stderr, "  caused by: {msg}");
                    shown = msg;
                }
                src = s.source();
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with(std::iter::once("ssadvae").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&["frobnicate"]).0, 1);
        assert_eq!(run(&["train", "--synth", "2,20", "--method", "svdd"]).0, 1);
        assert_eq!(run(&["train", "--synth", "2,20", "--epochs", "x"]).0, 1);
        assert_eq!(run(&["train"]).0, 1);
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn missing_dataset_exits_two_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("runs");
        let (code, _, err) = run(&[
            "train",
            "--dataset",
            "/no/such/file.csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 2, "{err}");
        assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("c.conf");
        std::fs::write(&conf, "epochs = 7\nlr = 0.5\n").unwrap();
        let data = DataArgs {
            dataset: None,
            synth: Some("2,10".into()),
            label_column: None,
            positive: None,
        };
        let settings = SettingArgs {
            config: Some(conf.display().to_string()),
            manifest: None,
            method: Some("dp".into()),
            gamma_l: None,
            gamma_p: None,
            seeds: Some("1-3".into()),
            epochs: None,
            ensemble: None,
            alpha: None,
            beta_kl: None,
            beta_cubo: None,
            gamma: None,
            lr: Some("0.01".into()),
            set: vec!["warmup_epochs=2".into()],
        };
        let spec = resolve_spec(&data, &settings).unwrap();
        assert_eq!(spec.train.epochs, 7);
        assert_eq!(spec.train.lr, 0.01);
        assert_eq!(spec.train.warmup_epochs, 2);
        assert_eq!(spec.seeds, vec![1, 2, 3]);
        assert_eq!(spec.method, crate::models::Method::Dp);
    }

    #[test]
    fn benchmark_stats() {
        let (m, s) = mean_stdev(&[0.9, 1.0]).unwrap();
        assert!((m - 0.95).abs() < 1e-15);
        assert!((s - (0.005f64).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stdev(&[0.7]).unwrap().1, 0.0);
        assert_eq!(table_entry(0.999, 0.0004), "99.9±0.04");
        assert_eq!(table_entry(0.991, 0.004), "99.1±0.4");
    }
}
