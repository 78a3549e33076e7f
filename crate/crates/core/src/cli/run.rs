use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datakit::{
    self, auroc, load_csv, prepare, synth_gaussian_ad, write_scores_csv, EvalReport, Label, Role,
    SsadDataset, Standardizer,
};
use crate::gradcore::Tensor;
use crate::models::{ensemble_score, Ensemble};
use crate::trainer::{train, TrainConfig, TrainOutcome};

use super::spec::{DataSource, RunSpec};
use super::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const RUN_CONF: &str = "run.conf";
pub const STANDARDIZER: &str = "standardizer.json";
pub const REPORT: &str = "report.json";
pub const FAILED_MARKER: &str = "FAILED";

/// Written into every run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub config_digest: String,
    pub spec: RunSpec,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Loads the configured data source.
pub fn load_data(spec: &RunSpec) -> Result<SsadDataset, CliError> {
    match &spec.data {
        None => Err(CliError::Usage("no data: pass --dataset or --synth".into())),
        Some(DataSource::Csv { path }) => Ok(load_csv(path, &spec.csv)?),
        Some(DataSource::Synth(s)) => Ok(synth_gaussian_ad(s.d, s.n_normal, s.n_anomaly, s.shift, s.seed)?),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

/// A run directory assembled under a temporary name and moved into place at
/// the end, so an aborted run leaves nothing behind unless kept on purpose.
struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    done: bool,
}

impl Staging {
    fn new(root: &Path, name: &str, force: bool) -> Result<Self, CliError> {
        let dest = root.join(name);
        if dest.exists() && !force {
            return Err(CliError::Exists(dest));
        }
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let tmp = root.join(format!(".staging-{name}-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        }
        std::fs::create_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        Ok(Self { tmp, dest, done: false })
    }

    fn path(&self) -> &Path {
        &self.tmp
    }

    fn commit(mut self) -> Result<PathBuf, CliError> {
        if self.dest.exists() {
            std::fs::remove_dir_all(&self.dest).map_err(|e| CliError::io(&self.dest, e))?;
        }
        std::fs::rename(&self.tmp, &self.dest).map_err(|e| CliError::io(&self.dest, e))?;
        self.done = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

fn write_run_header(dir: &Path, command: &str, spec: &RunSpec) -> Result<(), CliError> {
    write(&dir.join(RUN_CONF), spec.to_conf())?;
    write_json(
        &dir.join(MANIFEST),
        &RunManifest {
            format_version: 1,
            command: command.into(),
            config_digest: spec.digest(),
            spec: spec.clone(),
        },
    )
}

fn run_name(command: &str, spec: &RunSpec) -> String {
    format!("{command}-{}-{}-{}", spec.method, spec.dataset_name(), &spec.digest()[..12])
}

fn train_config(spec: &RunSpec, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: spec.training_seed(seed),
        ..spec.train.clone()
    }
}

fn validate(spec: &RunSpec) -> Result<(), CliError> {
    spec.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    spec.train
        .objective(spec.method)
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if spec.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    Ok(())
}

/// Result of one protocol run on one seed.
struct SeedRun {
    outcome: TrainOutcome,
    prepared: datakit::Prepared,
    test: EvalReport,
    train_auroc: Option<f64>,
}

fn run_seed(spec: &RunSpec, ds: &SsadDataset, seed: u64) -> Result<SeedRun, CliError> {
    let prepared = prepare(ds, spec.train_fraction, spec.gamma_l, spec.gamma_p, seed)?;
    let outcome = train(
        &train_config(spec, seed),
        spec.method,
        &prepared.train.normal_stream(),
        &prepared.train.labeled_outliers(),
    )?;
    let samples = spec.train.samples.score;
    let (x, labels) = prepared.test.rows_with_role(Role::Test);
    let scores = ensemble_score(&outcome.ensemble, &x, samples)?;
    let test = EvalReport::new(scores, labels, prepared.test.row_ids.clone(), seed, spec.digest())?;
    let train_scores = ensemble_score(&outcome.ensemble, &prepared.train.features, samples)?;
    let train_auroc = auroc(&train_scores, &prepared.train.labels).ok();
    Ok(SeedRun {
        outcome,
        prepared,
        test,
        train_auroc,
    })
}

fn write_histories(dir: &Path, outcome: &TrainOutcome) -> Result<(), CliError> {
    for h in &outcome.histories {
        h.write_csv(&dir.join(format!("history_{}.csv", h.member)))?;
        h.write_json(&dir.join(format!("history_{}.json", h.member)))?;
    }
    Ok(())
}

/// What `train` produced.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub test_auroc: f64,
    pub train_auroc: Option<f64>,
}

/// Splits, standardizes and labels with the first seed, trains the ensemble,
/// and writes it with its histories, the standardizer and a test evaluation.
pub fn run_train(spec: &RunSpec, out_root: &Path, force: bool) -> Result<TrainSummary, CliError> {
    validate(spec)?;
    let ds = load_data(spec)?;
    let seed = spec.seeds[0];
    let staging = Staging::new(out_root, &run_name("train", spec), force)?;
    let dir = staging.path();
    let run = run_seed(spec, &ds, seed)?;
    write_run_header(dir, "train", spec)?;
    run.outcome.ensemble.save(dir, spec.train.epochs)?;
    write_json(&dir.join(STANDARDIZER), &run.prepared.stats)?;
    write_histories(dir, &run.outcome)?;
    run.test.write_json(&dir.join("eval.json"))?;
    write_scores_csv(&dir.join("test_scores.csv"), &run.test.row_ids, &run.test.scores, Some(&run.test.labels))?;
    let test_auroc = run.test.auroc;
    Ok(TrainSummary {
        dir: staging.commit()?,
        test_auroc,
        train_auroc: run.train_auroc,
    })
}

/// Scores of `score`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutput {
    pub row_ids: Vec<usize>,
    pub scores: Vec<f64>,
    /// Present when the input had a label column.
    pub labels: Option<Vec<Label>>,
}

/// Scores every row of the data source with a saved ensemble, after applying
/// the standardizer stored with it.
pub fn run_score(spec: &RunSpec, model_dir: &Path) -> Result<ScoreOutput, CliError> {
    let (ensemble, _) = Ensemble::load(model_dir)?;
    let std_path = model_dir.join(STANDARDIZER);
    let stats: Standardizer = match std::fs::read_to_string(&std_path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Standardizer {
            mean: vec![0.0; ensemble.input_dim()],
            scale: vec![1.0; ensemble.input_dim()],
        },
        Err(e) => return Err(CliError::io(&std_path, e)),
    };
    let ds = load_data(spec)?;
    if ds.is_empty() {
        return Err(datakit::DataError::Empty.into());
    }
    if ds.dim() != ensemble.input_dim() {
        return Err(CliError::Data(datakit::DataError::Invalid(format!(
            "data has {} features, the model expects {}",
            ds.dim(),
            ensemble.input_dim()
        ))));
    }
    let x: Tensor = stats.transform(&ds.features);
    let scores = ensemble_score(&ensemble, &x, spec.train.samples.score)?;
    let labelled = spec.csv.label != datakit::LabelColumn::Absent;
    Ok(ScoreOutput {
        row_ids: ds.row_ids.clone(),
        scores,
        labels: labelled.then(|| ds.labels.clone()),
    })
}

impl ScoreOutput {
    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        Ok(write_scores_csv(path, &self.row_ids, &self.scores, self.labels.as_deref())?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("row_id,score,label\n");
        for (i, (id, score)) in self.row_ids.iter().zip(&self.scores).enumerate() {
            let label = self.labels.as_ref().map_or(String::new(), |l| l[i].to_string());
            s.push_str(&format!("{id},{score},{label}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_auroc: f64,
    pub train_auroc: Option<f64>,
    pub labeled_outliers: usize,
    pub gamma_l_achieved: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Aggregated benchmark results. Contains no timestamps, so identical runs
/// give identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub status: String,
    pub method: String,
    pub dataset: String,
    pub gamma_l: f64,
    pub gamma_p: f64,
    pub ensemble: usize,
    pub epochs: usize,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub results: Vec<SeedResult>,
    pub mean_auroc: Option<f64>,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub stdev_auroc: Option<f64>,
    pub single_seed: bool,
    /// `mean±stdev` in percent.
    pub table: Option<String>,
    pub failure: Option<SeedFailure>,
}

/// Mean and sample (n − 1) standard deviation; the deviation is 0 for n = 1.
pub fn mean_stdev(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

/// Percent with one decimal; deviations below 0.1 keep two.
pub fn table_entry(mean: f64, sd: f64) -> String {
    let (m, s) = (100.0 * mean, 100.0 * sd);
    if s < 0.1 && s > 0.0 {
        format!("{m:.1}±{s:.2}")
    } else {
        format!("{m:.1}±{s:.1}")
    }
}

impl BenchmarkReport {
    fn new(spec: &RunSpec) -> Self {
        Self {
            status: "running".into(),
            method: spec.method.to_string(),
            dataset: spec.dataset_name(),
            gamma_l: spec.gamma_l,
            gamma_p: spec.gamma_p,
            ensemble: spec.train.ensemble,
            epochs: spec.train.epochs,
            config_digest: spec.digest(),
            seeds: spec.seeds.clone(),
            results: Vec::new(),
            mean_auroc: None,
            stdev_auroc: None,
            single_seed: spec.seeds.len() == 1,
            table: None,
            failure: None,
        }
    }

    fn summarize(&mut self) {
        let aurocs: Vec<f64> = self.results.iter().map(|r| r.test_auroc).collect();
        if let Some((m, s)) = mean_stdev(&aurocs) {
            self.mean_auroc = Some(m);
            self.stdev_auroc = Some(s);
            self.table = Some(table_entry(m, s));
        }
    }
}

/// Runs the full protocol once per seed and aggregates test AUROC. A failing
/// seed stops the run; what finished so far is kept, marked `FAILED`.
pub fn run_benchmark(spec: &RunSpec, out_root: &Path, force: bool) -> Result<(PathBuf, BenchmarkReport), CliError> {
    validate(spec)?;
    let ds = load_data(spec)?;
    let staging = Staging::new(out_root, &run_name("benchmark", spec), force)?;
    let dir = staging.path().to_path_buf();
    write_run_header(&dir, "benchmark", spec)?;
    let mut report = BenchmarkReport::new(spec);
    for &seed in &spec.seeds {
        match run_seed(spec, &ds, seed) {
            Ok(run) => {
                let seed_dir = dir.join(format!("seed_{seed}"));
                std::fs::create_dir_all(&seed_dir).map_err(|e| CliError::io(&seed_dir, e))?;
                run.test.write_json(&seed_dir.join("eval.json"))?;
                write_histories(&seed_dir, &run.outcome)?;
                report.results.push(SeedResult {
                    seed,
                    test_auroc: run.test.auroc,
                    train_auroc: run.train_auroc,
                    labeled_outliers: run.prepared.train.count_role(Role::TrainLabeledOutlier),
                    gamma_l_achieved: run.prepared.train.provenance.gamma_l_achieved,
                });
            }
            Err(e) => {
                report.status = FAILED_MARKER.into();
                report.failure = Some(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
                report.summarize();
                write_json(&dir.join(REPORT), &report)?;
                write(&dir.join(FAILED_MARKER), format!("seed {seed}: {e}\n"))?;
                let kept = staging.commit()?;
                return Err(CliError::BenchmarkFailed {
                    dir: kept,
                    seed,
                    source: Box::new(e),
                });
            }
        }
    }
    report.status = "ok".into();
    report.summarize();
    write_json(&dir.join(REPORT), &report)?;
    Ok((staging.commit()?, report))
}
