//! Tabular data: CSV ingestion, the split / standardize / label / pollute
//! protocol, synthetic Gaussian data, and AUROC evaluation.

mod eval;
mod load;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gradcore::Tensor;
use crate::rng::{self, stream};

pub use eval::{auroc, write_scores_csv, EvalReport};
pub use load::{load_csv, parse_csv, CsvOptions, LabelColumn};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("no data rows")]
    Empty,
    #[error("label column {0} not found")]
    MissingColumn(String),
    #[error("row {row}, column {column}: '{value}' is not a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("{0} class has no rows")]
    MissingClass(Label),
    #[error("{what} must lie in [0, 1), got {value}")]
    Fraction { what: &'static str, value: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite score at row {0}")]
    NonFiniteScore(usize),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        })
    }
}

/// How a row is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    TrainNormal,
    TrainLabeledOutlier,
    /// An anomaly hidden among the unlabeled training rows.
    TrainPollution,
    Test,
    /// Loaded or split off but not used for training (e.g. training
    /// anomalies that were not selected as labels).
    Unused,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub split_seed: Option<u64>,
    pub gamma_l_requested: Option<f64>,
    pub gamma_l_achieved: Option<f64>,
    pub gamma_p_requested: Option<f64>,
    pub gamma_p_achieved: Option<f64>,
}

/// A feature matrix with per-row labels and roles.
#[derive(Clone, Debug, PartialEq)]
pub struct SsadDataset {
    pub features: Tensor,
    pub labels: Vec<Label>,
    pub roles: Vec<Role>,
    /// Row index in the original source.
    pub row_ids: Vec<usize>,
    pub provenance: Provenance,
}

/// Per-column shift and scale fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl SsadDataset {
    /// Wraps a matrix; every row starts out `Unused`.
    pub fn new(features: Tensor, labels: Vec<Label>, source: impl Into<String>) -> Result<Self, DataError> {
        if features.rank() != 2 {
            return Err(DataError::Invalid(format!("features must be a matrix, got shape {:?}", features.shape())));
        }
        if labels.len() != features.rows() {
            return Err(DataError::Length {
                scores: features.rows(),
                labels: labels.len(),
            });
        }
        let n = labels.len();
        Ok(Self {
            features,
            roles: vec![Role::Unused; n],
            row_ids: (0..n).collect(),
            labels,
            provenance: Provenance {
                source: source.into(),
                ..Provenance::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    fn indices(&self, keep: impl Fn(Label, Role) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| keep(self.labels[i], self.roles[i])).collect()
    }

    fn subset(&self, rows: &[usize], role: Role) -> SsadDataset {
        SsadDataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            roles: vec![role; rows.len()],
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Rows the trainer treats as normal: unlabeled normals plus pollution.
    pub fn normal_stream(&self) -> Tensor {
        self.features
            .select_rows(&self.indices(|_, r| matches!(r, Role::TrainNormal | Role::TrainPollution)))
    }

    /// The labelled outlier pool.
    pub fn labeled_outliers(&self) -> Tensor {
        self.features.select_rows(&self.indices(|_, r| r == Role::TrainLabeledOutlier))
    }

    /// Rows with the given role, with their labels.
    pub fn rows_with_role(&self, role: Role) -> (Tensor, Vec<Label>) {
        let idx = self.indices(|_, r| r == role);
        (self.features.select_rows(&idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Stratified split. Train rows get `TrainNormal` (normals) or `Unused`
/// (anomalies awaiting labelling); test rows get `Test`.
pub fn split_stratified(
    ds: &SsadDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(SsadDataset, SsadDataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut rng = rng::seeded(seed, stream::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Normal, Label::Anomaly] {
        let mut idx = ds.indices(|l, _| l == label);
        if idx.is_empty() {
            return Err(DataError::MissingClass(label));
        }
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut tr = ds.subset(&train, Role::TrainNormal);
    for (role, label) in tr.roles.iter_mut().zip(&tr.labels) {
        if *label == Label::Anomaly {
            *role = Role::Unused;
        }
    }
    tr.provenance.split_seed = Some(seed);
    let mut te = ds.subset(&test, Role::Test);
    te.provenance.split_seed = Some(seed);
    Ok((tr, te))
}

impl Standardizer {
    /// Column means and population standard deviations; constant columns get
    /// scale 1.
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.row_len());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Tensor) -> Tensor {
        let d = self.mean.len();
        let mut out = x.clone();
        for (j, v) in out.data_mut().iter_mut().enumerate() {
            let c = j % d;
            *v = (*v - self.mean[c]) / self.scale[c];
        }
        out
    }
}

/// Standardizes both sets with statistics of the training rows.
pub fn standardize(
    train: &SsadDataset,
    test: &SsadDataset,
) -> Result<(SsadDataset, SsadDataset, Standardizer), DataError> {
    if train.is_empty() {
        return Err(DataError::Empty);
    }
    if train.dim() != test.dim() {
        return Err(DataError::Invalid(format!(
            "train has {} features, test has {}",
            train.dim(),
            test.dim()
        )));
    }
    let stats = Standardizer::fit(&train.features);
    let mut tr = train.clone();
    tr.features = stats.transform(&train.features);
    let mut te = test.clone();
    te.features = stats.transform(&test.features);
    Ok((tr, te, stats))
}

fn check_fraction(what: &'static str, value: f64) -> Result<(), DataError> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(DataError::Fraction { what, value })
    }
}

/// `round(γ·n / (1 − γ))`: the count that makes `k / (n + k) = γ`.
pub fn count_for_ratio(gamma: f64, n: usize) -> usize {
    (gamma * n as f64 / (1.0 - gamma)).round() as usize
}

fn pick_unused_anomalies(
    ds: &SsadDataset,
    want: usize,
    seed: u64,
    rng_stream: u64,
) -> Vec<usize> {
    let mut pool = ds.indices(|l, r| l == Label::Anomaly && r == Role::Unused);
    pool.shuffle(&mut rng::seeded(seed, rng_stream));
    pool.truncate(want);
    pool
}

/// Marks `round(γ_l·N/(1−γ_l))` training anomalies as labelled outliers, with
/// `N` the unlabeled normal count. Uses every available anomaly if there are
/// too few; the achieved ratio is recorded either way.
pub fn subsample_labeled_outliers(ds: &SsadDataset, gamma_l: f64, seed: u64) -> Result<SsadDataset, DataError> {
    check_fraction("gamma_l", gamma_l)?;
    let n = ds.count_role(Role::TrainNormal);
    let picked = pick_unused_anomalies(ds, count_for_ratio(gamma_l, n), seed, stream::LABELED);
    let mut out = ds.clone();
    for &i in &picked {
        out.roles[i] = Role::TrainLabeledOutlier;
    }
    let k = out.count_role(Role::TrainLabeledOutlier);
    out.provenance.gamma_l_requested = Some(gamma_l);
    out.provenance.gamma_l_achieved = Some(if n + k == 0 { 0.0 } else { k as f64 / (n + k) as f64 });
    Ok(out)
}

/// Hides `round(γ_p·N/(1−γ_p))` of the remaining training anomalies among the
/// unlabeled rows, with `N` the unlabeled normal count.
pub fn pollute(ds: &SsadDataset, gamma_p: f64, seed: u64) -> Result<SsadDataset, DataError> {
    check_fraction("gamma_p", gamma_p)?;
    let n = ds.count_role(Role::TrainNormal);
    let picked = pick_unused_anomalies(ds, count_for_ratio(gamma_p, n), seed, stream::POLLUTE);
    let mut out = ds.clone();
    for &i in &picked {
        out.roles[i] = Role::TrainPollution;
    }
    let k = out.count_role(Role::TrainPollution);
    out.provenance.gamma_p_requested = Some(gamma_p);
    out.provenance.gamma_p_achieved = Some(if n + k == 0 { 0.0 } else { k as f64 / (n + k) as f64 });
    Ok(out)
}

/// Normals from `N(0, I_d)` followed by anomalies from `N(shift·1, I_d)`.
pub fn synth_gaussian_ad(
    d: usize,
    n_normal: usize,
    n_anomaly: usize,
    shift: f64,
    seed: u64,
) -> Result<SsadDataset, DataError> {
    if d == 0 {
        return Err(DataError::Invalid("synthetic data needs d ≥ 1".into()));
    }
    if !shift.is_finite() {
        return Err(DataError::Invalid(format!("shift must be finite, got {shift}")));
    }
    let mut rng = rng::seeded(seed, stream::SYNTH);
    let n = n_normal + n_anomaly;
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let offset = if i < n_normal { 0.0 } else { shift };
        for _ in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            data.push(e + offset);
        }
    }
    let labels = (0..n)
        .map(|i| if i < n_normal { Label::Normal } else { Label::Anomaly })
        .collect();
    SsadDataset::new(
        Tensor::new(vec![n, d], data).expect("buffer sized from shape"),
        labels,
        format!("synth(d={d},n={n_normal},anomalies={n_anomaly},shift={shift},seed={seed})"),
    )
}

/// Training set and test set after the full protocol.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: SsadDataset,
    pub test: SsadDataset,
    pub stats: Standardizer,
}

/// split → standardize → label γ_l of the anomalies → pollute with γ_p.
pub fn prepare(
    ds: &SsadDataset,
    train_fraction: f64,
    gamma_l: f64,
    gamma_p: f64,
    seed: u64,
) -> Result<Prepared, DataError> {
    let (train, test) = split_stratified(ds, train_fraction, seed)?;
    let (train, test, stats) = standardize(&train, &test)?;
    let mut train = subsample_labeled_outliers(&train, gamma_l, seed)?;
    if gamma_p > 0.0 {
        train = pollute(&train, gamma_p, seed)?;
    }
    Ok(Prepared { train, test, stats })
}
