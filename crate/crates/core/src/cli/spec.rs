use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datakit::{CsvOptions, LabelColumn};
use crate::models::Method;
use crate::netblocks::Likelihood;
use crate::trainer::TrainConfig;

/// Synthetic Gaussian data: `d,n[,shift[,anomalies[,seed]]]` on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub d: usize,
    pub n_normal: usize,
    pub n_anomaly: usize,
    pub shift: f64,
    pub seed: u64,
}

impl std::str::FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(2..=5).contains(&parts.len()) {
            return Err(format!("synth spec '{s}' should be d,n[,shift[,anomalies[,seed]]]"));
        }
        let num = |i: usize, what: &str| -> Result<usize, String> {
            parts[i].parse().map_err(|_| format!("synth {what} '{}' is not a count", parts[i]))
        };
        let d = num(0, "d")?;
        let n_normal = num(1, "n")?;
        let shift = match parts.get(2) {
            Some(p) => p.parse().map_err(|_| format!("synth shift '{p}' is not a number"))?,
            None => 3.0,
        };
        let n_anomaly = if parts.len() > 3 { num(3, "anomaly count")? } else { n_normal / 10 };
        let seed = match parts.get(4) {
            Some(p) => p.parse().map_err(|_| format!("synth seed '{p}' is not an integer"))?,
            None => 0,
        };
        if d == 0 || n_normal == 0 {
            return Err("synth d and n must be ≥ 1".into());
        }
        Ok(Self {
            d,
            n_normal,
            n_anomaly,
            shift,
            seed,
        })
    }
}

impl std::fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{},{}", self.d, self.n_normal, self.shift, self.n_anomaly, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synth(SynthSpec),
}

/// Everything that determines a run's results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub data: Option<DataSource>,
    pub csv: CsvOptions,
    pub method: Method,
    pub gamma_l: f64,
    pub gamma_p: f64,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            data: None,
            csv: CsvOptions::default(),
            method: Method::Mml,
            gamma_l: 0.01,
            gamma_p: 0.0,
            train_fraction: 0.6,
            seeds: vec![0],
            train: TrainConfig::default(),
        }
    }
}

/// Parses `0-9`, `1,4,7` or a mix such as `0-2,10`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed list entry '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse '{value}'"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got '{value}'")),
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunSpec {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        match key {
            "dataset" => self.data = Some(DataSource::Csv { path: PathBuf::from(value) }),
            "synth" => self.data = Some(DataSource::Synth(value.parse()?)),
            "label_column" => {
                let Ok(label) = value.parse();
                self.csv.label = label;
            }
            "positive" => self.csv.positive = value.to_string(),
            "header" => {
                self.csv.header = match value {
                    "auto" => None,
                    v => Some(parse_bool(key, v)?),
                }
            }
            "method" => self.method = value.parse()?,
            "gamma_l" => self.gamma_l = parse(key, value)?,
            "gamma_p" => self.gamma_p = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "beta_kl" => t.beta_kl = parse(key, value)?,
            "beta_cubo" => t.beta_cubo = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "anneal_epochs" => t.anneal_epochs = parse(key, value)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, value)?,
            "nd_interval" => t.nd_interval = parse(key, value)?,
            "lr_decay_factor" => t.lr_decay_factor = parse(key, value)?,
            "lr_decay_every" => t.lr_decay_every = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "ensemble" => t.ensemble = parse(key, value)?,
            "samples_elbo" => t.samples.elbo = parse(key, value)?,
            "samples_cubo" => t.samples.cubo = parse(key, value)?,
            "samples_score" => t.samples.score = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "widths" => {
                t.widths = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<Result<_, _>>()?
            }
            "leaky_slope" => t.leaky_slope = parse(key, value)?,
            "likelihood" => {
                t.likelihood = match value {
                    "gaussian" => Likelihood::Gaussian,
                    "bernoulli" => Likelihood::Bernoulli,
                    _ => return Err(format!("likelihood: expected gaussian or bernoulli, got '{value}'")),
                }
            }
            "cubo_log_domain" => t.cubo_log_domain = parse_bool(key, value)?,
            _ => return Err(format!("unknown setting '{key}'")),
        }
        Ok(())
    }

    /// Applies a key-value text: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| format!("{origin}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// Full effective configuration in the key-value format. Reading it back
    /// reproduces `self`.
    pub fn to_conf(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            Some(DataSource::Csv { path }) => kv("dataset", path.display().to_string()),
            Some(DataSource::Synth(sp)) => kv("synth", sp.to_string()),
            None => {}
        }
        kv(
            "label_column",
            match &self.csv.label {
                LabelColumn::Last => "last".into(),
                LabelColumn::Absent => "none".into(),
                LabelColumn::Index(i) => i.to_string(),
                LabelColumn::Name(n) => n.clone(),
            },
        );
        kv("positive", self.csv.positive.clone());
        kv(
            "header",
            self.csv.header.map_or_else(|| "auto".into(), |h| h.to_string()),
        );
        kv("method", self.method.to_string());
        kv("gamma_l", self.gamma_l.to_string());
        kv("gamma_p", self.gamma_p.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv("seeds", join(&self.seeds));
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("lr", t.lr.to_string());
        kv("beta_kl", t.beta_kl.to_string());
        kv("beta_cubo", t.beta_cubo.to_string());
        kv("gamma", t.gamma.to_string());
        kv("alpha", t.alpha.to_string());
        kv("anneal_epochs", t.anneal_epochs.to_string());
        kv("warmup_epochs", t.warmup_epochs.to_string());
        kv("nd_interval", t.nd_interval.to_string());
        kv("lr_decay_factor", t.lr_decay_factor.to_string());
        kv("lr_decay_every", t.lr_decay_every.to_string());
        kv("clip_norm", t.clip_norm.to_string());
        kv("ensemble", t.ensemble.to_string());
        kv("samples_elbo", t.samples.elbo.to_string());
        kv("samples_cubo", t.samples.cubo.to_string());
        kv("samples_score", t.samples.score.to_string());
        kv("seed", t.seed.to_string());
        kv("widths", join(&t.widths));
        kv("leaky_slope", t.leaky_slope.to_string());
        kv(
            "likelihood",
            match t.likelihood {
                Likelihood::Gaussian => "gaussian".into(),
                Likelihood::Bernoulli => "bernoulli".into(),
            },
        );
        kv("cubo_log_domain", t.cubo_log_domain.to_string());
        s
    }

    /// SHA-256 of [`RunSpec::to_conf`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_conf().as_bytes()))
    }

    /// Training seed base for protocol seed `s`: members use `base + i`.
    pub fn training_seed(&self, s: u64) -> u64 {
        self.train.seed.wrapping_add(s.wrapping_mul(1000))
    }

    pub fn dataset_name(&self) -> String {
        match &self.data {
            Some(DataSource::Csv { path }) => path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
            Some(DataSource::Synth(sp)) => format!("synth-{}", sp.to_string().replace(',', "_")),
            None => "none".into(),
        }
    }
}

const PRESETS: &[(&str, &str, &str)] = &[
    ("dp", "arrhythmia", include_str!("../../configs/dp/arrhythmia.conf")),
    ("dp", "cardio", include_str!("../../configs/dp/cardio.conf")),
    ("dp", "satellite", include_str!("../../configs/dp/satellite.conf")),
    ("dp", "satimage-2", include_str!("../../configs/dp/satimage-2.conf")),
    ("dp", "shuttle", include_str!("../../configs/dp/shuttle.conf")),
    ("dp", "thyroid", include_str!("../../configs/dp/thyroid.conf")),
    ("mml", "arrhythmia", include_str!("../../configs/mml/arrhythmia.conf")),
    ("mml", "cardio", include_str!("../../configs/mml/cardio.conf")),
    ("mml", "satellite", include_str!("../../configs/mml/satellite.conf")),
    ("mml", "satimage-2", include_str!("../../configs/mml/satimage-2.conf")),
    ("mml", "shuttle", include_str!("../../configs/mml/shuttle.conf")),
    ("mml", "thyroid", include_str!("../../configs/mml/thyroid.conf")),
];

/// Bundled hyperparameters for a classic benchmark dataset. `hybrid` and
/// `vae` reuse the dual-prior table.
pub fn preset(method: Method, name: &str) -> Option<&'static str> {
    let family = match method {
        Method::Mml => "mml",
        Method::Dp | Method::Hybrid | Method::Vae => "dp",
    };
    PRESETS
        .iter()
        .find(|(f, n, _)| *f == family && *n == name)
        .map(|(_, _, text)| *text)
}

pub fn preset_names() -> Vec<&'static str> {
    let mut names: Vec<&str> = PRESETS.iter().map(|(_, n, _)| *n).collect();
    names.sort_unstable();
    names.dedup();
    names
}

/// Resolves `--config`: an existing file, otherwise a bundled preset name.
pub fn load_config_text(arg: &str, method: Method) -> Result<(String, String), String> {
    let path = Path::new(arg);
    if path.is_file() {
        return std::fs::read_to_string(path)
            .map(|t| (t, path.display().to_string()))
            .map_err(|e| format!("{arg}: {e}"));
    }
    preset(method, arg)
        .map(|t| (t.to_string(), format!("preset {arg}")))
        .ok_or_else(|| {
            format!(
                "config '{arg}' is neither a file nor a preset (presets: {})",
                preset_names().join(", ")
            )
        })
}
