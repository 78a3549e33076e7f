use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Per-epoch training statistics of one ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training ELBO of the normal batches (with the annealed KL weight).
    pub elbo: f64,
    pub kl: f64,
    pub recon: f64,
    /// Mean outlier objective; absent on epochs without outlier updates.
    pub outlier_term: Option<f64>,
    pub outlier_steps: usize,
    /// Outlier steps that optimised the CUBO in the log domain.
    pub cubo_log_domain_steps: usize,
    pub lr: f64,
    pub outlier_lr: Option<f64>,
    pub anneal_coeff: f64,
    /// Largest decoder-gradient norm produced by an outlier term this epoch.
    pub outlier_decoder_grad_norm: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub member: usize,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Largest outlier-term decoder-gradient norm over the whole run.
    pub fn max_outlier_decoder_grad_norm(&self) -> f64 {
        self.epochs
            .iter()
            .filter_map(|r| r.outlier_decoder_grad_norm)
            .fold(0.0, f64::max)
    }
}
