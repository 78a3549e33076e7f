use serde::{Deserialize, Serialize};

use crate::models::{Method, Objective, SampleCounts};
use crate::netblocks::{Activation, Likelihood, MlpSpec, VaeSpec};

use super::TrainError;

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam learning rate of the normal path and base rate of the outlier path.
    pub lr: f64,
    /// Final KL coefficient reached after `anneal_epochs`.
    pub beta_kl: f64,
    pub beta_cubo: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub anneal_epochs: usize,
    pub warmup_epochs: usize,
    /// Epochs between outlier updates once warm-up is over.
    pub nd_interval: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    /// Global gradient-norm bound on outlier steps.
    pub clip_norm: f64,
    pub ensemble: usize,
    pub samples: SampleCounts,
    pub seed: u64,
    /// Encoder widths; the last entry is the latent size.
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    pub likelihood: Likelihood,
    pub cubo_log_domain: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            lr: 1e-3,
            beta_kl: 0.05,
            beta_cubo: 0.05,
            gamma: 1.0,
            alpha: 5.0,
            anneal_epochs: 20,
            warmup_epochs: 50,
            nd_interval: 1,
            lr_decay_factor: 0.1,
            lr_decay_every: 50,
            clip_norm: 5.0,
            ensemble: 5,
            samples: SampleCounts::default(),
            seed: 0,
            widths: vec![32, 16, 8],
            leaky_slope: 0.1,
            likelihood: Likelihood::Gaussian,
            cubo_log_domain: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1".into());
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs ({}) must be below epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.anneal_epochs > self.epochs {
            return bad(format!(
                "anneal_epochs ({}) must not exceed epochs ({})",
                self.anneal_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.nd_interval == 0 || self.lr_decay_every == 0 {
            return bad("nd_interval and lr_decay_every must be ≥ 1".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!("lr_decay_factor must lie in (0, 1], got {}", self.lr_decay_factor));
        }
        if self.ensemble == 0 {
            return bad("ensemble must have at least one member".into());
        }
        if self.samples.elbo == 0 || self.samples.cubo == 0 || self.samples.score == 0 {
            return bad("sample counts must be ≥ 1".into());
        }
        if self.leaky_slope.is_nan() || self.leaky_slope < 0.0 {
            return bad("leaky_slope must be ≥ 0".into());
        }
        self.mlp().validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: self.widths.clone(),
            activation: Activation::LeakyRelu {
                slope: self.leaky_slope,
            },
            use_bias: true,
        }
    }

    pub fn vae_spec(&self, input_dim: usize) -> VaeSpec {
        VaeSpec {
            input_dim,
            mlp: self.mlp(),
            likelihood: self.likelihood,
        }
    }

    pub fn objective(&self, method: Method) -> Objective {
        Objective {
            method,
            gamma: self.gamma,
            alpha: self.alpha,
            beta_kl: self.beta_kl,
            beta_cubo: self.beta_cubo,
            cubo_log_domain: self.cubo_log_domain,
        }
    }

    /// Seed of ensemble member `i`.
    pub fn member_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    /// Whether outlier updates run in `epoch`.
    pub fn outlier_epoch(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs && (epoch - self.warmup_epochs).is_multiple_of(self.nd_interval)
    }

    /// Step-decayed learning rate of the outlier path.
    pub fn outlier_lr(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }
}
