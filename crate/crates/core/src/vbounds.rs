//! Reconstruction loss, KL to a shifted Gaussian prior, the ELBO, and the
//! exponentiated χ² upper bound (CUBO) used to push anomalies away.

use serde::{Deserialize, Serialize};

use crate::gradcore::{Graph, GraphError, Tensor, Var};
use crate::netblocks::{decode, reparameterize, DecoderVars, GaussianPosterior, Likelihood, NetError};

/// `½·ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// If the CUBO exponent of any row exceeds this, the loss is optimised in the
/// log domain instead of being exponentiated.
pub const CUBO_LOG_DOMAIN_THRESHOLD: f64 = 709.782_712_893_384 - 10.0;

/// If the largest CUBO exponent in a batch is below this, the exponentiated
/// loss and its gradient are too small for an Adam step to register (they
/// sit under its `ε = 1e-8`), so the log domain is used as well.
pub const CUBO_UNDERFLOW_THRESHOLD: f64 = -15.0;

#[derive(Debug, thiserror::Error)]
pub enum BoundsError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("prior mean has dimension {got}, latent dimension is {expected}")]
    PriorDimension { expected: usize, got: usize },
    #[error("the CUBO term needs a frozen decoder; got trainable decoder parameters")]
    TrainableDecoder,
    #[error("at least one Monte-Carlo sample is required")]
    NoSamples,
}

/// Gaussian priors for the two classes: `N(0, I)` for normal rows and
/// `N(α·1, I)` for labelled anomalies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub latent_dim: usize,
    pub alpha: f64,
}

impl PriorSpec {
    pub fn new(latent_dim: usize, alpha: f64) -> Self {
        Self { latent_dim, alpha }
    }

    pub fn mu_normal(&self) -> Vec<f64> {
        vec![0.0; self.latent_dim]
    }

    pub fn mu_outlier(&self) -> Vec<f64> {
        vec![self.alpha; self.latent_dim]
    }
}

fn prior_tensor(prior_mean: &[f64], latent_dim: usize) -> Result<Tensor, BoundsError> {
    if prior_mean.len() != latent_dim {
        return Err(BoundsError::PriorDimension {
            expected: latent_dim,
            got: prior_mean.len(),
        });
    }
    Ok(Tensor::vector(prior_mean.to_vec()))
}

/// Per-row `KL(q(z|x) ‖ N(μ_o, I))`:
/// `−½ Σᵢ [1 + log σᵢ² − σᵢ² − μᵢ² + 2μᵢμ_oᵢ − μ_oᵢ²]`,
/// evaluated as `½ Σᵢ [σᵢ² − 1 − log σᵢ² + (μᵢ − μ_oᵢ)²]`.
pub fn kl_to_gaussian_prior<'g>(
    post: &GaussianPosterior<'g>,
    mu_o: &[f64],
) -> Result<Var<'g>, BoundsError> {
    let g = post.mu.graph();
    let mu_o = g.constant_owned(prior_tensor(mu_o, post.latent_dim())?);
    let var_term = post.logvar.exp().sub(post.logvar)?.add_scalar(-1.0);
    let mean_term = post.mu.sub(mu_o)?.square();
    Ok(var_term.add(mean_term)?.sum(1)?.scale(0.5))
}

/// Per-row `L_R = −log p(x|x̂)`.
///
/// Gaussian: `½‖x − x̂‖² + (d/2)·log 2π`. Bernoulli (x̂ are logits):
/// `Σ softplus(l) − x·l`.
pub fn reconstruction_loss<'g>(
    output: Var<'g>,
    x: Var<'g>,
    family: Likelihood,
) -> Result<Var<'g>, BoundsError> {
    match family {
        Likelihood::Gaussian => {
            let d = x.shape().get(1).copied().unwrap_or(1) as f64;
            Ok(x.sub(output)?
                .square()
                .sum(1)?
                .scale(0.5)
                .add_scalar(d * HALF_LN_2PI))
        }
        Likelihood::Bernoulli => {
            let nll = output.softplus().sub(x.mul(output)?)?;
            Ok(nll.sum(1)?)
        }
    }
}

/// Graph-level ELBO pieces, one entry per row.
#[derive(Clone, Copy, Debug)]
pub struct ElboTerms<'g> {
    /// `−recon − β_KL·kl` per row.
    pub per_sample: Var<'g>,
    /// Reconstruction loss averaged over the Monte-Carlo samples.
    pub recon: Var<'g>,
    pub kl: Var<'g>,
    pub beta_kl: f64,
}

impl<'g> ElboTerms<'g> {
    /// Batch-mean ELBO.
    pub fn mean(&self) -> Var<'g> {
        self.per_sample.mean_all()
    }

    pub fn report(&self) -> BoundReport {
        let recon = mean(self.recon.value_ref().data());
        let kl = mean(self.kl.value_ref().data());
        BoundReport {
            recon,
            kl,
            elbo: -recon - self.beta_kl * kl,
            beta_kl: self.beta_kl,
            cubo_loss: None,
            per_sample_elbo: self.per_sample.value().into_data(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Scalar summary of one bound evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub recon: f64,
    pub kl: f64,
    /// Always `−recon − beta_kl·kl` of the stored fields.
    pub elbo: f64,
    pub beta_kl: f64,
    pub cubo_loss: Option<f64>,
    pub per_sample_elbo: Vec<f64>,
}

fn sample_count(post: &GaussianPosterior<'_>, noise: &Tensor) -> Result<usize, BoundsError> {
    let batch = post.batch();
    if noise.rows() == 0 || batch == 0 {
        return Err(BoundsError::NoSamples);
    }
    Ok(noise.rows() / batch)
}

/// Monte-Carlo ELBO with the closed-form KL:
/// `ELBO(x) = −(1/S) Σₛ L_R(x, zₛ) − β_KL·KL(q ‖ N(μ_prior, I))`.
///
/// `noise` stacks `S` standard-normal blocks shaped like the posterior mean.
pub fn elbo<'g>(
    post: &GaussianPosterior<'g>,
    decoder: &DecoderVars<'g>,
    x: Var<'g>,
    prior_mean: &[f64],
    beta_kl: f64,
    noise: &Tensor,
) -> Result<ElboTerms<'g>, BoundsError> {
    let samples = sample_count(post, noise)?;
    let batch = post.batch();
    let z = reparameterize(post, noise)?;
    let out = decode(decoder, z)?;
    let recon = reconstruction_loss(out, x.tile_rows(samples), decoder.likelihood)?
        .reshape(&[samples, batch])?
        .mean(0)?;
    let kl = kl_to_gaussian_prior(post, prior_mean)?;
    let per_sample = recon.add(kl.scale(beta_kl))?.neg();
    Ok(ElboTerms {
        per_sample,
        recon,
        kl,
        beta_kl,
    })
}

/// Log-domain pieces of the CUBO loss for each row:
///
/// * `outer = β·(log|Σ_q| + μ_qᵀΣ_q⁻¹μ_q − μ_oᵀμ_o)`, shape `[B]`;
/// * `inner = −2·L_R + β·(−zᵀz + 2zᵀμ_o + zᵀΣ_q⁻¹z − 2zᵀΣ_q⁻¹μ_q)` for each of
///   the `S` draws, shape `[S × B]`.
///
/// With `β = 1`, `outer + inner` is `2·log(p(x, z)/q(z|x))`.
#[derive(Clone, Copy, Debug)]
pub struct CuboTerms<'g> {
    pub outer: Var<'g>,
    pub inner: Var<'g>,
    pub samples: usize,
}

impl<'g> CuboTerms<'g> {
    /// Per-row `log L_CUBO ≈ outer + logsumexp(inner) − log S`.
    pub fn log_value(&self) -> Result<Var<'g>, BoundsError> {
        Ok(self
            .outer
            .add(self.inner.logsumexp(0)?)?
            .add_scalar(-(self.samples as f64).ln()))
    }
}

fn require_frozen(decoder: &DecoderVars<'_>) -> Result<(), BoundsError> {
    if decoder.leaves().iter().any(|v| v.requires_grad()) {
        return Err(BoundsError::TrainableDecoder);
    }
    Ok(())
}

pub fn cubo_log_terms<'g>(
    post: &GaussianPosterior<'g>,
    decoder: &DecoderVars<'g>,
    x: Var<'g>,
    mu_o: &[f64],
    beta_cubo: f64,
    noise: &Tensor,
) -> Result<CuboTerms<'g>, BoundsError> {
    require_frozen(decoder)?;
    let g: &'g Graph = post.mu.graph();
    let samples = sample_count(post, noise)?;
    let batch = post.batch();
    let mu_o_t = prior_tensor(mu_o, post.latent_dim())?;
    let mu_o_sq: f64 = mu_o.iter().map(|m| m * m).sum();
    let mu_o_var = g.constant_owned(mu_o_t);

    let inv_var = post.logvar.neg().exp();
    let outer = post
        .logvar
        .add(post.mu.square().mul(inv_var)?)?
        .sum(1)?
        .add_scalar(-mu_o_sq)
        .scale(beta_cubo);

    let z = reparameterize(post, noise)?;
    let recon = reconstruction_loss(decode(decoder, z)?, x.tile_rows(samples), decoder.likelihood)?;
    let inv_var_s = inv_var.tile_rows(samples);
    let mu_s = post.mu.tile_rows(samples);
    let z_sq = z.square();
    let quad = z_sq
        .neg()
        .add(z.mul(mu_o_var)?.scale(2.0))?
        .add(z_sq.mul(inv_var_s)?)?
        .sub(z.mul(mu_s)?.mul(inv_var_s)?.scale(2.0))?
        .sum(1)?
        .scale(beta_cubo);
    let inner = recon.scale(-2.0).add(quad)?.reshape(&[samples, batch])?;
    Ok(CuboTerms {
        outer,
        inner,
        samples,
    })
}

/// Batch CUBO loss.
#[derive(Clone, Copy, Debug)]
pub struct CuboLoss<'g> {
    /// Per-row log of the loss.
    pub log_value: Var<'g>,
    /// Scalar objective: the batch mean of `exp(log_value)`, or its logarithm
    /// (computed by log-sum-exp) when `log_domain` is set. Both have gradients
    /// pointing the same way.
    pub objective: Var<'g>,
    pub log_domain: bool,
}

impl CuboLoss<'_> {
    /// Batch mean of the exponentiated loss, even in log-domain mode.
    pub fn value(&self) -> f64 {
        mean(&self.log_value.value().map(f64::exp).into_data())
    }
}

/// `L_CUBO = exp{outer + log E_q[exp(inner)]}` with the expectation estimated
/// from the `S` draws in `noise` via log-sum-exp.
///
/// The decoder must be bound as constants: only encoder parameters receive
/// gradient from this term. When any row's exponent would overflow
/// (see [`CUBO_LOG_DOMAIN_THRESHOLD`]), when every row underflows
/// (see [`CUBO_UNDERFLOW_THRESHOLD`]) or when `force_log_domain` is set, the
/// objective is `log mean exp(log_value)` instead; exp is monotone, so both
/// share the same optima.
pub fn cubo_loss<'g>(
    post: &GaussianPosterior<'g>,
    decoder: &DecoderVars<'g>,
    x: Var<'g>,
    mu_o: &[f64],
    beta_cubo: f64,
    noise: &Tensor,
    force_log_domain: bool,
) -> Result<CuboLoss<'g>, BoundsError> {
    let terms = cubo_log_terms(post, decoder, x, mu_o, beta_cubo, noise)?;
    let log_value = terms.log_value()?;
    let peak = log_value
        .value_ref()
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_domain =
        force_log_domain || !(CUBO_UNDERFLOW_THRESHOLD..=CUBO_LOG_DOMAIN_THRESHOLD).contains(&peak);
    let objective = if log_domain {
        let rows = log_value.value_ref().len();
        log_value
            .reshape(&[rows])?
            .logsumexp(0)?
            .add_scalar(-(rows as f64).ln())
    } else {
        log_value.exp().mean_all()
    };
    Ok(CuboLoss {
        log_value,
        objective,
        log_domain,
    })
}
