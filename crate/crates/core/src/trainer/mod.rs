//! Optimisation loop: Adam, KL annealing, warm-up before outlier updates,
//! per-interval outlier steps with clipping and step-decayed learning rate.
//!
//! Each ensemble member trains on its own thread from `seed + i`; given the
//! same config and data the resulting parameters are bit-identical.

mod config;
mod history;
mod optim;

use std::time::Instant;

pub use config::TrainConfig;
pub use history::{EpochRecord, TrainHistory};
pub use optim::{adam_step, clip_gradients, global_norm, kl_anneal_coeff, AdamState};

use crate::gradcore::{Graph, GraphError, Tensor, Var};
use crate::models::{self, Ensemble, Method, ModelError, ModelVars, OutlierTerm, SsadModel, Term};
use crate::netblocks::{init_mlp, NetError, VaeParams};
use crate::rng::{self, stream, SeededRng};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no normal training rows")]
    EmptyNormalSet,
    #[error("outlier rows have {got} features, normal rows have {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("member {member}, epoch {epoch}, batch {batch}: {term} loss is not finite ({value})")]
    NonFinite {
        member: usize,
        epoch: usize,
        batch: usize,
        term: Term,
        value: f64,
    },
    #[error("member {member}, epoch {epoch}, batch {batch}: {source}")]
    Step {
        member: usize,
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<TrainError>,
    },
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            TrainError::NonFinite { .. } | TrainError::Optimizer(_) => true,
            TrainError::Step { source, .. } => source.is_numerical(),
            TrainError::Model(ModelError::NonFinite { .. }) => true,
            _ => false,
        }
    }
}

/// Trained ensemble plus one history per member.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    pub histories: Vec<TrainHistory>,
}

/// Trains `config.ensemble` members on `normal` rows (everything the trainer
/// sees as unlabeled, pollution included) and the labelled `outliers` pool.
pub fn train(
    config: &TrainConfig,
    method: Method,
    normal: &Tensor,
    outliers: &Tensor,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    config.objective(method).validate()?;
    if normal.rank() != 2 || normal.rows() == 0 || normal.is_empty() {
        return Err(TrainError::EmptyNormalSet);
    }
    let d = normal.shape()[1];
    if outliers.rows() > 0 && outliers.shape()[1] != d {
        return Err(TrainError::FeatureMismatch {
            expected: d,
            got: outliers.shape()[1],
        });
    }
    let results: Vec<Result<(SsadModel, TrainHistory), TrainError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.ensemble)
            .map(|i| s.spawn(move || train_member(config, method, i, normal, outliers)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut members = Vec::with_capacity(results.len());
    let mut histories = Vec::with_capacity(results.len());
    for r in results {
        let (m, h) = r?;
        members.push(m);
        histories.push(h);
    }
    Ok(TrainOutcome {
        ensemble: Ensemble::new(members)?,
        histories,
    })
}

/// Trains a single member with seed `config.seed + member`.
pub fn train_member(
    config: &TrainConfig,
    method: Method,
    member: usize,
    normal: &Tensor,
    outliers: &Tensor,
) -> Result<(SsadModel, TrainHistory), TrainError> {
    let seed = config.member_seed(member);
    let objective = config.objective(method);
    let params = init_mlp(&config.vae_spec(normal.shape()[1]), seed)?;
    let mut state = MemberState::new(params, config, member);
    let mut rng = rng::seeded(seed, stream::TRAIN);
    let pool = outliers.rows();
    let use_outliers = objective.uses_outliers() && pool > 0;
    let mut history = TrainHistory {
        member,
        seed,
        epochs: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let beta = kl_anneal_coeff(epoch, config.anneal_epochs, config.beta_kl);
        let outlier_epoch = use_outliers && config.outlier_epoch(epoch);
        let outlier_lr = config.outlier_lr(epoch);
        let order = rng::shuffled_indices(&mut rng, normal.rows());
        let mut acc = EpochAcc::default();
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let at = |e: TrainError| match e {
                e @ TrainError::NonFinite { .. } => e,
                e => TrainError::Step {
                    member,
                    epoch,
                    batch,
                    source: Box::new(e),
                },
            };
            let xb = normal.select_rows(rows);
            state
                .normal_step(&xb, beta, &mut rng, &mut acc, (epoch, batch))
                .map_err(at)?;
            if outlier_epoch {
                let picked = rng::shuffled_indices(&mut rng, pool);
                let ob = outliers.select_rows(&picked[..pool.min(config.batch_size)]);
                state
                    .outlier_step(&objective, &ob, beta, outlier_lr, &mut rng, &mut acc, (epoch, batch))
                    .map_err(at)?;
            }
        }
        history.epochs.push(acc.finish(
            epoch,
            config.lr,
            outlier_epoch.then_some(outlier_lr),
            beta,
            started.elapsed().as_secs_f64(),
        ));
    }
    let model = SsadModel::new(state.params, objective, seed)?;
    Ok((model, history))
}

#[derive(Default)]
struct EpochAcc {
    rows: usize,
    elbo: f64,
    kl: f64,
    recon: f64,
    outlier_steps: usize,
    outlier_sum: f64,
    log_domain_steps: usize,
    decoder_grad_norm: f64,
}

impl EpochAcc {
    fn finish(
        self,
        epoch: usize,
        lr: f64,
        outlier_lr: Option<f64>,
        anneal: f64,
        wall: f64,
    ) -> EpochRecord {
        let n = self.rows.max(1) as f64;
        let any = self.outlier_steps > 0;
        EpochRecord {
            epoch,
            elbo: self.elbo / n,
            kl: self.kl / n,
            recon: self.recon / n,
            outlier_term: any.then(|| self.outlier_sum / self.outlier_steps as f64),
            outlier_steps: self.outlier_steps,
            cubo_log_domain_steps: self.log_domain_steps,
            lr,
            outlier_lr: outlier_lr.filter(|_| any),
            anneal_coeff: anneal,
            outlier_decoder_grad_norm: any.then_some(self.decoder_grad_norm),
            wall_time_s: wall,
        }
    }
}

struct MemberState<'c> {
    params: VaeParams,
    config: &'c TrainConfig,
    member: usize,
    /// Moments for all parameters, normal path.
    adam: AdamState,
    /// Moments for encoder parameters, outlier path.
    adam_outlier: AdamState,
}

fn grads_of<'g>(g: &'g Graph, leaves: &[Var<'g>]) -> Vec<Tensor> {
    leaves.iter().map(|&l| g.grad_or_zeros(l)).collect()
}

fn total(v: Var<'_>) -> f64 {
    v.value_ref().sum()
}

impl<'c> MemberState<'c> {
    fn new(params: VaeParams, config: &'c TrainConfig, member: usize) -> Self {
        Self {
            adam: AdamState::new(params.tensors()),
            adam_outlier: AdamState::new(params.encoder.tensors()),
            params,
            config,
            member,
        }
    }

    fn non_finite(&self, at: (usize, usize), term: Term, value: f64) -> TrainError {
        TrainError::NonFinite {
            member: self.member,
            epoch: at.0,
            batch: at.1,
            term,
            value,
        }
    }

    fn normal_step(
        &mut self,
        x: &Tensor,
        beta: f64,
        rng: &mut SeededRng,
        acc: &mut EpochAcc,
        at: (usize, usize),
    ) -> Result<(), TrainError> {
        let g = Graph::new();
        let vars = ModelVars::bind(&g, &self.params.encoder, &self.params.decoder);
        let terms = models::normal_term(&vars, x, beta, self.config.samples.elbo, rng)?;
        let loss = terms.mean().neg();
        let value = loss.item();
        if !value.is_finite() {
            return Err(self.non_finite(at, Term::Normal, value));
        }
        g.backward(loss)?;
        let mut leaves = vars.encoder.leaves();
        leaves.extend(vars.decoder.leaves());
        let grads = grads_of(&g, &leaves);
        adam_step(&mut self.adam, &mut self.params.tensors_mut(), &grads, self.config.lr)?;
        acc.rows += x.rows();
        acc.elbo += total(terms.per_sample);
        acc.kl += total(terms.kl);
        acc.recon += total(terms.recon);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn outlier_step(
        &mut self,
        objective: &models::Objective,
        x: &Tensor,
        beta: f64,
        lr: f64,
        rng: &mut SeededRng,
        acc: &mut EpochAcc,
        at: (usize, usize),
    ) -> Result<(), TrainError> {
        let g = Graph::new();
        // The trainable decoder is bound only so the freeze can be checked:
        // outlier terms read `frozen_decoder`, which is constant.
        let vars = ModelVars::bind(&g, &self.params.encoder, &self.params.decoder);
        let Some((term, obj)) =
            models::outlier_term(objective, &vars, x, beta, self.config.samples, rng)?
        else {
            return Ok(());
        };
        let value = obj.item();
        if !value.is_finite() {
            return Err(self.non_finite(at, Term::Outlier, value));
        }
        g.backward(obj)?;
        let dec_norm = global_norm(&grads_of(&g, &vars.decoder.leaves()));
        let mut grads = grads_of(&g, &vars.encoder.leaves());
        clip_gradients(&mut grads, self.config.clip_norm);
        adam_step(&mut self.adam_outlier, &mut self.params.encoder.tensors_mut(), &grads, lr)?;
        acc.outlier_steps += 1;
        acc.outlier_sum += value;
        acc.decoder_grad_norm = acc.decoder_grad_norm.max(dec_norm);
        let log_domain = match term {
            OutlierTerm::Cubo(c) | OutlierTerm::Hybrid { cubo: c, .. } => c.log_domain,
            OutlierTerm::Elbo(_) => false,
        };
        acc.log_domain_steps += usize::from(log_domain);
        Ok(())
    }
}
