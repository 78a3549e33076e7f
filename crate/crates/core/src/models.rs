//! Training objectives (plain VAE, max-min likelihood, dual prior, hybrid),
//! anomaly scoring, and ensembles.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gradcore::{Graph, GraphError, NodeId, Tensor, Var};
use crate::netblocks::{
    self, draw_noise, encode, DecoderParams, DecoderVars, EncoderParams, EncoderVars, NetError,
    VaeParams,
};
use crate::rng::{self, stream};
use crate::vbounds::{self, BoundsError, CuboLoss, ElboTerms, PriorSpec};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{term} term is not finite ({value})")]
    NonFinite { term: Term, value: f64 },
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("normal batch is empty")]
    EmptyNormalBatch,
    #[error("ensemble mismatch: {0}")]
    Ensemble(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which part of a loss a diagnostic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Normal,
    Outlier,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Term::Normal => "normal",
            Term::Outlier => "outlier",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain VAE; labelled anomalies are ignored.
    Vae,
    /// `γ·CUBO(outliers) − ELBO(normals)`.
    Mml,
    /// `−[ELBO₀(normals) + ELBO_α(outliers)]`.
    Dp,
    /// Dual prior plus `γ·CUBO(outliers)` with a zero-mean CUBO prior.
    Hybrid,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vae => "vae",
            Method::Mml => "mml",
            Method::Dp => "dp",
            Method::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vae" => Ok(Method::Vae),
            "mml" => Ok(Method::Mml),
            "dp" => Ok(Method::Dp),
            "hybrid" | "mml-dp" => Ok(Method::Hybrid),
            other => Err(format!("unknown method '{other}' (expected vae, mml, dp or hybrid)")),
        }
    }
}

/// Loss coefficients of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub method: Method,
    /// Weight of the CUBO term (mml, hybrid).
    pub gamma: f64,
    /// Outlier prior mean `α·1` (dp, hybrid).
    pub alpha: f64,
    /// Final KL coefficient.
    pub beta_kl: f64,
    pub beta_cubo: f64,
    /// Optimise `log L_CUBO` instead of `L_CUBO` on every step.
    #[serde(default)]
    pub cubo_log_domain: bool,
}

impl Objective {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(ModelError::InvalidObjective(format!(
                "gamma must be ≥ 0, got {}",
                self.gamma
            )));
        }
        if matches!(self.method, Method::Dp | Method::Hybrid) && self.alpha == 0.0 {
            return Err(ModelError::InvalidObjective(
                "dual-prior methods need a non-zero alpha".into(),
            ));
        }
        if [self.beta_kl, self.beta_cubo].iter().any(|b| b.is_nan() || *b < 0.0) {
            return Err(ModelError::InvalidObjective("beta coefficients must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Whether the outlier term can influence training at all.
    pub fn uses_outliers(&self) -> bool {
        match self.method {
            Method::Vae => false,
            Method::Mml => self.gamma > 0.0,
            Method::Dp | Method::Hybrid => true,
        }
    }
}

/// Monte-Carlo sample counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    /// ELBO draws per row during training.
    pub elbo: usize,
    /// Draws for the CUBO inner expectation.
    pub cubo: usize,
    /// ELBO draws per row when scoring.
    pub score: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            elbo: 1,
            cubo: 8,
            score: 64,
        }
    }
}

/// One trained (or initialised) VAE with its objective.
#[derive(Clone, Debug, PartialEq)]
pub struct SsadModel {
    pub params: VaeParams,
    pub objective: Objective,
    pub seed: u64,
}

impl SsadModel {
    pub fn new(params: VaeParams, objective: Objective, seed: u64) -> Result<Self, ModelError> {
        objective.validate()?;
        Ok(Self {
            params,
            objective,
            seed,
        })
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::new(self.params.spec.latent_dim(), self.objective.alpha)
    }

    /// Registers encoder and decoder as trainable leaves plus a constant copy
    /// of the decoder for the outlier terms.
    pub fn bind<'g>(&self, g: &'g Graph) -> ModelVars<'g> {
        ModelVars::bind(g, &self.params.encoder, &self.params.decoder)
    }
}

/// Model parameters registered on one graph.
#[derive(Clone, Debug)]
pub struct ModelVars<'g> {
    pub encoder: EncoderVars<'g>,
    pub decoder: DecoderVars<'g>,
    /// Constant copy of the decoder, used by every outlier term.
    pub frozen_decoder: DecoderVars<'g>,
}

impl<'g> ModelVars<'g> {
    pub fn bind(g: &'g Graph, encoder: &EncoderParams, decoder: &DecoderParams) -> Self {
        Self {
            encoder: encoder.bind(g, true),
            decoder: decoder.bind(g, true),
            frozen_decoder: decoder.bind(g, false),
        }
    }

    /// Encoder-only binding for outlier updates: the decoder exists only as
    /// constants.
    pub fn bind_encoder_only(g: &'g Graph, encoder: &EncoderParams, decoder: &DecoderParams) -> Self {
        let frozen = decoder.bind(g, false);
        Self {
            encoder: encoder.bind(g, true),
            decoder: frozen.clone(),
            frozen_decoder: frozen,
        }
    }
}

/// The outlier part of a loss.
#[derive(Clone, Copy, Debug)]
pub enum OutlierTerm<'g> {
    Cubo(CuboLoss<'g>),
    Elbo(ElboTerms<'g>),
    Hybrid {
        elbo: ElboTerms<'g>,
        cubo: CuboLoss<'g>,
    },
}

/// A loss evaluation with its pieces.
#[derive(Clone, Debug)]
pub struct LossReport<'g> {
    pub loss: Var<'g>,
    pub normal: Option<ElboTerms<'g>>,
    pub outlier: Option<OutlierTerm<'g>>,
    /// Contribution of the outlier part to `loss`.
    pub outlier_objective: Option<Var<'g>>,
    /// Encoder leaves read by the normal and outlier terms.
    pub normal_encoder: Vec<NodeId>,
    pub outlier_encoder: Vec<NodeId>,
}

fn input<'g>(g: &'g Graph, x: &Tensor) -> Var<'g> {
    g.constant(x)
}

fn ids(enc: &EncoderVars<'_>) -> Vec<NodeId> {
    enc.leaves().iter().map(Var::id).collect()
}

/// `−ELBO` pieces for a batch of normal rows under the `N(0, I)` prior.
pub fn normal_term<'g, R: Rng + ?Sized>(
    vars: &ModelVars<'g>,
    x: &Tensor,
    beta_kl: f64,
    samples: usize,
    rng: &mut R,
) -> Result<ElboTerms<'g>, ModelError> {
    let g = vars.encoder.mean_head.weight.graph();
    let post = encode(&vars.encoder, input(g, x))?;
    let noise = draw_noise(rng, samples, post.batch(), post.latent_dim());
    let dz = post.latent_dim();
    Ok(vbounds::elbo(&post, &vars.decoder, input(g, x), &vec![0.0; dz], beta_kl, &noise)?)
}

/// Outlier part of the objective, always evaluated with the frozen decoder.
/// Returns `None` when the term cannot contribute (no rows, `vae`, or `γ = 0`
/// for `mml`).
pub fn outlier_term<'g, R: Rng + ?Sized>(
    objective: &Objective,
    vars: &ModelVars<'g>,
    x: &Tensor,
    beta_kl: f64,
    samples: SampleCounts,
    rng: &mut R,
) -> Result<Option<(OutlierTerm<'g>, Var<'g>)>, ModelError> {
    if x.rows() == 0 || x.is_empty() || !objective.uses_outliers() {
        return Ok(None);
    }
    let g = vars.encoder.mean_head.weight.graph();
    let post = encode(&vars.encoder, input(g, x))?;
    let dz = post.latent_dim();
    let zero = vec![0.0; dz];
    let cubo = |rng: &mut R| -> Result<CuboLoss<'g>, ModelError> {
        let noise = draw_noise(rng, samples.cubo, post.batch(), dz);
        Ok(vbounds::cubo_loss(
            &post,
            &vars.frozen_decoder,
            input(g, x),
            &zero,
            objective.beta_cubo,
            &noise,
            objective.cubo_log_domain,
        )?)
    };
    let outlier_elbo = |rng: &mut R| -> Result<ElboTerms<'g>, ModelError> {
        let noise = draw_noise(rng, samples.elbo, post.batch(), dz);
        let mu_o = PriorSpec::new(dz, objective.alpha).mu_outlier();
        Ok(vbounds::elbo(&post, &vars.frozen_decoder, input(g, x), &mu_o, beta_kl, &noise)?)
    };
    Ok(Some(match objective.method {
        Method::Vae => unreachable!("vae has no outlier term"),
        Method::Mml => {
            let c = cubo(rng)?;
            (OutlierTerm::Cubo(c), c.objective.scale(objective.gamma))
        }
        Method::Dp => {
            let e = outlier_elbo(rng)?;
            (OutlierTerm::Elbo(e), e.mean().neg())
        }
        Method::Hybrid => {
            let e = outlier_elbo(rng)?;
            let c = cubo(rng)?;
            let obj = e.mean().neg().add(c.objective.scale(objective.gamma))?;
            (OutlierTerm::Hybrid { elbo: e, cubo: c }, obj)
        }
    }))
}

fn check_finite(v: Var<'_>, term: Term) -> Result<(), ModelError> {
    let value = v.item();
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { term, value })
    }
}

/// Full loss for one normal batch and one (possibly empty) outlier batch,
/// sharing a single set of encoder leaves. Dispatches on the method.
pub fn ssad_loss<'g, R: Rng + ?Sized>(
    objective: &Objective,
    vars: &ModelVars<'g>,
    normal: &Tensor,
    outlier: &Tensor,
    beta_kl: f64,
    samples: SampleCounts,
    rng: &mut R,
) -> Result<LossReport<'g>, ModelError> {
    if normal.rows() == 0 || normal.is_empty() {
        return Err(ModelError::EmptyNormalBatch);
    }
    let normal_terms = normal_term(vars, normal, beta_kl, samples.elbo, rng)?;
    let neg_elbo = normal_terms.mean().neg();
    check_finite(neg_elbo, Term::Normal)?;
    let outlier = outlier_term(objective, vars, outlier, beta_kl, samples, rng)?;
    let (loss, outlier_term, outlier_objective) = match outlier {
        Some((term, obj)) => {
            check_finite(obj, Term::Outlier)?;
            (neg_elbo.add(obj)?, Some(term), Some(obj))
        }
        None => (neg_elbo, None, None),
    };
    let enc_ids = ids(&vars.encoder);
    Ok(LossReport {
        loss,
        normal: Some(normal_terms),
        outlier: outlier_term,
        outlier_objective,
        normal_encoder: enc_ids.clone(),
        outlier_encoder: if outlier_term.is_some() { enc_ids } else { Vec::new() },
    })
}

fn with_method(objective: &Objective, method: Method) -> Objective {
    Objective {
        method,
        ..objective.clone()
    }
}

/// `γ·CUBO(outliers) − ELBO(normals)`; the CUBO term only reaches the encoder.
pub fn mml_loss<'g, R: Rng + ?Sized>(
    objective: &Objective,
    vars: &ModelVars<'g>,
    normal: &Tensor,
    outlier: &Tensor,
    beta_kl: f64,
    samples: SampleCounts,
    rng: &mut R,
) -> Result<LossReport<'g>, ModelError> {
    ssad_loss(&with_method(objective, Method::Mml), vars, normal, outlier, beta_kl, samples, rng)
}

/// `−[ELBO(normals; N(0,I)) + ELBO(outliers; N(α·1,I))]`; the outlier ELBO
/// only reaches the encoder.
pub fn dp_loss<'g, R: Rng + ?Sized>(
    objective: &Objective,
    vars: &ModelVars<'g>,
    normal: &Tensor,
    outlier: &Tensor,
    beta_kl: f64,
    samples: SampleCounts,
    rng: &mut R,
) -> Result<LossReport<'g>, ModelError> {
    ssad_loss(&with_method(objective, Method::Dp), vars, normal, outlier, beta_kl, samples, rng)
}

/// Per-row anomaly score: the ELBO under the normal prior with `β_KL = 1`,
/// averaged over `samples` draws. Higher means more normal. The outlier prior
/// never enters.
pub fn score(model: &SsadModel, x: &Tensor, samples: usize) -> Result<Vec<f64>, ModelError> {
    const CHUNK: usize = 256;
    if x.rank() != 2 || x.shape()[1] != model.params.spec.input_dim {
        return Err(NetError::DimensionMismatch {
            what: "score input",
            expected: model.params.spec.input_dim,
            got: x.shape().get(1).copied().unwrap_or(0),
        }
        .into());
    }
    netblocks::check_finite_rows(x)?;
    let samples = samples.max(1);
    let mut rng = rng::seeded(model.seed, stream::SCORE);
    let dz = model.params.spec.latent_dim();
    let zero = vec![0.0; dz];
    let mut out = Vec::with_capacity(x.rows());
    let rows: Vec<usize> = (0..x.rows()).collect();
    for chunk in rows.chunks(CHUNK) {
        let g = Graph::new();
        let enc = model.params.encoder.bind(&g, false);
        let dec = model.params.decoder.bind(&g, false);
        let xb = x.select_rows(chunk);
        let post = encode(&enc, g.constant(&xb))?;
        let noise = draw_noise(&mut rng, samples, chunk.len(), dz);
        let e = vbounds::elbo(&post, &dec, g.constant(&xb), &zero, 1.0, &noise)?;
        out.extend_from_slice(e.per_sample.value_ref().data());
    }
    Ok(out)
}

/// `K ≥ 1` models with a shared spec and method and distinct seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<SsadModel>,
}

impl Ensemble {
    pub fn new(members: Vec<SsadModel>) -> Result<Self, ModelError> {
        let first = members
            .first()
            .ok_or_else(|| ModelError::Ensemble("an ensemble needs at least one member".into()))?;
        for m in &members[1..] {
            if m.params.spec != first.params.spec {
                return Err(ModelError::Ensemble("members have different network specs".into()));
            }
            if m.objective.method != first.objective.method {
                return Err(ModelError::Ensemble("members use different methods".into()));
            }
        }
        let mut seeds: Vec<u64> = members.iter().map(|m| m.seed).collect();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::Ensemble("member seeds must be distinct".into()));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].params.spec.input_dim
    }
}

/// Mean of the member scores. Members are scored on separate threads.
pub fn ensemble_score(ens: &Ensemble, x: &Tensor, samples: usize) -> Result<Vec<f64>, ModelError> {
    let per_member: Vec<Result<Vec<f64>, ModelError>> = std::thread::scope(|s| {
        let handles: Vec<_> = ens
            .members
            .iter()
            .map(|m| s.spawn(move || score(m, x, samples)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    });
    let per_member = per_member.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(mean_scores(&per_member))
}

/// Element-wise arithmetic mean of equally long score vectors.
pub fn mean_scores(per_member: &[Vec<f64>]) -> Vec<f64> {
    let k = per_member.len() as f64;
    let n = per_member.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| per_member.iter().map(|s| s[i]).sum::<f64>() / k)
        .collect()
}

/// JSON manifest written next to the member parameter files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub objective: Objective,
    pub members: Vec<MemberEntry>,
    pub training_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub file: String,
    pub seed: u64,
}

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";

impl Ensemble {
    /// Writes `member_<i>.bin` (+ sidecars) and `ensemble.json` into `dir`.
    pub fn save(&self, dir: &Path, training_epochs: usize) -> Result<EnsembleManifest, ModelError> {
        std::fs::create_dir_all(dir)?;
        let mut members = Vec::with_capacity(self.len());
        for (i, m) in self.members.iter().enumerate() {
            let file = format!("member_{i}.bin");
            netblocks::write_params(&m.params, &dir.join(&file))?;
            members.push(MemberEntry { file, seed: m.seed });
        }
        let manifest = EnsembleManifest {
            objective: self.members[0].objective.clone(),
            members,
            training_epochs,
        };
        std::fs::write(dir.join(ENSEMBLE_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, EnsembleManifest), ModelError> {
        let manifest: EnsembleManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(ENSEMBLE_MANIFEST))?)?;
        let members = manifest
            .members
            .iter()
            .map(|e| {
                let params = netblocks::read_params(&dir.join(&e.file))?;
                SsadModel::new(params, manifest.objective.clone(), e.seed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((Self::new(members)?, manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netblocks::{init_mlp, VaeSpec};
    use approx::assert_abs_diff_eq;

    fn objective(method: Method) -> Objective {
        Objective {
            method,
            gamma: 1.0,
            alpha: 5.0,
            beta_kl: 0.05,
            beta_cubo: 0.05,
            cubo_log_domain: false,
        }
    }

    fn toy_model(method: Method, seed: u64) -> SsadModel {
        let params = init_mlp(&VaeSpec::new(2, vec![4, 2]), seed).unwrap();
        SsadModel::new(params, objective(method), seed).unwrap()
    }

    fn batch(seed: u64, rows: usize) -> Tensor {
        rng::normal_tensor(&mut rng::seeded(seed, 0), &[rows, 2])
    }

    const S: SampleCounts = SampleCounts {
        elbo: 2,
        cubo: 4,
        score: 16,
    };

    #[test]
    fn method_parsing() {
        assert_eq!("DP".parse::<Method>().unwrap(), Method::Dp);
        assert!("svdd".parse::<Method>().is_err());
    }

    #[test]
    fn objective_validation() {
        let mut o = objective(Method::Dp);
        o.alpha = 0.0;
        assert!(o.validate().is_err());
        let mut o = objective(Method::Mml);
        o.gamma = -1.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn mml_with_zero_gamma_is_negative_elbo() {
        let model = toy_model(Method::Mml, 3);
        let mut obj = model.objective.clone();
        obj.gamma = 0.0;
        let (n, o) = (batch(1, 4), batch(2, 2));
        let g = Graph::new();
        let vars = model.bind(&g);
        let r = mml_loss(&obj, &vars, &n, &o, 0.05, S, &mut rng::seeded(5, 0)).unwrap();
        let g2 = Graph::new();
        let vars2 = model.bind(&g2);
        let e = normal_term(&vars2, &n, 0.05, S.elbo, &mut rng::seeded(5, 0)).unwrap();
        assert_eq!(r.loss.item(), -e.mean().item());
        assert!(r.outlier.is_none());
    }

    #[test]
    fn empty_outlier_batch_is_plain_elbo() {
        for method in [Method::Mml, Method::Dp, Method::Hybrid] {
            let model = toy_model(method, 4);
            let n = batch(1, 4);
            let empty = Tensor::zeros(&[0, 2]);
            let g = Graph::new();
            let r = ssad_loss(&model.objective, &model.bind(&g), &n, &empty, 0.05, S, &mut rng::seeded(6, 0)).unwrap();
            let g2 = Graph::new();
            let e = normal_term(&model.bind(&g2), &n, 0.05, S.elbo, &mut rng::seeded(6, 0)).unwrap();
            assert_eq!(r.loss.item(), -e.mean().item());
        }
    }

    #[test]
    fn outlier_terms_leave_decoder_untouched() {
        for method in [Method::Mml, Method::Dp, Method::Hybrid] {
            let model = toy_model(method, 8);
            let g = Graph::new();
            let vars = model.bind(&g);
            let r = ssad_loss(&model.objective, &vars, &batch(1, 4), &batch(2, 3), 0.05, S, &mut rng::seeded(1, 0)).unwrap();
            let obj = r.outlier_objective.unwrap();
            g.backward(obj).unwrap();
            for leaf in vars.decoder.leaves() {
                assert!(g.grad(leaf).is_none(), "{method}: decoder leaf received gradient");
            }
            assert!(vars.encoder.leaves().iter().any(|&l| g.grad(l).is_some()));
            assert_eq!(r.normal_encoder, r.outlier_encoder);
        }
    }

    #[test]
    fn dp_with_zero_alpha_collapses_priors() {
        let model = toy_model(Method::Dp, 2);
        let mut obj = model.objective.clone();
        obj.alpha = 0.0;
        let (n, o) = (batch(3, 4), batch(4, 2));
        let g = Graph::new();
        let vars = model.bind(&g);
        let r = dp_loss(&obj, &vars, &n, &o, 0.05, S, &mut rng::seeded(2, 0)).unwrap();
        // same draws as the loss: normal noise first, then outlier noise
        let mut rr = rng::seeded(2, 0);
        let g2 = Graph::new();
        let v2 = model.bind(&g2);
        let _ = normal_term(&v2, &n, 0.05, S.elbo, &mut rr).unwrap();
        let as_normal = normal_term(&v2, &o, 0.05, S.elbo, &mut rr).unwrap();
        match r.outlier.unwrap() {
            OutlierTerm::Elbo(e) => assert_abs_diff_eq!(e.mean().item(), as_normal.mean().item(), epsilon = 1e-14),
            _ => panic!("dp outlier term must be an ELBO"),
        }
    }

    #[test]
    fn score_is_deterministic_and_alpha_free() {
        let model = toy_model(Method::Dp, 9);
        let x = batch(7, 5);
        let a = score(&model, &x, 8).unwrap();
        assert_eq!(a, score(&model, &x, 8).unwrap());
        let mut other = model.clone();
        other.objective.alpha = -3.0;
        assert_eq!(a, score(&other, &x, 8).unwrap());
    }

    #[test]
    fn score_rejects_wrong_width() {
        let model = toy_model(Method::Vae, 1);
        assert!(score(&model, &Tensor::zeros(&[2, 3]), 4).is_err());
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(mean_scores(&[vec![-1.0], vec![-3.0]]), vec![-2.0]);
        let x = batch(1, 6);
        let single = Ensemble::new(vec![toy_model(Method::Mml, 1)]).unwrap();
        assert_eq!(ensemble_score(&single, &x, 8).unwrap(), score(&single.members[0], &x, 8).unwrap());
        let members: Vec<SsadModel> = (1..4).map(|s| toy_model(Method::Mml, s)).collect();
        let fwd = ensemble_score(&Ensemble::new(members.clone()).unwrap(), &x, 8).unwrap();
        let mut rev = members;
        rev.reverse();
        let bwd = ensemble_score(&Ensemble::new(rev).unwrap(), &x, 8).unwrap();
        for (a, b) in fwd.iter().zip(&bwd) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ensemble_rejects_duplicates_and_mixed_methods() {
        assert!(Ensemble::new(vec![toy_model(Method::Dp, 1), toy_model(Method::Dp, 1)]).is_err());
        assert!(Ensemble::new(vec![toy_model(Method::Dp, 1), toy_model(Method::Mml, 2)]).is_err());
        assert!(Ensemble::new(Vec::new()).is_err());
    }

    #[test]
    fn ensemble_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let ens = Ensemble::new(vec![toy_model(Method::Hybrid, 1), toy_model(Method::Hybrid, 2)]).unwrap();
        ens.save(dir.path(), 10).unwrap();
        let (back, manifest) = Ensemble::load(dir.path()).unwrap();
        assert_eq!(back, ens);
        assert_eq!(manifest.training_epochs, 10);
        assert_eq!(manifest.objective.method, Method::Hybrid);
    }
}
