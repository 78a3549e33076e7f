//! Acceptance suite: one PASS / FAIL / NOT RUN line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Failures are reported, not
//! hidden; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.
//! Criteria 6 and 7 need the classic benchmark CSVs (see
//! `scripts/odds_to_csv.py`) in `$SSADVAE_ODDS_DIR` or `<workspace>/data/odds`.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use ssadvae::cli::{run_benchmark, RunManifest, RunSpec, MANIFEST, REPORT};
use ssadvae::datakit::{self, auroc, prepare, Role};
use ssadvae::gradcore::{finite_diff_check, Graph, Tensor, Var};
use ssadvae::models::{self, score, Method, ModelVars, Objective, SampleCounts, SsadModel};
use ssadvae::netblocks::{init_mlp, Activation, DecoderParams, Dense, GaussianPosterior, Likelihood, VaeSpec};
use ssadvae::rng::{self, seeded};
use ssadvae::trainer::{train, TrainConfig};
use ssadvae::vbounds::{self, HALF_LN_2PI};

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn m(rows: usize, cols: usize, v: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, v).unwrap()
}

fn uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn tensor(r: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| uniform(r, lo, hi)).collect()).unwrap()
}

/// Where random inputs for an op are drawn.
#[derive(Clone, Copy)]
enum Domain {
    Any,
    Positive,
    /// Both signs, at least 0.2 away from zero.
    OffKink,
}

fn draw(r: &mut impl Rng, shape: &[usize], domain: Domain) -> Tensor {
    match domain {
        Domain::Any => tensor(r, shape, -2.0, 2.0),
        Domain::Positive => tensor(r, shape, 0.2, 2.0),
        Domain::OffKink => {
            let mut t = tensor(r, shape, 0.2, 2.0);
            t.data_mut().iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
            t
        }
    }
}

// ---------------------------------------------------------------- criterion 1

type OpFn = for<'g> fn(&'g Graph, &[Var<'g>]) -> Var<'g>;

/// Contracts any tensor to a scalar with fixed, non-uniform weights.
fn contract<'g>(g: &'g Graph, y: Var<'g>) -> Var<'g> {
    let n = y.value_ref().len();
    let shape = y.shape();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.7 * ((i * 7919) % 13) as f64 / 13.0).collect()).unwrap();
    y.mul(g.constant_owned(w)).unwrap().sum_all()
}

fn op_cases() -> Vec<(&'static str, OpFn, Vec<Vec<usize>>, Domain)> {
    vec![
        ("add", |g, v| contract(g, v[0].add(v[1]).unwrap()), vec![vec![3, 2], vec![3, 2]], Domain::Any),
        ("add-broadcast", |g, v| contract(g, v[0].add(v[1]).unwrap()), vec![vec![3, 2], vec![2]], Domain::Any),
        ("sub", |g, v| contract(g, v[0].sub(v[1]).unwrap()), vec![vec![3, 2], vec![2]], Domain::Any),
        ("mul", |g, v| contract(g, v[0].mul(v[1]).unwrap()), vec![vec![3, 2], vec![3, 2]], Domain::Any),
        ("mul-broadcast", |g, v| contract(g, v[0].mul(v[1]).unwrap()), vec![vec![4, 3], vec![3]], Domain::Any),
        ("neg", |g, v| contract(g, v[0].neg()), vec![vec![5]], Domain::Any),
        ("exp", |g, v| contract(g, v[0].exp()), vec![vec![2, 3]], Domain::Any),
        ("log", |g, v| contract(g, v[0].ln()), vec![vec![2, 3]], Domain::Positive),
        ("square", |g, v| contract(g, v[0].square()), vec![vec![2, 3]], Domain::Any),
        ("leaky-relu", |g, v| contract(g, v[0].leaky_relu(0.1)), vec![vec![2, 4]], Domain::OffKink),
        ("relu", |g, v| contract(g, v[0].relu()), vec![vec![2, 4]], Domain::OffKink),
        ("sigmoid", |g, v| contract(g, v[0].sigmoid()), vec![vec![2, 3]], Domain::Any),
        ("softplus", |g, v| contract(g, v[0].softplus()), vec![vec![2, 3]], Domain::Any),
        ("scale", |g, v| contract(g, v[0].scale(-2.5)), vec![vec![3]], Domain::Any),
        ("matmul", |g, v| contract(g, v[0].matmul(v[1]).unwrap()), vec![vec![3, 4], vec![4, 2]], Domain::Any),
        ("sum-axis0", |g, v| contract(g, v[0].sum(0).unwrap()), vec![vec![3, 4]], Domain::Any),
        ("sum-axis1", |g, v| contract(g, v[0].sum(1).unwrap()), vec![vec![3, 4]], Domain::Any),
        ("mean-axis0", |g, v| contract(g, v[0].mean(0).unwrap()), vec![vec![3, 4]], Domain::Any),
        ("max-axis1", |g, v| contract(g, v[0].max(1).unwrap()), vec![vec![3, 4]], Domain::Any),
        ("logsumexp-axis0", |g, v| contract(g, v[0].logsumexp(0).unwrap()), vec![vec![5, 2]], Domain::Any),
        ("logsumexp-axis1", |g, v| contract(g, v[0].logsumexp(1).unwrap()), vec![vec![2, 5]], Domain::Any),
        ("reshape", |g, v| contract(g, v[0].reshape(&[6]).unwrap().square()), vec![vec![2, 3]], Domain::Any),
        ("tile-rows", |g, v| contract(g, v[0].tile_rows(3).square()), vec![vec![2, 3]], Domain::Any),
    ]
}

fn toy_params(seed: u64) -> ssadvae::netblocks::VaeParams {
    init_mlp(&VaeSpec::new(2, vec![3, 2]), seed).unwrap()
}

#[allow(clippy::too_many_arguments)]
fn full_loss<'g>(
    g: &'g Graph,
    leaves: &[Var<'g>],
    params: &ssadvae::netblocks::VaeParams,
    n_enc: usize,
    objective: &Objective,
    normal: &Tensor,
    outlier: &Tensor,
    samples: SampleCounts,
    seed: u64,
) -> Var<'g> {
    let vars = ModelVars {
        encoder: params.encoder.with_leaves(&leaves[..n_enc]),
        decoder: params.decoder.with_leaves(&leaves[n_enc..]),
        frozen_decoder: params.decoder.bind(g, false),
    };
    // same noise on every evaluation
    let mut noise = seeded(seed, 101);
    models::ssad_loss(objective, &vars, normal, outlier, 0.05, samples, &mut noise)
        .unwrap()
        .loss
}

fn loss_check(method: Method, log_domain: bool, seed: u64) -> Result<f64, String> {
    let params = toy_params(seed);
    let mut r = seeded(seed, 100);
    let normal = rng::normal_tensor(&mut r, &[4, 2]);
    let outlier = rng::normal_tensor(&mut r, &[4, 2]).map(|v| v * 0.5 + 1.5);
    let objective = Objective {
        method,
        gamma: 1.0,
        alpha: 5.0,
        beta_kl: 0.05,
        beta_cubo: 0.05,
        cubo_log_domain: log_domain,
    };
    let samples = SampleCounts { elbo: 2, cubo: 4, score: 1 };
    let n_enc = params.encoder.tensors().len();
    let points: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    finite_diff_check(
        |g, leaves| full_loss(g, leaves, &params, n_enc, &objective, &normal, &outlier, samples, seed),
        &points,
        1e-5,
    )
    .map_err(|e| format!("{method}: {e}"))
}

fn criterion_1() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    let mut checks = 0;
    for (name, op, shapes, domain) in op_cases() {
        for trial in 0..8u64 {
            let mut r = seeded(trial, 200 + checks as u64);
            let points: Vec<Tensor> = shapes.iter().map(|s| draw(&mut r, s, domain)).collect();
            match finite_diff_check(op, &points, 1e-5) {
                Ok(err) => {
                    if err > worst {
                        worst = err;
                        worst_name = name;
                    }
                }
                Err(e) => return Verdict::Fail(format!("{name}: {e}")),
            }
            checks += 1;
        }
    }
    for (method, log_domain) in [
        (Method::Mml, false),
        (Method::Mml, true),
        (Method::Dp, false),
        (Method::Hybrid, false),
    ] {
        for seed in 0..4 {
            match loss_check(method, log_domain, seed) {
                Ok(err) => {
                    if err > worst {
                        worst = err;
                        worst_name = method.as_str();
                    }
                }
                Err(e) => return Verdict::Fail(e),
            }
            checks += 1;
        }
    }
    check(
        worst < 1e-4,
        format!("{checks} checks, max relative error {worst:.2e} ({worst_name}), limit 1e-4"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Verdict {
    let mut r = seeded(2, 300);
    let mut worst_z: f64 = 0.0;
    let mut worst_form: f64 = 0.0;
    const N: usize = 100_000;
    for case in 0..200 {
        let d = 1 + case % 4;
        let mu: Vec<f64> = (0..d).map(|_| uniform(&mut r, -2.0, 2.0)).collect();
        let logvar: Vec<f64> = (0..d).map(|_| uniform(&mut r, -2.0, 1.5)).collect();
        let mu_o: Vec<f64> = (0..d).map(|_| uniform(&mut r, -3.0, 6.0)).collect();
        let g = Graph::new();
        let post = GaussianPosterior {
            mu: g.constant(&m(1, d, mu.clone())),
            logvar: g.constant(&m(1, d, logvar.clone())),
        };
        let closed = vbounds::kl_to_gaussian_prior(&post, &mu_o).unwrap().item();
        // expanded form −½ Σ [1 + log σ² − σ² − μ² + 2μμ_o − μ_o²]
        let expanded: f64 = -0.5
            * (0..d)
                .map(|i| 1.0 + logvar[i] - logvar[i].exp() - mu[i] * mu[i] + 2.0 * mu[i] * mu_o[i] - mu_o[i] * mu_o[i])
                .sum::<f64>();
        worst_form = worst_form.max((closed - expanded).abs());
        // Monte-Carlo E_q[log q(z) − log p(z)]
        let mut mc = seeded(case as u64, 301);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..N {
            let mut v = 0.0;
            for i in 0..d {
                let e: f64 = StandardNormal.sample(&mut mc);
                let z = mu[i] + (0.5 * logvar[i]).exp() * e;
                v += -0.5 * e * e - 0.5 * logvar[i] + 0.5 * (z - mu_o[i]).powi(2);
            }
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / N as f64;
        let se = ((sum_sq / N as f64 - mean * mean).max(0.0) / N as f64).sqrt();
        let z = (closed - mean).abs() / se.max(1e-300);
        worst_z = worst_z.max(z);
        if z > 4.0 {
            return Verdict::Fail(format!("case {case}: closed {closed:.6}, MC {mean:.6} ± {se:.2e} ({z:.2} SE)"));
        }
    }
    check(
        worst_form < 1e-10,
        format!("200 configurations, worst deviation {worst_z:.2} SE (limit 4), closed vs expanded form {worst_form:.1e}"),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Decoder computing `x̂ = z` for 1-D data.
fn identity_decoder(weight: f64) -> DecoderParams {
    let unit = |w: f64| Dense {
        weight: m(1, 1, vec![w]),
        bias: Some(Tensor::zeros(&[1])),
    };
    DecoderParams {
        layers: vec![unit(1.0), unit(weight)],
        activation: Activation::Identity,
        likelihood: Likelihood::Gaussian,
    }
}

/// `log N(x; 0, 2)`: the evidence of `z ~ N(0,1)`, `x | z ~ N(z,1)`.
fn log_evidence(x: f64) -> f64 {
    -0.5 * (4.0 * std::f64::consts::PI).ln() - x * x / 4.0
}

fn criterion_3() -> Verdict {
    let mut r = seeded(3, 400);
    let mut min_gap = f64::INFINITY;
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..100 {
        let x = uniform(&mut r, -3.0, 3.0);
        let mu = uniform(&mut r, -2.5, 2.5);
        let logvar = uniform(&mut r, -3.0, 2.0);
        let g = Graph::new();
        let dec = identity_decoder(1.0).bind(&g, false);
        let post = GaussianPosterior {
            mu: g.constant(&m(1, 1, vec![mu])),
            logvar: g.constant(&m(1, 1, vec![logvar])),
        };
        // ±1 draws integrate the quadratic reconstruction term exactly
        let e = vbounds::elbo(&post, &dec, g.constant(&m(1, 1, vec![x])), &[0.0], 1.0, &m(2, 1, vec![1.0, -1.0]))
            .unwrap()
            .mean()
            .item();
        let var = logvar.exp();
        let oracle = -HALF_LN_2PI - 0.5 * ((x - mu).powi(2) + var) - 0.5 * (var + mu * mu - 1.0 - logvar);
        worst_oracle = worst_oracle.max((e - oracle).abs());
        let gap = log_evidence(x) - e;
        min_gap = min_gap.min(gap);
        if gap < -1e-9 {
            return Verdict::Fail(format!("ELBO {e} exceeds log p(x) {} at x={x}", log_evidence(x)));
        }
    }
    // CUBO side: β = 1 and μ_o = 0 turn the loss into E_q[(p(x,z)/q(z))²]
    const S: usize = 100_000;
    let mut worst_margin = f64::INFINITY;
    for case in 0..100u64 {
        let x = uniform(&mut r, -2.5, 2.5);
        let mu = uniform(&mut r, -1.5, 1.5);
        let var = uniform(&mut r, 0.5, 1.5);
        let g = Graph::new();
        let dec = identity_decoder(1.0).bind(&g, false);
        let post = GaussianPosterior {
            mu: g.constant(&m(1, 1, vec![mu])),
            logvar: g.constant(&m(1, 1, vec![var.ln()])),
        };
        let noise = rng::normal_tensor(&mut seeded(case, 401), &[S, 1]);
        let terms = vbounds::cubo_log_terms(&post, &dec, g.constant(&m(1, 1, vec![x])), &[0.0], 1.0, &noise).unwrap();
        let outer = terms.outer.item();
        let inner = terms.inner.value();
        // independent evaluation of (p(x,z)/q(z))² for the first draws
        for s in 0..5 {
            let z = mu + var.sqrt() * noise.data()[s];
            let log_joint = -HALF_LN_2PI - 0.5 * (x - z).powi(2) - HALF_LN_2PI - 0.5 * z * z;
            let log_q = -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * (z - mu).powi(2) / var;
            let want = 2.0 * (log_joint - log_q);
            if ((outer + inner.data()[s]) - want).abs() > 1e-9 * want.abs().max(1.0) {
                return Verdict::Fail(format!("estimator draw {s} disagrees with p(x,z)/q(z): {} vs {want}", outer + inner.data()[s]));
            }
        }
        let w: Vec<f64> = inner.data().iter().map(|v| (outer + v).exp()).collect();
        let mean = w.iter().sum::<f64>() / S as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (S as f64 - 1.0)).sqrt();
        let half_log = 0.5 * mean.ln();
        let se = 0.5 * sd / (mean * (S as f64).sqrt());
        let margin = (half_log - log_evidence(x)) / se;
        worst_margin = worst_margin.min(margin);
        if margin < -3.0 {
            return Verdict::Fail(format!("x={x}: ½log mean {half_log:.6} below log p(x) {:.6} by {:.2} SE", log_evidence(x), -margin));
        }
    }
    check(
        worst_oracle < 1e-12,
        format!(
            "100 posteriors: min log p − ELBO = {min_gap:.2e} (≥ −1e-9), analytic ELBO match {worst_oracle:.1e}; \
             CUBO side worst margin {worst_margin:+.2} SE (≥ −3)"
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Verdict {
    let beta = 0.05;
    let c = HALF_LN_2PI; // zero decoder at x = 0
    let mut values = Vec::new();
    let mut worst: f64 = 0.0;
    for mu in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let g = Graph::new();
        let mut params = identity_decoder(0.0);
        params.layers[0].weight = m(1, 1, vec![0.0]);
        let dec = params.bind(&g, false);
        let post = GaussianPosterior {
            mu: g.param(&m(1, 1, vec![mu])),
            logvar: g.param(&m(1, 1, vec![0.0])),
        };
        let loss = vbounds::cubo_loss(&post, &dec, g.constant(&m(1, 1, vec![0.0])), &[0.0], beta, &m(2, 1, vec![1.0, -1.0]), false)
            .unwrap();
        let v = loss.objective.item();
        // with draws ±1: exp(−2c − βμ² + log cosh(2βμ))
        let oracle = (-2.0 * c - beta * mu * mu + (2.0 * beta * mu).cosh().ln()).exp();
        worst = worst.max((v - oracle).abs() / oracle);
        values.push(v);
    }
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && worst < 1e-12,
        format!(
            "β_CUBO={beta}: losses {} (strictly decreasing: {decreasing}), closed-form match {worst:.1e}",
            values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" > ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn synth_spec(method: Method, gamma_l: f64) -> RunSpec {
    let mut spec = RunSpec::default();
    spec.set("synth", "8,2000,3").unwrap();
    spec.method = method;
    spec.gamma_l = gamma_l;
    spec.seeds = (0..5).collect();
    spec
}

fn criterion_5(scratch: &Path) -> Verdict {
    let mut means = Vec::new();
    for (method, gl) in [(Method::Vae, 0.0), (Method::Mml, 0.01), (Method::Dp, 0.01)] {
        match run_benchmark(&synth_spec(method, gl), &scratch.join("c5"), true) {
            Ok((_, report)) => means.push((method, report.mean_auroc.unwrap(), report.table.unwrap())),
            Err(e) => return Verdict::Fail(format!("{method}: {e}")),
        }
    }
    let vae = means[0].1;
    let detail = means
        .iter()
        .map(|(m, a, t)| format!("{m} {a:.4} ({t})"))
        .collect::<Vec<_>>()
        .join(", ");
    let floor = means[1..].iter().all(|(_, a, _)| *a >= 0.95);
    let margin = means[1..].iter().all(|(_, a, _)| *a - vae >= 0.02);
    check(
        floor && margin,
        format!(
            "mean test AUROC over 5 seeds: {detail}; ≥0.95: {floor}; beats vae by ≥0.02: {margin} \
             (gains {:+.4} / {:+.4})",
            means[1].1 - vae,
            means[2].1 - vae
        ),
    )
}

// ------------------------------------------------------------ criteria 6 and 7

fn odds_dir() -> PathBuf {
    std::env::var_os("SSADVAE_ODDS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/odds"))
}

fn odds_file(name: &str) -> Option<PathBuf> {
    let p = odds_dir().join(format!("{name}.csv"));
    p.is_file().then_some(p)
}

fn missing(names: &[&str]) -> Option<Verdict> {
    let absent: Vec<&str> = names.iter().copied().filter(|n| odds_file(n).is_none()).collect();
    (!absent.is_empty()).then(|| {
        Verdict::NotRun(format!(
            "missing {} in {} (convert the ODDS .mat files with scripts/odds_to_csv.py)",
            absent.iter().map(|n| format!("{n}.csv")).collect::<Vec<_>>().join(", "),
            odds_dir().display()
        ))
    })
}

type SeedAurocs = Vec<(f64, f64)>;

static ODDS_CACHE: Mutex<Vec<(String, Method, SeedAurocs)>> = Mutex::new(Vec::new());

/// Cached [`odds_runs`]: criteria 6 and 7 share the cardio DP training.
fn odds_aurocs(name: &str, method: Method, seeds: u64) -> Result<SeedAurocs, String> {
    if let Some((_, _, r)) = ODDS_CACHE.lock().unwrap().iter().find(|(n, m, _)| n == name && *m == method) {
        return Ok(r.clone());
    }
    let r = odds_runs(name, method, seeds)?;
    ODDS_CACHE.lock().unwrap().push((name.to_string(), method, r.clone()));
    Ok(r)
}

/// Test AUROC of the full ensemble and of its first member, per seed. The
/// first member is exactly what a single-model run with the same seed trains.
fn odds_runs(name: &str, method: Method, seeds: u64) -> Result<Vec<(f64, f64)>, String> {
    let path = odds_file(name).ok_or("missing file")?;
    let mut spec = RunSpec::default();
    spec.apply_text(ssadvae::cli::preset(method, name).ok_or("no preset")?, name)?;
    spec.method = method;
    let ds = datakit::load_csv(&path, &spec.csv).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for seed in 0..seeds {
        let p = prepare(&ds, 0.6, 0.01, 0.0, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            seed: spec.training_seed(seed),
            ..spec.train.clone()
        };
        let trained = train(&cfg, method, &p.train.normal_stream(), &p.train.labeled_outliers()).map_err(|e| e.to_string())?;
        let (x, labels) = p.test.rows_with_role(Role::Test);
        let members: Vec<Vec<f64>> = trained
            .ensemble
            .members
            .iter()
            .map(|mm| score(mm, &x, cfg.samples.score))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let ens = models::mean_scores(&members);
        out.push((
            auroc(&ens, &labels).map_err(|e| e.to_string())?,
            auroc(&members[0], &labels).map_err(|e| e.to_string())?,
        ));
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_6() -> Verdict {
    if let Some(v) = missing(&["thyroid", "cardio"]) {
        return v;
    }
    let runs = [
        ("thyroid", Method::Dp, 0.98),
        ("cardio", Method::Dp, 0.97),
        ("cardio", Method::Mml, 0.97),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, method, floor) in runs {
        match odds_aurocs(name, method, 10) {
            Ok(r) => {
                let a = mean(r.iter().map(|p| p.0));
                ok &= a >= floor;
                parts.push(format!("{name} {method} {a:.4} (≥{floor})"));
            }
            Err(e) => return Verdict::Fail(format!("{name} {method}: {e}")),
        }
    }
    check(ok, parts.join(", "))
}

fn criterion_7() -> Verdict {
    if let Some(v) = missing(&["cardio"]) {
        return v;
    }
    match odds_aurocs("cardio", Method::Dp, 10) {
        Ok(r) => {
            let k5 = mean(r.iter().map(|p| p.0));
            let k1 = mean(r.iter().map(|p| p.1));
            check(k5 - k1 >= 0.0, format!("cardio dp: K=5 {k5:.5}, K=1 {k1:.5}, gain {:+.2e}", k5 - k1))
        }
        Err(e) => Verdict::Fail(e),
    }
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Verdict {
    let mut r = seeded(8, 500);
    let normal = rng::normal_tensor(&mut r, &[60, 3]);
    let outliers = rng::normal_tensor(&mut r, &[5, 3]).map(|v| v + 2.5);
    let cfg = TrainConfig {
        epochs: 14,
        warmup_epochs: 6,
        anneal_epochs: 4,
        lr_decay_every: 5,
        batch_size: 16,
        ensemble: 2,
        widths: vec![8, 2],
        seed: 21,
        ..TrainConfig::default()
    };
    let mut notes = Vec::new();
    for method in [Method::Mml, Method::Dp, Method::Hybrid] {
        let out = match train(&cfg, method, &normal, &outliers) {
            Ok(o) => o,
            Err(e) => return Verdict::Fail(format!("{method}: {e}")),
        };
        let steps: usize = out.histories.iter().flat_map(|h| &h.epochs).map(|e| e.outlier_steps).sum();
        let worst = out.histories.iter().map(|h| h.max_outlier_decoder_grad_norm()).fold(0.0, f64::max);
        if steps == 0 || worst != 0.0 {
            return Verdict::Fail(format!("{method}: {steps} outlier steps, max decoder gradient norm {worst}"));
        }
        // warm-up epochs follow the plain VAE trajectory exactly
        let vae = train(&cfg, Method::Vae, &normal, &outliers).unwrap();
        for (h, v) in out.histories.iter().zip(&vae.histories) {
            for e in 0..cfg.warmup_epochs {
                let (a, b) = (&h.epochs[e], &v.epochs[e]);
                if (a.elbo, a.kl, a.recon) != (b.elbo, b.kl, b.recon) {
                    return Verdict::Fail(format!("{method}: epoch {e} differs from the plain VAE during warm-up"));
                }
            }
        }
        notes.push(format!("{method}: {steps} outlier steps"));
    }
    // shared encoder: both terms read the same leaf nodes
    let model = SsadModel::new(toy_params(1), TrainConfig::default().objective(Method::Mml), 1).unwrap();
    for method in [Method::Mml, Method::Dp, Method::Hybrid] {
        let g = Graph::new();
        let vars = model.bind(&g);
        let obj = Objective { method, ..model.objective.clone() };
        let rep = models::ssad_loss(&obj, &vars, &m(2, 2, vec![0.1, 0.2, 0.3, 0.4]), &m(1, 2, vec![2.0, 2.0]), 0.05, SampleCounts::default(), &mut seeded(0, 0)).unwrap();
        let enc: Vec<_> = vars.encoder.leaves().iter().map(|v| v.id()).collect();
        if rep.normal_encoder != enc || rep.outlier_encoder != enc {
            return Verdict::Fail(format!("{method}: outlier and normal terms read different encoder leaves"));
        }
        g.backward(rep.outlier_objective.unwrap()).unwrap();
        if vars.decoder.leaves().iter().any(|&l| g.grad(l).is_some()) {
            return Verdict::Fail(format!("{method}: outlier term reached the decoder"));
        }
    }
    // γ = 0 and empty outlier pools reproduce the plain VAE bit for bit
    let zero = TrainConfig { gamma: 0.0, ..cfg.clone() };
    let vae = train(&zero, Method::Vae, &normal, &outliers).unwrap();
    let mml = train(&zero, Method::Mml, &normal, &outliers).unwrap();
    let empty = Tensor::zeros(&[0, 3]);
    let dp = train(&cfg, Method::Dp, &normal, &empty).unwrap();
    let mml_empty = train(&cfg, Method::Mml, &normal, &empty).unwrap();
    let same = vae.ensemble.members.iter().enumerate().all(|(i, v)| {
        v.params == mml.ensemble.members[i].params
            && v.params == dp.ensemble.members[i].params
            && v.params == mml_empty.ensemble.members[i].params
    });
    notes.push(format!("γ=0 / empty pool identical to vae: {same}"));
    check(same, format!("decoder gradient from outlier terms exactly 0; {}", notes.join(", ")))
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9(scratch: &Path) -> Verdict {
    let mut spec = RunSpec::default();
    spec.apply_text(
        "synth = 4,300,3\nmethod = dp\nseeds = 0-1\nepochs = 12\nwarmup_epochs = 5\nanneal_epochs = 4\nensemble = 2\nwidths = 8,4,2\n",
        "c9",
    )
    .unwrap();
    let first = match run_benchmark(&spec, &scratch.join("c9a"), true) {
        Ok((dir, _)) => dir,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let manifest = RunManifest::read(&first.join(MANIFEST)).unwrap();
    let mut reports = vec![std::fs::read(first.join(REPORT)).unwrap()];
    for root in ["c9b", "c9c"] {
        match run_benchmark(&manifest.spec, &scratch.join(root), true) {
            Ok((dir, _)) => reports.push(std::fs::read(dir.join(REPORT)).unwrap()),
            Err(e) => return Verdict::Fail(e.to_string()),
        }
    }
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!("report.json ({} bytes) from the original run and two manifest replays identical: {same}", reports[0].len()),
    )
}

// ---------------------------------------------------------------------- main

type Criterion<'a> = (u8, &'static str, Duration, Box<dyn Fn() -> Verdict + 'a>);

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let criteria: Vec<Criterion> = vec![
        (1, "gradient correctness", Duration::from_secs(10), Box::new(criterion_1)),
        (2, "KL closed form vs Monte Carlo", Duration::from_secs(30), Box::new(criterion_2)),
        (3, "bound sandwich on linear-Gaussian model", Duration::from_secs(60), Box::new(criterion_3)),
        (4, "CUBO separation", Duration::from_secs(5), Box::new(criterion_4)),
        (5, "synthetic end-to-end", Duration::from_secs(300), Box::new(|| criterion_5(scratch.path()))),
        (6, "classic benchmark reproduction", Duration::from_secs(1200), Box::new(criterion_6)),
        (7, "ensemble effect", Duration::from_secs(600), Box::new(criterion_7)),
        (8, "freeze and shared-encoder invariants", Duration::from_secs(60), Box::new(criterion_8)),
        (9, "benchmark determinism", Duration::from_secs(120), Box::new(|| criterion_9(scratch.path()))),
    ];
    let (mut pass, mut fail, mut not_run) = (0, 0, 0);
    for (id, name, limit, run) in criteria {
        let t = Instant::now();
        let verdict = run();
        let took = t.elapsed();
        let verdict = match verdict {
            Verdict::Pass(d) if took > limit => Verdict::Fail(format!("{d}; took {took:.1?}, limit {limit:?}")),
            v => v,
        };
        let (tag, detail) = match &verdict {
            Verdict::Pass(d) => {
                pass += 1;
                ("PASS", d)
            }
            Verdict::Fail(d) => {
                fail += 1;
                ("FAIL", d)
            }
            Verdict::NotRun(d) => {
                not_run += 1;
                ("NOT RUN", d)
            }
        };
        println!("criterion {id} [{name}]: {tag} ({:.1}s) {detail}", took.as_secs_f64());
    }
    println!("acceptance: {pass} passed, {fail} failed, {not_run} not run");
    if fail > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
