//! MLP encoder/decoder parameters, their forward passes, and the
//! reparameterisation trick.

mod io;

pub use io::{read_params, write_params, FORMAT_MAGIC, FORMAT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gradcore::{Graph, GraphError, Tensor, Var};
use crate::rng::{self, stream};

/// Posterior log-variance is clamped to this range before any `exp`.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input row {row} contains a non-finite value")]
    NonFiniteInput { row: usize },
    #[error("malformed parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Identity,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.1 }
    }
}

impl Activation {
    pub fn apply<'g>(&self, x: Var<'g>) -> Var<'g> {
        match *self {
            Activation::LeakyRelu { slope } => x.leaky_relu(slope),
            Activation::Relu => x.relu(),
            Activation::Identity => x,
        }
    }
}

/// Decoder output family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    /// Outputs are means of `N(x̂, I)`.
    #[default]
    Gaussian,
    /// Outputs are per-feature logits.
    Bernoulli,
}

/// Encoder layer widths: hidden layers followed by the latent dimension.
/// The decoder mirrors them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

fn default_true() -> bool {
    true
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        Self {
            widths,
            activation: Activation::default(),
            use_bias: true,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.widths.len() < 2 {
            return Err(NetError::InvalidSpec(format!(
                "need at least one hidden layer plus a latent width, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(NetError::InvalidSpec(format!(
                "layer widths must be positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[..self.widths.len() - 1]
    }

    pub fn latent_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeSpec {
    pub input_dim: usize,
    pub mlp: MlpSpec,
    #[serde(default)]
    pub likelihood: Likelihood,
}

impl VaeSpec {
    pub fn new(input_dim: usize, widths: Vec<usize>) -> Self {
        Self {
            input_dim,
            mlp: MlpSpec::new(widths),
            likelihood: Likelihood::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 {
            return Err(NetError::InvalidSpec("input dimension must be positive".into()));
        }
        self.mlp.validate()
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.latent_dim()
    }

    /// `(fan_in, fan_out)` of every encoder layer in declaration order:
    /// trunk layers, mean head, log-variance head.
    fn encoder_layout(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(self.mlp.hidden());
        let mut layout: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        let last = *dims.last().unwrap();
        layout.push((last, self.latent_dim()));
        layout.push((last, self.latent_dim()));
        layout
    }

    fn decoder_layout(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.latent_dim()];
        dims.extend(self.mlp.hidden().iter().rev());
        dims.push(self.input_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Fully connected layer: `y = x·W + b` with `W: [in × out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Dense {
    fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, use_bias: bool) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, data).expect("layer shape"),
            bias: use_bias.then(|| Tensor::zeros(&[fan_out])),
        }
    }

    fn zeroed(fan_in: usize, fan_out: usize, use_bias: bool) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: use_bias.then(|| Tensor::zeros(&[fan_out])),
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        std::iter::once(&self.weight).chain(self.bias.as_ref())
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut())
    }

    fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> DenseVars<'g> {
        DenseVars {
            weight: g.leaf(&self.weight, trainable),
            bias: self.bias.as_ref().map(|b| g.leaf(b, trainable)),
        }
    }

    fn take<'g>(&self, leaves: &mut impl Iterator<Item = Var<'g>>) -> DenseVars<'g> {
        DenseVars {
            weight: leaves.next().expect("too few leaves for layout"),
            bias: self
                .bias
                .as_ref()
                .map(|_| leaves.next().expect("too few leaves for layout")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars<'g> {
    pub weight: Var<'g>,
    pub bias: Option<Var<'g>>,
}

impl<'g> DenseVars<'g> {
    pub fn forward(&self, x: Var<'g>) -> Result<Var<'g>, GraphError> {
        let y = x.matmul(self.weight)?;
        match self.bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }

    fn leaves(&self) -> impl Iterator<Item = Var<'g>> {
        std::iter::once(self.weight).chain(self.bias)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub trunk: Vec<Dense>,
    pub mean_head: Dense,
    pub logvar_head: Dense,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub likelihood: Likelihood,
}

/// Encoder and decoder parameters plus the spec they were built from.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub spec: VaeSpec,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

/// Draws fan-in scaled uniform weights `U(−1/√fan_in, 1/√fan_in)` with zero
/// biases. The encoder and decoder use separate streams of `seed`.
pub fn init_mlp(spec: &VaeSpec, seed: u64) -> Result<VaeParams, NetError> {
    spec.validate()?;
    let bias = spec.mlp.use_bias;
    let mut enc_rng = rng::seeded(seed, stream::INIT_ENCODER);
    let mut layers: Vec<Dense> = spec
        .encoder_layout()
        .into_iter()
        .map(|(i, o)| Dense::init(&mut enc_rng, i, o, bias))
        .collect();
    let logvar_head = layers.pop().unwrap();
    let mean_head = layers.pop().unwrap();
    let mut dec_rng = rng::seeded(seed, stream::INIT_DECODER);
    let dec_layers = spec
        .decoder_layout()
        .into_iter()
        .map(|(i, o)| Dense::init(&mut dec_rng, i, o, bias))
        .collect();
    Ok(VaeParams {
        spec: spec.clone(),
        encoder: EncoderParams {
            trunk: layers,
            mean_head,
            logvar_head,
            activation: spec.mlp.activation,
        },
        decoder: DecoderParams {
            layers: dec_layers,
            activation: spec.mlp.activation,
            likelihood: spec.likelihood,
        },
    })
}

impl VaeParams {
    /// All-zero parameters with the spec's shapes.
    pub fn zeros(spec: &VaeSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let bias = spec.mlp.use_bias;
        let mut layers: Vec<Dense> = spec
            .encoder_layout()
            .into_iter()
            .map(|(i, o)| Dense::zeroed(i, o, bias))
            .collect();
        let logvar_head = layers.pop().unwrap();
        let mean_head = layers.pop().unwrap();
        Ok(Self {
            spec: spec.clone(),
            encoder: EncoderParams {
                trunk: layers,
                mean_head,
                logvar_head,
                activation: spec.mlp.activation,
            },
            decoder: DecoderParams {
                layers: spec
                    .decoder_layout()
                    .into_iter()
                    .map(|(i, o)| Dense::zeroed(i, o, bias))
                    .collect(),
                activation: spec.mlp.activation,
                likelihood: spec.likelihood,
            },
        })
    }

    /// Every parameter tensor in declaration order (encoder, then decoder).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.tensors();
        out.extend(self.decoder.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl EncoderParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.trunk
            .iter()
            .chain([&self.mean_head, &self.logvar_head])
            .flat_map(Dense::tensors)
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.trunk
            .iter_mut()
            .chain([&mut self.mean_head, &mut self.logvar_head])
            .flat_map(Dense::tensors_mut)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk
            .first()
            .unwrap_or(&self.mean_head)
            .weight
            .shape()[0]
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> EncoderVars<'g> {
        EncoderVars {
            trunk: self.trunk.iter().map(|d| d.bind(g, trainable)).collect(),
            mean_head: self.mean_head.bind(g, trainable),
            logvar_head: self.logvar_head.bind(g, trainable),
            activation: self.activation,
            input_dim: self.input_dim(),
        }
    }

    /// Uses existing graph variables, in [`EncoderParams::tensors`] order, as
    /// the parameters.
    ///
    /// # Panics
    /// If fewer leaves are given than the layout has tensors.
    pub fn with_leaves<'g>(&self, leaves: &[Var<'g>]) -> EncoderVars<'g> {
        let mut it = leaves.iter().copied();
        EncoderVars {
            trunk: self.trunk.iter().map(|d| d.take(&mut it)).collect(),
            mean_head: self.mean_head.take(&mut it),
            logvar_head: self.logvar_head.take(&mut it),
            activation: self.activation,
            input_dim: self.input_dim(),
        }
    }
}

impl DecoderParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Dense::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Dense::tensors_mut).collect()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    /// Decoder counterpart of [`EncoderParams::with_leaves`].
    pub fn with_leaves<'g>(&self, leaves: &[Var<'g>]) -> DecoderVars<'g> {
        let mut it = leaves.iter().copied();
        DecoderVars {
            layers: self.layers.iter().map(|d| d.take(&mut it)).collect(),
            activation: self.activation,
            likelihood: self.likelihood,
            latent_dim: self.latent_dim(),
        }
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> DecoderVars<'g> {
        DecoderVars {
            layers: self.layers.iter().map(|d| d.bind(g, trainable)).collect(),
            activation: self.activation,
            likelihood: self.likelihood,
            latent_dim: self.latent_dim(),
        }
    }
}

/// Encoder parameters registered on a graph.
#[derive(Clone, Debug)]
pub struct EncoderVars<'g> {
    pub trunk: Vec<DenseVars<'g>>,
    pub mean_head: DenseVars<'g>,
    pub logvar_head: DenseVars<'g>,
    pub activation: Activation,
    pub input_dim: usize,
}

impl<'g> EncoderVars<'g> {
    pub fn leaves(&self) -> Vec<Var<'g>> {
        self.trunk
            .iter()
            .chain([&self.mean_head, &self.logvar_head])
            .flat_map(DenseVars::leaves)
            .collect()
    }
}

/// Decoder parameters registered on a graph.
#[derive(Clone, Debug)]
pub struct DecoderVars<'g> {
    pub layers: Vec<DenseVars<'g>>,
    pub activation: Activation,
    pub likelihood: Likelihood,
    pub latent_dim: usize,
}

impl<'g> DecoderVars<'g> {
    pub fn leaves(&self) -> Vec<Var<'g>> {
        self.layers.iter().flat_map(DenseVars::leaves).collect()
    }
}

/// Diagonal Gaussian `q(z|x)`: per-row mean and clamped log-variance.
#[derive(Clone, Copy, Debug)]
pub struct GaussianPosterior<'g> {
    pub mu: Var<'g>,
    pub logvar: Var<'g>,
}

impl<'g> GaussianPosterior<'g> {
    pub fn batch(&self) -> usize {
        self.mu.shape()[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.shape()[1]
    }
}

/// Rejects rows containing NaN or ±∞.
pub fn check_finite_rows(x: &Tensor) -> Result<(), NetError> {
    let w = x.row_len().max(1);
    match x.data().iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(NetError::NonFiniteInput { row: pos / w }),
        None => Ok(()),
    }
}

/// Runs the encoder on `x: [batch × d_x]`.
pub fn encode<'g>(enc: &EncoderVars<'g>, x: Var<'g>) -> Result<GaussianPosterior<'g>, NetError> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != enc.input_dim {
        return Err(NetError::DimensionMismatch {
            what: "encoder input",
            expected: enc.input_dim,
            got: shape.get(1).copied().unwrap_or(0),
        });
    }
    check_finite_rows(&x.value_ref())?;
    let mut h = x;
    for layer in &enc.trunk {
        h = enc.activation.apply(layer.forward(h)?);
    }
    let mu = enc.mean_head.forward(h)?;
    let logvar = enc.logvar_head.forward(h)?.clamp(LOGVAR_MIN, LOGVAR_MAX);
    Ok(GaussianPosterior { mu, logvar })
}

/// Runs the decoder on `z: [rows × d_z]`. Gaussian decoders return means,
/// Bernoulli decoders return logits.
pub fn decode<'g>(dec: &DecoderVars<'g>, z: Var<'g>) -> Result<Var<'g>, NetError> {
    let shape = z.shape();
    if shape.len() != 2 || shape[1] != dec.latent_dim {
        return Err(NetError::DimensionMismatch {
            what: "decoder input",
            expected: dec.latent_dim,
            got: shape.get(1).copied().unwrap_or(0),
        });
    }
    let mut h = z;
    let last = dec.layers.len() - 1;
    for (i, layer) in dec.layers.iter().enumerate() {
        h = layer.forward(h)?;
        if i < last {
            h = dec.activation.apply(h);
        }
    }
    Ok(h)
}

/// `z = μ + exp(logvar/2) ⊙ ε`.
///
/// `noise` has shape `[S·batch × d_z]`: `S` stacked noise blocks, each of
/// the posterior's shape. The result stacks the `S` samples the same way.
/// Noise enters as a constant, so no gradient reaches it.
pub fn reparameterize<'g>(
    post: &GaussianPosterior<'g>,
    noise: &Tensor,
) -> Result<Var<'g>, NetError> {
    let g = post.mu.graph();
    let (batch, dz) = (post.batch(), post.latent_dim());
    if noise.rank() != 2 || noise.shape()[1] != dz || batch == 0 || !noise.shape()[0].is_multiple_of(batch) {
        return Err(GraphError::ShapeMismatch {
            op: "reparameterize",
            left: vec![batch, dz],
            right: noise.shape().to_vec(),
        }
        .into());
    }
    let samples = noise.shape()[0] / batch;
    let sigma = post.logvar.scale(0.5).exp().tile_rows(samples);
    let eps = g.constant(noise);
    Ok(post.mu.tile_rows(samples).add(sigma.mul(eps)?)?)
}

/// Standard-normal noise for `samples` reparameterised draws.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, samples: usize, batch: usize, dz: usize) -> Tensor {
    rng::normal_tensor(rng, &[samples * batch, dz])
}
