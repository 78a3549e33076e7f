//! Binary parameter container with a JSON sidecar.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f64`):
//!
//! ```text
//! magic      8 bytes   "SSADVAE\0"
//! version    u32       1
//! input_dim  u32
//! n_widths   u32, then n_widths × u32 widths (hidden..., latent)
//! activation u8        0 = leaky-relu, 1 = relu, 2 = identity
//! slope      f64       leaky-relu slope (0 otherwise)
//! use_bias   u8
//! likelihood u8        0 = gaussian, 1 = bernoulli
//! n_tensors  u32
//! per tensor: rank u32, rank × u32 dims, then the row-major f64 buffer
//! ```
//!
//! Tensors appear in declaration order: encoder trunk layers (weight, bias),
//! mean head, log-variance head, then decoder layers. The sidecar
//! `<file>.json` holds the same spec plus the tensor shapes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Activation, Likelihood, MlpSpec, NetError, VaeParams, VaeSpec};
use crate::gradcore::Tensor;

pub const FORMAT_MAGIC: &[u8; 8] = b"SSADVAE\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Sidecar<'a> {
    format: &'static str,
    version: u32,
    spec: &'a VaeSpec,
    tensor_shapes: Vec<&'a [usize]>,
    parameter_count: usize,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<(), NetError> {
    let v = u32::try_from(v).map_err(|_| NetError::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl VaeParams {
    pub fn to_bytes(&self) -> Result<Vec<u8>, NetError> {
        let spec = &self.spec;
        let mut buf = Vec::with_capacity(64 + 8 * self.parameter_count());
        buf.extend_from_slice(FORMAT_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut buf, spec.input_dim)?;
        put_u32(&mut buf, spec.mlp.widths.len())?;
        for &w in &spec.mlp.widths {
            put_u32(&mut buf, w)?;
        }
        let (tag, slope) = match spec.mlp.activation {
            Activation::LeakyRelu { slope } => (0u8, slope),
            Activation::Relu => (1, 0.0),
            Activation::Identity => (2, 0.0),
        };
        buf.push(tag);
        buf.extend_from_slice(&slope.to_le_bytes());
        buf.push(spec.mlp.use_bias as u8);
        buf.push(match spec.likelihood {
            Likelihood::Gaussian => 0,
            Likelihood::Bernoulli => 1,
        });
        let tensors = self.tensors();
        put_u32(&mut buf, tensors.len())?;
        for t in tensors {
            put_u32(&mut buf, t.rank())?;
            for &d in t.shape() {
                put_u32(&mut buf, d)?;
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != FORMAT_MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NetError::Format(format!("unsupported version {version}")));
        }
        let input_dim = r.u32()? as usize;
        let n_widths = r.u32()? as usize;
        let widths = (0..n_widths)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let tag = r.u8()?;
        let slope = r.f64()?;
        let activation = match tag {
            0 => Activation::LeakyRelu { slope },
            1 => Activation::Relu,
            2 => Activation::Identity,
            t => return Err(NetError::Format(format!("unknown activation tag {t}"))),
        };
        let use_bias = r.u8()? != 0;
        let likelihood = match r.u8()? {
            0 => Likelihood::Gaussian,
            1 => Likelihood::Bernoulli,
            t => return Err(NetError::Format(format!("unknown likelihood tag {t}"))),
        };
        let spec = VaeSpec {
            input_dim,
            mlp: MlpSpec {
                widths,
                activation,
                use_bias,
            },
            likelihood,
        };
        let mut params = VaeParams::zeros(&spec)?;
        let n_tensors = r.u32()? as usize;
        let slots = params.tensors_mut();
        if n_tensors != slots.len() {
            return Err(NetError::Format(format!(
                "spec implies {} tensors, file has {n_tensors}",
                slots.len()
            )));
        }
        for (i, slot) in slots.into_iter().enumerate() {
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if dims != slot.shape() {
                return Err(NetError::Format(format!(
                    "tensor {i}: shape {dims:?} does not match spec shape {:?}",
                    slot.shape()
                )));
            }
            for v in slot.data_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(NetError::Format("trailing bytes".into()));
        }
        Ok(params)
    }

    pub fn sidecar_json(&self) -> Result<String, NetError> {
        let sidecar = Sidecar {
            format: "ssadvae-params",
            version: FORMAT_VERSION,
            spec: &self.spec,
            tensor_shapes: self.tensors().into_iter().map(Tensor::shape).collect(),
            parameter_count: self.parameter_count(),
        };
        Ok(serde_json::to_string_pretty(&sidecar)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(NetError::Format("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` (binary) and `path.json` (sidecar).
pub fn write_params(params: &VaeParams, path: &Path) -> Result<(), NetError> {
    std::fs::write(path, params.to_bytes()?)?;
    std::fs::write(sidecar_path(path), params.sidecar_json()?)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<VaeParams, NetError> {
    VaeParams::from_bytes(&std::fs::read(path)?)
}
