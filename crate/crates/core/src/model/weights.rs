//! `SRW1` weight files.
//!
//! ```text
//! "SRW1" | version u32 | layer count u32
//! per layer: name len u32 | name utf-8 | rank u32 | extents u32 x rank
//!            | weights f32 x prod(extents) | bias f32 x extents[0]
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{Layer, Model, ModelConfig, PadMode};
use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Tensor};

const MAGIC: &[u8; 4] = b"SRW1";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_weights(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for l in model.layers() {
        out.extend_from_slice(&(l.name.len() as u32).to_le_bytes());
        out.extend_from_slice(l.name.as_bytes());
        let dims = l.kernel.weights.dims();
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in l.kernel.weights.data().iter().chain(&l.kernel.bias) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_weights(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "{what}: needed {n} bytes at offset {}, only {} remain",
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::Malformed(format!("{what}: element count overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

/// A layer as stored on disk, before it is matched against a configuration.
#[derive(Debug, Clone)]
pub struct StoredLayer {
    pub name: String,
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn read_weights(bytes: &[u8]) -> Result<Vec<StoredLayer>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotWeightFile);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "layer name")?)
            .map_err(|_| Error::Malformed(format!("layer {i}: name is not UTF-8")))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank != 4 {
            return Err(Error::Malformed(format!(
                "layer `{name}`: rank {rank}, expected 4"
            )));
        }
        let dims = (0..rank)
            .map(|_| r.u32("extent").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Malformed(format!("layer `{name}`: extents overflow")))?;
        let weights = r.f32s(n, &format!("weights of `{name}`"))?;
        let bias = r.f32s(dims[0], &format!("bias of `{name}`"))?;
        layers.push(StoredLayer {
            name,
            dims,
            weights,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(layers)
}

/// Reconstructs the architecture implied by the stored layer shapes.
fn infer_config(layers: &[StoredLayer], pad_mode: PadMode) -> Result<ModelConfig> {
    let first = layers
        .first()
        .ok_or_else(|| Error::Malformed("weight file holds no layers".into()))?;
    if first.name != "conv0" {
        return Err(Error::Malformed(format!(
            "first layer is `{}`, expected `conv0`",
            first.name
        )));
    }
    let blocks = layers
        .iter()
        .filter(|l| l.name.starts_with("block") && l.name.ends_with(".conv1"))
        .count();
    let e1 = layers
        .iter()
        .find(|l| l.name == "conv_e1")
        .ok_or_else(|| Error::Malformed("missing layer `conv_e1`".into()))?;
    Ok(ModelConfig {
        channels_in: first.dims[1],
        feature_width: first.dims[0],
        expansion_width: e1.dims[0],
        n_residual_blocks: blocks,
        kernel_size: first.dims[2],
        pad_mode,
        ..ModelConfig::default()
    })
}

fn assemble(cfg: ModelConfig, stored: Vec<StoredLayer>) -> Result<Model> {
    cfg.validate()?;
    let shapes = cfg.layer_shapes();
    if shapes.len() != stored.len() {
        return Err(Error::WeightShape {
            layer: "<layer count>".into(),
            expected: vec![shapes.len()],
            found: vec![stored.len()],
        });
    }
    let mut layers = Vec::with_capacity(stored.len());
    for ((name, dims, relu), s) in shapes.into_iter().zip(stored) {
        if s.name != name || s.dims != dims {
            return Err(Error::WeightShape {
                layer: if s.name == name {
                    name
                } else {
                    format!("{name} (file has `{}`)", s.name)
                },
                expected: dims.to_vec(),
                found: s.dims,
            });
        }
        layers.push(Layer {
            name,
            kernel: ConvKernel::new(Tensor::from_vec(&dims, s.weights)?, s.bias, (1, 1))?,
            relu,
        });
    }
    Model::from_layers(cfg, layers)
}

/// Loads a model, inferring its widths from the file. Padding defaults to mirror.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stored = read_weights(&bytes)?;
    let cfg = infer_config(&stored, PadMode::Mirror)?;
    assemble(cfg, stored)
}

/// Loads a model and checks every layer against `cfg`.
pub fn load_weights_for(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    assemble(cfg.clone(), read_weights(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            feature_width: 4,
            expansion_width: 8,
            n_residual_blocks: 2,
            kernel_size: 3,
            seed: 9,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_reproduces_forward() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srw");
        let m = Model::build(small()).unwrap();
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.layers(), m.layers());
        let x = Tensor::from_fn([3, 9, 9], |c, i, j| ((c + 2 * i + 3 * j) % 7) as f64 / 7.0);
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
    }

    #[test]
    fn header_layout() {
        let m = Model::build(small()).unwrap();
        let b = write_weights(&m);
        assert_eq!(&b[..4], b"SRW1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 9);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 5);
        assert_eq!(&b[16..21], b"conv0");
        let expected_len: usize = 12
            + m.layers()
                .iter()
                .map(|l| 4 + l.name.len() + 4 + 16 + 4 * l.kernel.param_count())
                .sum::<usize>();
        assert_eq!(b.len(), expected_len);
    }

    #[test]
    fn bad_magic() {
        let err = read_weights(b"PNG\x00rest").unwrap_err();
        assert!(matches!(err, Error::NotWeightFile));
        assert_eq!(err.to_string(), "not a weight file (bad magic bytes)");
    }

    #[test]
    fn version_mismatch() {
        let mut b = write_weights(&Model::build(small()).unwrap());
        b[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_weights(&b).unwrap_err(),
            Error::Version { found: 7, .. }
        ));
    }

    #[test]
    fn truncated_blob() {
        let b = write_weights(&Model::build(small()).unwrap());
        let err = read_weights(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)), "{err}");
    }

    #[test]
    fn shape_mismatch_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srw");
        save_weights(&Model::build(small()).unwrap(), &path).unwrap();
        let wider = ModelConfig {
            feature_width: 6,
            ..small()
        };
        let err = load_weights_for(&path, &wider).unwrap_err();
        assert!(matches!(err, Error::WeightShape { .. }), "{err}");
        assert!(load_weights_for(&path, &small()).is_ok());
    }
}
