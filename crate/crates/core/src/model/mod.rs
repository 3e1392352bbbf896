//! The refinement network.
//!
//! ```text
//! x ─ P·conv0·ReLU ─┬─ [block]×n ─ P·conv_skip ─(+)─ P·conv_e1·ReLU ─ P·conv_e2·ReLU ─ P·conv_out ─ y
//!                   └──────────────────────────────┘
//! block(h) = P·conv2( ReLU( P·conv1(h) ) ) + h
//! ```
//!
//! `P` is the same-size padding of [`crate::padding`], so every layer maps an
//! `H x W` map to `H x W` unless the model runs in [`PadMode::Valid`].

mod weights;

pub use weights::{load_weights, load_weights_for, read_weights, save_weights, write_weights, StoredLayer};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padding::{pad, pad_backward, same_pad_spec_for, FillMode, PadSpec};
use crate::tensor::{add, conv2d_backward, conv2d_valid, relu, relu_backward, ConvKernel, Tensor};

/// How each convolution sees the border of its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    Mirror,
    Zero,
    /// No padding: every layer shrinks the map. Skip connections center-crop
    /// their identity branch. Only useful as an ablation.
    Valid,
}

impl PadMode {
    pub fn fill(self) -> Option<FillMode> {
        match self {
            PadMode::Mirror => Some(FillMode::Mirror),
            PadMode::Zero => Some(FillMode::Zero),
            PadMode::Valid => None,
        }
    }
}

impl std::str::FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirror" | "symmetric" => Ok(PadMode::Mirror),
            "zero" => Ok(PadMode::Zero),
            "valid" => Ok(PadMode::Valid),
            other => Err(Error::Config(format!(
                "unknown padding mode `{other}` (expected mirror, zero or valid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub tile_size: usize,
    pub channels_in: usize,
    pub feature_width: usize,
    pub expansion_width: usize,
    pub n_residual_blocks: usize,
    pub kernel_size: usize,
    pub pad_mode: PadMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            tile_size: 33,
            channels_in: 3,
            feature_width: 64,
            expansion_width: 256,
            n_residual_blocks: 5,
            kernel_size: 7,
            pad_mode: PadMode::Mirror,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Same topology with narrow layers and 3x3 kernels. Small enough to
    /// train on a single CPU core in minutes.
    pub fn slim() -> Self {
        ModelConfig {
            feature_width: 16,
            expansion_width: 32,
            kernel_size: 3,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.n_residual_blocks == 0 {
            return Err(Error::Config("n_residual_blocks must be >= 1".into()));
        }
        if self.channels_in == 0 || self.feature_width == 0 || self.expansion_width == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::Config("tile_size must be positive".into()));
        }
        Ok(())
    }

    /// Number of convolution layers in the stack.
    pub fn conv_count(&self) -> usize {
        2 * self.n_residual_blocks + 5
    }

    /// `(name, [C_out, C_in, k, k], relu)` for every layer, in execution order.
    pub fn layer_shapes(&self) -> Vec<(String, [usize; 4], bool)> {
        let (k, f, e, c) = (
            self.kernel_size,
            self.feature_width,
            self.expansion_width,
            self.channels_in,
        );
        let mut v = vec![("conv0".to_string(), [f, c, k, k], true)];
        for b in 0..self.n_residual_blocks {
            v.push((format!("block{b}.conv1"), [f, f, k, k], true));
            v.push((format!("block{b}.conv2"), [f, f, k, k], false));
        }
        v.push(("conv_skip".into(), [f, f, k, k], false));
        v.push(("conv_e1".into(), [e, f, k, k], true));
        v.push(("conv_e2".into(), [e, e, k, k], true));
        v.push(("conv_out".into(), [c, e, k, k], false));
        v
    }
}

/// Observer of named intermediate outputs.
pub type Hook<'a> = &'a mut dyn FnMut(&str, &Tensor);

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kernel: ConvKernel,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    layers: Vec<Layer>,
}

/// Gradient of one layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, aligned with [`Model::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Tensor::zeros(l.kernel.weights.dims()),
                    bias: vec![0.0; l.kernel.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape {
                op: "Gradients::accumulate",
                axis: "layer count",
                expected: self.layers.len(),
                found: other.layers.len(),
            });
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(&l.bias).copied())
    }
}

/// Activations recorded by [`Model::forward_trace`] for the backward pass.
pub struct Trace {
    /// Padded input of every layer.
    padded: Vec<Tensor>,
    specs: Vec<Option<PadSpec>>,
    /// Output of every layer after its activation (before any skip sum).
    acts: Vec<Tensor>,
    /// Input extents of every layer.
    in_dims: Vec<(usize, usize, usize)>,
    /// Block inputs `h_b` for b = 0..=n; `h_0` is conv0's output.
    block_inputs: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn into_output(self) -> Tensor {
        self.output
    }
}

/// Zero-embeds `g` (the gradient of a centered crop) into `(h, w)`.
fn uncrop(g: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, gh, gw) = g.chw()?;
    if (gh, gw) == (h, w) {
        return Ok(g.clone());
    }
    let (top, left) = ((h - gh) / 2, (w - gw) / 2);
    let mut out = Tensor::zeros(&[c, h, w]);
    for ci in 0..c {
        for i in 0..gh {
            for j in 0..gw {
                out.set(ci, top + i, left + j, g.at(ci, i, j));
            }
        }
    }
    Ok(out)
}

fn fit_skip(skip: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (_, h, w) = like.chw()?;
    let (_, sh, sw) = skip.chw()?;
    if (sh, sw) == (h, w) {
        Ok(skip.clone())
    } else {
        skip.center_crop(h, w)
    }
}

impl Model {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases, drawn in layer
    /// order from a ChaCha8 stream seeded with `cfg.seed`. Weights are rounded
    /// to `f32` so that a saved model reloads bit-exactly.
    pub fn build(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = cfg
            .layer_shapes()
            .into_iter()
            .map(|(name, dims, relu)| {
                let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                let n = dims.iter().product();
                let w: Vec<f64> = (0..n)
                    .map(|_| normal.sample(&mut rng) as f32 as f64)
                    .collect();
                Layer {
                    name,
                    kernel: ConvKernel::new(
                        Tensor::from_vec(&dims, w).expect("sized"),
                        vec![0.0; dims[0]],
                        (1, 1),
                    )
                    .expect("valid kernel"),
                    relu,
                }
            })
            .collect();
        Ok(Model { cfg, layers })
    }

    /// All weights and biases zero.
    pub fn zeroed(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = cfg
            .layer_shapes()
            .into_iter()
            .map(|(name, d, relu)| Layer {
                name,
                kernel: ConvKernel::zeros(d[0], d[1], d[2], d[3]),
                relu,
            })
            .collect();
        Ok(Model { cfg, layers })
    }

    /// A pass-through network: centered-delta kernels route the input channels
    /// through conv0, the expansion layers and conv_out, while the residual
    /// blocks and conv_skip are zero. For non-negative inputs the output equals
    /// the input exactly.
    pub fn identity(cfg: ModelConfig) -> Result<Self> {
        let mut m = Model::zeroed(cfg)?;
        let c = m.cfg.channels_in;
        if m.cfg.feature_width < c || m.cfg.expansion_width < c {
            return Err(Error::Config(
                "identity model needs feature and expansion widths >= input channels".into(),
            ));
        }
        let centre = m.cfg.kernel_size / 2;
        let n = m.cfg.n_residual_blocks;
        for idx in [0, 2 * n + 2, 2 * n + 3, 2 * n + 4] {
            let k = &mut m.layers[idx].kernel;
            let d = k.weights.dims().to_vec();
            for ch in 0..c {
                let at = ((ch * d[1] + ch) * d[2] + centre) * d[3] + centre;
                k.weights.data_mut()[at] = 1.0;
            }
        }
        Ok(m)
    }

    /// Assembles a model from explicit layers; shapes must match `cfg`.
    pub fn from_layers(cfg: ModelConfig, layers: Vec<Layer>) -> Result<Self> {
        cfg.validate()?;
        let shapes = cfg.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Shape {
                op: "Model::from_layers",
                axis: "layer count",
                expected: shapes.len(),
                found: layers.len(),
            });
        }
        for ((name, dims, _), l) in shapes.iter().zip(&layers) {
            if l.kernel.weights.dims() != dims || l.kernel.bias.len() != dims[0] {
                return Err(Error::WeightShape {
                    layer: name.clone(),
                    expected: dims.to_vec(),
                    found: l.kernel.weights.dims().to_vec(),
                });
            }
        }
        Ok(Model { cfg, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn set_pad_mode(&mut self, mode: PadMode) {
        self.cfg.pad_mode = mode;
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.param_count()).sum()
    }

    /// Layer indices `(conv1, conv2)` of residual block `b`.
    pub fn block_layers(&self, b: usize) -> (usize, usize) {
        (1 + 2 * b, 2 + 2 * b)
    }

    /// Zeroes both kernels and biases of residual block `b`, making it the identity.
    pub fn zero_block(&mut self, b: usize) {
        let (i, j) = self.block_layers(b);
        for idx in [i, j] {
            let k = &mut self.layers[idx].kernel;
            k.weights.data_mut().fill(0.0);
            k.bias.fill(0.0);
        }
    }

    /// Rounds every parameter to the nearest `f32`, the on-disk precision.
    pub fn round_to_storage(&mut self) {
        for l in &mut self.layers {
            for v in l.kernel.weights.data_mut().iter_mut().chain(l.kernel.bias.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }

    fn pad_spec(&self, x: &Tensor, idx: usize) -> Result<Option<PadSpec>> {
        let Some(fill) = self.cfg.pad_mode.fill() else {
            return Ok(None);
        };
        let (_, h, w) = x.chw()?;
        let k = self.layers[idx].kernel.size();
        same_pad_spec_for(h, w, k, (1, 1), fill).map(Some)
    }

    /// Pads, convolves and (optionally) rectifies; returns `(padded, spec, out)`.
    fn apply_layer(&self, idx: usize, x: &Tensor) -> Result<(Tensor, Option<PadSpec>, Tensor)> {
        let spec = self.pad_spec(x, idx)?;
        let padded = match &spec {
            Some(s) => pad(x, s)?,
            None => x.clone(),
        };
        let l = &self.layers[idx];
        let mut y = conv2d_valid(&padded, &l.kernel)?;
        if l.relu {
            y = relu(&y);
        }
        Ok((padded, spec, y))
    }

    /// Runs a single residual block on `x`.
    pub fn residual_block_forward(&self, b: usize, x: &Tensor) -> Result<Tensor> {
        if b >= self.cfg.n_residual_blocks {
            return Err(Error::Config(format!("no residual block {b}")));
        }
        let (i, j) = self.block_layers(b);
        let (_, _, u) = self.apply_layer(i, x)?;
        let (_, _, r) = self.apply_layer(j, &u)?;
        add(&r, &fit_skip(x, &r)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(x, None)?.into_output())
    }

    /// Forward pass that reports every layer's output (after activation and,
    /// for block and skip layers, after the skip sum) to `hook`.
    pub fn forward_inspect(&self, x: &Tensor, hook: &mut dyn FnMut(&str, &Tensor)) -> Result<Tensor> {
        Ok(self.forward_trace(x, Some(hook))?.into_output())
    }

    pub fn forward_trace(
        &self,
        x: &Tensor,
        mut hook: Option<Hook<'_>>,
    ) -> Result<Trace> {
        let (c, _, _) = x.chw()?;
        if c != self.cfg.channels_in {
            return Err(Error::Shape {
                op: "Model::forward",
                axis: "input channels",
                expected: self.cfg.channels_in,
                found: c,
            });
        }
        let n_layers = self.layers.len();
        let nb = self.cfg.n_residual_blocks;
        let mut padded = Vec::with_capacity(n_layers);
        let mut specs = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers);
        let mut in_dims = Vec::with_capacity(n_layers);
        let mut report = |name: &str, t: &Tensor| {
            if let Some(h) = hook.as_mut() {
                h(name, t);
            }
        };

        let mut run = |idx: usize, input: &Tensor| -> Result<Tensor> {
            in_dims.push(input.chw()?);
            let (p, s, y) = self.apply_layer(idx, input)?;
            padded.push(p);
            specs.push(s);
            acts.push(y.clone());
            Ok(y)
        };

        let a0 = run(0, x)?;
        report(&self.layers[0].name, &a0);
        let mut block_inputs = vec![a0.clone()];
        let mut h = a0.clone();
        for b in 0..nb {
            let (i, j) = self.block_layers(b);
            let u = run(i, &h)?;
            report(&self.layers[i].name, &u);
            let r = run(j, &u)?;
            h = add(&r, &fit_skip(&h, &r)?)?;
            report(&self.layers[j].name, &h);
            block_inputs.push(h.clone());
        }
        let sk = run(2 * nb + 1, &h)?;
        let s = add(&sk, &fit_skip(&a0, &sk)?)?;
        report(&self.layers[2 * nb + 1].name, &s);
        let e1 = run(2 * nb + 2, &s)?;
        report(&self.layers[2 * nb + 2].name, &e1);
        let e2 = run(2 * nb + 3, &e1)?;
        report(&self.layers[2 * nb + 3].name, &e2);
        let out = run(2 * nb + 4, &e2)?;
        report(&self.layers[2 * nb + 4].name, &out);

        Ok(Trace {
            padded,
            specs,
            acts,
            in_dims,
            block_inputs,
            output: out,
        })
    }

    /// Reverse-mode gradients of `<forward(x), grad_out>` for every layer, plus
    /// the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<(Gradients, Tensor)> {
        let nb = self.cfg.n_residual_blocks;
        let mut grads = Gradients::zeros_like(self);

        // Gradient w.r.t. the layer's (post-activation) output -> its input.
        let mut back = |idx: usize, g_act: &Tensor| -> Result<Tensor> {
            let l = &self.layers[idx];
            let g_pre = if l.relu {
                relu_backward(&trace.acts[idx], g_act)?
            } else {
                g_act.clone()
            };
            let cg = conv2d_backward(&trace.padded[idx], &l.kernel, &g_pre)?;
            grads.layers[idx] = LayerGrad {
                weights: cg.weights,
                bias: cg.bias,
            };
            match &trace.specs[idx] {
                Some(spec) => pad_backward(spec, &cg.input),
                None => Ok(cg.input),
            }
        };

        let g_e2 = back(2 * nb + 4, grad_out)?;
        let g_e1 = back(2 * nb + 3, &g_e2)?;
        let g_s = back(2 * nb + 2, &g_e1)?;

        // s = conv_skip(h_n) + a0
        let (_, h0, w0) = trace.block_inputs[0].chw()?;
        let mut g_a0 = uncrop(&g_s, h0, w0)?;
        let mut g_h = back(2 * nb + 1, &g_s)?;

        for b in (0..nb).rev() {
            let (i, j) = self.block_layers(b);
            let (_, bh, bw) = trace.block_inputs[b].chw()?;
            let g_skip = uncrop(&g_h, bh, bw)?;
            let g_u = back(j, &g_h)?;
            let mut g_in = back(i, &g_u)?;
            g_in.add_assign(&g_skip)?;
            g_h = g_in;
        }
        g_a0.add_assign(&g_h)?;
        let g_x = back(0, &g_a0)?;
        debug_assert_eq!(g_x.chw()?, trace.in_dims[0]);
        Ok((grads, g_x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tiny() -> ModelConfig {
        ModelConfig {
            feature_width: 4,
            expansion_width: 6,
            n_residual_blocks: 2,
            kernel_size: 3,
            ..ModelConfig::default()
        }
    }

    fn rand_tensor(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(dims, |_, _, _| rng.random_range(0.0..1.0))
    }

    fn perturb_all(m: &mut Model, rng: &mut ChaCha8Rng, scale: f64) {
        for l in m.layers_mut() {
            for v in l.kernel.weights.data_mut().iter_mut() {
                *v = rng.random_range(-scale..scale);
            }
            for v in l.kernel.bias.iter_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }

    #[test]
    fn default_layer_count() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.conv_count(), 15);
        assert_eq!(cfg.layer_shapes().len(), 15);
        let one = ModelConfig {
            n_residual_blocks: 1,
            ..cfg.clone()
        };
        assert_eq!(cfg.conv_count() - one.conv_count(), 8);
    }

    #[test]
    fn channel_chain() {
        let shapes = ModelConfig::default().layer_shapes();
        let chain: Vec<(usize, usize)> = shapes.iter().map(|(_, d, _)| (d[1], d[0])).collect();
        assert_eq!(chain[0], (3, 64));
        assert!(chain[1..11].iter().all(|&p| p == (64, 64)));
        assert_eq!(&chain[11..], &[(64, 64), (64, 256), (256, 256), (256, 3)]);
    }

    #[test]
    fn config_validation() {
        let even = ModelConfig {
            kernel_size: 4,
            ..tiny()
        };
        assert!(Model::build(even).is_err());
        let none = ModelConfig {
            n_residual_blocks: 0,
            ..tiny()
        };
        assert!(Model::build(none).is_err());
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let a = Model::build(tiny()).unwrap();
        let b = Model::build(tiny()).unwrap();
        assert_eq!(a, b);
        let c = Model::build(ModelConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn he_init_scale() {
        let m = Model::build(ModelConfig::default()).unwrap();
        let w = &m.layers()[1].kernel.weights;
        let var = w.sum_squares() / w.len() as f64;
        let want = 2.0 / (64.0 * 49.0);
        assert!((var / want - 1.0).abs() < 0.02, "{var} vs {want}");
        assert!(m.layers().iter().all(|l| l.kernel.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Model::build(tiny()).unwrap();
        perturb_all(&mut m, &mut rng, 0.3);
        m.zero_block(1);
        let x = Tensor::from_fn([4, 7, 7], |_, _, _| rng.random_range(-1.0..1.0));
        assert_eq!(m.residual_block_forward(1, &x).unwrap(), x);
        assert_ne!(m.residual_block_forward(0, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_zero_bias_block() {
        let m = Model::build(tiny()).unwrap();
        let x = Tensor::zeros(&[4, 6, 6]);
        assert_eq!(m.residual_block_forward(0, &x).unwrap(), x);
    }

    #[test]
    fn block_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = Model::build(tiny()).unwrap();
        perturb_all(&mut m, &mut rng, 0.3);
        let x = Tensor::from_fn([4, 6, 5], |_, _, _| rng.random_range(-1.0..1.0));
        let (i, j) = m.block_layers(0);
        let k1 = &m.layers()[i].kernel;
        let k2 = &m.layers()[j].kernel;
        let spec = same_pad_spec_for(6, 5, (3, 3), (1, 1), FillMode::Mirror).unwrap();
        let u = relu(&conv2d_valid(&pad(&x, &spec).unwrap(), k1).unwrap());
        let r = conv2d_valid(&pad(&u, &spec).unwrap(), k2).unwrap();
        let want = add(&r, &x).unwrap();
        assert_eq!(m.residual_block_forward(0, &x).unwrap(), want);
    }

    #[test]
    fn shapes_preserved_at_every_layer() {
        for mode in [PadMode::Mirror, PadMode::Zero] {
            let m = Model::build(ModelConfig {
                pad_mode: mode,
                ..tiny()
            })
            .unwrap();
            let x = Tensor::full(&[3, 11, 8], 0.5);
            let mut seen = 0;
            let y = m
                .forward_inspect(&x, &mut |_, t| {
                    let (_, h, w) = t.chw().unwrap();
                    assert_eq!((h, w), (11, 8));
                    seen += 1;
                })
                .unwrap();
            assert_eq!(seen, m.layers().len());
            assert_eq!(y.dims(), &[3, 11, 8]);
        }
    }

    #[test]
    fn valid_mode_shrinks() {
        let m = Model::build(ModelConfig {
            pad_mode: PadMode::Valid,
            ..tiny()
        })
        .unwrap();
        // 9 layers of 3x3 each remove 2 pixels
        let y = m.forward(&Tensor::full(&[3, 20, 20], 0.5)).unwrap();
        assert_eq!(y.dims(), &[3, 2, 2]);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let m = Model::build(tiny()).unwrap();
        let err = m.forward(&Tensor::zeros(&[1, 8, 8])).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = Model::zeroed(tiny()).unwrap();
        let y = m.forward(&Tensor::full(&[3, 9, 9], 0.7)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_model_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [PadMode::Mirror, PadMode::Zero] {
            let m = Model::identity(ModelConfig {
                pad_mode: mode,
                ..tiny()
            })
            .unwrap();
            let x = rand_tensor([3, 10, 7], &mut rng);
            assert_eq!(m.forward(&x).unwrap(), x);
        }
    }

    #[test]
    fn backward_of_zero_grad_is_zero() {
        let m = Model::build(tiny()).unwrap();
        let x = Tensor::full(&[3, 6, 6], 0.3);
        let tr = m.forward_trace(&x, None).unwrap();
        let (g, gx) = m.backward(&tr, &Tensor::zeros(&[3, 6, 6])).unwrap();
        assert!(g.iter_values().all(|v| v == 0.0));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_kernel_chain_rule() {
        // 1x1 kernels on a single channel: output is a polynomial in the
        // scalar weights that can be differentiated by hand.
        let cfg = ModelConfig {
            channels_in: 1,
            feature_width: 1,
            expansion_width: 1,
            n_residual_blocks: 1,
            kernel_size: 1,
            ..ModelConfig::default()
        };
        let mut m = Model::zeroed(cfg).unwrap();
        let w = [0.5, 0.25, -0.5, 0.75, 2.0, 1.5, -1.0];
        for (l, &v) in m.layers_mut().iter_mut().zip(&w) {
            l.kernel.weights.data_mut()[0] = v;
        }
        let xv = 0.8;
        let x = Tensor::full(&[1, 1, 1], xv);
        let a0 = w[0] * xv;
        let u = (w[1] * a0).max(0.0);
        let h1 = w[2] * u + a0;
        let s = w[3] * h1 + a0;
        let e1 = w[4] * s;
        let e2 = w[5] * e1;
        let y = w[6] * e2;
        let tr = m.forward_trace(&x, None).unwrap();
        assert!((tr.output().data()[0] - y).abs() < 1e-15);

        let (g, gx) = m.backward(&tr, &Tensor::full(&[1, 1, 1], 1.0)).unwrap();
        let dy_ds = w[6] * w[5] * w[4];
        let dy_dh1 = dy_ds * w[3];
        let dy_da0 = dy_ds + dy_dh1 * (1.0 + w[2] * w[1]);
        let want = [
            dy_da0 * xv,
            dy_dh1 * w[2] * a0,
            dy_dh1 * u,
            dy_ds * h1,
            w[6] * w[5] * s,
            w[6] * e1,
            e2,
        ];
        for (k, wv) in want.iter().enumerate() {
            let got = g.layers[k].weights.data()[0];
            assert!((got - wv).abs() < 1e-12, "layer {k}: {got} vs {wv}");
        }
        assert!((gx.data()[0] - dy_da0 * w[0]).abs() < 1e-12);
    }

    fn loss(m: &Model, x: &Tensor, target: &Tensor) -> f64 {
        0.5 * m.forward(x).unwrap().sub(target).unwrap().sum_squares()
    }

    #[test]
    fn tiny_model_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in [PadMode::Mirror, PadMode::Zero, PadMode::Valid] {
            let cfg = ModelConfig {
                pad_mode: mode,
                ..tiny()
            };
            let mut m = Model::build(cfg).unwrap();
            for l in m.layers_mut() {
                for v in l.kernel.bias.iter_mut() {
                    *v = rng.random_range(-0.1..0.1);
                }
            }
            let side = if mode == PadMode::Valid { 21 } else { 6 };
            let x = rand_tensor([3, side, side], &mut rng);
            let tr = m.forward_trace(&x, None).unwrap();
            let (_, oh, ow) = tr.output().chw().unwrap();
            let target = rand_tensor([3, oh, ow], &mut rng);
            let g_out = tr.output().sub(&target).unwrap();
            let (g, gx) = m.backward(&tr, &g_out).unwrap();
            let h = 1e-5;
            for li in 0..m.layers().len() {
                let nw = m.layers()[li].kernel.weights.len();
                for _ in 0..4 {
                    let idx = rng.random_range(0..nw);
                    let mut mp = m.clone();
                    mp.layers_mut()[li].kernel.weights.data_mut()[idx] += h;
                    let mut mm = m.clone();
                    mm.layers_mut()[li].kernel.weights.data_mut()[idx] -= h;
                    let fd = (loss(&mp, &x, &target) - loss(&mm, &x, &target)) / (2.0 * h);
                    let an = g.layers[li].weights.data()[idx];
                    let scale = fd.abs().max(an.abs()).max(1e-8);
                    assert!((fd - an).abs() / scale < 1e-4, "{mode:?} layer {li}: {fd} vs {an}");
                }
                let mut mp = m.clone();
                mp.layers_mut()[li].kernel.bias[0] += h;
                let mut mm = m.clone();
                mm.layers_mut()[li].kernel.bias[0] -= h;
                let fd = (loss(&mp, &x, &target) - loss(&mm, &x, &target)) / (2.0 * h);
                let an = g.layers[li].bias[0];
                let scale = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / scale < 1e-4, "{mode:?} bias {li}: {fd} vs {an}");
            }
            for _ in 0..5 {
                let idx = rng.random_range(0..x.len());
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data_mut()[idx] += h;
                xm.data_mut()[idx] -= h;
                let fd = (loss(&m, &xp, &target) - loss(&m, &xm, &target)) / (2.0 * h);
                let an = gx.data()[idx];
                let scale = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / scale < 1e-4, "{mode:?} input: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn long_skip_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Model::build(tiny()).unwrap();
        let x = rand_tensor([3, 8, 8], &mut rng);
        let mut skip_sum = None;
        m.forward_inspect(&x, &mut |name, t| {
            if name == "conv_skip" {
                skip_sum = Some(t.clone());
            }
        })
        .unwrap();

        let conv = |idx: usize, t: &Tensor| {
            let l = &m.layers()[idx];
            let spec = same_pad_spec_for(8, 8, l.kernel.size(), (1, 1), FillMode::Mirror).unwrap();
            let y = conv2d_valid(&pad(t, &spec).unwrap(), &l.kernel).unwrap();
            if l.relu {
                relu(&y)
            } else {
                y
            }
        };
        let a0 = conv(0, &x);
        let mut h = a0.clone();
        for b in 0..2 {
            h = m.residual_block_forward(b, &h).unwrap();
        }
        let want = add(&a0, &conv(5, &h)).unwrap();
        assert_eq!(skip_sum.unwrap(), want);
    }
}
