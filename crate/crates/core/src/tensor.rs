//! Dense tensors and the differentiable primitives the network is built from.
//!
//! Layout is row-major with the slowest dimension first, i.e. `(C, H, W)` for a
//! single image or feature map. All arithmetic is `f64`. Convolution is
//! cross-correlation (no kernel flip), evaluated as im2col followed by a GEMM.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    /// Wraps `data` with the given extents; the element count must match.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Shape {
                op: "Tensor::from_vec",
                axis: "element count",
                expected: len,
                found: data.len(),
            });
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a `(C, H, W)` tensor from a closure over coordinates.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [c, h, w] = dims;
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    data.push(f(ci, i, j));
                }
            }
        }
        Tensor {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, H, W)` extents of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            d => Err(Error::Rank {
                op: "chw",
                expected: 3,
                found: d.len(),
            }),
        }
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        let (h, w) = (self.dims[1], self.dims[2]);
        self.data[(c * h + i) * w + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let (h, w) = (self.dims[1], self.dims[2]);
        self.data[(c * h + i) * w + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_dims("sub", self, other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        same_dims("dot", self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        same_dims("add_assign", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Spatial window `[top, top+h) x [left, left+w)` of a `(C, H, W)` tensor.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
        let (c, sh, sw) = self.chw()?;
        if top + h > sh {
            return Err(Error::Shape {
                op: "crop",
                axis: "height",
                expected: sh,
                found: top + h,
            });
        }
        if left + w > sw {
            return Err(Error::Shape {
                op: "crop",
                axis: "width",
                expected: sw,
                found: left + w,
            });
        }
        let mut out = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for i in 0..h {
                let row = (ci * sh + top + i) * sw + left;
                out.extend_from_slice(&self.data[row..row + w]);
            }
        }
        Ok(Tensor {
            dims: vec![c, h, w],
            data: out,
        })
    }

    /// Centered crop to `(h, w)`; extra rows/cols are removed evenly with the
    /// odd one taken from the bottom/right.
    pub fn center_crop(&self, h: usize, w: usize) -> Result<Tensor> {
        let (_, sh, sw) = self.chw()?;
        if h > sh || w > sw {
            return Err(Error::Shape {
                op: "center_crop",
                axis: if h > sh { "height" } else { "width" },
                expected: if h > sh { sh } else { sw },
                found: if h > sh { h } else { w },
            });
        }
        self.crop((sh - h) / 2, (sw - w) / 2, h, w)
    }
}

fn same_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims.len() != b.dims.len() {
        return Err(Error::Rank {
            op,
            expected: a.dims.len(),
            found: b.dims.len(),
        });
    }
    const AXES: [&str; 4] = ["axis 0", "axis 1", "axis 2", "axis 3"];
    for (k, (x, y)) in a.dims.iter().zip(&b.dims).enumerate() {
        if x != y {
            return Err(Error::Shape {
                op,
                axis: AXES.get(k).copied().unwrap_or("axis"),
                expected: *x,
                found: *y,
            });
        }
    }
    Ok(())
}

/// Elementwise sum; the skip-connection combiner.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_dims("add", a, b)?;
    Ok(Tensor {
        dims: a.dims.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

pub fn relu(t: &Tensor) -> Tensor {
    t.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of [`relu`] evaluated at `t`. The subgradient at exactly zero is 0.
pub fn relu_backward(t: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    same_dims("relu_backward", t, grad_out)?;
    Ok(Tensor {
        dims: t.dims.clone(),
        data: t
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    })
}

/// Mean squared error over all elements.
pub fn mse(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    same_dims("mse", y, y_hat)?;
    if y.is_empty() {
        return Err(Error::Empty("mse of empty tensors"));
    }
    let s: f64 = y
        .data
        .iter()
        .zip(&y_hat.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / y.len() as f64)
}

/// Convolution weights `(C_out, C_in, k1, k2)`, per-output-channel bias and stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub stride: (usize, usize),
}

impl ConvKernel {
    pub fn new(weights: Tensor, bias: Vec<f64>, stride: (usize, usize)) -> Result<Self> {
        let d = weights.dims();
        if d.len() != 4 {
            return Err(Error::Rank {
                op: "ConvKernel::new",
                expected: 4,
                found: d.len(),
            });
        }
        if d.contains(&0) {
            return Err(Error::Config("kernel extents must be positive".into()));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if bias.len() != d[0] {
            return Err(Error::Shape {
                op: "ConvKernel::new",
                axis: "bias length",
                expected: d[0],
                found: bias.len(),
            });
        }
        Ok(ConvKernel {
            weights,
            bias,
            stride,
        })
    }

    pub fn zeros(c_out: usize, c_in: usize, k1: usize, k2: usize) -> Self {
        ConvKernel {
            weights: Tensor::zeros(&[c_out, c_in, k1, k2]),
            bias: vec![0.0; c_out],
            stride: (1, 1),
        }
    }

    pub fn c_out(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weights.dims()[1]
    }

    /// Kernel extents `(k1, k2)`.
    pub fn size(&self) -> (usize, usize) {
        (self.weights.dims()[2], self.weights.dims()[3])
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Output extent of a valid (unpadded) convolution along one axis.
pub fn conv_out_len(n: usize, k: usize, s: usize) -> usize {
    (n - k) / s + 1
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    k1: usize,
    k2: usize,
    s1: usize,
    s2: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c_in * self.k1 * self.k2
    }
    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn geometry(op: &'static str, input: &Tensor, kernel: &ConvKernel) -> Result<ConvGeom> {
    let (c_in, h, w) = input.chw()?;
    let (k1, k2) = kernel.size();
    if c_in != kernel.c_in() {
        return Err(Error::Shape {
            op,
            axis: "input channels",
            expected: kernel.c_in(),
            found: c_in,
        });
    }
    if h < k1 {
        return Err(Error::Shape {
            op,
            axis: "height (must be >= kernel height)",
            expected: k1,
            found: h,
        });
    }
    if w < k2 {
        return Err(Error::Shape {
            op,
            axis: "width (must be >= kernel width)",
            expected: k2,
            found: w,
        });
    }
    let (s1, s2) = kernel.stride;
    Ok(ConvGeom {
        c_in,
        h,
        w,
        k1,
        k2,
        s1,
        s2,
        oh: conv_out_len(h, k1, s1),
        ow: conv_out_len(w, k2, s2),
    })
}

fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.cols();
    let mut cols = vec![0.0; g.rows() * p];
    for c in 0..g.c_in {
        for a in 0..g.k1 {
            for b in 0..g.k2 {
                let r = (c * g.k1 + a) * g.k2 + b;
                let dst = &mut cols[r * p..(r + 1) * p];
                for i in 0..g.oh {
                    let src_row = (c * g.h + i * g.s1 + a) * g.w + b;
                    let out_row = &mut dst[i * g.ow..(i + 1) * g.ow];
                    if g.s2 == 1 {
                        out_row.copy_from_slice(&input[src_row..src_row + g.ow]);
                    } else {
                        for (j, o) in out_row.iter_mut().enumerate() {
                            *o = input[src_row + j * g.s2];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.cols();
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for a in 0..g.k1 {
            for b in 0..g.k2 {
                let r = (c * g.k1 + a) * g.k2 + b;
                let src = &cols[r * p..(r + 1) * p];
                for i in 0..g.oh {
                    let dst_row = (c * g.h + i * g.s1 + a) * g.w + b;
                    for j in 0..g.ow {
                        out[dst_row + j * g.s2] += src[i * g.ow + j];
                    }
                }
            }
        }
    }
    out
}

/// `C = A·B + beta·C` on row-major buffers with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    // SAFETY: the asserts above bound every index the kernel touches; the
    // output is a dense m x n row-major block.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Valid (unpadded) strided cross-correlation of a `(C_in, H, W)` input.
pub fn conv2d_valid(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    let g = geometry("conv2d_valid", input, kernel)?;
    let cols = im2col(input.data(), &g);
    let (m, k, n) = (kernel.c_out(), g.rows(), g.cols());
    let mut out = Vec::with_capacity(m * n);
    for &b in &kernel.bias {
        out.extend(std::iter::repeat_n(b, n));
    }
    gemm(m, k, n, kernel.weights.data(), k, 1, &cols, n, 1, 1.0, &mut out);
    Tensor::from_vec(&[m, g.oh, g.ow], out)
}

/// Exact gradients of [`conv2d_valid`] with respect to input, weights and bias.
pub fn conv2d_backward(input: &Tensor, kernel: &ConvKernel, grad_out: &Tensor) -> Result<ConvGrads> {
    let g = geometry("conv2d_backward", input, kernel)?;
    let (gc, gh, gw) = grad_out.chw()?;
    for (axis, expected, found) in [
        ("grad channels", kernel.c_out(), gc),
        ("grad height", g.oh, gh),
        ("grad width", g.ow, gw),
    ] {
        if expected != found {
            return Err(Error::Shape {
                op: "conv2d_backward",
                axis,
                expected,
                found,
            });
        }
    }
    let (m, r, p) = (kernel.c_out(), g.rows(), g.cols());
    let go = grad_out.data();
    let cols = im2col(input.data(), &g);

    let bias = (0..m).map(|o| go[o * p..(o + 1) * p].iter().sum()).collect();

    // dW[o, r] = sum_p dY[o, p] * cols[r, p]
    let mut gw_buf = vec![0.0; m * r];
    gemm(m, p, r, go, p, 1, &cols, 1, p, 0.0, &mut gw_buf);

    // dcols[r, p] = sum_o W[o, r] * dY[o, p]
    let mut gcols = vec![0.0; r * p];
    gemm(r, m, p, kernel.weights.data(), 1, r, go, p, 1, 0.0, &mut gcols);
    let gin = col2im(&gcols, &g);

    Ok(ConvGrads {
        input: Tensor::from_vec(input.dims(), gin)?,
        weights: Tensor::from_vec(kernel.weights.dims(), gw_buf)?,
        bias,
    })
}
