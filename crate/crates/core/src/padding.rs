//! Same-size padding geometry and border fill.
//!
//! For a convolution with kernel `(k1, k2)` and stride `(s1, s2)` applied to an
//! `h x w` map, padding the map to `(s1*h + k1 - 1, s2*w + k2 - 1)` makes the
//! valid convolution return exactly `h x w`. The border is filled either by
//! edge-inclusive mirror reflection (`[1,2,3]` padded by two becomes
//! `[2,1,1,2,3,3,2]`) or by zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    Mirror,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadSpec {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
    pub mode: FillMode,
}

impl PadSpec {
    pub fn none(mode: FillMode) -> Self {
        PadSpec {
            top: 0,
            bottom: 0,
            left: 0,
            right: 0,
            mode,
        }
    }

    pub fn padded_extent(&self, h: usize, w: usize) -> (usize, usize) {
        (h + self.top + self.bottom, w + self.left + self.right)
    }

    /// Checks that mirror reflection stays inside an `h x w` source.
    pub fn check_source(&self, h: usize, w: usize) -> Result<()> {
        if self.mode == FillMode::Zero {
            return Ok(());
        }
        for (axis, pad, extent) in [
            ("top", self.top, h),
            ("bottom", self.bottom, h),
            ("left", self.left, w),
            ("right", self.right, w),
        ] {
            if pad > extent {
                return Err(Error::PadOutOfRange { axis, pad, extent });
            }
        }
        Ok(())
    }
}

/// Padding that makes `kernel` map an `h x w` input to an `h x w` output.
/// An odd total puts the extra pixel on the bottom/right.
pub fn same_pad_spec(h: usize, w: usize, kernel: &ConvKernel, mode: FillMode) -> Result<PadSpec> {
    let (k1, k2) = kernel.size();
    same_pad_spec_for(h, w, (k1, k2), kernel.stride, mode)
}

/// [`same_pad_spec`] from bare kernel extents and stride.
pub fn same_pad_spec_for(
    h: usize,
    w: usize,
    (k1, k2): (usize, usize),
    (s1, s2): (usize, usize),
    mode: FillMode,
) -> Result<PadSpec> {
    if h == 0 || w == 0 {
        return Err(Error::Config("padding source must be non-empty".into()));
    }
    if k1 == 0 || k2 == 0 || s1 == 0 || s2 == 0 {
        return Err(Error::Config("kernel extents and stride must be positive".into()));
    }
    let total_v = (s1 - 1) * h + k1 - 1;
    let total_h = (s2 - 1) * w + k2 - 1;
    let spec = PadSpec {
        top: total_v / 2,
        bottom: total_v - total_v / 2,
        left: total_h / 2,
        right: total_h - total_h / 2,
        mode,
    };
    spec.check_source(h, w)?;
    Ok(spec)
}

/// Source index for padded coordinate `p` (may be negative) over `n` samples.
#[inline]
fn reflect(p: isize, n: usize) -> usize {
    let n = n as isize;
    if p < 0 {
        (-p - 1) as usize
    } else if p >= n {
        (2 * n - p - 1) as usize
    } else {
        p as usize
    }
}

pub fn pad(t: &Tensor, spec: &PadSpec) -> Result<Tensor> {
    let (c, h, w) = t.chw()?;
    spec.check_source(h, w)?;
    let (ph, pw) = spec.padded_extent(h, w);
    let mut out = Tensor::zeros(&[c, ph, pw]);
    let src = t.data();
    let dst = out.data_mut();
    match spec.mode {
        FillMode::Zero => {
            for ci in 0..c {
                for i in 0..h {
                    let s = (ci * h + i) * w;
                    let d = (ci * ph + i + spec.top) * pw + spec.left;
                    dst[d..d + w].copy_from_slice(&src[s..s + w]);
                }
            }
        }
        FillMode::Mirror => {
            let cols: Vec<usize> = (0..pw)
                .map(|j| reflect(j as isize - spec.left as isize, w))
                .collect();
            for ci in 0..c {
                for i in 0..ph {
                    let si = reflect(i as isize - spec.top as isize, h);
                    let s = (ci * h + si) * w;
                    let d = (ci * ph + i) * pw;
                    for (o, &sj) in dst[d..d + pw].iter_mut().zip(&cols) {
                        *o = src[s + sj];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`pad`]: mirror mode folds each border gradient back onto its
/// reflection source; zero mode crops.
pub fn pad_backward(spec: &PadSpec, grad_out: &Tensor) -> Result<Tensor> {
    let (c, ph, pw) = grad_out.chw()?;
    let (vt, ht) = (spec.top + spec.bottom, spec.left + spec.right);
    if ph <= vt {
        return Err(Error::Shape {
            op: "pad_backward",
            axis: "height",
            expected: vt + 1,
            found: ph,
        });
    }
    if pw <= ht {
        return Err(Error::Shape {
            op: "pad_backward",
            axis: "width",
            expected: ht + 1,
            found: pw,
        });
    }
    let (h, w) = (ph - vt, pw - ht);
    spec.check_source(h, w)?;
    match spec.mode {
        FillMode::Zero => grad_out.crop(spec.top, spec.left, h, w),
        FillMode::Mirror => {
            let mut out = Tensor::zeros(&[c, h, w]);
            let src = grad_out.data();
            let dst = out.data_mut();
            let cols: Vec<usize> = (0..pw)
                .map(|j| reflect(j as isize - spec.left as isize, w))
                .collect();
            for ci in 0..c {
                for i in 0..ph {
                    let si = reflect(i as isize - spec.top as isize, h);
                    let d = (ci * h + si) * w;
                    let s = (ci * ph + i) * pw;
                    for (g, &sj) in src[s..s + pw].iter().zip(&cols) {
                        dst[d + sj] += g;
                    }
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv2d_valid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[1, 1, v.len()], v.to_vec()).unwrap()
    }

    fn horizontal(l: usize, r: usize, mode: FillMode) -> PadSpec {
        PadSpec {
            left: l,
            right: r,
            ..PadSpec::none(mode)
        }
    }

    #[test]
    fn same_pad_for_33_tile_and_7_kernel() {
        let spec = same_pad_spec_for(33, 33, (7, 7), (1, 1), FillMode::Mirror).unwrap();
        assert_eq!((spec.top, spec.bottom, spec.left, spec.right), (3, 3, 3, 3));
        assert_eq!(spec.padded_extent(33, 33), (39, 39));
    }

    #[test]
    fn unit_kernel_needs_no_padding() {
        let spec = same_pad_spec_for(10, 12, (1, 1), (1, 1), FillMode::Zero).unwrap();
        assert_eq!(spec, PadSpec::none(FillMode::Zero));
    }

    #[test]
    fn strided_same_pad() {
        let spec = same_pad_spec_for(5, 5, (3, 3), (2, 2), FillMode::Zero).unwrap();
        let (ph, pw) = spec.padded_extent(5, 5);
        assert_eq!((ph, pw), (12, 12));
        assert_eq!((spec.top, spec.bottom), (3, 4));
        let k = ConvKernel {
            stride: (2, 2),
            ..ConvKernel::zeros(1, 1, 3, 3)
        };
        let y = conv2d_valid(&pad(&Tensor::zeros(&[1, 5, 5]), &spec).unwrap(), &k).unwrap();
        assert_eq!(y.dims(), &[1, 5, 5]);
    }

    #[test]
    fn mirror_rejects_oversized_kernel() {
        let err = same_pad_spec_for(3, 3, (9, 9), (1, 1), FillMode::Mirror).unwrap_err();
        assert!(matches!(err, Error::PadOutOfRange { .. }), "{err}");
        // zero fill has no such limit
        assert!(same_pad_spec_for(3, 3, (9, 9), (1, 1), FillMode::Zero).is_ok());
    }

    #[test]
    fn mirror_and_zero_rows() {
        let t = row(&[1.0, 2.0, 3.0]);
        let m = pad(&t, &horizontal(2, 2, FillMode::Mirror)).unwrap();
        assert_eq!(m.data(), &[2.0, 1.0, 1.0, 2.0, 3.0, 3.0, 2.0]);
        let z = pad(&t, &horizontal(2, 2, FillMode::Zero)).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn mirror_of_constant_is_constant() {
        let t = Tensor::full(&[2, 4, 5], 0.25);
        let spec = PadSpec {
            top: 4,
            bottom: 1,
            left: 2,
            right: 5,
            mode: FillMode::Mirror,
        };
        let p = pad(&t, &spec).unwrap();
        assert_eq!(p.dims(), &[2, 9, 12]);
        assert!(p.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn pad_rejects_reflection_past_source() {
        let err = pad(&row(&[1.0, 2.0]), &horizontal(3, 0, FillMode::Mirror)).unwrap_err();
        assert!(err.to_string().contains("left"), "{err}");
    }

    #[test]
    fn backward_examples() {
        let g = row(&[1.0, 10.0, 100.0, 1000.0, 10000.0]);
        let m = pad_backward(&horizontal(1, 1, FillMode::Mirror), &g).unwrap();
        assert_eq!(m.data(), &[11.0, 100.0, 11000.0]);
        let z = pad_backward(&horizontal(1, 1, FillMode::Zero), &g).unwrap();
        assert_eq!(z.data(), &[10.0, 100.0, 1000.0]);
        assert!(pad_backward(&horizontal(3, 2, FillMode::Zero), &g).is_err());
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (c, h, w) = (
                rng.random_range(1..4),
                rng.random_range(1..9),
                rng.random_range(1..9),
            );
            let mode = if rng.random_bool(0.5) {
                FillMode::Mirror
            } else {
                FillMode::Zero
            };
            let spec = PadSpec {
                top: rng.random_range(0..=h),
                bottom: rng.random_range(0..=h),
                left: rng.random_range(0..=w),
                right: rng.random_range(0..=w),
                mode,
            };
            let x = Tensor::from_fn([c, h, w], |_, _, _| rng.random_range(-1.0..1.0));
            let (ph, pw) = spec.padded_extent(h, w);
            let g = Tensor::from_fn([c, ph, pw], |_, _, _| rng.random_range(-1.0..1.0));
            let lhs = pad(&x, &spec).unwrap().dot(&g).unwrap();
            let rhs = x.dot(&pad_backward(&spec, &g).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn mirror_introduces_no_new_values_and_keeps_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let (h, w) = (rng.random_range(1..8), rng.random_range(1..8));
            let x = Tensor::from_fn([2, h, w], |_, _, _| rng.random_range(0.0..1.0));
            for mode in [FillMode::Mirror, FillMode::Zero] {
                let spec = PadSpec {
                    top: rng.random_range(0..=h),
                    bottom: rng.random_range(0..=h),
                    left: rng.random_range(0..=w),
                    right: rng.random_range(0..=w),
                    mode,
                };
                let p = pad(&x, &spec).unwrap();
                assert_eq!(p.crop(spec.top, spec.left, h, w).unwrap(), x);
                if mode == FillMode::Mirror {
                    for c in 0..2 {
                        let plane = &x.data()[c * h * w..(c + 1) * h * w];
                        let (ph, pw) = spec.padded_extent(h, w);
                        for v in &p.data()[c * ph * pw..(c + 1) * ph * pw] {
                            assert!(plane.contains(v));
                        }
                    }
                }
            }
        }
    }
}
