//! Dense loops shared by forward and backward passes.

use crate::Real;

/// `[m, k] x [k, n]`
pub(crate) fn mm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a^T b` with `a: [k, m]`, `b: [k, n]`.
pub(crate) fn mm_at<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a b^T` with `a: [m, k]`, `b: [n, k]`.
pub(crate) fn mm_bt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow
                .iter()
                .zip(brow)
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn new(
        [c_in, h, w]: [usize; 3],
        [kh, kw]: [usize; 2],
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return None;
        }
        Some(Self {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            padding,
            h_out: (h + 2 * padding - kh) / stride + 1,
            w_out: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    /// Input coordinate for output `(oy, ox)` and kernel tap `(ky, kx)`, or
    /// `None` when it falls in the zero padding.
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// `[C, H, W]` to `[C*kh*kw, H_out*W_out]`.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let p = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.h_out {
                    for ox in 0..g.w_out {
                        if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                            dst[oy * g.w_out + ox] = x[(c * g.h + y) * g.w + xx];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let p = g.positions();
    let mut x = vec![T::zero(); g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.h_out {
                    for ox in 0..g.w_out {
                        if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                            let i = (c * g.h + y) * g.w + xx;
                            x[i] = x[i] + src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
