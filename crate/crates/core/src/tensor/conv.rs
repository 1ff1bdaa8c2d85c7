//! 1D convolution and its transpose.
//!
//! Both directions share one [`ConvGeometry`] describing the forward
//! convolution: output position `j`, tap `k` reads input position
//! `j * stride + k - pad_left`, and positions outside `[0, l_in)` read zero.
//! The transposed convolution is the exact adjoint of that map.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output length `ceil(l_in / stride)`, padding split with the extra
    /// element on the right.
    Same,
    /// No padding, output length `(l_in - kernel) / stride + 1`.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    /// Input length of the forward convolution.
    pub l_in: usize,
    /// Output length of the forward convolution.
    pub l_out: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Geometry of a convolution reading `l_in` samples.
    pub fn forward(l_in: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if kernel == 0 {
            return Err(Error::invalid("kernel size must be at least 1"));
        }
        let (l_out, pad_left) = match padding {
            Padding::Same => {
                let l_out = l_in.div_ceil(stride);
                let total = ((l_out - 1) * stride + kernel).saturating_sub(l_in);
                (l_out, total / 2)
            }
            Padding::Valid => {
                if kernel > l_in {
                    return Err(Error::invalid(format!(
                        "kernel {kernel} longer than input length {l_in} with valid padding"
                    )));
                }
                ((l_in - kernel) / stride + 1, 0)
            }
        };
        Ok(Self { kernel, stride, l_in, l_out, pad_left })
    }

    /// Geometry of a transposed convolution reading `l_in` samples; its
    /// output length is the forward geometry's `l_in`.
    pub fn transpose(l_in: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if kernel == 0 {
            return Err(Error::invalid("kernel size must be at least 1"));
        }
        let full = match padding {
            Padding::Same => l_in * stride,
            Padding::Valid => (l_in - 1) * stride + kernel,
        };
        let geo = Self::forward(full, kernel, stride, padding)?;
        debug_assert_eq!(geo.l_out, l_in);
        Ok(geo)
    }

    /// For tap `k`: the half-open range of output positions with an in-range
    /// input, and the input position of the first of them.
    fn taps(&self, k: usize) -> (usize, usize, usize) {
        let off = k as isize - self.pad_left as isize;
        let s = self.stride as isize;
        let lo = if off < 0 { (-off + s - 1) / s } else { 0 };
        let last_in = self.l_in as isize - 1 - off;
        let hi = if last_in < 0 { 0 } else { (last_in / s + 1).min(self.l_out as isize) };
        if hi <= lo {
            return (0, 0, 0);
        }
        (lo as usize, hi as usize, (lo * s + off) as usize)
    }

    fn tap_table(&self) -> Vec<(usize, usize, usize)> {
        (0..self.kernel).map(|k| self.taps(k)).collect()
    }
}

/// `y[b, o, :] += sum_{c,k} w[o, c, k] * x[b, c, j*s + k - pad]`.
///
/// `x` is `[batch, c_in, l_in]`, `w` is `[c_out, c_in, k]`, `y` is
/// `[batch, c_out, l_out]`.
pub(crate) fn forward_kernel(
    x: &[f64],
    w: &[f64],
    y: &mut [f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) {
    let taps = g.tap_table();
    let (s, kn) = (g.stride, g.kernel);
    for b in 0..batch {
        for o in 0..c_out {
            let y_row = &mut y[(b * c_out + o) * g.l_out..][..g.l_out];
            for c in 0..c_in {
                let x_row = &x[(b * c_in + c) * g.l_in..][..g.l_in];
                let w_row = &w[(o * c_in + c) * kn..][..kn];
                for (&wv, &(lo, hi, start)) in w_row.iter().zip(&taps) {
                    if s == 1 {
                        for (yv, xv) in y_row[lo..hi].iter_mut().zip(&x_row[start..]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for (yv, xv) in y_row[lo..hi].iter_mut().zip(x_row[start..].iter().step_by(s)) {
                            *yv += wv * xv;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`forward_kernel`] in its input:
/// `x[b, c, j*s + k - pad] += w[o, c, k] * y[b, o, j]`.
pub(crate) fn adjoint_kernel(
    y: &[f64],
    w: &[f64],
    x: &mut [f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) {
    let taps = g.tap_table();
    let (s, kn) = (g.stride, g.kernel);
    for b in 0..batch {
        for c in 0..c_in {
            let x_row = &mut x[(b * c_in + c) * g.l_in..][..g.l_in];
            for o in 0..c_out {
                let y_row = &y[(b * c_out + o) * g.l_out..][..g.l_out];
                let w_row = &w[(o * c_in + c) * kn..][..kn];
                for (&wv, &(lo, hi, start)) in w_row.iter().zip(&taps) {
                    if s == 1 {
                        for (xv, yv) in x_row[start..].iter_mut().zip(&y_row[lo..hi]) {
                            *xv += wv * yv;
                        }
                    } else {
                        for (xv, yv) in x_row[start..].iter_mut().step_by(s).zip(&y_row[lo..hi]) {
                            *xv += wv * yv;
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of [`forward_kernel`] in its weights:
/// `gw[o, c, k] += sum_{b,j} gy[b, o, j] * x[b, c, j*s + k - pad]`.
pub(crate) fn weight_grad_kernel(
    gy: &[f64],
    x: &[f64],
    gw: &mut [f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) {
    let taps = g.tap_table();
    let (s, kn) = (g.stride, g.kernel);
    for b in 0..batch {
        for o in 0..c_out {
            let gy_row = &gy[(b * c_out + o) * g.l_out..][..g.l_out];
            for c in 0..c_in {
                let x_row = &x[(b * c_in + c) * g.l_in..][..g.l_in];
                let gw_row = &mut gw[(o * c_in + c) * kn..][..kn];
                for (gwv, &(lo, hi, start)) in gw_row.iter_mut().zip(&taps) {
                    let acc: f64 = if s == 1 {
                        gy_row[lo..hi].iter().zip(&x_row[start..]).map(|(a, b)| a * b).sum()
                    } else {
                        gy_row[lo..hi]
                            .iter()
                            .zip(x_row[start..].iter().step_by(s))
                            .map(|(a, b)| a * b)
                            .sum()
                    };
                    *gwv += acc;
                }
            }
        }
    }
}

/// Sums `gy[b, o, :]` into `gb[o]`.
pub(crate) fn bias_grad_kernel(gy: &[f64], gb: &mut [f64], batch: usize, channels: usize, len: usize) {
    for b in 0..batch {
        for (o, g) in gb.iter_mut().enumerate() {
            *g += gy[(b * channels + o) * len..][..len].iter().sum::<f64>();
        }
    }
}

pub(crate) fn add_bias(y: &mut [f64], bias: &[f64], batch: usize, len: usize) {
    let channels = bias.len();
    for b in 0..batch {
        for (o, &bv) in bias.iter().enumerate() {
            for v in &mut y[(b * channels + o) * len..][..len] {
                *v += bv;
            }
        }
    }
}

pub(crate) struct ConvShapes {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub geo: ConvGeometry,
}

pub(crate) fn check_conv(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<ConvShapes> {
    let (batch, c_in, len) = input.dims3("conv1d input")?;
    let (c_out, w_in, kernel) = weight.dims3("conv1d weight")?;
    if w_in != c_in {
        return Err(Error::invalid(format!(
            "conv1d weight dimension 1 (input channels) is {w_in}, input has {c_in} channels"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::invalid(format!(
            "conv1d bias shape {:?} does not match {c_out} output channels",
            bias.shape()
        )));
    }
    let geo = ConvGeometry::forward(len, kernel, stride, padding)?;
    Ok(ConvShapes { batch, c_in, c_out, geo })
}

pub(crate) fn check_transpose(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<ConvShapes> {
    let (batch, c_in, len) = input.dims3("conv1d_transpose input")?;
    let (w_in, c_out, kernel) = weight.dims3("conv1d_transpose weight")?;
    if w_in != c_in {
        return Err(Error::invalid(format!(
            "conv1d_transpose weight dimension 0 (input channels) is {w_in}, input has {c_in} channels"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::invalid(format!(
            "conv1d_transpose bias shape {:?} does not match {c_out} output channels",
            bias.shape()
        )));
    }
    let geo = ConvGeometry::transpose(len, kernel, stride, padding)?;
    Ok(ConvShapes { batch, c_in, c_out, geo })
}

/// Cross-correlation of `input [B, C_in, L]` with `weight [C_out, C_in, K]`.
pub fn conv1d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let sh = check_conv(input, weight, bias, stride, padding)?;
    let mut out = Tensor::zeros(&[sh.batch, sh.c_out, sh.geo.l_out]);
    forward_kernel(input.data(), weight.data(), out.data_mut(), sh.batch, sh.c_in, sh.c_out, &sh.geo);
    add_bias(out.data_mut(), bias.data(), sh.batch, sh.geo.l_out);
    Ok(out)
}

/// Transposed convolution of `input [B, C_in, L]` with `weight [C_in, C_out, K]`.
///
/// With zero bias this is the adjoint of [`conv1d`] using the same weight
/// tensor, kernel, stride and padding.
pub fn conv1d_transpose(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let sh = check_transpose(input, weight, bias, stride, padding)?;
    let mut out = Tensor::zeros(&[sh.batch, sh.c_out, sh.geo.l_in]);
    // The transpose's input plays the role of the forward conv's output.
    adjoint_kernel(input.data(), weight.data(), out.data_mut(), sh.batch, sh.c_out, sh.c_in, &sh.geo);
    add_bias(out.data_mut(), bias.data(), sh.batch, sh.geo.l_in);
    Ok(out)
}
