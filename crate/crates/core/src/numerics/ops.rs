//! Forward kernels and their hand-derived gradients.
//!
//! Every op here has a matching `*_backward` taking the upstream gradient of a
//! scalar objective with respect to the op's output.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default lower bound on a vector's norm before normalization is refused.
pub const NORM_FLOOR: f64 = 1e-12;

/// Gradients of [`conv1d_same`] with respect to each of its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

struct ConvDims {
    positions: usize,
    d_in: usize,
    n_kernels: usize,
    window: usize,
    pad: usize,
}

fn conv_dims(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    let (positions, d_in) = input.dims2()?;
    let [n_kernels, window, kd] = kernels.shape()[..] else {
        return Err(Error::Shape(format!(
            "kernels must be n_k×ws×d_in, got {:?}",
            kernels.shape()
        )));
    };
    if window % 2 == 0 {
        return Err(Error::Config(format!(
            "window size must be odd for same padding, got {window}"
        )));
    }
    if kd != d_in {
        return Err(Error::Shape(format!(
            "kernel depth {kd} does not match input width {d_in}"
        )));
    }
    if bias.shape() != [n_kernels] {
        return Err(Error::Shape(format!(
            "bias shape {:?} does not match {n_kernels} kernels",
            bias.shape()
        )));
    }
    Ok(ConvDims {
        positions,
        d_in,
        n_kernels,
        window,
        pad: (window - 1) / 2,
    })
}

/// Iterates `(s, src_row)` pairs of kernel taps that land inside the input
/// for output position `t`; out-of-range rows are the implicit zero padding.
fn taps(t: usize, dims: &ConvDims) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..dims.window).filter_map(move |s| {
        let src = (t + s).checked_sub(dims.pad)?;
        (src < dims.positions).then_some((s, src))
    })
}

/// One-dimensional convolution over positions with symmetric zero padding,
/// so the output keeps the input's `k` positions.
///
/// `input` is `k × d_in`, `kernels` is `n_k × ws × d_in`, `bias` is `n_k`;
/// the output is `k × n_k`.
pub fn conv1d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let dims = conv_dims(input, kernels, bias)?;
    let x = input.data();
    let w = kernels.data();
    let b = bias.data();
    let mut out = vec![0.0; dims.positions * dims.n_kernels];
    for t in 0..dims.positions {
        let out_row = &mut out[t * dims.n_kernels..(t + 1) * dims.n_kernels];
        out_row.copy_from_slice(b);
        for (s, src) in taps(t, &dims) {
            let x_row = &x[src * dims.d_in..(src + 1) * dims.d_in];
            for (c, acc) in out_row.iter_mut().enumerate() {
                let off = (c * dims.window + s) * dims.d_in;
                let w_row = &w[off..off + dims.d_in];
                *acc += dot(x_row, w_row);
            }
        }
    }
    Ok(Tensor::from_parts(vec![dims.positions, dims.n_kernels], out))
}

pub fn conv1d_same_backward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    let dims = conv_dims(input, kernels, bias)?;
    if upstream.shape() != [dims.positions, dims.n_kernels] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output {:?}",
            upstream.shape(),
            [dims.positions, dims.n_kernels]
        )));
    }
    let x = input.data();
    let w = kernels.data();
    let g = upstream.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; dims.n_kernels];
    for t in 0..dims.positions {
        let g_row = &g[t * dims.n_kernels..(t + 1) * dims.n_kernels];
        for (acc, &gv) in gb.iter_mut().zip(g_row) {
            *acc += gv;
        }
        for (s, src) in taps(t, &dims) {
            let x_row = &x[src * dims.d_in..(src + 1) * dims.d_in];
            let gx_row = &mut gx[src * dims.d_in..(src + 1) * dims.d_in];
            for (c, &gv) in g_row.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let off = (c * dims.window + s) * dims.d_in;
                axpy(gv, x_row, &mut gw[off..off + dims.d_in]);
                axpy(gv, &w[off..off + dims.d_in], gx_row);
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), gx),
        kernels: Tensor::from_parts(kernels.shape().to_vec(), gw),
        bias: Tensor::from_parts(vec![dims.n_kernels], gb),
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor::from_parts(
        input.shape().to_vec(),
        input.data().iter().map(|&x| x.max(0.0)).collect(),
    )
}

/// Passes `upstream` where `input > 0`; the subgradient at exactly zero is 0.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    input.expect_same_shape(upstream)?;
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        input
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    ))
}

/// Column-wise mean of a `k × d` matrix.
pub fn mean_over_positions(input: &Tensor) -> Result<Tensor> {
    let (k, d) = input.dims2()?;
    if k == 0 {
        return Err(Error::EmptyInput("mean over zero positions"));
    }
    let mut out = vec![0.0; d];
    for t in 0..k {
        for (acc, &x) in out.iter_mut().zip(input.row(t)) {
            *acc += x;
        }
    }
    let inv = 1.0 / k as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(Tensor::from_parts(vec![d], out))
}

/// Spreads `upstream / k` to every one of the `k` rows.
pub fn mean_over_positions_backward(positions: usize, upstream: &Tensor) -> Result<Tensor> {
    if positions == 0 {
        return Err(Error::EmptyInput("mean over zero positions"));
    }
    let d = upstream.len();
    let inv = 1.0 / positions as f64;
    let row: Vec<f64> = upstream.data().iter().map(|g| g * inv).collect();
    let mut out = Vec::with_capacity(positions * d);
    for _ in 0..positions {
        out.extend_from_slice(&row);
    }
    Ok(Tensor::from_parts(vec![positions, d], out))
}

pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    l2_normalize_with_floor(v, NORM_FLOOR)
}

pub fn l2_normalize_with_floor(v: &Tensor, floor: f64) -> Result<Tensor> {
    let norm = v.norm();
    if norm <= floor {
        return Err(Error::DegenerateVector { norm, floor });
    }
    Ok(v.scale(1.0 / norm))
}

/// Applies the Jacobian `(I − ŷŷᵀ)/‖v‖` of [`l2_normalize`] to `upstream`.
pub fn l2_normalize_backward(v: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    v.expect_same_shape(upstream)?;
    let norm = v.norm();
    if norm <= NORM_FLOOR {
        return Err(Error::DegenerateVector {
            norm,
            floor: NORM_FLOOR,
        });
    }
    let inv = 1.0 / norm;
    let proj: f64 = v
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(x, g)| x * inv * g)
        .sum();
    Ok(Tensor::from_parts(
        v.shape().to_vec(),
        v.data()
            .iter()
            .zip(upstream.data())
            .map(|(x, g)| (g - x * inv * proj) * inv)
            .collect(),
    ))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
