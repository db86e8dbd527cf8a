//! Batched layer kernels.
//!
//! Convolutional activations are stored channel-major as `[channels, batch * len]`:
//! sample `b` occupies columns `b*len .. (b+1)*len` of every row. Convolution is
//! an im2col GEMM with column rows ordered `c * kernel + k`, which matches a
//! weight tensor `[filters, channels, kernel]` flattened to `[filters, channels * kernel]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::NnError;
use crate::scalar::Scalar;

/// Same-padded patch matrix `[channels * kernel, batch * len]`; out-of-range taps are zero.
pub(crate) fn im2col<T: Scalar>(x: ArrayView2<T>, len: usize, kernel: usize) -> Array2<T> {
    let (channels, cols) = x.dim();
    let batch = cols / len;
    let pad = (kernel / 2) as isize;
    let mut out = Array2::zeros((channels * kernel, cols));
    for c in 0..channels {
        let row = x.row(c);
        for k in 0..kernel {
            let offset = k as isize - pad;
            let t_lo = (-offset).max(0) as usize;
            let t_hi = (len as isize - offset).min(len as isize).max(0) as usize;
            if t_lo >= t_hi {
                continue;
            }
            let mut dst = out.row_mut(c * kernel + k);
            for b in 0..batch {
                let base = b * len;
                let src_lo = (base + t_lo) as isize + offset;
                dst.slice_mut(s![base + t_lo..base + t_hi]).assign(&row.slice(s![src_lo as usize..(src_lo as usize + t_hi - t_lo)]));
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto `[channels, batch * len]`.
pub(crate) fn col2im<T: Scalar>(cols: ArrayView2<T>, channels: usize, len: usize, kernel: usize) -> Array2<T> {
    let total = cols.ncols();
    let batch = total / len;
    let pad = (kernel / 2) as isize;
    let mut out = Array2::zeros((channels, total));
    for c in 0..channels {
        let mut dst = out.row_mut(c);
        for k in 0..kernel {
            let offset = k as isize - pad;
            let t_lo = (-offset).max(0) as usize;
            let t_hi = (len as isize - offset).min(len as isize).max(0) as usize;
            if t_lo >= t_hi {
                continue;
            }
            let src = cols.row(c * kernel + k);
            for b in 0..batch {
                let base = b * len;
                let dst_lo = ((base + t_lo) as isize + offset) as usize;
                let mut d = dst.slice_mut(s![dst_lo..dst_lo + t_hi - t_lo]);
                d += &src.slice(s![base + t_lo..base + t_hi]);
            }
        }
    }
    out
}

/// `w · cols + b` for weights `[filters, channels * kernel]`.
pub(crate) fn conv_gemm<T: Scalar>(w: &Array2<T>, b: &Array1<T>, cols: &Array2<T>) -> Array2<T> {
    let mut z = w.dot(cols);
    for (mut row, &bias) in z.axis_iter_mut(Axis(0)).zip(b.iter()) {
        row.mapv_inplace(|v| v + bias);
    }
    z
}

pub(crate) fn relu_inplace<T: Scalar>(a: &mut Array2<T>) {
    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zeroes gradient entries where the (post-ReLU) activation is not positive.
pub(crate) fn relu_backward<T: Scalar>(grad: &mut Array2<T>, activation: &Array2<T>) {
    ndarray::Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

pub(crate) fn pooled_len_checked(len: usize, pool: usize, stride: usize) -> Result<usize, NnError> {
    if len < pool {
        return Err(NnError::InputTooShort { len, pool });
    }
    Ok((len - pool) / stride + 1)
}

/// Valid max pooling along time for every `(row, sample)`; returns the output and,
/// for each output cell, the absolute column index of its maximum (lowest on ties).
pub(crate) fn maxpool<T: Scalar>(x: &Array2<T>, len: usize, pool: usize, stride: usize) -> Result<(Array2<T>, Array2<u32>), NnError> {
    let out_len = pooled_len_checked(len, pool, stride)?;
    let (rows, cols) = x.dim();
    let batch = cols / len;
    let mut out = Array2::zeros((rows, batch * out_len));
    let mut arg = Array2::zeros((rows, batch * out_len));
    for r in 0..rows {
        let src = x.row(r);
        for b in 0..batch {
            for t in 0..out_len {
                let start = b * len + t * stride;
                let mut best = start;
                for j in start + 1..start + pool {
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                out[[r, b * out_len + t]] = src[best];
                arg[[r, b * out_len + t]] = best as u32;
            }
        }
    }
    Ok((out, arg))
}

pub(crate) fn maxpool_backward<T: Scalar>(grad: &Array2<T>, arg: &Array2<u32>, in_cols: usize) -> Array2<T> {
    let mut out = Array2::zeros((grad.nrows(), in_cols));
    for ((r, j), &g) in grad.indexed_iter() {
        out[[r, arg[[r, j]] as usize]] += g;
    }
    out
}

/// Inverted dropout mask: kept entries are `1 / (1 - rate)`, dropped ones zero.
pub(crate) fn dropout_mask<T: Scalar, R: Rng>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < rate { T::zero() } else { keep })
}

/// `[channels, batch * len]` to `[batch, channels * len]` (per-sample index `c * len + t`).
pub(crate) fn flatten<T: Scalar>(x: &Array2<T>, len: usize) -> Array2<T> {
    let (channels, cols) = x.dim();
    let batch = cols / len;
    let mut out = Array2::zeros((batch, channels * len));
    for b in 0..batch {
        for c in 0..channels {
            out.slice_mut(s![b, c * len..(c + 1) * len]).assign(&x.slice(s![c, b * len..(b + 1) * len]));
        }
    }
    out
}

pub(crate) fn unflatten<T: Scalar>(x: &Array2<T>, channels: usize, len: usize) -> Array2<T> {
    let batch = x.nrows();
    let mut out = Array2::zeros((channels, batch * len));
    for b in 0..batch {
        for c in 0..channels {
            out.slice_mut(s![c, b * len..(b + 1) * len]).assign(&x.slice(s![b, c * len..(c + 1) * len]));
        }
    }
    out
}

/// Row-wise softmax computed with the max subtracted.
pub(crate) fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Mean categorical cross-entropy of `probs` against integer labels.
pub(crate) fn cross_entropy<T: Scalar>(probs: &Array2<T>, labels: &[usize]) -> T {
    let floor = T::min_positive_value();
    let total = labels.iter().enumerate().fold(T::zero(), |acc, (i, &y)| acc - probs[[i, y]].max(floor).ln());
    total / T::of_usize(labels.len())
}

/// Single-sample same-padded cross-correlation on a `[length, channels]` input with
/// kernel `[filters, channels, kernel]`, returning `[length, filters]`.
pub fn conv1d_forward<T: Scalar>(x: ArrayView2<T>, kernel: ArrayView3<T>, bias: ArrayView1<T>) -> Result<Array2<T>, NnError> {
    let (len, channels) = x.dim();
    let (filters, k_channels, width) = kernel.dim();
    if k_channels != channels || bias.len() != filters || width == 0 || width % 2 == 0 {
        return Err(NnError::ShapeMismatch {
            expected: format!("kernel [{}, {channels}, odd] and bias [{}]", filters, filters),
            found: format!("kernel {:?}, bias [{}]", kernel.dim(), bias.len()),
        });
    }
    let w = kernel.to_owned().into_shape_with_order((filters, channels * width)).expect("contiguous kernel");
    let cols = im2col(x.t(), len, width);
    Ok(conv_gemm(&w, &bias.to_owned(), &cols).reversed_axes())
}

/// Single-channel max pooling returning the pooled signal and argmax positions.
pub fn maxpool_forward<T: Scalar>(x: &[T], pool: usize, stride: usize) -> Result<(Vec<T>, Vec<usize>), NnError> {
    let a = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
    let (out, arg) = maxpool(&a, x.len(), pool, stride)?;
    Ok((out.into_iter().collect(), arg.into_iter().map(|i| i as usize).collect()))
}
