//! Dense row-major tensors (rank 1..=4) and the small set of numeric
//! primitives the rest of the crate is built from.
//!
//! Values are `f32`; every reduction and every correlation sum accumulates in
//! `f64`. Public operations validate that their results are finite — NaN/inf
//! is reported as an error instead of propagating silently.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Dense n-dimensional real array, row-major, rank at most 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking the shape/data contract and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::invalid(
                "tensor",
                format!("rank {} outside 1..=4", shape.len()),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} wants {numel} values, got {}", data.len()),
            ));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.ensure_finite("tensor")?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::invalid(
                "item",
                format!("expected scalar, shape is {:?}", self.shape),
            ));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Rows(height) and columns(width) of a rank-2/3 tensor.
    pub fn hw(&self) -> (usize, usize) {
        (self.shape[0], self.shape[1])
    }

    /// Channel count; 1 for rank-2 tensors.
    pub fn channels(&self) -> usize {
        if self.rank() >= 3 {
            self.shape[2]
        } else {
            1
        }
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, c: usize) -> f32 {
        let ch = self.channels();
        self.data[(i * self.shape[1] + j) * ch + c]
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.ensure_finite(op)?;
        Ok(out)
    }

    fn map(&self, op: &'static str, f: impl Fn(f32) -> f32) -> Result<Tensor> {
        let out = Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        };
        out.ensure_finite(op)?;
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: f32) -> Result<Tensor> {
        self.map("scale", |a| a * k)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.map("sigmoid", math::sigmoidf)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", math::tanhf)
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// Squared Euclidean norm, accumulated in f64.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|&v| v as f64 * v as f64).sum()
    }

    /// Index and value of the maximum element.
    pub fn argmax(&self) -> (usize, f32) {
        let mut best = 0;
        let mut best_v = f32::NEG_INFINITY;
        for (i, &v) in self.data.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        (best, best_v)
    }

    /// Extracts channel `c` as a rank-2 `h x w` tensor.
    pub fn channel_plane(&self, c: usize) -> Tensor {
        let (h, w) = self.hw();
        let ch = self.channels();
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                data.push(self.data[(i * w + j) * ch + c]);
            }
        }
        Tensor {
            shape: vec![h, w],
            data,
        }
    }

    /// Stacks rank-2 planes of equal size into an `h x w x c` tensor.
    pub fn from_planes(planes: &[Tensor]) -> Result<Tensor> {
        if planes.is_empty() {
            return Err(Error::invalid("from_planes", "no planes"));
        }
        let (h, w) = planes[0].hw();
        let c = planes.len();
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for p in planes {
                    if p.hw() != (h, w) {
                        return Err(Error::invalid("from_planes", "plane sizes differ"));
                    }
                    data.push(p.at2(i, j));
                }
            }
        }
        Ok(Tensor {
            shape: vec![h, w, c],
            data,
        })
    }

    /// Crops rows `[r0, r0+h)` and columns `[c0, c0+w)`, keeping channels.
    pub fn crop2d(&self, r0: usize, c0: usize, h: usize, w: usize) -> Result<Tensor> {
        let (sh, sw) = self.hw();
        if r0 + h > sh || c0 + w > sw {
            return Err(Error::invalid(
                "crop2d",
                format!("window {h}x{w}@({r0},{c0}) exceeds {sh}x{sw}"),
            ));
        }
        let ch = self.channels();
        let mut data = Vec::with_capacity(h * w * ch);
        for i in 0..h {
            for j in 0..w {
                for c in 0..ch {
                    data.push(self.at3(r0 + i, c0 + j, c));
                }
            }
        }
        let shape = if self.rank() >= 3 {
            vec![h, w, ch]
        } else {
            vec![h, w]
        };
        Ok(Tensor { shape, data })
    }
}

/// Valid-mode 2D cross-correlation summed over channels.
///
/// `signal` is `n x n x d` (or `n x n`), `kernel` is `m x m x d` with `m <= n`
/// and matching channel count. Output is `(n-m+1) x (n-m+1)`:
/// `out[i,j] = sum_{u,v,c} kernel[u,v,c] * signal[i+u, j+v, c]`.
pub fn xcorr_valid(signal: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    signal.ensure_finite("xcorr_valid")?;
    kernel.ensure_finite("xcorr_valid")?;
    let (sh, sw) = signal.hw();
    let (kh, kw) = kernel.hw();
    if signal.channels() != kernel.channels() || kh > sh || kw > sw {
        return Err(Error::ShapeMismatch {
            op: "xcorr_valid",
            lhs: signal.shape().to_vec(),
            rhs: kernel.shape().to_vec(),
        });
    }
    let ch = signal.channels();
    let oh = sh - kh + 1;
    let ow = sw - kw + 1;
    let mut data = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0f64;
            for u in 0..kh {
                for v in 0..kw {
                    for c in 0..ch {
                        acc += kernel.at3(u, v, c) as f64 * signal.at3(i + u, j + v, c) as f64;
                    }
                }
            }
            data.push(acc as f32);
        }
    }
    let out = Tensor {
        shape: vec![oh, ow],
        data,
    };
    out.ensure_finite("xcorr_valid")?;
    Ok(out)
}

/// Gradient of `xcorr_valid` w.r.t. the signal: scatter of `upstream` through
/// the kernel (a full correlation with the flipped kernel).
pub fn xcorr_valid_grad_signal(upstream: &Tensor, signal: &Tensor, kernel: &Tensor) -> Tensor {
    let (kh, kw) = kernel.hw();
    let (oh, ow) = upstream.hw();
    let ch = signal.channels();
    let mut grad = Tensor::zeros(signal.shape());
    let sw = signal.shape()[1];
    for i in 0..oh {
        for j in 0..ow {
            let g = upstream.at2(i, j);
            if g == 0.0 {
                continue;
            }
            for u in 0..kh {
                for v in 0..kw {
                    for c in 0..ch {
                        let idx = ((i + u) * sw + (j + v)) * ch + c;
                        grad.data[idx] += g * kernel.at3(u, v, c);
                    }
                }
            }
        }
    }
    grad
}

/// Gradient of `xcorr_valid` w.r.t. the kernel: valid correlation of the
/// signal with the upstream map, per channel.
pub fn xcorr_valid_grad_kernel(upstream: &Tensor, signal: &Tensor, kernel: &Tensor) -> Tensor {
    let (kh, kw) = kernel.hw();
    let (oh, ow) = upstream.hw();
    let ch = kernel.channels();
    let mut grad = Tensor::zeros(kernel.shape());
    let kcw = kernel.shape()[1];
    for u in 0..kh {
        for v in 0..kw {
            for c in 0..ch {
                let mut acc = 0.0f64;
                for i in 0..oh {
                    for j in 0..ow {
                        acc += upstream.at2(i, j) as f64 * signal.at3(i + u, j + v, c) as f64;
                    }
                }
                grad.data[(u * kcw + v) * ch + c] = acc as f32;
            }
        }
    }
    grad
}

/// Same-size 2D convolution layer: zero padding, stride 1.
///
/// `input` is `h x w x cin`, `weights` is `kh x kw x cin x cout` (odd kernel),
/// `bias` is `cout`. Output is `h x w x cout`:
/// `out[i,j,o] = bias[o] + sum_{u,v,c} w[u,v,c,o] * in[i+u-kh/2, j+v-kw/2, c]`.
pub fn conv2d_same(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if weights.rank() != 4 {
        return Err(Error::invalid("conv2d_same", "weights must be rank 4"));
    }
    let (h, w) = input.hw();
    let cin = input.channels();
    let ws = weights.shape();
    let (kh, kw, wcin, cout) = (ws[0], ws[1], ws[2], ws[3]);
    if wcin != cin || bias.numel() != cout || kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::ShapeMismatch {
            op: "conv2d_same",
            lhs: input.shape().to_vec(),
            rhs: weights.shape().to_vec(),
        });
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let mut data = vec![0.0f32; h * w * cout];
    for i in 0..h {
        for j in 0..w {
            for o in 0..cout {
                let mut acc = bias.data()[o] as f64;
                for u in 0..kh {
                    let si = i + u;
                    if si < ph || si - ph >= h {
                        continue;
                    }
                    for v in 0..kw {
                        let sj = j + v;
                        if sj < pw || sj - pw >= w {
                            continue;
                        }
                        for c in 0..cin {
                            acc += weights.data()[((u * kw + v) * cin + c) * cout + o] as f64
                                * input.at3(si - ph, sj - pw, c) as f64;
                        }
                    }
                }
                data[(i * w + j) * cout + o] = acc as f32;
            }
        }
    }
    let out = Tensor {
        shape: vec![h, w, cout],
        data,
    };
    out.ensure_finite("conv2d_same")?;
    Ok(out)
}

/// Gradients of [`conv2d_same`] w.r.t. (input, weights, bias).
pub fn conv2d_same_grads(
    upstream: &Tensor,
    input: &Tensor,
    weights: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (h, w) = input.hw();
    let cin = input.channels();
    let ws = weights.shape();
    let (kh, kw, _, cout) = (ws[0], ws[1], ws[2], ws[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut gi = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[cout]);
    for i in 0..h {
        for j in 0..w {
            for o in 0..cout {
                let g = upstream.at3(i, j, o);
                if g == 0.0 {
                    continue;
                }
                gb.data[o] += g;
                for u in 0..kh {
                    let si = i + u;
                    if si < ph || si - ph >= h {
                        continue;
                    }
                    for v in 0..kw {
                        let sj = j + v;
                        if sj < pw || sj - pw >= w {
                            continue;
                        }
                        for c in 0..cin {
                            let widx = ((u * kw + v) * cin + c) * cout + o;
                            let iidx = ((si - ph) * w + (sj - pw)) * cin + c;
                            gw.data[widx] += g * input.data[iidx];
                            gi.data[iidx] += g * weights.data[widx];
                        }
                    }
                }
            }
        }
    }
    (gi, gw, gb)
}

/// Concatenates two `h x w x c` tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ah, aw) = a.hw();
    let (bh, bw) = b.hw();
    if ah != bh || aw != bw {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (ca, cb) = (a.channels(), b.channels());
    let mut data = Vec::with_capacity(ah * aw * (ca + cb));
    for i in 0..ah {
        for j in 0..aw {
            for c in 0..ca {
                data.push(a.at3(i, j, c));
            }
            for c in 0..cb {
                data.push(b.at3(i, j, c));
            }
        }
    }
    Ok(Tensor {
        shape: vec![ah, aw, ca + cb],
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_product() {
        let s = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 1], vec![3.0]).unwrap();
        let out = xcorr_valid(&s, &k).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data()[0], 6.0);
    }

    #[test]
    fn delta_kernel_reads_window() {
        // kernel = delta at (0,0): output equals the top-left window of the signal
        let signal = Tensor::from_vec(&[4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        let mut k = Tensor::zeros(&[2, 2]);
        k.data_mut()[0] = 1.0;
        let out = xcorr_valid(&signal, &k).unwrap();
        assert_eq!(out.shape(), &[3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(out.at2(i, j), signal.at2(i, j));
            }
        }
    }

    #[test]
    fn pointwise_basics() {
        assert_eq!(Tensor::scalar(0.0).sigmoid().unwrap().data()[0], 0.5);
        assert_eq!(Tensor::scalar(0.0).tanh().unwrap().data()[0], 0.0);
        let t = Tensor::scalar(1e6).tanh().unwrap();
        assert!(t.data()[0] < 1.0 && t.data()[0] > 0.999);
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.sub(&b).unwrap().data(), &[-2.0, -2.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(a.scale(2.0).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
        assert!(xcorr_valid(&Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3, 3])).is_err());
        assert!(xcorr_valid(&Tensor::zeros(&[4, 4, 2]), &Tensor::zeros(&[2, 2, 3])).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            Tensor::from_vec(&[1], vec![f32::NAN]),
            Err(Error::NonFinite { .. })
        ));
        let big = Tensor::filled(&[2], f32::MAX);
        assert!(matches!(big.add(&big), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn crop_and_concat() {
        let t = Tensor::from_vec(&[3, 3, 2], (0..18).map(|v| v as f32).collect()).unwrap();
        let c = t.crop2d(1, 1, 2, 2).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.at3(0, 0, 0), t.at3(1, 1, 0));
        let cc = concat_channels(&t, &t).unwrap();
        assert_eq!(cc.shape(), &[3, 3, 4]);
        assert_eq!(cc.at3(2, 2, 3), t.at3(2, 2, 1));
    }
}
