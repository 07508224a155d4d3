//! 2D discrete Fourier transforms for the correlation-filter solve.
//!
//! Convention (fixed once, used everywhere): the forward transform is
//! unnormalized, the inverse carries the full `1/n^2` factor, so
//! `ifft2(fft2(x)) == x`. Under this convention Parseval reads
//! `sum(x^2) == sum(|X|^2) / n^2`, and the circular cross-correlation theorem
//! is `ifft2(conj(fft2(a)) * fft2(b))[k] == sum_j a[j] * b[(j+k) mod n]`.
//!
//! Transforms are exact at any size: power-of-two lengths use an iterative
//! radix-2 pass, everything else falls back to a direct O(n^2) DFT — fine at
//! desk scale and free of padding artifacts, which matters because the filter
//! solve relies on the circulant structure at exactly the input size.
//! All arithmetic is `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Frequency-domain image: `h x w` complex values stored as split re/im.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    h: usize,
    w: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn zeros(h: usize, w: usize) -> Self {
        ComplexSpectrum {
            h,
            w,
            re: vec![0.0; h * w],
            im: vec![0.0; h * w],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn conj(&self) -> Self {
        ComplexSpectrum {
            h: self.h,
            w: self.w,
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }

    /// Elementwise complex product.
    pub fn mul(&self, other: &ComplexSpectrum) -> Result<ComplexSpectrum> {
        if self.shape() != other.shape() {
            return Err(Error::invalid("spectrum mul", "shape mismatch"));
        }
        let mut out = ComplexSpectrum::zeros(self.h, self.w);
        for i in 0..self.re.len() {
            out.re[i] = self.re[i] * other.re[i] - self.im[i] * other.im[i];
            out.im[i] = self.re[i] * other.im[i] + self.im[i] * other.re[i];
        }
        Ok(out)
    }

    /// |v|^2 per element (a real array).
    pub fn abs_sq(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .collect()
    }

    /// Divides each element by the matching entry of a real array.
    pub fn div_real(&self, denom: &[f64]) -> Result<ComplexSpectrum> {
        if denom.len() != self.re.len() {
            return Err(Error::invalid("spectrum div", "length mismatch"));
        }
        let mut out = self.clone();
        for i in 0..out.re.len() {
            out.re[i] /= denom[i];
            out.im[i] /= denom[i];
        }
        Ok(out)
    }

    /// Total spectral energy `sum |v|^2`.
    pub fn energy(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place iterative radix-2 transform; `sign` is -1 forward, +1 inverse.
fn fft_pow2(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * core::f64::consts::PI / len as f64;
        let (wr, wi) = (math::cos(ang), math::sin(ang));
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ar, ai) = (re[i + k], im[i + k]);
                let (br, bi) = (re[i + k + len / 2], im[i + k + len / 2]);
                let (tr, ti) = (br * cr - bi * ci, br * ci + bi * cr);
                re[i + k] = ar + tr;
                im[i + k] = ai + ti;
                re[i + k + len / 2] = ar - tr;
                im[i + k + len / 2] = ai - ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Direct O(n^2) DFT for lengths without a radix-2 factorization.
fn dft_direct(re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let mut or_ = vec![0.0; n];
    let mut oi = vec![0.0; n];
    // e^{sign * 2*pi*i * k / n} table
    let mut tr = vec![0.0; n];
    let mut ti = vec![0.0; n];
    for k in 0..n {
        let ang = sign * 2.0 * core::f64::consts::PI * k as f64 / n as f64;
        tr[k] = math::cos(ang);
        ti[k] = math::sin(ang);
    }
    for f in 0..n {
        let mut ar = 0.0;
        let mut ai = 0.0;
        for j in 0..n {
            let idx = (f * j) % n;
            ar += re[j] * tr[idx] - im[j] * ti[idx];
            ai += re[j] * ti[idx] + im[j] * tr[idx];
        }
        or_[f] = ar;
        oi[f] = ai;
    }
    (or_, oi)
}

fn fft1d(re: &mut Vec<f64>, im: &mut Vec<f64>, sign: f64) {
    if is_pow2(re.len()) {
        fft_pow2(re, im, sign);
    } else {
        let (r, i) = dft_direct(re, im, sign);
        *re = r;
        *im = i;
    }
}

fn fft2_complex(spec: &mut ComplexSpectrum, sign: f64) {
    let (h, w) = (spec.h, spec.w);
    let mut row_re = vec![0.0; w];
    let mut row_im = vec![0.0; w];
    for r in 0..h {
        row_re.copy_from_slice(&spec.re[r * w..(r + 1) * w]);
        row_im.copy_from_slice(&spec.im[r * w..(r + 1) * w]);
        let mut rr = row_re.clone();
        let mut ri = row_im.clone();
        fft1d(&mut rr, &mut ri, sign);
        spec.re[r * w..(r + 1) * w].copy_from_slice(&rr);
        spec.im[r * w..(r + 1) * w].copy_from_slice(&ri);
    }
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col_re[r] = spec.re[r * w + c];
            col_im[r] = spec.im[r * w + c];
        }
        let mut cr = col_re.clone();
        let mut ci = col_im.clone();
        fft1d(&mut cr, &mut ci, sign);
        for r in 0..h {
            spec.re[r * w + c] = cr[r];
            spec.im[r * w + c] = ci[r];
        }
    }
}

/// Forward 2D transform of a square real input (unnormalized).
pub fn fft2(x: &Tensor) -> Result<ComplexSpectrum> {
    if x.rank() != 2 || x.shape()[0] != x.shape()[1] {
        return Err(Error::invalid("fft2", "input must be square 2D"));
    }
    x.ensure_finite("fft2")?;
    let n = x.shape()[0];
    let mut spec = ComplexSpectrum::zeros(n, n);
    for (i, &v) in x.data().iter().enumerate() {
        spec.re[i] = v as f64;
    }
    fft2_complex(&mut spec, -1.0);
    Ok(spec)
}

/// Inverse 2D transform (carries the `1/n^2` factor); returns the real part.
pub fn ifft2(s: &ComplexSpectrum) -> Result<Tensor> {
    let (h, w) = s.shape();
    let mut spec = s.clone();
    fft2_complex(&mut spec, 1.0);
    let norm = 1.0 / (h * w) as f64;
    let data: Vec<f32> = spec.re.iter().map(|v| (v * norm) as f32).collect();
    let out = Tensor::from_vec(&[h, w], data)?;
    out.ensure_finite("ifft2")?;
    Ok(out)
}

/// Circular cross-correlation via the spectrum:
/// `out[k] = sum_j a[j] * b[(j+k) mod n]`.
pub fn circ_xcorr2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let sa = fft2(a)?;
    let sb = fft2(b)?;
    ifft2(&sa.conj().mul(&sb)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_square(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(&[n, n], data).unwrap()
    }

    #[test]
    fn constant_input_is_pure_dc() {
        let c = 0.75f32;
        let x = Tensor::filled(&[4, 4], c);
        let s = fft2(&x).unwrap();
        assert!((s.re()[0] - 16.0 * c as f64).abs() < 1e-9);
        for i in 1..16 {
            assert!(s.re()[i].abs() < 1e-9 && s.im()[i].abs() < 1e-9);
        }
    }

    #[test]
    fn roundtrip_pow2_and_odd_sizes() {
        for &n in &[8usize, 6, 7, 14] {
            let x = random_square(n, 42 + n as u64);
            let back = ifft2(&fft2(&x).unwrap()).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "n={n}");
            }
        }
    }

    #[test]
    fn parseval_holds() {
        for &n in &[8usize, 6] {
            let x = random_square(n, 7);
            let s = fft2(&x).unwrap();
            let spatial: f64 = x.sq_norm();
            let spectral = s.energy() / (n * n) as f64;
            assert!((spatial - spectral).abs() <= 1e-5 * spatial.abs());
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(fft2(&Tensor::zeros(&[2, 3])).is_err());
        assert!(fft2(&Tensor::zeros(&[2, 2, 2])).is_err());
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let n = 6;
        let x = random_square(n, 3);
        let s = fft2(&x).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (i2, j2) = ((n - i) % n, (n - j) % n);
                assert!((s.re()[i * n + j] - s.re()[i2 * n + j2]).abs() < 1e-9);
                assert!((s.im()[i * n + j] + s.im()[i2 * n + j2]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn circular_xcorr_matches_direct() {
        for &n in &[8usize, 5] {
            let a = random_square(n, 11);
            let b = random_square(n, 12);
            let fast = circ_xcorr2(&a, &b).unwrap();
            for ki in 0..n {
                for kj in 0..n {
                    let mut acc = 0.0f64;
                    for i in 0..n {
                        for j in 0..n {
                            acc += a.at2(i, j) as f64
                                * b.at2((i + ki) % n, (j + kj) % n) as f64;
                        }
                    }
                    assert!(
                        (fast.at2(ki, kj) as f64 - acc).abs() <= 1e-5 * acc.abs().max(1.0),
                        "n={n} k=({ki},{kj})"
                    );
                }
            }
        }
    }
}
