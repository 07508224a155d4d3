//! Brute-force reference implementations.
//!
//! These deliberately avoid the FFT and the tape: correlation by triple
//! loop, the filter solve by explicitly materializing every circular shift
//! and solving the dense normal equations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::CheckReport;
use crate::cf::{cf_learn, gaussian_label, CfConfig};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::{xcorr_valid, Tensor};

/// Direct-summation valid cross-correlation (the reference for
/// [`crate::tensor::xcorr_valid`]).
pub fn xcorr_valid_direct(signal: &Tensor, kernel: &Tensor) -> Tensor {
    let (sh, sw) = signal.hw();
    let (kh, kw) = kernel.hw();
    let ch = signal.channels();
    let (oh, ow) = (sh - kh + 1, sw - kw + 1);
    let mut out = Tensor::zeros(&[oh, ow]);
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
            out.data_mut()[i * ow + j] = acc as f32;
        }
    }
    out
}

/// Direct circular cross-correlation `out[k] = sum_j a[j] b[(j+k) mod n]`.
pub fn circ_xcorr2_direct(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.shape()[0];
    let mut out = Tensor::zeros(&[n, n]);
    for ki in 0..n {
        for kj in 0..n {
            let mut acc = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    acc += a.at2(i, j) as f64 * b.at2((i + ki) % n, (j + kj) % n) as f64;
                }
            }
            out.data_mut()[ki * n + kj] = acc as f32;
        }
    }
    out
}

/// Solves a dense symmetric positive-definite system by Gaussian elimination
/// with partial pivoting, in f64.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::invalid("solve_dense", "singular system"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Dense circulant ridge regression: materializes all `s*s` circular shifts
/// of the sample (rows of X, channels concatenated), solves
/// `(X^T X + lambda I) w = X^T y` and returns `w` as `s x s x d`.
pub fn dense_cf_oracle(sample: &Tensor, lambda: f32, sigma: f32) -> Result<Tensor> {
    let s = sample.shape()[0];
    let d = sample.channels();
    let rows = s * s;
    let cols = s * s * d;
    let label = gaussian_label(s, sigma)?;

    // X[row(u,v)][col(i,j,c)] = sample[(i-u) mod s, (j-v) mod s, c]
    let mut x = vec![vec![0.0f64; cols]; rows];
    let mut y = vec![0.0f64; rows];
    for u in 0..s {
        for v in 0..s {
            let r = u * s + v;
            y[r] = label.at2(u, v) as f64;
            for i in 0..s {
                for j in 0..s {
                    for c in 0..d {
                        let si = (i + s - u) % s;
                        let sj = (j + s - v) % s;
                        x[r][(i * s + j) * d + c] = sample.at3(si, sj, c) as f64;
                    }
                }
            }
        }
    }

    // normal equations
    let mut a = vec![vec![0.0f64; cols]; cols];
    let mut b = vec![0.0f64; cols];
    for r in 0..rows {
        for i in 0..cols {
            let xi = x[r][i];
            if xi == 0.0 {
                continue;
            }
            b[i] += xi * y[r];
            for j in i..cols {
                a[i][j] += xi * x[r][j];
            }
        }
    }
    for i in 0..cols {
        a[i][i] += lambda as f64;
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }

    let w = solve_dense(a, b)?;
    Tensor::from_vec(&[s, s, d], w.iter().map(|&v| v as f32).collect())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let numel = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).expect("finite")
}

/// Valid cross-correlation vs. the triple-loop oracle across random shapes.
pub fn suite_xcorr(seeds: u64) -> CheckReport {
    let mut max_err = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream(seed, &[0x7c07]);
        let n = rng.gen_range(1..=8usize);
        let m = rng.gen_range(1..=n);
        let d = rng.gen_range(1..=3usize);
        let signal = random_tensor(&[n, n, d], &mut rng);
        let kernel = random_tensor(&[m, m, d], &mut rng);
        let fast = xcorr_valid(&signal, &kernel).expect("valid shapes");
        let slow = xcorr_valid_direct(&signal, &kernel);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            max_err = max_err.max(rel_err(*a as f64, *b as f64));
        }
    }
    CheckReport::new(
        "xcorr_valid vs direct summation",
        max_err <= 1e-6,
        max_err,
        format!("{seeds} random shapes"),
    )
}

/// Single-channel filter solve vs. the dense circulant ridge oracle.
pub fn suite_cf_single_channel(seeds: u64, size: usize) -> CheckReport {
    let mut max_err = 0.0f64;
    let cfg = CfConfig {
        lambda: 0.01,
        sigma: size as f32 / 10.0,
        crop: None,
    };
    for seed in 0..seeds {
        let mut rng = stream(seed, &[0xcf01]);
        let x = random_tensor(&[size, size, 1], &mut rng);
        let fast = cf_learn(&x, &cfg).expect("solve");
        let slow = dense_cf_oracle(&x, cfg.lambda, cfg.sigma).expect("oracle");
        for (a, b) in fast.data().iter().zip(slow.data()) {
            max_err = max_err.max(rel_err(*a as f64, *b as f64));
        }
    }
    CheckReport::new(
        format!("cf_learn 1ch vs dense ridge ({size}x{size})"),
        max_err <= 1e-5,
        max_err,
        format!("{seeds} seeds"),
    )
}

/// Multi-channel filter solve vs. the dense oracle (channels concatenated in
/// one joint ridge system).
pub fn suite_cf_multi_channel(seeds: u64, size: usize, channels: usize) -> CheckReport {
    let mut max_err = 0.0f64;
    let cfg = CfConfig {
        lambda: 0.01,
        sigma: size as f32 / 10.0,
        crop: None,
    };
    for seed in 0..seeds {
        let mut rng = stream(seed, &[0xcf02]);
        let x = random_tensor(&[size, size, channels], &mut rng);
        let fast = cf_learn(&x, &cfg).expect("solve");
        let slow = dense_cf_oracle(&x, cfg.lambda, cfg.sigma).expect("oracle");
        for (a, b) in fast.data().iter().zip(slow.data()) {
            max_err = max_err.max(rel_err(*a as f64, *b as f64));
        }
    }
    CheckReport::new(
        format!("cf_learn {channels}ch vs dense ridge ({size}x{size})"),
        max_err <= 1e-5,
        max_err,
        format!("{seeds} seeds"),
    )
}

/// Peak-location invariance: scaling the sample by any k > 0 keeps the
/// argmax of its circular correlation with the learned filter at zero shift.
pub fn suite_cf_scale_invariance(seeds: u64, size: usize) -> CheckReport {
    let cfg = CfConfig {
        lambda: 0.01,
        sigma: size as f32 / 10.0,
        crop: None,
    };
    let mut worst = 0.0f64;
    let mut pass = true;
    for seed in 0..seeds {
        let mut rng = stream(seed, &[0xcf03]);
        let x = random_tensor(&[size, size, 1], &mut rng);
        for &k in &[0.1f32, 1.0, 7.5] {
            let xs = x.scale(k).expect("finite");
            let w = cf_learn(&xs, &cfg).expect("solve");
            let resp = circ_xcorr2_direct(&xs.channel_plane(0), &w.channel_plane(0));
            let (idx, _) = resp.argmax();
            if idx != 0 {
                pass = false;
                worst = worst.max(idx as f64);
            }
        }
    }
    CheckReport::new(
        "cf_learn response peak at zero shift under scaling",
        pass,
        worst,
        format!("{seeds} seeds x 3 scales"),
    )
}
