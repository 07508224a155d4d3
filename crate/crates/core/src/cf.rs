//! Correlation-filter learning: closed-form ridge regression over all
//! circular shifts of one base sample, solved per frequency.
//!
//! Shift convention: virtual sample `(u,v)` is the base sample with its
//! content moved down/right by `(u,v)` (circularly), labelled by a Gaussian
//! of the circular shift distance with peak 1 at zero shift. Under the
//! transforms in [`crate::fft`] the per-frequency solution with a shared
//! denominator is
//!
//! `W_c = (X_c * Y) / (sum_c conj(X_c) * X_c + lambda)`
//!
//! and the spatial filter scores an unshifted copy of the base sample
//! highest at correlation lag zero, so it drops into the same valid
//! cross-correlation detector as a plain template.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2};
use crate::math;
use crate::tensor::Tensor;

/// Settings for the filter solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CfConfig {
    /// Ridge regularizer; must be positive.
    pub lambda: f32,
    /// Label bandwidth in feature cells.
    pub sigma: f32,
    /// Center-crop size applied after the solve; `None` keeps the full size.
    /// When set it must be odd and no larger than the model size.
    pub crop: Option<usize>,
}

impl CfConfig {
    /// Defaults for a given model size: `lambda` 0.01, `sigma` m/10, no crop.
    pub fn for_model_size(m: usize) -> Self {
        CfConfig {
            lambda: 0.01,
            sigma: m as f32 / 10.0,
            crop: None,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("cf", "lambda must be positive"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("cf", "sigma must be positive"));
        }
        if let Some(c) = self.crop {
            if c > m || c % 2 == 0 {
                return Err(Error::invalid(
                    "cf",
                    format!("crop {c} must be odd and <= model size {m}"),
                ));
            }
        }
        Ok(())
    }
}

/// Gaussian regression target over circular shifts: peak value 1 at the
/// zero-shift position `(0,0)`, falling off with circular distance.
pub fn gaussian_label(size: usize, sigma: f32) -> Result<Tensor> {
    if size == 0 {
        return Err(Error::invalid("gaussian_label", "size must be >= 1"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("gaussian_label", "sigma must be positive"));
    }
    let mut data = Vec::with_capacity(size * size);
    let two_sig_sq = 2.0 * sigma as f64 * sigma as f64;
    for i in 0..size {
        let di = i.min(size - i) as f64;
        for j in 0..size {
            let dj = j.min(size - j) as f64;
            data.push(math::exp(-(di * di + dj * dj) / two_sig_sq) as f32);
        }
    }
    Tensor::from_vec(&[size, size], data)
}

/// Start row/column of the center crop for a filter of size `m`.
pub fn crop_offset(m: usize, crop: Option<usize>) -> usize {
    match crop {
        Some(c) if c < m => (m - c) / 2,
        _ => 0,
    }
}

/// Learns a multi-channel filter from one base sample `m x m x d`, returning
/// the spatial-domain model `m' x m' x d` (center-cropped when configured).
pub fn cf_learn(sample: &Tensor, cfg: &CfConfig) -> Result<Tensor> {
    sample.ensure_finite("cf_learn")?;
    if sample.rank() < 2 || sample.shape()[0] != sample.shape()[1] {
        return Err(Error::invalid("cf_learn", "sample must be square"));
    }
    let m = sample.shape()[0];
    cfg.validate(m)?;

    let label = gaussian_label(m, cfg.sigma)?;
    let label_hat = fft2(&label)?;

    let channels = sample.channels();
    let spectra: Vec<_> = (0..channels)
        .map(|c| fft2(&sample.channel_plane(c)))
        .collect::<Result<_>>()?;

    // Shared denominator: sum of per-channel spectral powers plus lambda.
    let mut denom = alloc::vec![cfg.lambda as f64; m * m];
    for spec in &spectra {
        for (d, p) in denom.iter_mut().zip(spec.abs_sq()) {
            *d += p;
        }
    }

    let mut planes = Vec::with_capacity(channels);
    for spec in &spectra {
        let numer = spec.mul(&label_hat)?;
        planes.push(ifft2(&numer.div_real(&denom)?)?);
    }
    let full = Tensor::from_planes(&planes)?;

    let out = match cfg.crop {
        Some(c) if c < m => {
            let o = crop_offset(m, cfg.crop);
            full.crop2d(o, o, c, c)?
        }
        _ => full,
    };
    out.ensure_finite("cf_learn")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_size_one() {
        let g = gaussian_label(1, 0.5).unwrap();
        assert_eq!(g.shape(), &[1, 1]);
        assert_eq!(g.data()[0], 1.0);
    }

    #[test]
    fn label_peak_and_circular_symmetry() {
        let g = gaussian_label(8, 1.0).unwrap();
        assert_eq!(g.at2(0, 0), 1.0);
        for i in 0..8 {
            for j in 0..8 {
                assert!(g.at2(i, j) > 0.0 && g.at2(i, j) <= 1.0);
                // reflection through the zero-shift position
                assert_eq!(g.at2(i, j), g.at2((8 - i) % 8, (8 - j) % 8));
            }
        }
    }

    #[test]
    fn label_matches_direct_formula() {
        let s = 8;
        let sigma = 1.0f32;
        let g = gaussian_label(s, sigma).unwrap();
        for i in 0..s {
            for j in 0..s {
                let dx = i.min(s - i) as f64;
                let dy = j.min(s - j) as f64;
                let want = libm::exp(-(dx * dx + dy * dy) / (2.0 * sigma as f64 * sigma as f64));
                assert!((g.at2(i, j) as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn impulse_sample_gives_shrunk_label() {
        // unit impulse at the zero-shift position has a flat spectrum, so the
        // filter is the label scaled by 1/(1+lambda)
        let m = 8;
        let mut x = Tensor::zeros(&[m, m, 1]);
        x.data_mut()[0] = 1.0;
        let cfg = CfConfig {
            lambda: 0.01,
            sigma: 0.8,
            crop: None,
        };
        let w = cf_learn(&x, &cfg).unwrap();
        let y = gaussian_label(m, cfg.sigma).unwrap();
        for i in 0..m {
            for j in 0..m {
                let want = y.at2(i, j) / (1.0 + cfg.lambda);
                assert!((w.at3(i, j, 0) - want).abs() < 1e-5, "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_sample_is_legal_and_finite() {
        let x = Tensor::zeros(&[6, 6, 2]);
        let w = cf_learn(&x, &CfConfig::for_model_size(6)).unwrap();
        assert!(w.is_finite());
        assert!(w.sq_norm() == 0.0);
    }

    #[test]
    fn crop_validation() {
        let cfg = CfConfig {
            lambda: 0.01,
            sigma: 0.6,
            crop: Some(4),
        };
        assert!(cfg.validate(6).is_err()); // even crop
        let cfg = CfConfig {
            crop: Some(7),
            ..cfg
        };
        assert!(cfg.validate(6).is_err()); // larger than model
        let cfg = CfConfig {
            crop: Some(5),
            ..cfg
        };
        assert!(cfg.validate(6).is_ok());
    }

    #[test]
    fn crop_takes_center_window() {
        let mut rng_state = 1u32;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(1664525).wrapping_add(1013904223);
            (rng_state >> 16) as f32 / 65536.0 - 0.5
        };
        let data: alloc::vec::Vec<f32> = (0..36).map(|_| next()).collect();
        let x = Tensor::from_vec(&[6, 6, 1], data).unwrap();
        let full_cfg = CfConfig::for_model_size(6);
        let full = cf_learn(&x, &full_cfg).unwrap();
        let cropped = cf_learn(
            &x,
            &CfConfig {
                crop: Some(5),
                ..full_cfg
            },
        )
        .unwrap();
        assert_eq!(cropped.shape(), &[5, 5, 1]);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(cropped.at3(i, j, 0), full.at3(i, j, 0));
            }
        }
    }
}
