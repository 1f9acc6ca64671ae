//! Observation noise: white-noise level estimation from a logged signal and
//! Gaussian corruption of observations.
//!
//! The estimator removes the mean, transforms the signal, weights each bin's
//! magnitude by its frequency and averages the resulting power over the upper
//! half of the spectrum, `[f_s/4, f_s/2]`, where slow gait motion has little
//! content. For white noise of standard deviation σ every bin has expected
//! power `N·σ²`, which fixes the normalization: the weighted band power is
//! divided by `N` times the band mean of `f²`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub const MIN_SIGNAL_LEN: usize = 64;

/// Estimation band as fractions of the sampling rate.
pub const DEFAULT_BAND: (f64, f64) = (0.25, 0.5);

/// σ estimate over the default band.
pub fn estimate_sigma(signal: &[f64], f_s: f64) -> Result<f64> {
    estimate_sigma_band(signal, f_s, DEFAULT_BAND)
}

/// σ estimate over `[band.0·f_s, band.1·f_s]`.
///
/// Signals whose length is not a power of two are truncated to the largest
/// power of two that fits.
pub fn estimate_sigma_band(signal: &[f64], f_s: f64, band: (f64, f64)) -> Result<f64> {
    if signal.len() < MIN_SIGNAL_LEN {
        return Err(Error::InvalidArgument(format!(
            "noise estimation needs at least {MIN_SIGNAL_LEN} samples, got {}",
            signal.len()
        )));
    }
    if !(f_s.is_finite() && f_s > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling rate must be positive, got {f_s}")));
    }
    if !(0.0 < band.0 && band.0 < band.1 && band.1 <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "band fractions must satisfy 0 < lo < hi <= 0.5, got {band:?}"
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
    }
    let n = 1usize << (usize::BITS - 1 - signal.len().leading_zeros());
    let x = &signal[..n];
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let df = f_s / n as f64;
    let k_lo = (band.0 * n as f64).ceil() as usize;
    let k_hi = ((band.1 * n as f64).floor() as usize).min(n / 2);
    let (mut weighted, mut f2_sum) = (0.0, 0.0);
    for (k, bin) in buf.iter().enumerate().take(k_hi + 1).skip(k_lo) {
        let f = k as f64 * df;
        weighted += bin.norm_sqr() * f * f;
        f2_sum += f * f;
    }
    Ok((weighted / (n as f64 * f2_sum)).sqrt())
}

/// Per-channel Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub channels: Vec<String>,
    pub sigma: Vec<f64>,
    /// Sampling rate the σ values were estimated at, Hz.
    pub f_s: f64,
}

impl NoiseModel {
    pub fn new(channels: Vec<String>, sigma: Vec<f64>, f_s: f64) -> Result<Self> {
        if channels.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "{} channel names for {} sigmas",
                channels.len(),
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {s}")));
        }
        Ok(NoiseModel { channels, sigma, f_s })
    }

    pub fn sigma_of(&self, channel: &str) -> Option<f64> {
        self.channels.iter().position(|c| c == channel).map(|i| self.sigma[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# f_s={}\nchannel,sigma\n", self.f_s);
        for (c, s) in self.channels.iter().zip(&self.sigma) {
            let _ = writeln!(out, "{c},{s}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut f_s = None;
        let (mut channels, mut sigma) = (Vec::new(), Vec::new());
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(v) = meta.trim().strip_prefix("f_s=") {
                    f_s = v.trim().parse().ok();
                }
                continue;
            }
            if !seen_header {
                seen_header = true;
                if line == "channel,sigma" {
                    continue;
                }
            }
            let (name, value) = line.split_once(',').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column: line.len() + 1,
                message: "expected `channel,sigma`".into(),
            })?;
            let v: f64 = value.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column: name.len() + 2,
                message: format!("not a number: {:?}", value.trim()),
            })?;
            channels.push(name.trim().to_string());
            sigma.push(v);
        }
        let f_s = f_s.ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: "missing `# f_s=` line".into(),
        })?;
        NoiseModel::new(channels, sigma, f_s)
    }
}

/// Adds independent `N(0, σ_i)` noise to each channel using `rng`.
pub fn corrupt_with<R: Rng + ?Sized>(obs: &[f64], model: &NoiseModel, rng: &mut R) -> Result<Vec<f64>> {
    if obs.len() != model.sigma.len() {
        return Err(Error::Dimension(format!(
            "observation has {} channels, noise model {}",
            obs.len(),
            model.sigma.len()
        )));
    }
    Ok(obs
        .iter()
        .zip(&model.sigma)
        .map(|(&o, &s)| o + Normal::new(0.0, s).expect("sigma validated").sample(rng))
        .collect())
}

/// Corrupted copy of one observation vector, deterministic per `seed`.
pub fn corrupt(obs: &[f64], model: &NoiseModel, seed: u64) -> Result<Vec<f64>> {
    corrupt_with(obs, model, &mut rng::stream(seed, "noise.corrupt", 0))
}
