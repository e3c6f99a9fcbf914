//! Gaussian local differential privacy: norm clipping, noise calibration,
//! perturbation, an empirical privacy-loss check, and gradient compression.
//!
//! Sensitivity is realized by clipping: updates are capped at L2 norm `C`,
//! and two clipped updates can differ by at most `2C`, so the mechanism
//! declares sensitivity `2C`. Calibration offers the plain `sigma = 2C/eps`
//! rule and the analytic `(2C/eps) * sqrt(2 ln(1.25/delta))` rule; only the
//! latter carries an `(eps, delta)` guarantee and it is the default in the
//! command-line tools.

use crate::params::ParamVector;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Noise calibration rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationMode {
    /// sigma = sensitivity / epsilon.
    Simple,
    /// sigma = (sensitivity / epsilon) * sqrt(2 ln(1.25 / delta)).
    Analytic,
}

/// Parameters of the Gaussian mechanism.
#[derive(Clone, Copy, Debug)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    clip_norm: f64,
    mode: CalibrationMode,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, clip_norm: f64, mode: CalibrationMode) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::config("privacy.epsilon", "must be positive"));
        }
        if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
            return Err(Error::config(
                "privacy.delta",
                "must lie strictly between 0 and 1",
            ));
        }
        if !clip_norm.is_finite() || clip_norm <= 0.0 {
            return Err(Error::config("privacy.clip_norm", "must be positive"));
        }
        Ok(PrivacyParams {
            epsilon,
            delta,
            clip_norm,
            mode,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }

    pub fn mode(&self) -> CalibrationMode {
        self.mode
    }

    /// Same parameters with a different epsilon (per-client overrides).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        PrivacyParams::new(epsilon, self.delta, self.clip_norm, self.mode)
    }
}

/// Calibrated noise standard deviation together with the sensitivity it was
/// derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScale {
    pub sigma: f64,
    pub sensitivity: f64,
}

impl NoiseScale {
    /// Zero noise, used when privacy is disabled.
    pub fn silent() -> Self {
        NoiseScale {
            sigma: 0.0,
            sensitivity: 0.0,
        }
    }
}

/// Caps `delta` at L2 norm `clip_norm`; returns the capped vector and the
/// norm it had before capping.
pub fn clip_update(delta: &ParamVector, clip_norm: f64) -> (ParamVector, f64) {
    assert!(clip_norm > 0.0, "clip norm must be positive");
    let pre_norm = delta.l2_norm();
    if pre_norm <= clip_norm {
        (delta.clone(), pre_norm)
    } else {
        (delta.scaled(clip_norm / pre_norm), pre_norm)
    }
}

/// Computes the noise scale for the configured mode with sensitivity
/// `2 * clip_norm`.
pub fn calibrate_sigma(params: &PrivacyParams) -> NoiseScale {
    let sensitivity = 2.0 * params.clip_norm();
    let sigma = match params.mode() {
        CalibrationMode::Simple => sensitivity / params.epsilon(),
        CalibrationMode::Analytic => {
            sensitivity / params.epsilon() * (2.0 * (1.25 / params.delta()).ln()).sqrt()
        }
    };
    NoiseScale { sigma, sensitivity }
}

/// Adds i.i.d. Gaussian noise with standard deviation `scale.sigma` to every
/// coordinate; with sigma 0 the input is returned unchanged.
pub fn perturb(delta: &ParamVector, scale: &NoiseScale, rng: &mut ChaCha12Rng) -> ParamVector {
    if scale.sigma == 0.0 {
        return delta.clone();
    }
    let values: Vec<f64> = delta
        .values()
        .iter()
        .map(|v| {
            let noise: f64 = rng.sample(StandardNormal);
            v + scale.sigma * noise
        })
        .collect();
    ParamVector::new(values).expect("finite input plus finite noise")
}

/// Monte Carlo estimate of Pr[privacy loss > epsilon] for the scalar
/// Gaussian mechanism on a worst-case neighboring pair at distance
/// `sensitivity`: with Z ~ N(0, sigma^2), the loss is
/// `sensitivity*Z/sigma^2 + sensitivity^2/(2 sigma^2)`.
pub fn estimate_loss_exceedance(
    sensitivity: f64,
    sigma: f64,
    epsilon: f64,
    trials: u64,
    rng: &mut ChaCha12Rng,
) -> f64 {
    assert!(sigma > 0.0, "noise scale must be positive");
    assert!(trials > 0, "at least one trial required");
    let mean_loss = sensitivity * sensitivity / (2.0 * sigma * sigma);
    let mut exceed = 0u64;
    for _ in 0..trials {
        let g: f64 = rng.sample(StandardNormal);
        let z = sigma * g;
        let loss = sensitivity * z / (sigma * sigma) + mean_loss;
        if loss > epsilon {
            exceed += 1;
        }
    }
    exceed as f64 / trials as f64
}

/// Keeps the `k` entries of largest absolute value (ties keep the lower
/// index) and zeroes the rest; `k >= len` is the identity.
pub fn top_k_sparsify(delta: &ParamVector, k: usize) -> ParamVector {
    let values = delta.values();
    if k >= values.len() {
        return delta.clone();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .expect("entries are finite")
            .then(a.cmp(&b))
    });
    let mut kept = vec![0.0; values.len()];
    for &i in order.iter().take(k) {
        kept[i] = values[i];
    }
    ParamVector::new(kept).expect("subset of finite entries")
}

/// Clamps entries to `[-range, range]` and rounds each to the nearest of
/// `2^bits` evenly spaced levels spanning that interval (ties round toward
/// positive infinity), returning the dequantized values.
pub fn quantize_uniform(delta: &ParamVector, bits: u32, range: f64) -> ParamVector {
    assert!((1..=32).contains(&bits), "bits must lie in 1..=32");
    assert!(range > 0.0, "quantization range must be positive");
    let levels = 2u64.pow(bits);
    let spacing = 2.0 * range / (levels - 1) as f64;
    let values: Vec<f64> = delta
        .values()
        .iter()
        .map(|&v| {
            let clamped = v.clamp(-range, range);
            let step = ((clamped + range) / spacing).round();
            (-range + step * spacing).clamp(-range, range)
        })
        .collect();
    ParamVector::new(values).expect("levels are finite")
}
