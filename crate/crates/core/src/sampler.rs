//! Gumbel-Softmax sampling, its log-density, and temperature annealing.

use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{dot, log_softmax, logsumexp, max};

/// Probabilities are floored here before taking logs.
pub const PI_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-12;

fn on_simplex(x: &[f64]) -> bool {
    !x.is_empty()
        && x.iter().all(|&v| v >= 0.0 && v.is_finite())
        && (x.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// A categorical probability vector on the `(v−1)`-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if on_simplex(&p) {
            Ok(Self(p))
        } else {
            Err(Error::Domain(format!("{p:?} is not on the simplex")))
        }
    }

    pub fn uniform(v: usize) -> Self {
        Self(vec![1.0 / v as f64; v])
    }

    /// Normalises non-negative weights with a positive sum.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let z: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|&x| x < 0.0 || !x.is_finite()) || !(z > 0.0) {
            return Err(Error::Domain(format!("cannot normalise {w:?}")));
        }
        Ok(Self(w.iter().map(|x| x / z).collect()))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SimplexVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A `v`-dimensional standard Gumbel noise vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise(Vec<f64>);

impl GumbelNoise {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().all(|s| s.is_finite()) {
            Ok(Self(sigma))
        } else {
            Err(Error::Domain("non-finite Gumbel noise".into()))
        }
    }
}

impl Deref for GumbelNoise {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A relaxed one-hot sample on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSample(Vec<f64>);

impl RelaxedSample {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if on_simplex(&z) {
            Ok(Self(z))
        } else {
            Err(Error::Domain(format!("{z:?} is not on the simplex")))
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RelaxedSample {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Inverse-CDF transform `−log(−log u)`, with `u` clamped into the open unit interval.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    -(-u.ln()).ln()
}

pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R, v: usize) -> GumbelNoise {
    GumbelNoise(
        (0..v)
            .map(|_| gumbel_from_uniform(rng.gen::<f64>()))
            .collect(),
    )
}

/// Tempered logits `(log max(π, floor) + σ) / τ`.
pub(crate) fn tempered_logits(pi: &[f64], sigma: &[f64], tau: f64) -> Vec<f64> {
    pi.iter()
        .zip(sigma)
        .map(|(&p, &s)| (p.max(PI_FLOOR).ln() + s) / tau)
        .collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Gumbel-Softmax reparameterization `z = softmax((log π + σ) / τ)`.
///
/// `pi` is taken in ambient coordinates so that callers can differentiate
/// through it; it need not be normalised.
pub fn reparameterize(pi: &[f64], sigma: &GumbelNoise, tau: f64) -> Result<RelaxedSample> {
    check_tau(tau)?;
    check_len("gumbel noise", pi.len(), sigma.len())?;
    let (z, _) = relaxed_with_log(pi, sigma, tau);
    Ok(RelaxedSample(z))
}

/// Sample and its elementwise log, the latter computed without underflow.
pub(crate) fn relaxed_with_log(pi: &[f64], sigma: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let log_z = log_softmax(&tempered_logits(pi, sigma, tau));
    let z = log_z.iter().map(|l| l.exp()).collect();
    (z, log_z)
}

/// Which log-density is paired with the relaxed samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMode {
    /// `⟨π, z⟩ − max(π) − log Σ exp(π − max(π))`, taken literally.
    #[default]
    #[serde(alias = "paper")]
    Affine,
    /// The exact Gumbel-Softmax (Concrete) density on the simplex.
    Exact,
}

impl std::str::FromStr for DensityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            // "paper" is accepted as an alternate spelling
            "affine" | "paper" => Ok(Self::Affine),
            "exact" => Ok(Self::Exact),
            other => Err(Error::Config(format!("unknown density mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DensityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Affine => "affine",
            Self::Exact => "exact",
        })
    }
}

/// Test hook used by the audit harness to perturb the value (but not the
/// gradient) of the default log-density. Not for production use.
#[doc(hidden)]
pub mod audit_hooks {
    use super::*;

    pub(super) static MAX_COEFF_BITS: AtomicU64 = AtomicU64::new(0x3FF0_0000_0000_0000);

    /// Replaces the coefficient `1` in front of `max(π)` by `c`.
    pub fn set_density_max_coefficient(c: f64) {
        MAX_COEFF_BITS.store(c.to_bits(), Ordering::SeqCst);
    }

    pub fn reset() {
        set_density_max_coefficient(1.0);
    }

    pub(super) fn max_coefficient() -> f64 {
        f64::from_bits(MAX_COEFF_BITS.load(Ordering::Relaxed))
    }
}

/// The default log-density approximation, evaluated literally with `π` as written.
pub fn log_density(pi: &[f64], z: &[f64]) -> f64 {
    let m = max(pi);
    let shifted: Vec<f64> = pi.iter().map(|p| p - m).collect();
    let tail = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    dot(pi, z) - audit_hooks::max_coefficient() * m - tail
}

/// Exact Gumbel-Softmax density: `log Γ(v) + (v−1) log τ
/// + Σ (log π_i − (τ+1) log z_i) − v · logsumexp(log π_i − τ log z_i)`.
pub fn log_density_exact(pi: &[f64], log_z: &[f64], tau: f64) -> f64 {
    let v = pi.len();
    let log_pi: Vec<f64> = pi.iter().map(|p| p.max(PI_FLOOR).ln()).collect();
    let lgamma_v: f64 = (1..v).map(|k| (k as f64).ln()).sum();
    let a: Vec<f64> = log_pi
        .iter()
        .zip(log_z)
        .map(|(lp, lz)| lp - tau * lz)
        .collect();
    let linear: f64 = log_pi
        .iter()
        .zip(log_z)
        .map(|(lp, lz)| lp - (tau + 1.0) * lz)
        .sum();
    lgamma_v + (v as f64 - 1.0) * tau.ln() + linear - v as f64 * logsumexp(&a)
}

/// One-sided temperature schedule `τ ← max(τ·exp(−β·t), τ_min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau0: f64,
    pub tau_min: f64,
    pub beta: f64,
    tau: f64,
}

impl TemperatureSchedule {
    pub fn new(tau0: f64, tau_min: f64, beta: f64) -> Result<Self> {
        if !(tau0 > 0.0
            && tau_min > 0.0
            && tau_min <= tau0
            && beta >= 0.0
            && tau0.is_finite()
            && beta.is_finite())
        {
            return Err(Error::Config(format!(
                "invalid temperature schedule tau0={tau0} tau_min={tau_min} beta={beta}"
            )));
        }
        Ok(Self {
            tau0,
            tau_min,
            beta,
            tau: tau0,
        })
    }

    pub fn current(&self) -> f64 {
        self.tau
    }

    /// Applies the update for iteration `t` (1-based) and returns the new temperature.
    pub fn anneal(&mut self, t: usize) -> f64 {
        self.tau = (self.tau * (-self.beta * t as f64).exp()).max(self.tau_min);
        self.tau
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            tau_min: 0.3,
            beta: 1e-4,
            tau: 1.0,
        }
    }
}
