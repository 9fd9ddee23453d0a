//! Monte Carlo estimation of the s-sample importance-weighted lower bound
//! and its pathwise gradient with respect to the categorical parameter π.
//!
//! For one node with marginal score vector ψ, a relaxed sample `z` has log
//! importance weight `log w = ⟨ψ, z⟩ − log q_π(z)` and the bound estimate is
//! `L_s = logsumexp_j(log w_j) − log s`.
//!
//! The gradient freezes the Gumbel noise and differentiates through the
//! reparameterization `z = softmax((log π + σ)/τ)`, whose Jacobian is
//! `∂z_i/∂π_k = z_i (δ_ik − z_k) / (τ π_k)`. All derivatives are taken in the
//! ambient coordinates of π.

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::math::{dot, logsumexp, softmax};
use crate::sampler::{
    log_density, log_density_exact, relaxed_with_log, DensityMode, GumbelNoise, PI_FLOOR,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub value: f64,
    pub sample_count: usize,
    pub log_weights: Vec<f64>,
}

impl BoundEstimate {
    fn from_log_weights(log_weights: Vec<f64>) -> Self {
        let s = log_weights.len();
        Self {
            value: logsumexp(&log_weights) - (s as f64).ln(),
            sample_count: s,
            log_weights,
        }
    }
}

/// `⟨ψ, z⟩ − log q_π(z)` under the default density.
pub fn log_importance_weight(psi: &[f64], pi: &[f64], z: &[f64]) -> Result<f64> {
    check_len("pi", psi.len(), pi.len())?;
    check_len("sample", psi.len(), z.len())?;
    Ok(dot(psi, z) - log_density(pi, z))
}

struct SampleTerms {
    log_w: f64,
    grad: Option<Vec<f64>>,
}

fn sample_terms(
    psi: &[f64],
    pi: &[f64],
    sigma: &[f64],
    tau: f64,
    mode: DensityMode,
    with_grad: bool,
) -> SampleTerms {
    let v = psi.len();
    let (z, log_z) = relaxed_with_log(pi, sigma, tau);
    let score = dot(psi, &z);
    let log_q = match mode {
        DensityMode::Affine => log_density(pi, &z),
        DensityMode::Exact => log_density_exact(pi, &log_z, tau),
    };
    let log_w = score - log_q;
    if !with_grad {
        return SampleTerms { log_w, grad: None };
    }

    // zu_k = z_k · u_k and uz = ⟨u, z⟩ with u = ψ − ∂log q/∂z; dq = ∂log q/∂π at fixed z
    let (zu, uz, dq): (Vec<f64>, f64, Vec<f64>) = match mode {
        DensityMode::Affine => {
            let zu: Vec<f64> = (0..v).map(|k| z[k] * (psi[k] - pi[k])).collect();
            let uz = zu.iter().sum();
            let sm = softmax(pi);
            let dq = (0..v).map(|k| z[k] - sm[k]).collect();
            (zu, uz, dq)
        }
        DensityMode::Exact => {
            let vf = v as f64;
            let log_pi: Vec<f64> = pi.iter().map(|p| p.max(PI_FLOOR).ln()).collect();
            let a: Vec<f64> = log_pi
                .iter()
                .zip(&log_z)
                .map(|(lp, lz)| lp - tau * lz)
                .collect();
            let r = softmax(&a);
            let zu = (0..v)
                .map(|k| psi[k] * z[k] - (tau * vf * r[k] - tau - 1.0))
                .collect();
            let uz = score + vf;
            let dq = (0..v)
                .map(|k| {
                    if pi[k] > PI_FLOOR {
                        (1.0 - vf * r[k]) / pi[k]
                    } else {
                        0.0
                    }
                })
                .collect();
            (zu, uz, dq)
        }
    };
    let grad = (0..v)
        .map(|k| {
            let through_z = if pi[k] > PI_FLOOR {
                (zu[k] - z[k] * uz) / (tau * pi[k])
            } else {
                0.0
            };
            through_z - dq[k]
        })
        .collect();
    SampleTerms {
        log_w,
        grad: Some(grad),
    }
}

fn check_inputs(psi: &[f64], pi: &[f64], noises: &[GumbelNoise], tau: f64) -> Result<()> {
    if noises.is_empty() {
        return Err(Error::Argument(
            "at least one noise sample is required".into(),
        ));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    check_len("pi", psi.len(), pi.len())?;
    for s in noises {
        check_len("gumbel noise", psi.len(), s.len())?;
    }
    Ok(())
}

/// Bound estimate from the given (frozen) noises; a pure function of its inputs.
pub fn estimate(
    psi: &[f64],
    pi: &[f64],
    noises: &[GumbelNoise],
    tau: f64,
    mode: DensityMode,
) -> Result<BoundEstimate> {
    check_inputs(psi, pi, noises, tau)?;
    let log_w = noises
        .iter()
        .map(|s| sample_terms(psi, pi, s, tau, mode, false).log_w)
        .collect();
    Ok(BoundEstimate::from_log_weights(log_w))
}

/// Bound estimate together with its exact gradient with respect to π.
pub fn value_and_grad(
    psi: &[f64],
    pi: &[f64],
    noises: &[GumbelNoise],
    tau: f64,
    mode: DensityMode,
) -> Result<(BoundEstimate, Vec<f64>)> {
    check_inputs(psi, pi, noises, tau)?;
    let terms: Vec<SampleTerms> = noises
        .iter()
        .map(|s| sample_terms(psi, pi, s, tau, mode, true))
        .collect();
    let log_w: Vec<f64> = terms.iter().map(|t| t.log_w).collect();
    // ∂L_s/∂π = Σ_j softmax(log w)_j · ∂log w_j/∂π
    let weights = softmax(&log_w);
    let mut grad = vec![0.0; psi.len()];
    for (w, t) in weights.iter().zip(&terms) {
        if let Some(g) = &t.grad {
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
        }
    }
    Ok((BoundEstimate::from_log_weights(log_w), grad))
}

pub fn grad_pi(
    psi: &[f64],
    pi: &[f64],
    noises: &[GumbelNoise],
    tau: f64,
    mode: DensityMode,
) -> Result<Vec<f64>> {
    value_and_grad(psi, pi, noises, tau, mode).map(|(_, g)| g)
}

/// Importance-weighted bound with exact one-hot categorical samples:
/// `k ~ π`, `log w = ψ_k − log π_k`.
pub fn estimate_categorical_exact<R: Rng + ?Sized>(
    psi: &[f64],
    pi: &[f64],
    rng: &mut R,
    s: usize,
) -> Result<BoundEstimate> {
    check_len("pi", psi.len(), pi.len())?;
    if s == 0 {
        return Err(Error::Argument("at least one sample is required".into()));
    }
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Domain(
            "categorical-exact mode needs strictly positive pi".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    let log_w = (0..s)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut k = pi.len() - 1;
            for (i, &p) in pi.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = i;
                    break;
                }
            }
            psi[k] - pi[k].ln()
        })
        .collect();
    Ok(BoundEstimate::from_log_weights(log_w))
}
