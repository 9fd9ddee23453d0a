//! Entropic mirror descent (exponentiated gradient) ascent on the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{SimplexVector, PI_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    pub max_iters: usize,
    pub gamma0: f64,
    pub epsilon: f64,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            gamma0: 1.0,
            epsilon: 1e-5,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.gamma0 > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid EMD configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdOutcome {
    pub pi: SimplexVector,
    pub value: f64,
    pub iters: usize,
}

/// Maximises `objective` over the simplex starting from `pi0`.
///
/// Iteration `i` (1-based) evaluates `(L, ∇)` at the current π, stops if
/// `|L − L_prev| < ε`, and otherwise applies
/// `r = π · exp(γ_i ∇ − max(γ_i ∇))`, `π ← r / ‖r‖₁` with `γ_i = γ0 / √i`.
/// `L_prev` starts at `+∞`, so the first iteration always updates.
pub fn maximize<F>(objective: F, pi0: &SimplexVector, cfg: &EmdConfig) -> Result<EmdOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    maximize_observed(objective, pi0, cfg, |_| {})
}

/// [`maximize`] with a callback receiving every iterate, including `pi0`.
pub fn maximize_observed<F, O>(
    mut objective: F,
    pi0: &SimplexVector,
    cfg: &EmdConfig,
    mut observe: O,
) -> Result<EmdOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnMut(&[f64]),
{
    cfg.validate()?;
    let mut pi = pi0.to_vec();
    observe(&pi);
    let mut previous = f64::INFINITY;
    let mut eval = |pi: &[f64], iteration: usize| -> Result<(f64, Vec<f64>)> {
        let (value, grad) = objective(pi)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Optimizer {
                iteration,
                message: format!("objective returned non-finite value {value}"),
                last: pi.to_vec(),
            });
        }
        Ok((value, grad))
    };

    for i in 1..=cfg.max_iters {
        let (value, grad) = eval(&pi, i)?;
        let gamma = cfg.gamma0 / (i as f64).sqrt();
        if (value - previous).abs() < cfg.epsilon {
            return Ok(EmdOutcome {
                pi: SimplexVector::new(pi)?,
                value,
                iters: i,
            });
        }
        previous = value;
        let step: Vec<f64> = grad.iter().map(|g| gamma * g).collect();
        let top = crate::math::max(&step);
        let r: Vec<f64> = pi
            .iter()
            .zip(&step)
            .map(|(p, s)| p * (s - top).exp())
            .collect();
        pi = renormalize(&r);
        observe(&pi);
    }
    let (value, _) = eval(&pi, cfg.max_iters + 1)?;
    Ok(EmdOutcome {
        pi: SimplexVector::new(pi)?,
        value,
        iters: cfg.max_iters,
    })
}

// normalise, floor every entry at PI_FLOOR, normalise again
fn renormalize(r: &[f64]) -> Vec<f64> {
    let z: f64 = r.iter().sum();
    let floored: Vec<f64> = r.iter().map(|x| (x / z).max(PI_FLOOR)).collect();
    let z: f64 = floored.iter().sum();
    floored.iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::softmax;
    use crate::rng;
    use rand::Rng;

    // f(π) = ⟨a, π⟩ + H(π); maximiser softmax(a)
    fn entropic(a: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |pi: &[f64]| {
            let value = pi
                .iter()
                .zip(&a)
                .map(|(p, ai)| ai * p - if *p > 0.0 { p * p.ln() } else { 0.0 })
                .sum();
            let grad = pi.iter().zip(&a).map(|(p, ai)| ai - p.ln() - 1.0).collect();
            Ok((value, grad))
        }
    }

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    #[test]
    fn entropy_symmetric_case() {
        let out = maximize(
            entropic(vec![0.0, 0.0]),
            &SimplexVector::new(vec![0.9, 0.1]).unwrap(),
            &EmdConfig::default(),
        )
        .unwrap();
        assert!(l1(&out.pi, &[0.5, 0.5]) < 1e-3);
    }

    #[test]
    fn entropy_closed_form_maximiser() {
        let cfg = EmdConfig {
            max_iters: 500,
            ..EmdConfig::default()
        };
        let out = maximize(entropic(vec![1.0, 0.0]), &SimplexVector::uniform(2), &cfg).unwrap();
        let e = std::f64::consts::E;
        assert!(l1(&out.pi, &[e / (1.0 + e), 1.0 / (1.0 + e)]) < 1e-3);
        assert!(out.iters <= 500);
    }

    #[test]
    fn linear_objective_approaches_vertex_monotonically() {
        let cfg = EmdConfig {
            max_iters: 200,
            gamma0: 1.0,
            epsilon: 1e-12,
        };
        let mut path = Vec::new();
        let lin = |pi: &[f64]| Ok((pi[0], vec![1.0, 0.0]));
        let out =
            maximize_observed(lin, &SimplexVector::uniform(2), &cfg, |p| path.push(p[0])).unwrap();
        assert!(out.pi[0] >= 0.99);
        assert!(path.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn iterates_stay_on_simplex_and_value_improves() {
        let mut r = rng::stream(3, &[]);
        for _ in 0..50 {
            let v = r.gen_range(2..=10);
            let a: Vec<f64> = (0..v).map(|_| r.gen_range(-3.0..3.0)).collect();
            let pi0 = SimplexVector::from_weights(
                &(0..v).map(|_| r.gen_range(0.1..1.0)).collect::<Vec<_>>(),
            )
            .unwrap();
            let start = entropic(a.clone())(&pi0).unwrap().0;
            let cfg = EmdConfig {
                max_iters: 500,
                ..EmdConfig::default()
            };
            let out = maximize_observed(entropic(a.clone()), &pi0, &cfg, |p| {
                assert!(p.iter().all(|&x| x >= 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            })
            .unwrap();
            assert!(l1(&out.pi, &softmax(&a)) < 1e-3);
            assert!(out.value >= start);
        }
    }

    #[test]
    fn gradient_shift_invariance() {
        let cfg = EmdConfig {
            max_iters: 20,
            epsilon: 1e-300,
            ..EmdConfig::default()
        };
        let a = vec![0.3, -1.0, 2.0];
        let run = |shift: f64| {
            let mut f = entropic(a.clone());
            let mut path = Vec::new();
            maximize_observed(
                move |p: &[f64]| f(p).map(|(v, g)| (v, g.into_iter().map(|x| x + shift).collect())),
                &SimplexVector::uniform(3),
                &cfg,
                |p| path.push(p.to_vec()),
            )
            .unwrap();
            path
        };
        let base = run(0.0);
        let shifted = run(5.0);
        for (p, q) in base.iter().zip(&shifted) {
            for (x, y) in p.iter().zip(q) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn non_finite_objective_reports_last_iterate() {
        let mut calls = 0;
        let f = |pi: &[f64]| {
            calls += 1;
            if calls > 2 {
                Ok((f64::NAN, vec![0.0; pi.len()]))
            } else {
                Ok((calls as f64, vec![1.0, 0.0]))
            }
        };
        match maximize(f, &SimplexVector::uniform(2), &EmdConfig::default()) {
            Err(Error::Optimizer {
                iteration, last, ..
            }) => {
                assert_eq!(iteration, 3);
                assert!((last.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_class_is_fixed_point() {
        let out = maximize(
            |_: &[f64]| Ok((1.0, vec![3.0])),
            &SimplexVector::uniform(1),
            &EmdConfig::default(),
        )
        .unwrap();
        assert_eq!(out.pi.to_vec(), vec![1.0]);
    }
}
