//! Named cross-checks of the library against oracles and closed forms.

use iwsl::bound::{estimate, estimate_categorical_exact, value_and_grad};
use iwsl::emd::{maximize_observed, EmdConfig};
use iwsl::graph::{synth_dataset, NodeRef, TaskConfig};
use iwsl::inference::{log_posterior, surrogate_logit, InferenceConfig};
use iwsl::learning::grad_theta;
use iwsl::math::{argmax, log_softmax, logsumexp, relative_error, softmax};
use iwsl::nn::{Mlp, ThetaParams};
use iwsl::oracle::exact_joint;
use iwsl::rng::{self, StreamRng};
use iwsl::sampler::{reparameterize, sample_gumbel, DensityMode, SimplexVector};
use iwsl::scores::{marginal_score_explicit, PotentialTables};
use iwsl::Result;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(&mut StreamRng) -> Result<(bool, String)>;

pub const CHECKS: [(&str, CheckFn); 11] = [
    ("elbo_special_case", elbo_special_case),
    ("categorical_zero_variance", categorical_zero_variance),
    ("jensen_upper_bound", jensen_upper_bound),
    ("emd_softmax_maximizer", emd_softmax_maximizer),
    ("grad_pi_finite_difference", grad_pi_finite_difference),
    ("grad_theta_finite_difference", grad_theta_finite_difference),
    ("elimination_vs_enumeration", elimination_vs_enumeration),
    ("gumbel_max_frequencies", gumbel_max_frequencies),
    ("shift_cancellation", shift_cancellation),
    ("mlp_gradient_check", mlp_gradient_check),
    ("simplex_iterates", simplex_iterates),
];

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-4;

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut r = rng::stream(seed, &[0xA0D1, k as u64]);
            let (passed, detail) = match check(&mut r) {
                Ok(v) => v,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

fn random_psi(r: &mut StreamRng, v: usize) -> Vec<f64> {
    (0..v).map(|_| r.gen_range(-3.0..3.0)).collect()
}

fn random_pi(r: &mut StreamRng, v: usize) -> Result<Vec<f64>> {
    let w: Vec<f64> = (0..v).map(|_| r.gen_range(0.2..1.0)).collect();
    Ok(SimplexVector::from_weights(&w)?.into_vec())
}

fn elbo_special_case(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = r.gen_range(2..=8);
        let psi = random_psi(r, v);
        let pi = random_pi(r, v)?;
        let noise = sample_gumbel(r, v);
        let z = reparameterize(&pi, &noise, 0.7)?;
        let elbo = iwsl::bound::log_importance_weight(&psi, &pi, &z)?;
        let est = estimate(&psi, &pi, &[noise], 0.7, DensityMode::Affine)?;
        worst = worst.max((est.value - elbo).abs());
    }
    Ok((worst <= 1e-12, format!("max |L_1 - elbo| = {worst:e}")))
}

fn categorical_zero_variance(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let psi = {
            let v = r.gen_range(2..=10);
            random_psi(r, v)
        };
        let pi = softmax(&psi);
        let target = logsumexp(&psi);
        for s in [1, 5, 50] {
            let est = estimate_categorical_exact(&psi, &pi, r, s)?;
            worst = worst.max((est.value - target).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max |L_s - logsumexp| = {worst:e}")))
}

fn jensen_upper_bound(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let v = r.gen_range(2..=10);
        let psi = random_psi(r, v);
        let pi = random_pi(r, v)?;
        let draws: Vec<f64> = (0..200)
            .map(|_| estimate_categorical_exact(&psi, &pi, r, 5).map(|e| e.value))
            .collect::<Result<_>>()?;
        let (mean, se) = mean_se(&draws);
        worst = worst.max((mean - logsumexp(&psi)) / se.max(1e-300));
    }
    Ok((
        worst <= 3.0,
        format!("max (mean - logsumexp)/se = {worst:.3}"),
    ))
}

fn entropic(a: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + '_ {
    move |pi: &[f64]| {
        let value = pi
            .iter()
            .zip(a)
            .map(|(p, ai)| ai * p - if *p > 0.0 { p * p.ln() } else { 0.0 })
            .sum();
        let grad = pi.iter().zip(a).map(|(p, ai)| ai - p.ln() - 1.0).collect();
        Ok((value, grad))
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn emd_softmax_maximizer(r: &mut StreamRng) -> Result<(bool, String)> {
    let cfg = EmdConfig {
        max_iters: 500,
        ..EmdConfig::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = {
            let v = r.gen_range(2..=10);
            random_psi(r, v)
        };
        let out = maximize_observed(entropic(&a), &SimplexVector::uniform(a.len()), &cfg, |_| {})?;
        worst = worst.max(l1(&out.pi, &softmax(&a)));
    }
    Ok((worst < 1e-3, format!("max L1 to softmax(a) = {worst:e}")))
}

fn simplex_iterates(r: &mut StreamRng) -> Result<(bool, String)> {
    let cfg = EmdConfig {
        max_iters: 500,
        ..EmdConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut negative = false;
    for _ in 0..50 {
        let v = r.gen_range(2..=10);
        let a = random_psi(r, v);
        let pi0 = SimplexVector::new(random_pi(r, v)?)?;
        maximize_observed(entropic(&a), &pi0, &cfg, |p| {
            negative |= p.iter().any(|&x| x < 0.0);
            worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        })?;
    }
    Ok((
        !negative && worst <= 1e-12,
        format!("max |sum - 1| = {worst:e}"),
    ))
}

fn grad_pi_finite_difference(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = r.gen_range(2..=8);
        let psi = random_psi(r, v);
        let pi = random_pi(r, v)?;
        let tau = r.gen_range(0.3..1.5);
        let noises: Vec<_> = (0..r.gen_range(1..=20))
            .map(|_| sample_gumbel(r, v))
            .collect();
        let (_, g) = value_and_grad(&psi, &pi, &noises, tau, DensityMode::Affine)?;
        for k in 0..v {
            let mut p = pi.clone();
            p[k] += FD_STEP;
            let fp = estimate(&psi, &p, &noises, tau, DensityMode::Affine)?.value;
            p[k] -= 2.0 * FD_STEP;
            let fm = estimate(&psi, &p, &noises, tau, DensityMode::Affine)?.value;
            worst = worst.max(relative_error(g[k], (fp - fm) / (2.0 * FD_STEP), FD_FLOOR));
        }
    }
    Ok((worst <= FD_TOL, format!("max relative error = {worst:e}")))
}

fn grad_theta_finite_difference(r: &mut StreamRng) -> Result<(bool, String)> {
    let task = TaskConfig {
        d: 3,
        m_range: (2, 2),
        n_range: (1, 1),
        pair_density: 0.5,
        seed: r.gen(),
        ..TaskConfig::default()
    };
    let inf = InferenceConfig {
        samples: 3,
        emd: EmdConfig {
            max_iters: 3,
            ..EmdConfig::default()
        },
        ..InferenceConfig::default()
    };
    let mut worst: f64 = 0.0;
    for inst in synth_dataset(&task, 3)? {
        let mut theta = ThetaParams::init(3, task.v_o, task.v_p, &[4], r)?;
        let analytic = grad_theta(&inst, &theta, &inf, 1, &[])?.grads.flatten();
        let base = theta.flat_params();
        let mut p = base.clone();
        for i in 0..base.len() {
            p[i] = base[i] + FD_STEP;
            theta.set_flat_params(&p)?;
            let fp = grad_theta(&inst, &theta, &inf, 1, &[])?.loss;
            p[i] = base[i] - FD_STEP;
            theta.set_flat_params(&p)?;
            let fm = grad_theta(&inst, &theta, &inf, 1, &[])?.loss;
            p[i] = base[i];
            worst = worst.max(relative_error(
                analytic[i],
                (fp - fm) / (2.0 * FD_STEP),
                FD_FLOOR,
            ));
        }
    }
    Ok((worst <= FD_TOL, format!("max relative error = {worst:e}")))
}

fn mlp_gradient_check(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sizes = [r.gen_range(1..5), r.gen_range(1..7), r.gen_range(1..4)];
        let net = Mlp::new(&sizes, r)?;
        let x: Vec<f64> = (0..sizes[0]).map(|_| r.gen_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..sizes[2]).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (grads, _) = net.backward(&x, &g)?;
        let analytic = grads.flatten();
        let base = net.flat_params();
        let mut probe = net.clone();
        let mut p = base.clone();
        let mut f = |p: &[f64]| -> Result<f64> {
            probe.set_flat_params(p)?;
            Ok(iwsl::math::dot(&probe.forward(&x)?, &g))
        };
        for i in 0..base.len() {
            p[i] = base[i] + FD_STEP;
            let fp = f(&p)?;
            p[i] = base[i] - FD_STEP;
            let fm = f(&p)?;
            p[i] = base[i];
            worst = worst.max(relative_error(
                analytic[i],
                (fp - fm) / (2.0 * FD_STEP),
                FD_FLOOR,
            ));
        }
    }
    Ok((worst <= 1e-5, format!("max relative error = {worst:e}")))
}

fn elimination_vs_enumeration(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let task = TaskConfig {
            d: 1,
            m_range: (1, 4),
            n_range: (0, 3),
            pair_density: 0.5,
            seed: case,
            ..TaskConfig::default()
        };
        let g = synth_dataset(&task, 1)?.remove(0).graph;
        let (v_o, v_p, v_g) = (r.gen_range(2..=4), r.gen_range(2..=4), r.gen_range(1..=2));
        let tables = PotentialTables::random(&g, v_o, v_p, v_g, 1.5, r);
        let exact = exact_joint(&tables, &g)?;
        let nodes: Vec<NodeRef> = (0..g.num_objects())
            .map(NodeRef::Object)
            .chain((0..g.num_predicates()).map(NodeRef::Predicate))
            .chain([NodeRef::Global])
            .collect();
        for (k, node) in nodes.into_iter().enumerate() {
            let ve = log_softmax(&marginal_score_explicit(&tables, &g, node)?);
            for (a, b) in ve.iter().zip(&exact.marginals[k]) {
                worst = worst.max((a.exp() - b).abs());
            }
        }
    }
    Ok((
        worst <= 1e-9,
        format!("max marginal difference = {worst:e}"),
    ))
}

fn gumbel_max_frequencies(r: &mut StreamRng) -> Result<(bool, String)> {
    let pi = [0.1, 0.2, 0.3, 0.4];
    let n = 10_000;
    let mut counts = [0usize; 4];
    let mut invariant = true;
    for _ in 0..n {
        let s = sample_gumbel(r, 4);
        let labels: Vec<usize> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&tau| reparameterize(&pi, &s, tau).map(|z| argmax(&z)))
            .collect::<Result<_>>()?;
        invariant &= labels.iter().all(|&l| l == labels[0]);
        counts[labels[0]] += 1;
    }
    let worst = pi
        .iter()
        .zip(counts)
        .map(|(&p, c)| (c as f64 - n as f64 * p).abs() / (n as f64 * p * (1.0 - p)).sqrt())
        .fold(0.0, f64::max);
    Ok((
        invariant && worst <= 3.0,
        format!("max |count - n pi| / sigma = {worst:.3}, tau invariant = {invariant}"),
    ))
}

fn shift_cancellation(r: &mut StreamRng) -> Result<(bool, String)> {
    let mut identical = true;
    for _ in 0..100 {
        let psi = {
            let v = r.gen_range(2..=10);
            random_psi(r, v)
        };
        let reference = log_posterior(&surrogate_logit(&psi, 0.0));
        for bound in [-10.0, 10.0] {
            let lp = log_posterior(&surrogate_logit(&psi, bound));
            identical &= argmax(&lp) == argmax(&reference);
            identical &= lp
                .iter()
                .zip(&reference)
                .all(|(a, b)| (a - b).abs() <= 1e-12);
        }
    }
    Ok((
        identical,
        format!("posterior readout identical for L* in (-10, 0, 10): {identical}"),
    ))
}

pub(crate) fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
