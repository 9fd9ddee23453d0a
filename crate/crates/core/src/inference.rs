//! Per-node variational inference and posterior readout.
//!
//! For each node the categorical parameter π is fitted by entropic mirror
//! descent on the importance-weighted bound with frozen noise. The surrogate
//! logit `φ = ψ − L_s*` then yields the log posterior `φ − logsumexp(φ)`.
//! The shift by `L_s*` cancels in that normalisation, so the posterior
//! readout equals `argmax softmax(ψ)` whatever the bound value is; the
//! variational readout (`argmax π*`) is the one that depends on inference.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bound::value_and_grad;
use crate::emd::{maximize, EmdConfig};
use crate::error::{Error, Result};
use crate::math::{argmax, logsumexp};
use crate::sampler::{sample_gumbel, DensityMode, GumbelNoise, SimplexVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    #[default]
    Posterior,
    Variational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiInit {
    #[default]
    Uniform,
    /// Dirichlet(1, …, 1).
    Random,
}

/// Whether the Gumbel noise is drawn once per node or redrawn every EMD step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Frozen,
    Fresh,
}

macro_rules! str_enum {
    ($ty:ident { $($name:literal => $variant:ident),* }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)*
                    other => Err(Error::Config(format!(concat!("unknown ", stringify!($ty), " {:?}"), other))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $name,)*
                })
            }
        }
    };
}

str_enum!(Readout { "posterior" => Posterior, "variational" => Variational });
str_enum!(PiInit { "uniform" => Uniform, "random" => Random });
str_enum!(NoiseMode { "frozen" => Frozen, "fresh" => Fresh });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub samples: usize,
    pub tau: f64,
    pub emd: EmdConfig,
    pub readout: Readout,
    pub pi_init: PiInit,
    pub density: DensityMode,
    pub noise: NoiseMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            tau: 1.0,
            emd: EmdConfig::default(),
            readout: Readout::default(),
            pi_init: PiInit::default(),
            density: DensityMode::default(),
            noise: NoiseMode::default(),
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples_infer must be at least 1".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        self.emd.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInference {
    pub pi_star: SimplexVector,
    pub bound: f64,
    pub iters: usize,
}

fn initial_pi<R: Rng + ?Sized>(v: usize, mode: PiInit, rng: &mut R) -> Result<SimplexVector> {
    match mode {
        PiInit::Uniform => Ok(SimplexVector::uniform(v)),
        PiInit::Random => {
            let w: Vec<f64> = (0..v).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
            SimplexVector::from_weights(&w)
        }
    }
}

/// Maximises the bound over π for one node. The π initialisation is drawn
/// before the noise so both consume the same stream in a fixed order.
pub fn infer_node<R: Rng + ?Sized>(
    psi: &[f64],
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<NodeInference> {
    if psi.is_empty() {
        return Err(Error::Argument("empty score vector".into()));
    }
    if psi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite score vector".into()));
    }
    cfg.validate()?;
    let v = psi.len();
    let pi0 = initial_pi(v, cfg.pi_init, rng)?;
    let outcome = match cfg.noise {
        NoiseMode::Frozen => {
            let noises: Vec<GumbelNoise> =
                (0..cfg.samples).map(|_| sample_gumbel(rng, v)).collect();
            maximize(
                |pi| {
                    value_and_grad(psi, pi, &noises, cfg.tau, cfg.density)
                        .map(|(b, g)| (b.value, g))
                },
                &pi0,
                &cfg.emd,
            )?
        }
        NoiseMode::Fresh => maximize(
            |pi| {
                let noises: Vec<GumbelNoise> =
                    (0..cfg.samples).map(|_| sample_gumbel(rng, v)).collect();
                value_and_grad(psi, pi, &noises, cfg.tau, cfg.density).map(|(b, g)| (b.value, g))
            },
            &pi0,
            &cfg.emd,
        )?,
    };
    Ok(NodeInference {
        pi_star: outcome.pi,
        bound: outcome.value,
        iters: outcome.iters,
    })
}

/// `φ_k = ψ_k − L_s*`.
pub fn surrogate_logit(psi: &[f64], bound: f64) -> Vec<f64> {
    psi.iter().map(|p| p - bound).collect()
}

/// `φ − logsumexp(φ)`.
pub fn log_posterior(phi: &[f64]) -> Vec<f64> {
    let z = logsumexp(phi);
    phi.iter().map(|p| p - z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePosterior {
    pub phi: Vec<f64>,
    pub log_posterior: Vec<f64>,
    pub pi_star: SimplexVector,
    pub bound: f64,
}

impl NodePosterior {
    pub fn from_inference(psi: &[f64], inf: NodeInference) -> Self {
        let phi = surrogate_logit(psi, inf.bound);
        Self {
            log_posterior: log_posterior(&phi),
            phi,
            pi_star: inf.pi_star,
            bound: inf.bound,
        }
    }
}

pub fn posterior_node<R: Rng + ?Sized>(
    psi: &[f64],
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<NodePosterior> {
    Ok(NodePosterior::from_inference(
        psi,
        infer_node(psi, cfg, rng)?,
    ))
}

/// Predicted label; ties go to the lowest index.
pub fn readout(node: &NodePosterior, mode: Readout) -> usize {
    match mode {
        Readout::Posterior => argmax(&node.log_posterior),
        Readout::Variational => argmax(&node.pi_star),
    }
}
