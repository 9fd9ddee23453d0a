//! Variational learning: cross-entropy on the log posteriors, exact
//! backpropagation into the seven score networks, plain SGD, and evaluation.
//!
//! The loss of one instance is `−Σ_nodes log p(label | x)`, averaged over a
//! batch. Because the bound shift cancels in the posterior, the gradient with
//! respect to each score vector is `softmax(ψ) − onehot(label)` regardless of
//! the value returned by inference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SyntheticInstance;
use crate::inference::{infer_node, readout, InferenceConfig, NodePosterior, Readout};
use crate::nn::{sgd_step, ThetaGrads, ThetaParams};
use crate::rng::{self, tag};
use crate::sampler::TemperatureSchedule;
use crate::scores::{backprop_marginal_scores, marginal_scores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub batch_size: usize,
    pub alpha: f64,
    pub iters: usize,
    pub samples_learn: usize,
    pub schedule: TemperatureSchedule,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            alpha: 0.02,
            iters: 2000,
            samples_learn: 5000,
            schedule: TemperatureSchedule::default(),
            seed: 7,
            hidden: vec![32],
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iters == 0 || self.samples_learn == 0 {
            return Err(Error::Config(
                "batch_size, iters and samples_learn must be at least 1".into(),
            ));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// `−(1/c) Σ_instances Σ_nodes log_posterior[label]`.
pub fn cross_entropy(log_posteriors: &[Vec<Vec<f64>>], labels: &[Vec<usize>]) -> Result<f64> {
    if log_posteriors.len() != labels.len() || log_posteriors.is_empty() {
        return Err(Error::Argument(format!(
            "{} posterior sets for {} label sets",
            log_posteriors.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (lp, y) in log_posteriors.iter().zip(labels) {
        if lp.len() != y.len() {
            return Err(Error::Argument(format!(
                "{} nodes but {} labels",
                lp.len(),
                y.len()
            )));
        }
        for (node, &k) in lp.iter().zip(y) {
            let v = node.get(k).ok_or_else(|| {
                Error::Argument(format!("label {k} outside vocabulary of {}", node.len()))
            })?;
            total -= v;
        }
    }
    Ok(total / log_posteriors.len() as f64)
}

/// Posteriors of every node of one instance; node `k` uses the stream `(seed, parts…, k)`.
pub fn infer_instance(
    inst: &SyntheticInstance,
    theta: &ThetaParams,
    inf: &InferenceConfig,
    seed: u64,
    parts: &[u64],
) -> Result<(Vec<Vec<f64>>, Vec<NodePosterior>)> {
    let scores = marginal_scores(theta, inst)?;
    let mut key: Vec<u64> = parts.to_vec();
    key.push(0);
    let psi: Vec<Vec<f64>> = scores
        .objects
        .into_iter()
        .chain(scores.predicates)
        .collect();
    let posts = psi
        .iter()
        .enumerate()
        .map(|(k, p)| {
            *key.last_mut().unwrap_or(&mut 0) = k as u64;
            let mut r = rng::stream(seed, &key);
            infer_node(p, inf, &mut r).map(|out| NodePosterior::from_inference(p, out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((psi, posts))
}

#[derive(Debug, Clone)]
pub struct InstanceGradient {
    pub loss: f64,
    pub grads: ThetaGrads,
    pub bound_sum: f64,
    pub nodes: usize,
}

/// Loss and θ-gradient of one labeled instance.
pub fn grad_theta(
    inst: &SyntheticInstance,
    theta: &ThetaParams,
    inf: &InferenceConfig,
    seed: u64,
    parts: &[u64],
) -> Result<InstanceGradient> {
    let (_, posts) = infer_instance(inst, theta, inf, seed, parts)?;
    let labels = inst.labels();
    let lps: Vec<Vec<f64>> = posts.iter().map(|p| p.log_posterior.clone()).collect();
    let loss = cross_entropy(std::slice::from_ref(&lps), std::slice::from_ref(&labels))?;
    // ∂loss/∂ψ = exp(log posterior) − onehot
    let mut d_psi: Vec<Vec<f64>> = lps
        .iter()
        .map(|lp| lp.iter().map(|x| x.exp()).collect())
        .collect();
    for (d, &k) in d_psi.iter_mut().zip(&labels) {
        d[k] -= 1.0;
    }
    let m = inst.graph.num_objects();
    let d_pred = d_psi.split_off(m);
    let mut grads = theta.zero_grads();
    backprop_marginal_scores(theta, inst, &d_psi, &d_pred, &mut grads)?;
    Ok(InstanceGradient {
        loss,
        grads,
        bound_sum: posts.iter().map(|p| p.bound).sum(),
        nodes: posts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub mean_bound: f64,
    pub tau: f64,
}

/// Stepwise training loop; each [`Trainer::step`] is one batch update.
pub struct Trainer<'a> {
    data: &'a [SyntheticInstance],
    cfg: LearnConfig,
    inf: InferenceConfig,
    theta: ThetaParams,
    schedule: TemperatureSchedule,
    t: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    trace: Vec<TraceRecord>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        data: &'a [SyntheticInstance],
        theta: ThetaParams,
        cfg: &LearnConfig,
        inf: &InferenceConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        inf.validate()?;
        if data.is_empty() {
            return Err(Error::Argument("empty training set".into()));
        }
        Ok(Self {
            data,
            schedule: cfg.schedule.clone(),
            cfg: cfg.clone(),
            inf: inf.clone(),
            theta,
            t: 0,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            trace: Vec::new(),
        })
    }

    /// Fresh parameters drawn from the `INIT` stream of the configured seed.
    pub fn init_theta(
        data: &[SyntheticInstance],
        v_o: usize,
        v_p: usize,
        cfg: &LearnConfig,
    ) -> Result<ThetaParams> {
        let d = data
            .first()
            .map(|i| i.feature_dim())
            .ok_or_else(|| Error::Argument("empty training set".into()))?;
        ThetaParams::init(
            d,
            v_o,
            v_p,
            &cfg.hidden,
            &mut rng::stream(cfg.seed, &[tag::INIT]),
        )
    }

    fn next_batch(&mut self) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order = (0..self.data.len()).collect();
                self.order
                    .shuffle(&mut rng::stream(self.cfg.seed, &[tag::SHUFFLE, self.epoch]));
                self.epoch += 1;
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn finished(&self) -> bool {
        self.t >= self.cfg.iters
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    pub fn tau(&self) -> f64 {
        self.schedule.current()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// One iteration: inference for every node of a batch at the current
    /// temperature, loss, SGD update, then annealing. On a non-finite loss or
    /// update the parameters are left untouched.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let t = self.t + 1;
        let tau = self.schedule.current();
        let inf = InferenceConfig {
            samples: self.cfg.samples_learn,
            tau,
            ..self.inf.clone()
        };
        let batch = self.next_batch();
        let theta = &self.theta;
        let seed = self.cfg.seed;
        let data = self.data;
        let parts: Vec<InstanceGradient> = batch
            .par_iter()
            .map(|&idx| {
                grad_theta(
                    &data[idx],
                    theta,
                    &inf,
                    seed,
                    &[tag::TRAIN_NODE, t as u64, idx as u64],
                )
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                // non-finite scores surface as domain or optimizer errors
                Error::Domain(_) | Error::Optimizer { .. } => Error::NonFiniteLoss { iteration: t },
                other => other,
            })?;

        let c = batch.len() as f64;
        let mut grads = theta.zero_grads();
        let (mut loss, mut bound, mut nodes) = (0.0, 0.0, 0usize);
        for p in &parts {
            grads.add_assign(&p.grads);
            loss += p.loss;
            bound += p.bound_sum;
            nodes += p.nodes;
        }
        grads.scale(1.0 / c);
        loss /= c;
        if !loss.is_finite() || !grads.flatten().iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        let mut next = self.theta.clone();
        sgd_step(&mut next, &grads, self.cfg.alpha);
        if !next.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        self.theta = next;
        self.schedule.anneal(t);
        self.t = t;
        let rec = TraceRecord {
            iteration: t,
            loss,
            mean_bound: if nodes > 0 { bound / nodes as f64 } else { 0.0 },
            tau,
        };
        self.trace.push(rec.clone());
        Ok(rec)
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            tau: self.schedule.current(),
            theta: self.theta,
            trace: self.trace,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: ThetaParams,
    pub tau: f64,
    pub trace: Vec<TraceRecord>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.loss).collect()
    }
}

pub fn train(
    data: &[SyntheticInstance],
    theta: ThetaParams,
    cfg: &LearnConfig,
    inf: &InferenceConfig,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, theta, cfg, inf)?;
    while !trainer.finished() {
        trainer.step()?;
    }
    Ok(trainer.into_outcome())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub object_recall: Vec<Option<f64>>,
    pub predicate_recall: Vec<Option<f64>>,
    pub object_mean_recall: f64,
    pub predicate_mean_recall: f64,
    pub combined_mean_recall: f64,
    pub accuracy: f64,
}

fn recalls(hits: &[usize], support: &[usize]) -> Vec<Option<f64>> {
    hits.iter()
        .zip(support)
        .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
        .collect()
}

fn mean_supported<'a>(r: impl Iterator<Item = &'a Option<f64>>) -> f64 {
    let vals: Vec<f64> = r.flatten().copied().collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

impl Metrics {
    /// Metrics from parallel per-node arrays; object nodes are flagged by `is_object`.
    pub fn from_predictions(
        v_o: usize,
        v_p: usize,
        is_object: &[bool],
        truth: &[usize],
        pred: &[usize],
    ) -> Self {
        let mut hits = [vec![0; v_o], vec![0; v_p]];
        let mut support = [vec![0; v_o], vec![0; v_p]];
        let mut correct = 0usize;
        for ((&obj, &y), &p) in is_object.iter().zip(truth).zip(pred) {
            let kind = if obj { 0 } else { 1 };
            support[kind][y] += 1;
            if y == p {
                hits[kind][y] += 1;
                correct += 1;
            }
        }
        let object_recall = recalls(&hits[0], &support[0]);
        let predicate_recall = recalls(&hits[1], &support[1]);
        Self {
            object_mean_recall: mean_supported(object_recall.iter()),
            predicate_mean_recall: mean_supported(predicate_recall.iter()),
            combined_mean_recall: mean_supported(object_recall.iter().chain(&predicate_recall)),
            accuracy: if truth.is_empty() {
                0.0
            } else {
                correct as f64 / truth.len() as f64
            },
            object_recall,
            predicate_recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub posterior: Metrics,
    pub variational: Metrics,
    pub loss: f64,
    pub mean_bound: f64,
    pub bound_stderr: f64,
    pub nodes: usize,
}

impl Evaluation {
    pub fn metrics(&self, mode: Readout) -> &Metrics {
        match mode {
            Readout::Posterior => &self.posterior,
            Readout::Variational => &self.variational,
        }
    }
}

/// Inference with θ and τ frozen (no update, no annealing) and both readouts scored.
pub fn evaluate(
    data: &[SyntheticInstance],
    theta: &ThetaParams,
    v_o: usize,
    v_p: usize,
    inf: &InferenceConfig,
    seed: u64,
) -> Result<Evaluation> {
    inf.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let per: Vec<Vec<NodePosterior>> = data
        .par_iter()
        .enumerate()
        .map(|(idx, inst)| {
            infer_instance(inst, theta, inf, seed, &[tag::EVAL_NODE, idx as u64]).map(|(_, p)| p)
        })
        .collect::<Result<_>>()?;
    let mut is_object = Vec::new();
    let mut truth = Vec::new();
    let mut post = Vec::new();
    let mut var = Vec::new();
    let mut bounds = Vec::new();
    let mut lps = Vec::new();
    let mut labels = Vec::new();
    for (inst, nodes) in data.iter().zip(&per) {
        let m = inst.graph.num_objects();
        let y = inst.labels();
        for (k, node) in nodes.iter().enumerate() {
            is_object.push(k < m);
            post.push(readout(node, Readout::Posterior));
            var.push(readout(node, Readout::Variational));
            bounds.push(node.bound);
        }
        truth.extend_from_slice(&y);
        lps.push(
            nodes
                .iter()
                .map(|n| n.log_posterior.clone())
                .collect::<Vec<_>>(),
        );
        labels.push(y);
    }
    let n = bounds.len();
    let mean_bound = bounds.iter().sum::<f64>() / n.max(1) as f64;
    let bound_stderr = if n > 1 {
        let var = bounds.iter().map(|b| (b - mean_bound).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(Evaluation {
        posterior: Metrics::from_predictions(v_o, v_p, &is_object, &truth, &post),
        variational: Metrics::from_predictions(v_o, v_p, &is_object, &truth, &var),
        loss: cross_entropy(&lps, &labels)?,
        mean_bound,
        bound_stderr,
        nodes: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emd::EmdConfig;
    use crate::graph::{synth_dataset, TaskConfig};
    use crate::inference::log_posterior;
    use crate::math::relative_error;

    fn fast_inf() -> InferenceConfig {
        InferenceConfig {
            samples: 5,
            emd: EmdConfig {
                max_iters: 5,
                ..EmdConfig::default()
            },
            ..InferenceConfig::default()
        }
    }

    fn small_task(seed: u64, separation: f64) -> TaskConfig {
        TaskConfig {
            d: 6,
            class_separation: separation,
            seed,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let l4 = 4f64.ln();
        let uniform = vec![vec![-l4; 4]; 3];
        let ce = cross_entropy(&[uniform], &[vec![0, 3, 1]]).unwrap();
        assert!((ce - 3.0 * l4).abs() < 1e-12);
        let perfect = vec![vec![0.0, f64::NEG_INFINITY], vec![f64::NEG_INFINITY, 0.0]];
        assert_eq!(cross_entropy(&[perfect], &[vec![0, 1]]).unwrap(), 0.0);
        let a = log_posterior(&[1.0, 0.0]);
        let b = log_posterior(&[0.0, 2.0, 1.0]);
        let ce = cross_entropy(&[vec![a.clone(), b.clone()]], &[vec![1, 2]]).unwrap();
        assert!((ce - (-a[1] - b[2])).abs() < 1e-15);
        assert!(matches!(
            cross_entropy(&[vec![a.clone()]], &[vec![]]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            cross_entropy(&[vec![a]], &[vec![5]]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn saturated_scores_have_vanishing_gradient() {
        // a single linear h_o whose bias puts a margin of 50 on the label
        let cfg = TaskConfig {
            d: 2,
            m_range: (1, 1),
            n_range: (0, 0),
            ..TaskConfig::default()
        };
        let inst = synth_dataset(&cfg, 1).unwrap().remove(0);
        let mut theta = ThetaParams::zeros(2, 5, 4, &[]).unwrap();
        let y = inst.object_labels[0];
        let mut p = theta.flat_params();
        // h_o layout: weight (5×2) then bias (5); ψ = −h_o
        for k in 0..5 {
            p[10 + k] = if k == y { -50.0 } else { 0.0 };
        }
        theta.set_flat_params(&p).unwrap();
        let g = grad_theta(&inst, &theta, &fast_inf(), 1, &[]).unwrap();
        assert!(g.grads.norm() <= 1e-10, "{}", g.grads.norm());
    }

    #[test]
    fn affine_gradient_by_hand() {
        let cfg = TaskConfig {
            d: 3,
            m_range: (1, 1),
            n_range: (0, 0),
            ..TaskConfig::default()
        };
        let inst = synth_dataset(&cfg, 1).unwrap().remove(0);
        let mut theta = ThetaParams::init(3, 5, 4, &[], &mut rng::stream(2, &[])).unwrap();
        // silence the global term so only h_o contributes
        let zero_og = crate::nn::Mlp::zeros(&[6, 5]).unwrap();
        theta.g_og = zero_og;
        let psi = crate::scores::object_marginal_score(&theta, &inst, 0).unwrap();
        let sm = crate::math::softmax(&psi);
        let y = inst.object_labels[0];
        let g = grad_theta(&inst, &theta, &fast_inf(), 3, &[]).unwrap();
        let x = &inst.object_features[0];
        for r in 0..5 {
            let delta = sm[r] - if r == y { 1.0 } else { 0.0 };
            // ψ = −(W x + b)
            for c in 0..3 {
                assert!((g.grads.h_o.weights[0][r * 3 + c] + delta * x[c]).abs() < 1e-12);
            }
            assert!((g.grads.h_o.biases[0][r] + delta).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = TaskConfig {
            d: 4,
            m_range: (2, 2),
            n_range: (1, 1),
            pair_density: 1.0,
            ..TaskConfig::default()
        };
        let inf = fast_inf();
        for (n, inst) in synth_dataset(&cfg, 3).unwrap().iter().enumerate() {
            let mut theta =
                ThetaParams::init(4, 5, 4, &[5], &mut rng::stream(n as u64, &[tag::INIT])).unwrap();
            let g = grad_theta(inst, &theta, &inf, 9, &[])
                .unwrap()
                .grads
                .flatten();
            let base = theta.flat_params();
            let mut p = base.clone();
            let h = 1e-6;
            let loss_at = |p: &[f64], theta: &mut ThetaParams| {
                theta.set_flat_params(p).unwrap();
                grad_theta(inst, theta, &inf, 9, &[]).unwrap().loss
            };
            for i in (0..base.len()).step_by(11) {
                p[i] = base[i] + h;
                let fp = loss_at(&p, &mut theta);
                p[i] = base[i] - h;
                let fm = loss_at(&p, &mut theta);
                p[i] = base[i];
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    relative_error(g[i], fd, 1e-4) <= 1e-4,
                    "param {i}: {} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn loss_invariant_to_constant_score_shift() {
        let lp = log_posterior(&[0.2, -1.0, 0.7]);
        let shifted = log_posterior(&[5.2, 4.0, 5.7]);
        let a = cross_entropy(&[vec![lp]], &[vec![2]]).unwrap();
        let b = cross_entropy(&[vec![shifted]], &[vec![2]]).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn zero_step_leaves_theta_unchanged() {
        let data = synth_dataset(&small_task(3, 3.0), 10).unwrap();
        let cfg = LearnConfig {
            alpha: 0.0,
            iters: 1,
            samples_learn: 5,
            hidden: vec![4],
            ..LearnConfig::default()
        };
        let theta = Trainer::init_theta(&data, 5, 4, &cfg).unwrap();
        let out = train(&data, theta.clone(), &cfg, &fast_inf()).unwrap();
        assert_eq!(out.theta, theta);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_worker_independent() {
        let data = synth_dataset(&small_task(4, 3.0), 20).unwrap();
        let cfg = LearnConfig {
            iters: 15,
            samples_learn: 5,
            hidden: vec![8],
            alpha: 0.05,
            ..LearnConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let theta = Trainer::init_theta(&data, 5, 4, &cfg).unwrap();
                train(&data, theta, &cfg, &fast_inf()).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn short_training_reduces_loss() {
        let data = synth_dataset(&small_task(5, 3.0), 60).unwrap();
        let cfg = LearnConfig {
            iters: 200,
            samples_learn: 3,
            hidden: vec![16],
            alpha: 0.05,
            ..LearnConfig::default()
        };
        let theta = Trainer::init_theta(&data, 5, 4, &cfg).unwrap();
        let out = train(&data, theta, &cfg, &fast_inf()).unwrap();
        let l = out.losses();
        let head: f64 = l[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = l[l.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn chance_level_on_uninformative_features() {
        let cfg = TaskConfig {
            class_separation: 0.0,
            m_range: (3, 4),
            n_range: (2, 3),
            ..small_task(6, 0.0)
        };
        let data = synth_dataset(&cfg, 400).unwrap();
        let theta = ThetaParams::init(6, 5, 4, &[8], &mut rng::stream(1, &[])).unwrap();
        let ev = evaluate(&data, &theta, 5, 4, &fast_inf(), 2).unwrap();
        // random θ still picks a data-independent favourite on average; accuracy
        // for a uniform label prior stays near 1/v per type
        let objects: usize = data.iter().map(|i| i.graph.num_objects()).sum();
        let acc_o = ev.posterior.object_recall.iter().flatten().sum::<f64>() / 5.0;
        let sigma = (0.2f64 * 0.8 / objects as f64).sqrt();
        assert!((acc_o - 0.2).abs() <= 3.0 * sigma + 0.02, "{acc_o}");
    }

    #[test]
    fn perfect_predictions_give_unit_recalls() {
        let truth = [0, 1, 2, 0, 3];
        let is_obj = [true, true, true, false, false];
        let m = Metrics::from_predictions(3, 4, &is_obj, &truth, &truth);
        assert_eq!(m.combined_mean_recall, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.predicate_recall[1], None);
        let wrong = [1, 1, 2, 0, 0];
        let m = Metrics::from_predictions(3, 4, &is_obj, &truth, &wrong);
        assert_eq!(m.object_recall, vec![Some(0.0), Some(1.0), Some(1.0)]);
        assert_eq!(m.predicate_mean_recall, 0.5);
        assert!((m.combined_mean_recall - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_is_pure() {
        let data = synth_dataset(&small_task(7, 3.0), 15).unwrap();
        let theta = ThetaParams::init(6, 5, 4, &[8], &mut rng::stream(1, &[])).unwrap();
        let a = evaluate(&data, &theta, 5, 4, &fast_inf(), 3).unwrap();
        let b = evaluate(&data, &theta, 5, 4, &fast_inf(), 3).unwrap();
        assert_eq!(a, b);
    }
}
