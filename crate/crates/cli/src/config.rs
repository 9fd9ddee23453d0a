//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use iwsl::emd::EmdConfig;
use iwsl::graph::TaskConfig;
use iwsl::inference::{InferenceConfig, NoiseMode, PiInit, Readout};
use iwsl::learning::LearnConfig;
use iwsl::sampler::{DensityMode, TemperatureSchedule};
use iwsl::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub v_o: usize,
    pub v_p: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub class_separation: f64,
    pub label_skew: f64,
    pub pair_density: f64,
    pub seed: u64,
    pub count: usize,
    pub holdout_count: usize,
    pub samples_infer: usize,
    pub samples_learn: usize,
    pub emd_iters: usize,
    pub emd_gamma: f64,
    pub emd_eps: f64,
    pub readout: Readout,
    pub pi_init: PiInit,
    pub density: DensityMode,
    pub noise: NoiseMode,
    pub batch_size: usize,
    pub alpha: f64,
    pub iters: usize,
    pub tau0: f64,
    pub tau_min: f64,
    pub beta: f64,
    pub hidden: Vec<usize>,
    pub ablate_samples: Vec<usize>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = TaskConfig::default();
        let learn = LearnConfig::default();
        let inf = InferenceConfig::default();
        let sched = TemperatureSchedule::default();
        Self {
            d: task.d,
            v_o: task.v_o,
            v_p: task.v_p,
            m_min: task.m_range.0,
            m_max: task.m_range.1,
            n_min: task.n_range.0,
            n_max: task.n_range.1,
            class_separation: task.class_separation,
            label_skew: task.label_skew,
            pair_density: task.pair_density,
            seed: task.seed,
            count: 500,
            holdout_count: 200,
            samples_infer: inf.samples,
            samples_learn: learn.samples_learn,
            emd_iters: inf.emd.max_iters,
            emd_gamma: inf.emd.gamma0,
            emd_eps: inf.emd.epsilon,
            readout: inf.readout,
            pi_init: inf.pi_init,
            density: inf.density,
            noise: inf.noise,
            batch_size: learn.batch_size,
            alpha: learn.alpha,
            iters: learn.iters,
            tau0: sched.tau0,
            tau_min: sched.tau_min,
            beta: sched.beta,
            hidden: learn.hidden,
            ablate_samples: vec![10, 30, 50],
            out_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "d" => self.d = parse(key, v)?,
            "v_o" => self.v_o = parse(key, v)?,
            "v_p" => self.v_p = parse(key, v)?,
            "m_min" => self.m_min = parse(key, v)?,
            "m_max" => self.m_max = parse(key, v)?,
            "n_min" => self.n_min = parse(key, v)?,
            "n_max" => self.n_max = parse(key, v)?,
            "class_separation" => self.class_separation = parse(key, v)?,
            "label_skew" => self.label_skew = parse(key, v)?,
            "pair_density" => self.pair_density = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "count" => self.count = parse(key, v)?,
            "holdout_count" => self.holdout_count = parse(key, v)?,
            "samples_infer" => self.samples_infer = parse(key, v)?,
            "samples_learn" => self.samples_learn = parse(key, v)?,
            "emd_iters" => self.emd_iters = parse(key, v)?,
            "emd_gamma" => self.emd_gamma = parse(key, v)?,
            "emd_eps" => self.emd_eps = parse(key, v)?,
            "readout" => self.readout = v.parse()?,
            "pi_init" => self.pi_init = v.parse()?,
            "density" => self.density = v.parse()?,
            "noise" => self.noise = v.parse()?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "iters" => self.iters = parse(key, v)?,
            "tau0" => self.tau0 = parse(key, v)?,
            "tau_min" => self.tau_min = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "ablate_samples" => self.ablate_samples = parse_list(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "workers" => self.workers = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.task(self.seed).validate()?;
        self.inference().validate()?;
        self.learn()?.validate()?;
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if self.ablate_samples.is_empty() || self.ablate_samples.contains(&0) {
            return Err(Error::Config(
                "ablate_samples must list positive sample counts".into(),
            ));
        }
        Ok(())
    }

    pub fn task(&self, seed: u64) -> TaskConfig {
        TaskConfig {
            d: self.d,
            v_o: self.v_o,
            v_p: self.v_p,
            m_range: (self.m_min, self.m_max),
            n_range: (self.n_min, self.n_max),
            class_separation: self.class_separation,
            label_skew: self.label_skew,
            pair_density: self.pair_density,
            seed,
        }
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            samples: self.samples_infer,
            tau: self.tau0,
            emd: EmdConfig {
                max_iters: self.emd_iters,
                gamma0: self.emd_gamma,
                epsilon: self.emd_eps,
            },
            readout: self.readout,
            pi_init: self.pi_init,
            density: self.density,
            noise: self.noise,
        }
    }

    pub fn learn(&self) -> Result<LearnConfig> {
        Ok(LearnConfig {
            batch_size: self.batch_size,
            alpha: self.alpha,
            iters: self.iters,
            samples_learn: self.samples_learn,
            schedule: TemperatureSchedule::new(self.tau0, self.tau_min, self.beta)?,
            seed: self.seed,
            hidden: self.hidden.clone(),
        })
    }

    /// Every key with its effective value, in key order. `out_dir` and
    /// `workers` are left out: neither changes what is computed.
    pub fn snapshot(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("d", self.d.to_string());
        m.insert("v_o", self.v_o.to_string());
        m.insert("v_p", self.v_p.to_string());
        m.insert("m_min", self.m_min.to_string());
        m.insert("m_max", self.m_max.to_string());
        m.insert("n_min", self.n_min.to_string());
        m.insert("n_max", self.n_max.to_string());
        m.insert("class_separation", self.class_separation.to_string());
        m.insert("label_skew", self.label_skew.to_string());
        m.insert("pair_density", self.pair_density.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("count", self.count.to_string());
        m.insert("holdout_count", self.holdout_count.to_string());
        m.insert("samples_infer", self.samples_infer.to_string());
        m.insert("samples_learn", self.samples_learn.to_string());
        m.insert("emd_iters", self.emd_iters.to_string());
        m.insert("emd_gamma", self.emd_gamma.to_string());
        m.insert("emd_eps", self.emd_eps.to_string());
        m.insert("readout", self.readout.to_string());
        m.insert("pi_init", self.pi_init.to_string());
        m.insert("density", self.density.to_string());
        m.insert("noise", self.noise.to_string());
        m.insert("batch_size", self.batch_size.to_string());
        m.insert("alpha", self.alpha.to_string());
        m.insert("iters", self.iters.to_string());
        m.insert("tau0", self.tau0.to_string());
        m.insert("tau_min", self.tau_min.to_string());
        m.insert("beta", self.beta.to_string());
        m.insert("hidden", join(&self.hidden));
        m.insert("ablate_samples", join(&self.ablate_samples));
        m
    }
}
