//! Scene-graph topology and the synthetic task generator.
//!
//! Node order is fixed everywhere: objects `[0, m)`, then predicates
//! `[m, m + n)`, then the single global node. The global node carries a
//! feature vector but no label variable in the learned model.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A reference to one node of a [`SceneGraph`]. The derived ordering is the
/// global node order: objects, then predicates, then the global node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeRef {
    Object(usize),
    Predicate(usize),
    Global,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGraph {
    m: usize,
    n: usize,
    predicate_endpoints: Vec<(usize, usize)>,
    object_pairs: Vec<(usize, usize)>,
    has_global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct SceneGraph {
    m: usize,
    n: usize,
    predicate_endpoints: Vec<(usize, usize)>,
    object_pairs: Vec<(usize, usize)>,
    has_global: bool,
    // object -> incident predicates, ascending
    object_predicates: Vec<Vec<usize>>,
    // object -> paired objects, ascending
    object_peers: Vec<Vec<usize>>,
}

impl TryFrom<RawGraph> for SceneGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let mut g = build_graph(raw.m, raw.n, &raw.predicate_endpoints, &raw.object_pairs)?;
        g.has_global = raw.has_global;
        Ok(g)
    }
}

impl From<SceneGraph> for RawGraph {
    fn from(g: SceneGraph) -> Self {
        RawGraph {
            m: g.m,
            n: g.n,
            predicate_endpoints: g.predicate_endpoints,
            object_pairs: g.object_pairs,
            has_global: g.has_global,
        }
    }
}

/// Builds a validated scene graph.
///
/// `endpoints[j]` is the (subject, object) pair of predicate `j`. Object pairs
/// are unordered; `(a, b)` and `(b, a)` count as duplicates.
pub fn build_graph(
    m: usize,
    n: usize,
    endpoints: &[(usize, usize)],
    object_pairs: &[(usize, usize)],
) -> Result<SceneGraph> {
    if m == 0 {
        return Err(Error::Topology(
            "a scene graph needs at least one object".into(),
        ));
    }
    if endpoints.len() != n {
        return Err(Error::Topology(format!(
            "{n} predicates declared but {} endpoint pairs given",
            endpoints.len()
        )));
    }
    let mut object_predicates = vec![Vec::new(); m];
    for (j, &(s, o)) in endpoints.iter().enumerate() {
        if s >= m || o >= m {
            return Err(Error::Topology(format!(
                "predicate {j} endpoint ({s}, {o}) out of range for {m} objects"
            )));
        }
        if s == o {
            return Err(Error::Topology(format!(
                "predicate {j} uses object {s} as both endpoints"
            )));
        }
        object_predicates[s].push(j);
        object_predicates[o].push(j);
    }
    let mut seen = BTreeSet::new();
    let mut object_peers = vec![Vec::new(); m];
    for &(a, b) in object_pairs {
        if a >= m || b >= m {
            return Err(Error::Topology(format!(
                "object pair ({a}, {b}) out of range for {m} objects"
            )));
        }
        if a == b {
            return Err(Error::Topology(format!(
                "object pair ({a}, {a}) is a self-pair"
            )));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::Topology(format!(
                "object pair ({a}, {b}) is duplicated"
            )));
        }
        object_peers[a].push(b);
        object_peers[b].push(a);
    }
    object_peers.iter_mut().for_each(|p| p.sort_unstable());
    Ok(SceneGraph {
        m,
        n,
        predicate_endpoints: endpoints.to_vec(),
        object_pairs: object_pairs.to_vec(),
        has_global: true,
        object_predicates,
        object_peers,
    })
}

impl SceneGraph {
    pub fn num_objects(&self) -> usize {
        self.m
    }

    pub fn num_predicates(&self) -> usize {
        self.n
    }

    /// Objects plus predicates; the label-carrying nodes.
    pub fn num_labeled(&self) -> usize {
        self.m + self.n
    }

    pub fn has_global(&self) -> bool {
        self.has_global
    }

    pub fn predicate_endpoints(&self) -> &[(usize, usize)] {
        &self.predicate_endpoints
    }

    pub fn object_pairs(&self) -> &[(usize, usize)] {
        &self.object_pairs
    }

    /// Predicates incident to object `i`, ascending.
    pub fn predicates_of(&self, i: usize) -> &[usize] {
        &self.object_predicates[i]
    }

    /// Objects paired with object `i` by an object-object potential, ascending.
    pub fn peers_of(&self, i: usize) -> &[usize] {
        &self.object_peers[i]
    }

    /// Position of a node in the global order.
    pub fn index_of(&self, node: NodeRef) -> Result<usize> {
        match node {
            NodeRef::Object(i) if i < self.m => Ok(i),
            NodeRef::Predicate(j) if j < self.n => Ok(self.m + j),
            NodeRef::Global if self.has_global => Ok(self.m + self.n),
            other => Err(Error::Lookup(format!("{other:?}"))),
        }
    }

    /// Neighbours of a node in ascending global order.
    pub fn neighbors(&self, node: NodeRef) -> Result<Vec<NodeRef>> {
        self.index_of(node)?;
        let global = self.has_global.then_some(NodeRef::Global);
        let out = match node {
            NodeRef::Object(i) => self.object_peers[i]
                .iter()
                .map(|&l| NodeRef::Object(l))
                .chain(
                    self.object_predicates[i]
                        .iter()
                        .map(|&j| NodeRef::Predicate(j)),
                )
                .chain(global)
                .collect(),
            NodeRef::Predicate(j) => {
                let (s, o) = self.predicate_endpoints[j];
                let mut ends = [s.min(o), s.max(o)].map(NodeRef::Object).to_vec();
                ends.extend(global);
                ends
            }
            NodeRef::Global => (0..self.m)
                .map(NodeRef::Object)
                .chain((0..self.n).map(NodeRef::Predicate))
                .collect(),
        };
        Ok(out)
    }
}

/// Parameters of the synthetic task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub d: usize,
    pub v_o: usize,
    pub v_p: usize,
    pub m_range: (usize, usize),
    pub n_range: (usize, usize),
    pub class_separation: f64,
    pub label_skew: f64,
    /// Probability that an unordered object pair receives an object-object potential.
    pub pair_density: f64,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            d: 16,
            v_o: 5,
            v_p: 4,
            m_range: (2, 4),
            n_range: (1, 3),
            class_separation: 3.0,
            label_skew: 0.0,
            pair_density: 0.25,
            seed: 7,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.d == 0 || self.v_o == 0 || self.v_p == 0 {
            return bad("d, v_o and v_p must be positive");
        }
        if self.m_range.0 == 0 || self.m_range.0 > self.m_range.1 {
            return bad("m_range must satisfy 1 <= min <= max");
        }
        if self.n_range.0 > self.n_range.1 {
            return bad("n_range must satisfy min <= max");
        }
        if self.n_range.0 > 0 && self.m_range.1 < 2 {
            return bad("predicates need at least two objects");
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad("class_separation must be finite and >= 0");
        }
        if !(self.label_skew.is_finite() && self.label_skew >= 0.0) {
            return bad("label_skew must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.pair_density) {
            return bad("pair_density must lie in [0, 1]");
        }
        Ok(())
    }

    /// Power-law label prior `p_k ∝ (k + 1)^(-label_skew)`.
    pub fn label_prior(&self, v: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..v)
            .map(|k| ((k + 1) as f64).powf(-self.label_skew))
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    fn class_mean(&self, offset: usize, k: usize) -> Vec<f64> {
        let slot = offset + k;
        let sign = if (slot / self.d).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let mut mu = vec![0.0; self.d];
        mu[slot % self.d] = sign * self.class_separation;
        mu
    }

    pub fn object_mean(&self, k: usize) -> Vec<f64> {
        self.class_mean(0, k)
    }

    pub fn predicate_mean(&self, k: usize) -> Vec<f64> {
        self.class_mean(self.v_o, k)
    }
}

/// One labeled task instance: topology, per-node features and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub graph: SceneGraph,
    pub object_features: Vec<Vec<f64>>,
    pub predicate_features: Vec<Vec<f64>>,
    pub global_feature: Vec<f64>,
    pub object_labels: Vec<usize>,
    pub predicate_labels: Vec<usize>,
}

impl SyntheticInstance {
    pub fn feature_dim(&self) -> usize {
        self.global_feature.len()
    }

    /// Labels in node order (objects then predicates).
    pub fn labels(&self) -> Vec<usize> {
        self.object_labels
            .iter()
            .chain(&self.predicate_labels)
            .copied()
            .collect()
    }

    pub fn validate(&self, v_o: usize, v_p: usize) -> Result<()> {
        let m = self.graph.num_objects();
        let n = self.graph.num_predicates();
        let d = self.feature_dim();
        if d == 0 {
            return Err(Error::Format("empty global feature".into()));
        }
        if self.object_features.len() != m || self.object_labels.len() != m {
            return Err(Error::Format(format!(
                "expected {m} object features and labels"
            )));
        }
        if self.predicate_features.len() != n || self.predicate_labels.len() != n {
            return Err(Error::Format(format!(
                "expected {n} predicate features and labels"
            )));
        }
        if self
            .object_features
            .iter()
            .chain(&self.predicate_features)
            .any(|f| f.len() != d)
        {
            return Err(Error::Format(format!(
                "feature dimension is not uniformly {d}"
            )));
        }
        if self.object_labels.iter().any(|&l| l >= v_o)
            || self.predicate_labels.iter().any(|&l| l >= v_p)
        {
            return Err(Error::Format("label outside vocabulary".into()));
        }
        Ok(())
    }
}

fn gaussian_around<R: Rng>(rng: &mut R, mean: &[f64]) -> Vec<f64> {
    mean.iter()
        .map(|&mu| mu + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Generates `count` instances; a pure function of `(cfg, count)`.
pub fn synth_dataset(cfg: &TaskConfig, count: usize) -> Result<Vec<SyntheticInstance>> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let mut rng = rng::stream(cfg.seed, &[0x5EED]);
    let obj_prior =
        WeightedIndex::new(cfg.label_prior(cfg.v_o)).map_err(|e| Error::Config(e.to_string()))?;
    let pred_prior =
        WeightedIndex::new(cfg.label_prior(cfg.v_p)).map_err(|e| Error::Config(e.to_string()))?;

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let m = rng.gen_range(cfg.m_range.0..=cfg.m_range.1);
        let mut ordered: Vec<(usize, usize)> = (0..m)
            .flat_map(|s| (0..m).filter(move |&o| o != s).map(move |o| (s, o)))
            .collect();
        let n = rng
            .gen_range(cfg.n_range.0..=cfg.n_range.1)
            .min(ordered.len());
        ordered.shuffle(&mut rng);
        ordered.truncate(n);
        let mut pairs = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                if rng.gen_bool(cfg.pair_density) {
                    pairs.push((a, b));
                }
            }
        }
        let graph = build_graph(m, n, &ordered, &pairs)?;

        let object_labels: Vec<usize> = (0..m).map(|_| obj_prior.sample(&mut rng)).collect();
        let predicate_labels: Vec<usize> = (0..n).map(|_| pred_prior.sample(&mut rng)).collect();
        let object_features: Vec<Vec<f64>> = object_labels
            .iter()
            .map(|&k| gaussian_around(&mut rng, &cfg.object_mean(k)))
            .collect();
        let predicate_features: Vec<Vec<f64>> = predicate_labels
            .iter()
            .zip(&ordered)
            .map(|(&k, &(s, o))| {
                let mut f = gaussian_around(&mut rng, &cfg.predicate_mean(k));
                for (x, (a, b)) in f
                    .iter_mut()
                    .zip(object_features[s].iter().zip(&object_features[o]))
                {
                    *x += 0.5 * (a + b);
                }
                f
            })
            .collect();
        let mut global_feature = vec![0.0; cfg.d];
        let all = object_features.iter().chain(&predicate_features);
        for f in all {
            for (g, x) in global_feature.iter_mut().zip(f) {
                *g += x;
            }
        }
        let nodes = (m + n) as f64;
        global_feature.iter_mut().for_each(|g| *g /= nodes);

        out.push(SyntheticInstance {
            graph,
            object_features,
            predicate_features,
            global_feature,
            object_labels,
            predicate_labels,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    config: TaskConfig,
    count: usize,
}

/// Writes a dataset as JSON lines: one header record with the task
/// configuration, then one record per instance.
pub fn write_dataset<W: Write>(
    mut w: W,
    cfg: &TaskConfig,
    instances: &[SyntheticInstance],
) -> Result<()> {
    let header = DatasetHeader {
        config: cfg.clone(),
        count: instances.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(fmt_err)?)?;
    for inst in instances {
        writeln!(w, "{}", serde_json::to_string(inst).map_err(fmt_err)?)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(TaskConfig, Vec<SyntheticInstance>)> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line).map_err(fmt_err)?;
    header.config.validate()?;
    let mut instances = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: SyntheticInstance = serde_json::from_str(&line).map_err(fmt_err)?;
        inst.validate(header.config.v_o, header.config.v_p)?;
        if inst.feature_dim() != header.config.d {
            return Err(Error::Format(
                "feature dimension differs from header".into(),
            ));
        }
        instances.push(inst);
    }
    if instances.len() != header.count {
        return Err(Error::Format(format!(
            "header announces {} instances, found {}",
            header.count,
            instances.len()
        )));
    }
    Ok((header.config, instances))
}

fn fmt_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}
