//! Log marginal score vectors.
//!
//! In model mode every node's score vector is a negated sum of MLP outputs:
//!
//! ```text
//! ψ_i = −[ h_o(y_i) + Σ_j g_op(y_i ⊕ y_j) + Σ_l g_oo(y_i ⊕ y_l) + g_og(y_i ⊕ y_g) ]   objects
//! ψ_j = −[ h_p(y_j) + Σ_i g_po(y_i ⊕ y_j) + g_pg(y_j ⊕ y_g) ]                          predicates
//! ```
//!
//! Pair inputs are ordered concatenations with the object first. In explicit
//! mode the scores come from potential tables marginalised exactly by
//! variable elimination; [`crate::oracle`] checks them by enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::{NodeRef, SceneGraph, SyntheticInstance};
use crate::math::{KahanVec, OnlineLogSumExp};
use crate::nn::{ThetaGrads, ThetaParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalScoreTable {
    pub objects: Vec<Vec<f64>>,
    pub predicates: Vec<Vec<f64>>,
}

impl MarginalScoreTable {
    /// Score vectors in node order (objects then predicates).
    pub fn nodes(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.objects.iter().chain(&self.predicates)
    }

    pub fn len(&self) -> usize {
        self.objects.len() + self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn negate(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| -x).collect()
}

pub fn object_marginal_score(
    theta: &ThetaParams,
    inst: &SyntheticInstance,
    i: usize,
) -> Result<Vec<f64>> {
    let g = &inst.graph;
    if i >= g.num_objects() {
        return Err(Error::Lookup(format!("object {i}")));
    }
    let y = &inst.object_features[i];
    let mut acc = KahanVec::zeros(theta.h_o.output_dim());
    acc.add(&theta.h_o.forward(y)?);
    for &j in g.predicates_of(i) {
        acc.add(
            &theta
                .g_op
                .forward(&concat(y, &inst.predicate_features[j]))?,
        );
    }
    for &l in g.peers_of(i) {
        acc.add(&theta.g_oo.forward(&concat(y, &inst.object_features[l]))?);
    }
    acc.add(&theta.g_og.forward(&concat(y, &inst.global_feature))?);
    Ok(negate(acc.into_vec()))
}

pub fn predicate_marginal_score(
    theta: &ThetaParams,
    inst: &SyntheticInstance,
    j: usize,
) -> Result<Vec<f64>> {
    let g = &inst.graph;
    if j >= g.num_predicates() {
        return Err(Error::Lookup(format!("predicate {j}")));
    }
    let y = &inst.predicate_features[j];
    let (s, o) = g.predicate_endpoints()[j];
    let mut acc = KahanVec::zeros(theta.h_p.output_dim());
    acc.add(&theta.h_p.forward(y)?);
    for i in [s, o] {
        acc.add(&theta.g_po.forward(&concat(&inst.object_features[i], y))?);
    }
    acc.add(&theta.g_pg.forward(&concat(y, &inst.global_feature))?);
    Ok(negate(acc.into_vec()))
}

pub fn marginal_scores(
    theta: &ThetaParams,
    inst: &SyntheticInstance,
) -> Result<MarginalScoreTable> {
    let g = &inst.graph;
    Ok(MarginalScoreTable {
        objects: (0..g.num_objects())
            .map(|i| object_marginal_score(theta, inst, i))
            .collect::<Result<_>>()?,
        predicates: (0..g.num_predicates())
            .map(|j| predicate_marginal_score(theta, inst, j))
            .collect::<Result<_>>()?,
    })
}

/// Accumulates `Σ_nodes ⟨d_ψ, ψ⟩`'s gradient into `grads`, given upstream
/// gradients with respect to every score vector.
pub fn backprop_marginal_scores(
    theta: &ThetaParams,
    inst: &SyntheticInstance,
    d_objects: &[Vec<f64>],
    d_predicates: &[Vec<f64>],
    grads: &mut ThetaGrads,
) -> Result<()> {
    let g = &inst.graph;
    check_len("object score gradients", g.num_objects(), d_objects.len())?;
    check_len(
        "predicate score gradients",
        g.num_predicates(),
        d_predicates.len(),
    )?;
    for (i, d) in d_objects.iter().enumerate() {
        // ψ is the negated sum
        let up: Vec<f64> = d.iter().map(|x| -x).collect();
        let y = &inst.object_features[i];
        theta.h_o.backward_into(y, &up, &mut grads.h_o)?;
        for &j in g.predicates_of(i) {
            theta.g_op.backward_into(
                &concat(y, &inst.predicate_features[j]),
                &up,
                &mut grads.g_op,
            )?;
        }
        for &l in g.peers_of(i) {
            theta
                .g_oo
                .backward_into(&concat(y, &inst.object_features[l]), &up, &mut grads.g_oo)?;
        }
        theta
            .g_og
            .backward_into(&concat(y, &inst.global_feature), &up, &mut grads.g_og)?;
    }
    for (j, d) in d_predicates.iter().enumerate() {
        let up: Vec<f64> = d.iter().map(|x| -x).collect();
        let y = &inst.predicate_features[j];
        let (s, o) = g.predicate_endpoints()[j];
        theta.h_p.backward_into(y, &up, &mut grads.h_p)?;
        for i in [s, o] {
            theta
                .g_po
                .backward_into(&concat(&inst.object_features[i], y), &up, &mut grads.g_po)?;
        }
        theta
            .g_pg
            .backward_into(&concat(y, &inst.global_feature), &up, &mut grads.g_pg)?;
    }
    Ok(())
}

/// A dense row-major table of potentials indexed by a pair of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Explicit unary and pairwise potentials for one scene graph.
///
/// The global node carries a label of vocabulary `v_g` in this mode (with
/// `v_g = 1` it is a constant). `subject_predicate[j]` and `object_predicate[j]`
/// are `v_o × v_p`; `object_object[k]` is `v_o × v_o` with rows indexed by the
/// first member of `object_pairs()[k]`; `object_global` is `v_o × v_g` and
/// `predicate_global` is `v_p × v_g`. Every table is counted once in the joint score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTables {
    pub v_o: usize,
    pub v_p: usize,
    pub v_g: usize,
    pub object_unary: Vec<Vec<f64>>,
    pub predicate_unary: Vec<Vec<f64>>,
    pub subject_predicate: Vec<Table>,
    pub object_predicate: Vec<Table>,
    pub object_object: Vec<Table>,
    pub object_global: Vec<Table>,
    pub predicate_global: Vec<Table>,
}

impl PotentialTables {
    pub fn zeros(g: &SceneGraph, v_o: usize, v_p: usize, v_g: usize) -> Self {
        let (m, n) = (g.num_objects(), g.num_predicates());
        Self {
            v_o,
            v_p,
            v_g,
            object_unary: vec![vec![0.0; v_o]; m],
            predicate_unary: vec![vec![0.0; v_p]; n],
            subject_predicate: vec![Table::zeros(v_o, v_p); n],
            object_predicate: vec![Table::zeros(v_o, v_p); n],
            object_object: vec![Table::zeros(v_o, v_o); g.object_pairs().len()],
            object_global: vec![Table::zeros(v_o, v_g); m],
            predicate_global: vec![Table::zeros(v_p, v_g); n],
        }
    }

    /// Tables with every entry drawn uniformly from `[-scale, scale]`.
    pub fn random<R: rand::Rng>(
        g: &SceneGraph,
        v_o: usize,
        v_p: usize,
        v_g: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut t = Self::zeros(g, v_o, v_p, v_g);
        let mut fill = |x: &mut f64| *x = rng.gen_range(-scale..=scale);
        t.object_unary
            .iter_mut()
            .chain(t.predicate_unary.iter_mut())
            .flatten()
            .for_each(&mut fill);
        t.subject_predicate
            .iter_mut()
            .chain(t.object_predicate.iter_mut())
            .chain(t.object_object.iter_mut())
            .chain(t.object_global.iter_mut())
            .chain(t.predicate_global.iter_mut())
            .flat_map(|tb| tb.data.iter_mut())
            .for_each(&mut fill);
        t
    }

    pub fn validate(&self, g: &SceneGraph) -> Result<()> {
        let (m, n) = (g.num_objects(), g.num_predicates());
        check_len("object unary tables", m, self.object_unary.len())?;
        check_len("predicate unary tables", n, self.predicate_unary.len())?;
        check_len("subject-predicate tables", n, self.subject_predicate.len())?;
        check_len("object-predicate tables", n, self.object_predicate.len())?;
        check_len(
            "object-object tables",
            g.object_pairs().len(),
            self.object_object.len(),
        )?;
        check_len("object-global tables", m, self.object_global.len())?;
        check_len("predicate-global tables", n, self.predicate_global.len())?;
        for u in &self.object_unary {
            check_len("object unary width", self.v_o, u.len())?;
        }
        for u in &self.predicate_unary {
            check_len("predicate unary width", self.v_p, u.len())?;
        }
        let shape = |t: &Table, r: usize, c: usize| -> Result<()> {
            check_len("table rows", r, t.rows)?;
            check_len("table cols", c, t.cols)?;
            check_len("table payload", r * c, t.data.len())
        };
        for t in self.subject_predicate.iter().chain(&self.object_predicate) {
            shape(t, self.v_o, self.v_p)?;
        }
        for t in &self.object_object {
            shape(t, self.v_o, self.v_o)?;
        }
        for t in &self.object_global {
            shape(t, self.v_o, self.v_g)?;
        }
        for t in &self.predicate_global {
            shape(t, self.v_p, self.v_g)?;
        }
        let finite = self
            .object_unary
            .iter()
            .chain(&self.predicate_unary)
            .flatten()
            .chain(
                self.subject_predicate
                    .iter()
                    .chain(&self.object_predicate)
                    .chain(&self.object_object)
                    .chain(&self.object_global)
                    .chain(&self.predicate_global)
                    .flat_map(|t| &t.data),
            )
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite potential".into()));
        }
        Ok(())
    }

    /// Per-variable vocabulary sizes in node order, global last.
    pub fn cardinalities(&self, g: &SceneGraph) -> Vec<usize> {
        std::iter::repeat_n(self.v_o, g.num_objects())
            .chain(std::iter::repeat_n(self.v_p, g.num_predicates()))
            .chain([self.v_g])
            .collect()
    }
}

/// A full labeling of every node, global included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub objects: Vec<usize>,
    pub predicates: Vec<usize>,
    pub global: usize,
}

impl Assignment {
    /// Splits a node-ordered label vector (objects, predicates, global).
    pub fn from_flat(g: &SceneGraph, flat: &[usize]) -> Self {
        let m = g.num_objects();
        let n = g.num_predicates();
        Self {
            objects: flat[..m].to_vec(),
            predicates: flat[m..m + n].to_vec(),
            global: flat.get(m + n).copied().unwrap_or(0),
        }
    }
}

/// `log s(x, z) = −Σ ψ_r` over every unary and pairwise potential selected by `a`.
pub fn joint_log_score(tables: &PotentialTables, g: &SceneGraph, a: &Assignment) -> Result<f64> {
    tables.validate(g)?;
    check_len("object labels", g.num_objects(), a.objects.len())?;
    check_len("predicate labels", g.num_predicates(), a.predicates.len())?;
    if a.objects.iter().any(|&l| l >= tables.v_o)
        || a.predicates.iter().any(|&l| l >= tables.v_p)
        || a.global >= tables.v_g
    {
        return Err(Error::Domain("label outside vocabulary".into()));
    }
    Ok(joint_unchecked(tables, g, a))
}

pub(crate) fn joint_unchecked(t: &PotentialTables, g: &SceneGraph, a: &Assignment) -> f64 {
    let mut total = 0.0;
    for (i, &k) in a.objects.iter().enumerate() {
        total += t.object_unary[i][k] + t.object_global[i].get(k, a.global);
    }
    for (j, &k) in a.predicates.iter().enumerate() {
        let (s, o) = g.predicate_endpoints()[j];
        total += t.predicate_unary[j][k]
            + t.predicate_global[j].get(k, a.global)
            + t.subject_predicate[j].get(a.objects[s], k)
            + t.object_predicate[j].get(a.objects[o], k);
    }
    for (p, &(x, y)) in g.object_pairs().iter().enumerate() {
        total += t.object_object[p].get(a.objects[x], a.objects[y]);
    }
    -total
}

/// Configurations allowed before enumeration or elimination is refused.
pub const ENUMERATION_GUARD: u128 = 10_000_000;

pub(crate) fn check_guard(cards: &[usize]) -> Result<()> {
    let configs = cards
        .iter()
        .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
    if configs > ENUMERATION_GUARD {
        Err(Error::Capacity {
            configs,
            limit: ENUMERATION_GUARD,
        })
    } else {
        Ok(())
    }
}

// Log-domain factor over sorted variables, row-major with the last variable fastest.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn unary(var: usize, values: Vec<f64>) -> Self {
        Self {
            vars: vec![var],
            cards: vec![values.len()],
            values,
        }
    }

    // f(x_a, x_b) = table[x_a][x_b] for a != b
    fn pairwise(a: usize, b: usize, table: &Table, sign: f64) -> Self {
        if a < b {
            Self {
                vars: vec![a, b],
                cards: vec![table.rows, table.cols],
                values: table.data.iter().map(|v| sign * v).collect(),
            }
        } else {
            let mut values = Vec::with_capacity(table.data.len());
            for c in 0..table.cols {
                for r in 0..table.rows {
                    values.push(sign * table.get(r, c));
                }
            }
            Self {
                vars: vec![b, a],
                cards: vec![table.cols, table.rows],
                values,
            }
        }
    }

    fn size(&self) -> usize {
        self.cards.iter().product()
    }

    fn product(factors: &[Factor]) -> Factor {
        let mut vars: Vec<usize> = factors
            .iter()
            .flat_map(|f| f.vars.iter().copied())
            .collect();
        vars.sort_unstable();
        vars.dedup();
        let cards: Vec<usize> = vars
            .iter()
            .map(|v| {
                factors
                    .iter()
                    .find_map(|f| f.vars.iter().position(|x| x == v).map(|p| f.cards[p]))
                    .unwrap_or(1)
            })
            .collect();
        let size: usize = cards.iter().product();
        // position of each factor variable inside the union scope
        let maps: Vec<Vec<usize>> = factors
            .iter()
            .map(|f| {
                f.vars
                    .iter()
                    .map(|v| vars.iter().position(|x| x == v).unwrap_or(0))
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; size];
        let mut idx = vec![0usize; vars.len()];
        for slot in values.iter_mut() {
            let mut total = 0.0;
            for (f, map) in factors.iter().zip(&maps) {
                let mut off = 0;
                for (p, &u) in map.iter().enumerate() {
                    off = off * f.cards[p] + idx[u];
                }
                total += f.values[off];
            }
            *slot = total;
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < cards[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let p = self.vars.iter().position(|&v| v == var).unwrap_or(0);
        let inner: usize = self.cards[p + 1..].iter().product();
        let outer: usize = self.cards[..p].iter().product();
        let c = self.cards[p];
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = OnlineLogSumExp::default();
                for k in 0..c {
                    acc.push(self.values[(o * c + k) * inner + i]);
                }
                values.push(acc.value());
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(p);
        cards.remove(p);
        Factor {
            vars,
            cards,
            values,
        }
    }
}

fn build_factors(t: &PotentialTables, g: &SceneGraph) -> Vec<Factor> {
    let m = g.num_objects();
    let n = g.num_predicates();
    let gv = m + n;
    let mut fs = Vec::new();
    for (i, u) in t.object_unary.iter().enumerate() {
        fs.push(Factor::unary(i, u.iter().map(|x| -x).collect()));
        fs.push(Factor::pairwise(i, gv, &t.object_global[i], -1.0));
    }
    for (j, u) in t.predicate_unary.iter().enumerate() {
        let (s, o) = g.predicate_endpoints()[j];
        fs.push(Factor::unary(m + j, u.iter().map(|x| -x).collect()));
        fs.push(Factor::pairwise(m + j, gv, &t.predicate_global[j], -1.0));
        fs.push(Factor::pairwise(s, m + j, &t.subject_predicate[j], -1.0));
        fs.push(Factor::pairwise(o, m + j, &t.object_predicate[j], -1.0));
    }
    for (p, &(x, y)) in g.object_pairs().iter().enumerate() {
        fs.push(Factor::pairwise(x, y, &t.object_object[p], -1.0));
    }
    fs.push(Factor::unary(gv, vec![0.0; t.v_g]));
    fs
}

/// Exact log marginal score of one node by variable elimination: entry `k`
/// is `log Σ exp(joint_log_score)` over all labelings with the node fixed to `k`.
pub fn marginal_score_explicit(
    tables: &PotentialTables,
    g: &SceneGraph,
    node: NodeRef,
) -> Result<Vec<f64>> {
    tables.validate(g)?;
    let query = g.index_of(node)?;
    let cards = tables.cardinalities(g);
    check_guard(&cards)?;
    let mut factors = build_factors(tables, g);
    let mut remaining: Vec<usize> = (0..cards.len()).filter(|&v| v != query).collect();
    while !remaining.is_empty() {
        // greedy: eliminate the variable whose combined factor is smallest
        let (pos, var) = remaining
            .iter()
            .enumerate()
            .map(|(p, &v)| {
                let mut scope: Vec<usize> = factors
                    .iter()
                    .filter(|f| f.vars.contains(&v))
                    .flat_map(|f| f.vars.iter().copied())
                    .collect();
                scope.sort_unstable();
                scope.dedup();
                let size: usize = scope.iter().map(|&u| cards[u]).product();
                (size, p, v)
            })
            .min()
            .map(|(_, p, v)| (p, v))
            .unwrap_or((0, remaining[0]));
        remaining.remove(pos);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        if !touching.is_empty() {
            factors.push(Factor::product(&touching).sum_out(var));
        }
    }
    let result = Factor::product(&factors);
    debug_assert!(result.vars == vec![query] && result.size() == cards[query]);
    Ok(result.values)
}
