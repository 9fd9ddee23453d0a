//! Brute-force enumeration ground truth on small graphs.

use crate::error::Result;
use crate::graph::SceneGraph;
use crate::math::{logsumexp, OnlineLogSumExp};
use crate::scores::{check_guard, joint_unchecked, Assignment, PotentialTables};

/// Exact quantities of the joint model, every per-node vector laid out in
/// node order: objects, predicates, then the global node.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSummary {
    pub log_partition: f64,
    pub marginals: Vec<Vec<f64>>,
    pub marginal_scores: Vec<Vec<f64>>,
}

/// Log partition of a single factorised node: `logsumexp(ψ)`.
pub fn exact_log_partition_node(psi: &[f64]) -> f64 {
    logsumexp(psi)
}

// Row-major odometer over all labelings, node 0 slowest.
fn for_each_labeling(cards: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; cards.len()];
    if cards.contains(&0) {
        return;
    }
    loop {
        f(&idx);
        let mut d = cards.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

pub fn exact_joint(tables: &PotentialTables, g: &SceneGraph) -> Result<ExactSummary> {
    tables.validate(g)?;
    let cards = tables.cardinalities(g);
    check_guard(&cards)?;
    let mut total = OnlineLogSumExp::default();
    let mut groups: Vec<Vec<OnlineLogSumExp>> = cards
        .iter()
        .map(|&c| vec![OnlineLogSumExp::default(); c])
        .collect();
    for_each_labeling(&cards, |labels| {
        let score = joint_unchecked(tables, g, &Assignment::from_flat(g, labels));
        total.push(score);
        for (node, &k) in labels.iter().enumerate() {
            groups[node][k].push(score);
        }
    });
    let log_partition = total.value();
    let marginal_scores: Vec<Vec<f64>> = groups
        .into_iter()
        .map(|row| row.into_iter().map(|acc| acc.value()).collect())
        .collect();
    let marginals = marginal_scores
        .iter()
        .map(|row| row.iter().map(|s| (s - log_partition).exp()).collect())
        .collect();
    Ok(ExactSummary {
        log_partition,
        marginals,
        marginal_scores,
    })
}

/// Highest-scoring labeling; the first one met in row-major order wins ties.
pub fn exact_map(tables: &PotentialTables, g: &SceneGraph) -> Result<Assignment> {
    tables.validate(g)?;
    let cards = tables.cardinalities(g);
    check_guard(&cards)?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0; cards.len()];
    for_each_labeling(&cards, |labels| {
        let score = joint_unchecked(tables, g, &Assignment::from_flat(g, labels));
        if score > best {
            best = score;
            arg.copy_from_slice(labels);
        }
    });
    Ok(Assignment::from_flat(g, &arg))
}
