use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::LabelGraph;
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    /// Return parameter: weight `1/p` for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter: weight `1/q` for moving two hops away.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 1.0,
            q: 1.0,
            walk_length: 40,
            walks_per_node: 10,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) || !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Validation(format!(
                "walk p and q must be positive and finite (p={}, q={})",
                self.p, self.q
            )));
        }
        if self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(Error::Validation(
                "walk_length and walks_per_node must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Samples the next node of a walk currently at `cur`.
///
/// Without a previous node the step is proportional to edge weight. With one,
/// each neighbour `x` is weighted by `w(cur, x)` times `1/p` if `x` is the
/// previous node, `1` if `x` neighbours the previous node and `1/q` otherwise.
/// Returns `None` for an isolated node.
pub fn next_node<R: Rng + ?Sized>(
    graph: &LabelGraph,
    prev: Option<usize>,
    cur: usize,
    p: f64,
    q: f64,
    rng: &mut R,
) -> Option<usize> {
    let neighbors = graph.neighbors(cur);
    if neighbors.is_empty() {
        return None;
    }
    let bias = |x: usize| match prev {
        None => 1.0,
        Some(t) if x == t => 1.0 / p,
        Some(t) if graph.has_edge(t, x) => 1.0,
        Some(_) => 1.0 / q,
    };
    let weights: Vec<f64> = neighbors.iter().map(|&(x, w)| w as f64 * bias(x)).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (&(x, _), &w) in neighbors.iter().zip(&weights) {
        if target < w {
            return Some(x);
        }
        target -= w;
    }
    neighbors.last().map(|&(x, _)| x)
}

fn walk_from(graph: &LabelGraph, start: usize, round: usize, config: &WalkConfig) -> Vec<usize> {
    let mut rng = rng_for(config.seed, &[start as u64, round as u64]);
    let mut walk = Vec::with_capacity(config.walk_length);
    walk.push(start);
    while walk.len() < config.walk_length {
        let cur = walk[walk.len() - 1];
        let prev = walk.len().checked_sub(2).map(|i| walk[i]);
        match next_node(graph, prev, cur, config.p, config.q, &mut rng) {
            Some(n) => walk.push(n),
            None => break,
        }
    }
    walk
}

/// `walks_per_node` walks from every node, ordered by round then start node.
///
/// Each walk draws from its own stream seeded by `(seed, start, round)`, so
/// the output does not depend on scheduling.
pub fn sample_walks(graph: &LabelGraph, config: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    if graph.num_nodes() == 0 {
        return Err(Error::Validation("cannot walk an empty graph".into()));
    }
    let k = graph.num_nodes();
    Ok((0..config.walks_per_node * k)
        .into_par_iter()
        .map(|i| walk_from(graph, i % k, i / k, config))
        .collect())
}
