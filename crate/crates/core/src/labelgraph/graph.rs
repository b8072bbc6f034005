use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::Corpus;
use crate::{Error, Result};

/// Undirected weighted graph over `k` labels, stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGraph {
    k: usize,
    adjacency: Vec<Vec<(usize, u64)>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub isolated: usize,
}

impl LabelGraph {
    /// Builds a graph from undirected `(i, j, weight)` edges.
    ///
    /// Duplicate edges accumulate their weights; self-loops and zero weights
    /// are rejected.
    pub fn from_edges(k: usize, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for &(i, j, w) in edges {
            if i >= k || j >= k {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) outside label space of {k}"
                )));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop on label {i}")));
            }
            if w == 0 {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) has zero weight"
                )));
            }
            *acc.entry((i.min(j), i.max(j))).or_default() += w;
        }
        let mut adjacency = vec![Vec::new(); k];
        for ((i, j), w) in acc {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(LabelGraph { k, adjacency })
    }

    pub fn num_nodes(&self) -> usize {
        self.k
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, u64)] {
        &self.adjacency[node]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<u64> {
        let list = &self.adjacency[i];
        list.binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|p| list[p].1)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j).is_some()
    }

    /// Each undirected edge once, with `i < j`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            nodes: self.k,
            edges: self.num_edges(),
            isolated: self.adjacency.iter().filter(|l| l.is_empty()).count(),
        }
    }
}

/// Connects every pair of labels that co-occur in a document; the edge
/// weight counts the documents they share.
pub fn build_cooccurrence_graph(corpus: &Corpus, k: usize) -> Result<LabelGraph> {
    let mut edges = Vec::new();
    for doc in &corpus.documents {
        if let Some(&bad) = doc.labels.iter().find(|&&l| l >= k) {
            return Err(Error::Validation(format!(
                "document {:?} has label {bad} outside label space of {k}",
                doc.doc_id
            )));
        }
        let labels: Vec<usize> = doc.labels.iter().copied().collect();
        for (a, &i) in labels.iter().enumerate() {
            for &j in &labels[a + 1..] {
                edges.push((i, j, 1));
            }
        }
    }
    LabelGraph::from_edges(k, &edges)
}
