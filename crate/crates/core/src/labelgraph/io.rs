//! Text formats for label graphs and label embeddings.
//!
//! Embedding: header `r k`, then `k` lines of `r` floats (line `i` is label
//! `i`). Graph: header `k m`, then `m` lines `i j weight` with `i < j`.
//! Floats use the shortest representation that parses back to the same bits.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use super::graph::LabelGraph;
use super::skipgram::LabelEmbedding;
use crate::fsutil::{open_buffered, write_atomic};
use crate::numeric::Matrix;
use crate::{Error, Result};

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_header(line: Option<std::io::Result<String>>, what: &str) -> Result<(usize, usize)> {
    let line = line
        .ok_or_else(|| format_err(format!("{what}: missing header")))?
        .map_err(|e| format_err(format!("{what}: {e}")))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.as_slice() {
        [a, b] => {
            let a = a
                .parse()
                .map_err(|_| format_err(format!("{what}: bad header {line:?}")))?;
            let b = b
                .parse()
                .map_err(|_| format_err(format!("{what}: bad header {line:?}")))?;
            Ok((a, b))
        }
        _ => Err(format_err(format!("{what}: bad header {line:?}"))),
    }
}

pub fn write_embedding(embedding: &LabelEmbedding) -> String {
    let m = &embedding.matrix;
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for label in 0..m.cols() {
        let line: Vec<String> = (0..m.rows())
            .map(|r| format!("{}", m[(r, label)]))
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn read_embedding<R: BufRead>(reader: R) -> Result<LabelEmbedding> {
    let mut lines = reader.lines();
    let (r, k) = parse_header(lines.next(), "embedding")?;
    if r == 0 {
        return Err(format_err("embedding: dimension must be positive"));
    }
    let mut matrix = Matrix::zeros(r, k);
    for label in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| {
                format_err(format!("embedding: expected {k} label rows, found {label}"))
            })?
            .map_err(|e| format_err(format!("embedding: {e}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(format!("embedding row {label}: {e}")))?;
        if values.len() != r {
            return Err(format_err(format!(
                "embedding row {label}: header declares {r} values, found {}",
                values.len()
            )));
        }
        for (i, v) in values.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(format_err(format!(
                    "embedding row {label}: non-finite value"
                )));
            }
            matrix[(i, label)] = v;
        }
    }
    for rest in lines {
        let rest = rest.map_err(|e| format_err(format!("embedding: {e}")))?;
        if !rest.trim().is_empty() {
            return Err(format_err(format!("embedding: more than {k} label rows")));
        }
    }
    Ok(LabelEmbedding { matrix })
}

pub fn save_embedding(path: &Path, embedding: &LabelEmbedding) -> Result<()> {
    write_atomic(path, write_embedding(embedding).as_bytes())
}

pub fn load_embedding(path: &Path) -> Result<LabelEmbedding> {
    read_embedding(open_buffered(path)?)
}

pub fn save_graph(path: &Path, graph: &LabelGraph) -> Result<()> {
    let edges = graph.edges();
    let mut out = format!("{} {}\n", graph.num_nodes(), edges.len());
    for (i, j, w) in edges {
        let _ = writeln!(out, "{i} {j} {w}");
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_graph(path: &Path) -> Result<LabelGraph> {
    let mut lines = open_buffered(path)?.lines();
    let (k, m) = parse_header(lines.next(), "graph")?;
    let mut edges = Vec::with_capacity(m);
    for e in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| format_err(format!("graph: expected {m} edges, found {e}")))?
            .map_err(|err| format_err(format!("graph: {err}")))?;
        let fields: Vec<u64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|err| format_err(format!("graph edge {e}: {err}")))?;
        let [i, j, w] = fields[..] else {
            return Err(format_err(format!("graph edge {e}: expected `i j weight`")));
        };
        edges.push((i as usize, j as usize, w));
    }
    LabelGraph::from_edges(k, &edges).map_err(|e| format_err(format!("graph: {e}")))
}
