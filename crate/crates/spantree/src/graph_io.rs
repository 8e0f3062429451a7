//! Graph ingestion: UTF-8 tab-separated edge lists with a
//! `src<TAB>dst<TAB>weight` header, 0-based node ids, one directed edge per
//! line. Duplicate edges accumulate.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::graph::{validate_graph, GraphError, WeightedDigraph};
use crate::storage::WeightMatrix;

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("could not read graph file")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 3 tab-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: could not parse {field} `{value}`")]
    Parse { line: usize, field: &'static str, value: String },
    #[error("line {line}: header must be `src\\tdst\\tweight`")]
    BadHeader { line: usize },
    #[error("graph file contains no edges")]
    Empty,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parses an edge-list TSV into a validated graph. With `symmetrize`, every
/// edge also contributes its reverse, so a single-direction listing of an
/// undirected graph round-trips to a symmetric matrix.
pub fn read_graph_tsv<R: BufRead>(
    reader: R,
    symmetrize: bool,
) -> Result<WeightedDigraph, GraphIoError> {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_node = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            if fields != ["src", "dst", "weight"] {
                return Err(GraphIoError::BadHeader { line: lineno });
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(GraphIoError::FieldCount { line: lineno, got: fields.len() });
        }
        let parse_node = |field: &'static str, raw: &str| {
            raw.trim().parse::<usize>().map_err(|_| GraphIoError::Parse {
                line: lineno,
                field,
                value: raw.trim().to_string(),
            })
        };
        let src = parse_node("src", fields[0])?;
        let dst = parse_node("dst", fields[1])?;
        let weight = fields[2].trim().parse::<f64>().map_err(|_| GraphIoError::Parse {
            line: lineno,
            field: "weight",
            value: fields[2].trim().to_string(),
        })?;
        max_node = max_node.max(src).max(dst);
        edges.push((src, dst, weight));
        if symmetrize && src != dst {
            edges.push((dst, src, weight));
        }
    }
    if edges.is_empty() {
        return Err(GraphIoError::Empty);
    }
    let n = max_node + 1;
    // from_triples sums duplicates, which also merges the symmetrized pair
    // of an edge listed in both directions.
    let w = WeightMatrix::from_triples(n, &edges);
    Ok(validate_graph(w)?)
}

pub fn load_graph(path: &Path, symmetrize: bool) -> Result<WeightedDigraph, GraphIoError> {
    let file = std::fs::File::open(path)?;
    read_graph_tsv(std::io::BufReader::new(file), symmetrize)
}
