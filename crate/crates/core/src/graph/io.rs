use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DirectedGraph, NodeId};
use crate::{Error, Result};

/// Load a `src<TAB>dst<TAB>prob` edge list. Labels are assigned dense ids in
/// order of first appearance.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<DirectedGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_edge_list(reader: impl BufRead) -> Result<DirectedGraph> {
    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |label: &str| -> NodeId {
        if let Some(&id) = ids.get(label) {
            return id;
        }
        let id = labels.len() as NodeId;
        labels.push(label.to_string());
        ids.insert(label.to_string(), id);
        id
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [src, dst, prob] = fields[..] else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        let p: f64 = prob.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("bad probability {prob:?}"),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        if src == dst {
            return Err(Error::SelfLoop(src.to_string()));
        }
        edges.push((intern(src), intern(dst), p));
    }
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    DirectedGraph::from_labeled_edges(labels, &edges)
}

pub fn write_edge_list(graph: &DirectedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for (u, v, p) in graph.edges() {
        writeln!(out, "{}\t{}\t{}", graph.label(u), graph.label(v), p).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Sidecar mapping from external label to dense id, `label<TAB>id` per line.
pub fn write_node_map(graph: &DirectedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for (id, label) in graph.labels().iter().enumerate() {
        writeln!(out, "{label}\t{id}").map_err(io)?;
    }
    out.flush().map_err(io)
}
