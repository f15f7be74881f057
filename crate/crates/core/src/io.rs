//! Network and matrix file formats.
//!
//! Edge-list text: one edge `x y c` per line, `#` starts a comment, and an
//! optional `base <id>` line names the base point. JSON:
//! `{"base": id, "edges": [[x, y, c], ...]}`. Vertex ids in files are labels;
//! they are remapped to dense ids in increasing label order. Conductances are
//! written with the shortest round-tripping decimal form, so save → load is
//! bit-exact.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    EdgeList,
    Json,
}

impl NetworkFormat {
    /// `.json` files are JSON, everything else is an edge list.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => NetworkFormat::Json,
            _ => NetworkFormat::EdgeList,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<i64>,
    edges: Vec<(i64, i64, f64)>,
}

/// Reads a network; an edge-list file whose content starts with `{` is read
/// as JSON instead.
pub fn load_network(path: &Path, format: NetworkFormat) -> Result<Network> {
    let text = fs::read_to_string(path)?;
    let format = match format {
        NetworkFormat::EdgeList if text.trim_start().starts_with('{') => NetworkFormat::Json,
        f => f,
    };
    parse_network(&text, format)
}

pub fn save_network(net: &Network, path: &Path, format: NetworkFormat) -> Result<()> {
    fs::write(path, format_network(net, format))?;
    Ok(())
}

pub fn parse_network(text: &str, format: NetworkFormat) -> Result<Network> {
    let (base, edges) = match format {
        NetworkFormat::EdgeList => parse_edge_list(text)?,
        NetworkFormat::Json => {
            let doc: NetworkJson = serde_json::from_str(text)
                .map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
            (doc.base, doc.edges)
        }
    };
    build(base, edges)
}

pub fn format_network(net: &Network, format: NetworkFormat) -> String {
    let edges: Vec<(i64, i64, f64)> =
        net.edges().iter().map(|e| (net.label(e.x), net.label(e.y), e.c)).collect();
    let base = net.label(net.base_point());
    match format {
        NetworkFormat::EdgeList => {
            let mut out = format!("base {base}\n");
            for (x, y, c) in edges {
                let _ = writeln!(out, "{x} {y} {c:?}");
            }
            out
        }
        NetworkFormat::Json => {
            let doc = NetworkJson { base: Some(base), edges };
            let mut s = serde_json::to_string(&doc).expect("network JSON is always serializable");
            s.push('\n');
            s
        }
    }
}

type RawNetwork = (Option<i64>, Vec<(i64, i64, f64)>);

fn parse_edge_list(text: &str) -> Result<RawNetwork> {
    let mut base = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| Error::Parse { line: line_no, message };
        if tokens[0] == "base" {
            if tokens.len() != 2 {
                return Err(err(format!("expected `base <id>`, got {line:?}")));
            }
            if base.is_some() {
                return Err(err("base point declared twice".into()));
            }
            base = Some(tokens[1].parse::<i64>().map_err(|_| err(format!("bad base id {:?}", tokens[1])))?);
            continue;
        }
        if tokens.len() != 3 {
            return Err(err(format!("expected `x y c`, got {line:?}")));
        }
        let x = tokens[0].parse::<i64>().map_err(|_| err(format!("bad vertex id {:?}", tokens[0])))?;
        let y = tokens[1].parse::<i64>().map_err(|_| err(format!("bad vertex id {:?}", tokens[1])))?;
        let c = tokens[2].parse::<f64>().map_err(|_| err(format!("bad conductance {:?}", tokens[2])))?;
        edges.push((x, y, c));
    }
    Ok((base, edges))
}

fn build(base: Option<i64>, edges: Vec<(i64, i64, f64)>) -> Result<Network> {
    let mut labels: BTreeSet<i64> = edges.iter().flat_map(|&(x, y, _)| [x, y]).collect();
    if let Some(b) = base {
        labels.insert(b);
    }
    if labels.is_empty() {
        return Err(Error::Parse { line: 0, message: "network has no edges".into() });
    }
    let labels: Vec<i64> = labels.into_iter().collect();
    let dense = |l: i64| labels.binary_search(&l).expect("label collected above");
    let base = base.map(dense).unwrap_or(0);
    let edges = edges.into_iter().map(|(x, y, c)| (dense(x), dense(y), c)).collect();
    let net = Network::with_labels(labels.clone(), edges, base)?;
    net.ensure_valid()?;
    Ok(net)
}

#[derive(Debug, Deserialize)]
struct PairJson {
    base: NetworkJson,
    upper: NetworkJson,
}

/// Pair file `{"base": <network>, "upper": <network>}`, each in the JSON
/// network form. Labels are remapped per network.
pub fn parse_pair(text: &str) -> Result<(Network, Network)> {
    let doc: PairJson =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    Ok((build(doc.base.base, doc.base.edges)?, build(doc.upper.base, doc.upper.edges)?))
}

pub fn load_pair(path: &Path) -> Result<(Network, Network)> {
    parse_pair(&fs::read_to_string(path)?)
}

/// Matrix Market coordinate format, `real symmetric`, lower triangle, 1-based.
pub fn format_matrix_market_symmetric(dim: usize, lower: &[(usize, usize, f64)]) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(out, "{dim} {dim} {}", lower.len());
    for &(i, j, v) in lower {
        let _ = writeln!(out, "{} {} {v:?}", i + 1, j + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_chain, ChainProfile, VertexId, Violation};

    #[test]
    fn parses_unit_path() {
        let net = parse_network("0 1 1.0\n1 2 1.0", NetworkFormat::EdgeList).unwrap();
        assert_eq!(net.n_vertices(), 3);
        assert_eq!(net.base_point(), VertexId(0));
        assert_eq!(net, generate_chain(3, ChainProfile::Unit).unwrap());
    }

    #[test]
    fn rejects_duplicate_and_self_loop() {
        match parse_network("0 1 1.0\n0 1 2.0", NetworkFormat::EdgeList) {
            Err(Error::Invalid(v)) => assert_eq!(v.0, vec![Violation::DuplicateEdge { x: 0, y: 1 }]),
            other => panic!("unexpected {other:?}"),
        }
        match parse_network("0 0 1.0", NetworkFormat::EdgeList) {
            Err(Error::Invalid(v)) => assert!(v.0.contains(&Violation::SelfLoop { vertex: 0 })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_network("# header\n0 1 1.0\n1 x 1.0\n", NetworkFormat::EdgeList) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_network("0 1", NetworkFormat::EdgeList), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn base_header_and_comments() {
        let net =
            parse_network("# a triangle\nbase 2\n0 1 1 # first\n1 2 1\n2 0 1\n", NetworkFormat::EdgeList)
                .unwrap();
        assert_eq!(net.base_point(), VertexId(2));
        assert_eq!(net.edges().len(), 3);
    }

    #[test]
    fn json_format() {
        let net =
            parse_network(r#"{"base": 1, "edges": [[0, 1, 0.5], [1, 2, 3]]}"#, NetworkFormat::Json).unwrap();
        assert_eq!(net.base_point(), VertexId(1));
        let back = parse_network(&format_network(&net, NetworkFormat::Json), NetworkFormat::Json).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn pair_file() {
        let text = r#"{"base": {"edges": [[0, 1, 1], [1, 2, 1]]},
                       "upper": {"base": 0, "edges": [[0, 1, 1], [1, 2, 2]]}}"#;
        let (b, u) = parse_pair(text).unwrap();
        assert_eq!(b, generate_chain(3, ChainProfile::Unit).unwrap());
        assert_eq!(u, generate_chain(3, ChainProfile::Geometric(2.0)).unwrap());
        assert!(matches!(parse_pair("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn negative_labels_round_trip() {
        let net = generate_chain(7, ChainProfile::TwoSidedGeometric(3.0)).unwrap();
        for fmt in [NetworkFormat::EdgeList, NetworkFormat::Json] {
            let back = parse_network(&format_network(&net, fmt), fmt).unwrap();
            assert_eq!(back, net);
        }
    }
}
