//! Plain edge-list text format: a header line `n m`, then `m` lines `u v w`.
//! Keys are rebuilt on load; only raw weights are stored.

use std::fmt::Write as _;
use std::path::Path;

use super::{pad_weights, NodeId, WeightedGraph};
use crate::error::{Error, Result};

pub fn parse_edge_list(text: &str) -> Result<WeightedGraph> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let nums = parse_fields(hline, header, 2)?;
    let (n, m) = (nums[0] as usize, nums[1] as usize);
    let mut raw = Vec::with_capacity(m);
    for (line, l) in lines {
        let f = parse_fields(line, l, 3)?;
        let id = |x: u64| NodeId::try_from(x).map_err(|_| Error::Parse { line, msg: format!("node id {x} too large") });
        raw.push((id(f[0])?, id(f[1])?, f[2]));
    }
    if raw.len() != m {
        return Err(Error::Parse { line: 1, msg: format!("header promises {m} edges, found {}", raw.len()) });
    }
    pad_weights(n, &raw)
}

fn parse_fields(line: usize, text: &str, count: usize) -> Result<Vec<u64>> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(Error::Parse { line, msg: format!("expected {count} fields, got {}", fields.len()) });
    }
    fields.iter().map(|f| f.parse::<u64>().map_err(|e| Error::Parse { line, msg: format!("{f:?}: {e}") })).collect()
}

pub fn format_edge_list(graph: &WeightedGraph) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", graph.n(), graph.m()).unwrap();
    for (u, v, w) in graph.raw_edges() {
        writeln!(out, "{u} {v} {w}").unwrap();
    }
    out
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

pub fn write_edge_list(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    std::fs::write(path, format_edge_list(graph))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};

    #[test]
    fn text_round_trip_is_exact() {
        let g = generate_graph(&GraphModel::ErdosRenyi { n: 20, m: 50 }, 3).unwrap();
        let text = format_edge_list(&g);
        let back = parse_edge_list(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(format_edge_list(&back), text);
    }

    #[test]
    fn bad_input_reports_line() {
        let err = parse_edge_list("3 2\n0 1 5\n1 x 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_edge_list("3 2\n0 1 5\n").is_err());
        assert!(parse_edge_list("3 1\n0 0 5\n").is_err());
    }
}
