//! Audit artifacts: weighted edge list, community assignment and DOT.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::graph::TransactionGraph;
use crate::louvain::LouvainResult;
use crate::{Error, Result};

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

/// `src,dst,M,C,T_sd,w_B,w_N,W_E` per merged edge.
pub fn write_weighted_edges<W: Write>(writer: W, g: &TransactionGraph) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["src", "dst", "M", "C", "T_sd", "w_B", "w_N", "W_E"])?;
    for e in &g.edges {
        w.write_record([
            g.accounts[e.src as usize].clone(),
            g.accounts[e.dst as usize].clone(),
            e.money.to_string(),
            e.count.to_string(),
            e.mean_time.to_string(),
            e.w_b.to_string(),
            e.w_n.to_string(),
            e.w_e.to_string(),
        ])?;
    }
    flush(w)
}

/// `node,community,level_trace`; the trace lists the node's tag after each
/// level, separated by `/`.
pub fn write_assignment<W: Write>(writer: W, g: &TransactionGraph, result: &LouvainResult) -> Result<()> {
    if result.assignment.len() != g.node_count() {
        return Err(Error::InvalidInput("assignment does not cover the graph".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "community", "level_trace"])?;
    for (i, &c) in result.assignment.iter().enumerate() {
        let trace: Vec<String> = result.level_assignments.iter().map(|l| l[i].to_string()).collect();
        w.write_record([g.accounts[i].clone(), c.to_string(), trace.join("/")])?;
    }
    flush(w)
}

/// Reads an assignment file back onto the nodes of `g`.
pub fn read_assignment<R: Read>(reader: R, g: &TransactionGraph) -> Result<Vec<u32>> {
    let index: HashMap<&str, usize> = g.accounts.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut out = vec![u32::MAX; g.node_count()];
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("node") || headers.get(1) != Some("community") {
        return Err(Error::Format("assignment file must start with node,community".into()));
    }
    for row in r.records() {
        let row = row?;
        let (node, community) = (&row[0], &row[1]);
        let i = *index
            .get(node)
            .ok_or_else(|| Error::InvalidInput(format!("assignment names unknown node {node:?}")))?;
        out[i] = community
            .parse()
            .map_err(|_| Error::Format(format!("bad community id {community:?} for {node}")))?;
    }
    if let Some(i) = out.iter().position(|&c| c == u32::MAX) {
        return Err(Error::InvalidInput(format!("assignment misses node {:?}", g.accounts[i])));
    }
    Ok(out)
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz digraph with nodes clustered by community and edges labeled by
/// final weight.
pub fn write_dot<W: Write>(mut w: W, g: &TransactionGraph, assignment: &[u32]) -> Result<()> {
    let io = |e| Error::io("<dot writer>", e);
    if assignment.len() != g.node_count() {
        return Err(Error::InvalidInput("assignment does not cover the graph".into()));
    }
    let k = assignment.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c as usize].push(i);
    }
    writeln!(w, "digraph transactions {{").map_err(io)?;
    for (c, nodes) in members.iter().enumerate() {
        writeln!(w, "  subgraph cluster_{c} {{\n    label=\"community {c}\";").map_err(io)?;
        for &i in nodes {
            writeln!(w, "    {};", dot_id(&g.accounts[i])).map_err(io)?;
        }
        writeln!(w, "  }}").map_err(io)?;
    }
    for e in &g.edges {
        writeln!(
            w,
            "  {} -> {} [label=\"{:.4}\"];",
            dot_id(&g.accounts[e.src as usize]),
            dot_id(&g.accounts[e.dst as usize]),
            e.w_e
        )
        .map_err(io)?;
    }
    writeln!(w, "}}").map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ingest::{merge_edges, Amount, TimeWindow, TransactionRecord};

    fn graph() -> TransactionGraph {
        let recs: Vec<TransactionRecord> = [("a", "b"), ("b", "c"), ("c", "a")]
            .iter()
            .enumerate()
            .map(|(i, (s, d))| TransactionRecord {
                txn_id: i.to_string(),
                src: s.to_string(),
                dst: d.to_string(),
                amount: Amount(150),
                timestamp: 10 + i as i64,
            })
            .collect();
        build_graph(merge_edges(&recs), TimeWindow::new(0, 100).unwrap()).unwrap()
    }

    #[test]
    fn assignment_round_trip() {
        let g = graph();
        let result = LouvainResult {
            assignment: vec![0, 0, 1],
            level_assignments: vec![vec![0, 0, 2], vec![0, 0, 1]],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_assignment(&mut buf, &g, &result).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,community,level_trace\na,0,0/0\n"));
        assert_eq!(read_assignment(buf.as_slice(), &g).unwrap(), vec![0, 0, 1]);
        assert!(read_assignment("node,community\na,0\n".as_bytes(), &g).is_err());
        assert!(read_assignment("node,community\nzz,0\n".as_bytes(), &g).is_err());
    }

    #[test]
    fn edge_csv_and_dot() {
        let g = graph();
        let mut buf = Vec::new();
        write_weighted_edges(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("a,b,1.50,1,10,"));
        let mut dot = Vec::new();
        write_dot(&mut dot, &g, &[0, 0, 1]).unwrap();
        let dot = String::from_utf8(dot).unwrap();
        assert!(dot.contains("cluster_1") && dot.contains("\"c\" -> \"a\""));
    }
}
