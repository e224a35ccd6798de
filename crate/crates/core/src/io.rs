//! Text formats: graph files, trajectory CSV and JSON reports.
//!
//! Graph files are line oriented:
//!
//! ```text
//! # comment
//! node <id> <nu>
//! edge <tail-id> <head-id> <mu>
//! halo <id> <extra-mu-degree>
//! ```
//!
//! Nodes must be declared before they are referenced. Blank lines and
//! comments are ignored; anything else is an error carrying its line number.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, GraphBuilder, GraphError, NodeFunction};
use crate::solver::{Trajectory, TrajectoryMeta};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn number(line: usize, what: &str, s: &str) -> Result<f64, IoError> {
    let x: f64 = s
        .parse()
        .map_err(|_| parse_err(line, format!("{what} `{s}` is not a number")))?;
    if !x.is_finite() {
        return Err(parse_err(line, format!("{what} `{s}` is not finite")));
    }
    Ok(x)
}

pub fn parse_graph_str(text: &str) -> Result<Graph, IoError> {
    let mut b = GraphBuilder::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let at = |e: GraphError| parse_err(line, e.to_string());
        let lookup = |b: &GraphBuilder, id: &str| {
            b.node(id)
                .map_err(|_| parse_err(line, format!("node `{id}` is not declared")))
        };
        match fields.as_slice() {
            ["node", id, nu] => {
                let nu = number(line, "node weight", nu)?;
                b.add_node(*id, nu).map_err(at)?;
            }
            ["edge", tail, head, mu] => {
                let mu = number(line, "edge weight", mu)?;
                let (t, h) = (lookup(&b, tail)?, lookup(&b, head)?);
                b.add_edge(t, h, mu).map_err(at)?;
            }
            ["halo", id, extra] => {
                let extra = number(line, "halo degree", extra)?;
                let v = lookup(&b, id)?;
                b.add_halo(v, extra).map_err(at)?;
            }
            [kw @ ("node" | "edge" | "halo"), ..] => {
                return Err(parse_err(
                    line,
                    format!("wrong number of fields for `{kw}`: {}", fields.len() - 1),
                ));
            }
            [other, ..] => return Err(parse_err(line, format!("unknown directive `{other}`"))),
            [] => unreachable!("blank lines are skipped"),
        }
    }
    Ok(b.build()?)
}

pub fn parse_graph_file(path: &Path) -> Result<Graph, IoError> {
    parse_graph_str(&read_file(path)?)
}

/// Canonical text: all nodes in index order, then nonzero halos, then edges
/// in index order. Numbers use the shortest representation that parses back
/// to the same `f64`.
pub fn emit_graph(g: &Graph) -> String {
    let mut out = String::new();
    for v in g.nodes() {
        out.push_str(&format!("node {} {:?}\n", g.id(v), g.nu(v)));
    }
    for v in g.nodes() {
        if g.halo(v) > 0.0 {
            out.push_str(&format!("halo {} {:?}\n", g.id(v), g.halo(v)));
        }
    }
    for e in g.edges() {
        out.push_str(&format!(
            "edge {} {} {:?}\n",
            g.id(e.tail),
            g.id(e.head),
            e.mu
        ));
    }
    out
}

pub fn write_graph_file(g: &Graph, path: &Path) -> Result<(), IoError> {
    write_file(path, emit_graph(g).as_bytes())
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header `t,<id>,...` (plus `mass` when requested), one row per sample.
pub fn trajectory_csv(g: &Graph, traj: &Trajectory, with_mass: bool) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t"];
    header.extend(g.ids().iter().map(String::as_str));
    if with_mass {
        header.push("mass");
    }
    w.write_record(&header)
        .map_err(|e| IoError::Csv(e.to_string()))?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        s.check_domain(g)?;
        let mut row = Vec::with_capacity(header.len());
        row.push(fmt_num(*t));
        row.extend(s.values().iter().map(|x| fmt_num(*x)));
        if with_mass {
            let m: f64 = s
                .values()
                .iter()
                .zip(g.nu_slice())
                .map(|(a, w)| a * w)
                .sum();
            row.push(fmt_num(m));
        }
        w.write_record(&row)
            .map_err(|e| IoError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

pub fn write_trajectory_csv(
    g: &Graph,
    traj: &Trajectory,
    with_mass: bool,
    path: &Path,
) -> Result<(), IoError> {
    write_file(path, trajectory_csv(g, traj, with_mass)?.as_bytes())
}

/// Reads a trajectory written by [`trajectory_csv`]. Node columns must match
/// the graph ids in order; a trailing `mass` column is ignored.
pub fn parse_trajectory_csv(
    g: &Graph,
    text: &str,
    meta: TrajectoryMeta,
) -> Result<Trajectory, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| IoError::Csv(e.to_string()))?
        .clone();
    let n = g.node_count();
    let with_mass = header.len() == n + 2 && &header[n + 1] == "mass";
    if header.len() != n + 1 + usize::from(with_mass) || &header[0] != "t" {
        return Err(parse_err(
            1,
            format!(
                "expected header `t` plus {n} node columns, got {} columns",
                header.len()
            ),
        ));
    }
    for (k, id) in g.ids().iter().enumerate() {
        if &header[k + 1] != id {
            return Err(parse_err(
                1,
                format!(
                    "column {} is `{}`, expected node `{id}`",
                    k + 2,
                    &header[k + 1]
                ),
            ));
        }
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        times.push(number(line, "time", &rec[0])?);
        let vals = (1..=n)
            .map(|k| number(line, "value", &rec[k]))
            .collect::<Result<Vec<_>, _>>()?;
        states.push(NodeFunction::new(g, vals)?);
    }
    Trajectory::new(times, states, meta).map_err(|e| IoError::Csv(e.to_string()))
}

pub fn read_trajectory_csv(
    g: &Graph,
    path: &Path,
    meta: TrajectoryMeta,
) -> Result<Trajectory, IoError> {
    parse_trajectory_csv(g, &read_file(path)?, meta)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    write_file(path, to_json(value)?.as_bytes())
}

/// Writes to stdout, or to `path` when given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), IoError> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|source| IoError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{lattice_box, random_connected, LatticeSpec};

    #[test]
    fn three_line_file_gives_two_nodes() {
        let g = parse_graph_str("node a 1\nnode b 2.5\nedge a b 0.5\n").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.nu_slice(), &[1.0, 2.5]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("# nothing\n", None),
            ("node a 1\nnode b 1\nedge a b 1\nedge b a 1\n", Some(4)),
            ("node a 1\nnode b 1\nlink a b 1\n", Some(3)),
            ("node a 1\nedge a c 1\n", Some(2)),
            ("node a x\n", Some(1)),
            ("node a 1\n\nhalo a -1\n", Some(3)),
            ("node a 1 2\n", Some(1)),
            ("node a inf\n", Some(1)),
        ];
        for (text, line) in cases {
            let err = parse_graph_str(text).unwrap_err();
            match (line, &err) {
                (Some(l), IoError::Parse { line, .. }) => assert_eq!(*line, l, "{text:?}: {err}"),
                (None, IoError::Graph(GraphError::Empty)) => {}
                _ => panic!("{text:?}: unexpected {err}"),
            }
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let graphs = [
            lattice_box(&LatticeSpec::new(2, 3, true)).unwrap(),
            random_connected(12, 6, 3).unwrap(),
        ];
        for g in graphs {
            let text = emit_graph(&g);
            let back = parse_graph_str(&text).unwrap();
            assert_eq!(emit_graph(&back), text);
            assert_eq!(back.nu_slice(), g.nu_slice());
            assert_eq!(back.halo_slice(), g.halo_slice());
        }
    }

    #[test]
    fn csv_round_trip_with_quoted_ids() {
        let g = lattice_box(&LatticeSpec::new(2, 2, false)).unwrap();
        let meta = TrajectoryMeta {
            p: 2.0,
            boundary: "neumann".into(),
            method: "test".into(),
            config_hash: String::new(),
        };
        let states = vec![
            NodeFunction::new(&g, vec![1.0, 0.0, 0.0, 0.1]).unwrap(),
            NodeFunction::new(&g, vec![0.3, 1.0 / 3.0, 0.2, 0.1 + 0.2]).unwrap(),
        ];
        let tr = Trajectory::new(vec![0.0, 0.1], states, meta.clone()).unwrap();
        let text = trajectory_csv(&g, &tr, true).unwrap();
        assert!(text.starts_with("t,\"0,0\",\"0,1\""));
        assert!(text.lines().next().unwrap().ends_with(",mass"));
        let back = parse_trajectory_csv(&g, &text, meta).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
    }
}
