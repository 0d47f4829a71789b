use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EdgeStats, Graph};
use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| LohaError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_edges(text: &str, origin: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                LohaError::Input(format!("{origin}:{line}: expected `src<TAB>dst`, got `{l}`"))
            })
        };
        let a = parse(it.next())?;
        let b = parse(it.next())?;
        if it.next().is_some() {
            return Err(LohaError::Input(format!(
                "{origin}:{line}: trailing fields in `{l}`"
            )));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn parse_features(text: &str, origin: &str) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (line, l) in content_lines(text) {
        let row = l
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    LohaError::Input(format!("{origin}:{line}: bad float `{}`", t.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(LohaError::Input(format!(
                    "{origin}:{line}: ragged feature row ({} values, expected {first})",
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

fn parse_labels(text: &str, origin: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| {
            l.parse()
                .map_err(|_| LohaError::Input(format!("{origin}:{line}: bad label `{l}`")))
        })
        .collect()
}

/// Reads a graph from a whitespace-separated edge list, a headerless
/// feature CSV (row `i` = node `i`) and an optional one-label-per-line file.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(Graph, EdgeStats)> {
    let features = parse_features(&read(feature_path)?, &feature_path.display().to_string())?;
    let edges = parse_edges(&read(edge_path)?, &edge_path.display().to_string())?;
    let labels = match label_path {
        Some(p) => Some(parse_labels(&read(p)?, &p.display().to_string())?),
        None => None,
    };
    Graph::from_edges(&edges, features, labels)
}

/// Reads the `out1_graph_edges.txt` / `out1_node_feature_label.txt` pair
/// used by the WebKB, Actor and Chameleon benchmark releases.
pub fn load_geom_gcn(dir: &Path) -> Result<(Graph, EdgeStats)> {
    let node_path = dir.join("out1_node_feature_label.txt");
    let edge_path = dir.join("out1_graph_edges.txt");
    let node_text = read(&node_path)?;
    let origin = node_path.display().to_string();

    let mut records: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (line, l) in content_lines(&node_text).skip(1) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(LohaError::Input(format!("{origin}:{line}: expected 3 tab-separated fields")));
        }
        let bad = || LohaError::Input(format!("{origin}:{line}: malformed record"));
        let id: usize = fields[0].trim().parse().map_err(|_| bad())?;
        let feats = fields[1]
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let label: usize = fields[2].trim().parse().map_err(|_| bad())?;
        records.push((id, feats, label));
    }
    records.sort_by_key(|r| r.0);
    if records.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(LohaError::Input(format!("{origin}: node ids are not 0..n")));
    }
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.1.clone()).collect();
    let features = Matrix::from_rows(&rows)
        .map_err(|e| LohaError::Input(format!("{origin}: {e}")))?;
    let labels = records.iter().map(|r| r.2).collect();

    let edge_text = read(&edge_path)?;
    let body: String = content_lines(&edge_text)
        .skip(1)
        .fold(String::new(), |mut acc, (_, l)| {
            acc.push_str(l);
            acc.push('\n');
            acc
        });
    let edges = parse_edges(&body, &edge_path.display().to_string())?;
    Graph::from_edges(&edges, features, Some(labels))
}

/// Writes the three-file format read by [`load_graph`].
pub fn write_graph(
    g: &Graph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| LohaError::Io { path: p, source }
    };
    let mut edges = String::new();
    for (a, b) in g.edges() {
        let _ = writeln!(edges, "{a}\t{b}");
    }
    fs::write(edge_path, edges).map_err(io(edge_path))?;

    let mut feats = String::new();
    let x = g.features();
    for r in 0..x.rows() {
        let row: Vec<String> = x.row(r).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(feats, "{}", row.join(","));
    }
    fs::write(feature_path, feats).map_err(io(feature_path))?;

    if let (Some(path), Some(labels)) = (label_path, g.labels()) {
        let mut out = String::new();
        for l in labels {
            let _ = writeln!(out, "{l}");
        }
        fs::write(path, out).map_err(io(path))?;
    }
    Ok(())
}
