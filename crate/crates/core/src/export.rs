//! Text exports (DOT graphs, CSV series) and JSON persistence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::bakry_emery::{CurvatureResult, Dimension};
use crate::error::{invalid, Error, Result};
use crate::flow::{CurvatureSeries, FlowTrajectory};
use crate::graph::CombinatorialGraph;
use crate::weights::WeightScheme;

/// Reference curvature bounds of Markovian schemes with `N >= 2`.
pub const REFERENCE_BOUNDS: (f64, f64) = (-1.0, 2.0);

/// State of an undirected edge `{x, y}` under a rate threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Both rates at least the threshold.
    Alive,
    /// Only `from -> to` is at least the threshold.
    OneWay { from: usize, to: usize },
    Dead,
}

pub fn classify_edge(p: &WeightScheme, x: usize, y: usize, threshold: f64) -> EdgeKind {
    match (p.rate(x, y) >= threshold, p.rate(y, x) >= threshold) {
        (true, true) => EdgeKind::Alive,
        (true, false) => EdgeKind::OneWay { from: x, to: y },
        (false, true) => EdgeKind::OneWay { from: y, to: x },
        (false, false) => EdgeKind::Dead,
    }
}

/// Undirected edges `x < y` of an unmixed graph with their state.
pub fn edge_kinds(a: &CombinatorialGraph, p: &WeightScheme, threshold: f64) -> Result<Vec<((usize, usize), EdgeKind)>> {
    if a.n() != p.n() {
        return Err(invalid(format!("graph has {} vertices, scheme has {}", a.n(), p.n())));
    }
    if !a.is_unmixed() {
        return Err(Error::Unsupported("edge classification of mixed graphs".into()));
    }
    Ok(a
        .directed_edges()
        .into_iter()
        .filter(|&(x, y)| x < y)
        .map(|(x, y)| ((x, y), classify_edge(p, x, y, threshold)))
        .collect())
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT rendering: alive edges green and solid, one-way edges red, dashed and
/// directed, dead edges black and dotted. The label nearest to `x` on the
/// edge `{x, y}` is `p_xy`. Node and edge order follow vertex indices.
pub fn export_graph_dot(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    threshold: f64,
    title: &str,
    decimals: usize,
    show_laziness: bool,
) -> Result<String> {
    let kinds = edge_kinds(a, p, threshold)?;
    let fmt = |v: f64| format!("{v:.decimals$}");
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(title)).ok();
    writeln!(out, "  label={};", quote(title)).ok();
    writeln!(out, "  node [shape=circle];").ok();
    for x in 0..a.n() {
        let label = if show_laziness {
            format!("v{x}\\n{}", fmt(p.laziness(x)))
        } else {
            format!("v{x}")
        };
        writeln!(out, "  {x} [label=\"{label}\"];").ok();
    }
    for ((x, y), kind) in kinds {
        let (tail, head, style) = match kind {
            EdgeKind::Alive => (x, y, "color=green, style=solid, dir=none"),
            EdgeKind::OneWay { from, to } => (from, to, "color=red, style=dashed, dir=forward"),
            EdgeKind::Dead => (x, y, "color=black, style=dotted, dir=none"),
        };
        writeln!(
            out,
            "  {tail} -> {head} [{style}, taillabel=\"{}\", headlabel=\"{}\"];",
            fmt(p.rate(tail, head)),
            fmt(p.rate(head, tail))
        )
        .ok();
    }
    out.push_str("}\n");
    Ok(out)
}

/// Trajectory CSV: `t` then one column `p_x_y` per directed edge of the
/// graph in row-major order, at every `k`-th snapshot.
pub fn trajectory_csv(traj: &FlowTrajectory, k: usize) -> Result<String> {
    if k == 0 {
        return Err(invalid("stride k must be >= 1"));
    }
    let edges = traj.graph.directed_edges();
    let mut out = String::from("t");
    for (x, y) in &edges {
        write!(out, ",p_{x}_{y}").ok();
    }
    out.push('\n');
    for (i, p) in traj.schemes.iter().enumerate().step_by(k) {
        write!(out, "{}", i as f64 * traj.dt).ok();
        for &(x, y) in &edges {
            write!(out, ",{}", p.rate(x, y)).ok();
        }
        out.push('\n');
    }
    Ok(out)
}

fn dimension_field(d: Dimension) -> String {
    d.to_string()
}

fn optional(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-vertex CSV `vertex,K_N,K_upper,N`; `K_upper` is empty at isolated vertices.
pub fn curvature_csv(result: &CurvatureResult) -> String {
    let mut out = String::from("vertex,K_N,K_upper,N\n");
    let n = dimension_field(result.dimension);
    for (x, (k, ub)) in result.values.iter().zip(&result.upper_bounds).enumerate() {
        writeln!(out, "{x},{k},{},{n}", optional(*ub)).ok();
    }
    out
}

/// Whether the constant reference bounds apply to a series.
pub fn reference_bounds_apply(markovian: bool, dim: Dimension) -> bool {
    markovian && dim.value() >= 2.0
}

/// Per-vertex series CSV `t,v0,...`, with `lower,upper` reference columns when requested.
pub fn series_csv(series: &CurvatureSeries, reference_bounds: bool) -> Result<String> {
    if series.times.is_empty() {
        return Err(invalid("empty series"));
    }
    let n = series.values.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for x in 0..n {
        write!(out, ",v{x}").ok();
    }
    if reference_bounds {
        out.push_str(",lower,upper");
    }
    out.push('\n');
    for (t, row) in series.times.iter().zip(&series.values) {
        write!(out, "{t}").ok();
        for v in row {
            write!(out, ",{v}").ok();
        }
        if reference_bounds {
            write!(out, ",{},{}", REFERENCE_BOUNDS.0, REFERENCE_BOUNDS.1).ok();
        }
        out.push('\n');
    }
    Ok(out)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    from_json(&read_text(path)?).map_err(|e| io_error(path, e))
}

/// Parses a numeric CSV with one header line.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| if f.is_empty() { Ok(f64::NAN) } else { f.parse::<f64>() })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("{e} in {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(Error::Parse(format!("row has {} fields, header has {}", bad.len(), header.len())));
    }
    Ok((header, rows))
}
