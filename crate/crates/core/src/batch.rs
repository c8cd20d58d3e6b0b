//! Seeded batches of flows from random initial schemes, classified by where
//! their limits concentrate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::norm_curv_flow_lim;
use crate::graph::CombinatorialGraph;
use crate::par::Execution;
use crate::rng::derive_seed;
use crate::weights::{randomizer, ToleranceConfig, WeightScheme};

/// Label of limits without numerically non-degenerate edges.
pub const TOTALLY_DEGENERATE: &str = "totally-degenerate";

/// Separator of composite labels.
pub const COMPOSITE_SEPARATOR: char = '+';

/// Label for vertices outside every labeled component.
pub const UNLABELED: &str = "unlabeled";

/// Vertices incident to an edge with both rates at least `threshold`.
pub fn non_degenerate_vertices(a: &CombinatorialGraph, p: &WeightScheme, threshold: f64) -> Vec<usize> {
    (0..a.n())
        .filter(|&x| {
            a.neighbors(x)
                .any(|y| a.has_edge(y, x) && p.rate(x, y) >= threshold && p.rate(y, x) >= threshold)
        })
        .collect()
}

/// Names the component holding the non-degenerate part `W` of a limit.
///
/// Returns the label of the unique component containing `W`; otherwise the
/// touched components joined by `+` in the given order, with `unlabeled`
/// appended when `W` leaves every component.
pub fn classify_limit(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    components: &[(String, Vec<usize>)],
    threshold: f64,
) -> String {
    let w = non_degenerate_vertices(a, p, threshold);
    if w.is_empty() {
        return TOTALLY_DEGENERATE.to_string();
    }
    let containing: Vec<&str> = components
        .iter()
        .filter(|(_, vs)| w.iter().all(|x| vs.contains(x)))
        .map(|(l, _)| l.as_str())
        .collect();
    if let [only] = containing.as_slice() {
        return (*only).to_string();
    }
    let mut touched: Vec<&str> = components
        .iter()
        .filter(|(_, vs)| w.iter().any(|x| vs.contains(x)))
        .map(|(l, _)| l.as_str())
        .collect();
    if w.iter().any(|x| components.iter().all(|(_, vs)| !vs.contains(x))) {
        touched.push(UNLABELED);
    }
    touched.join(&COMPOSITE_SEPARATOR.to_string())
}

/// Settings of a batch of flows from random initial schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub graph: CombinatorialGraph,
    pub components: Vec<(String, Vec<usize>)>,
    pub count: usize,
    pub master_seed: u64,
    pub dt: f64,
    pub t_lim: f64,
    pub tolerances: ToleranceConfig,
    /// Normalize drifting rows automatically; otherwise a drift fails the run.
    pub stoch_corr: bool,
    /// Lower bound on initial rates.
    pub initial_threshold: f64,
    pub laziness: bool,
}

impl BatchConfig {
    pub fn new(graph: CombinatorialGraph, components: Vec<(String, Vec<usize>)>, count: usize, master_seed: u64) -> Self {
        Self {
            graph,
            components,
            count,
            master_seed,
            dt: 0.3,
            t_lim: 10_000.0,
            tolerances: ToleranceConfig::default(),
            stoch_corr: true,
            initial_threshold: 1e-3,
            laziness: false,
        }
    }
}

/// Outcome of one run of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub t_conv: f64,
    /// Present for converged runs.
    pub label: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: String,
    pub count: usize,
    /// Fraction of classified runs.
    pub share: f64,
    /// `None` when the class is empty.
    pub mean_t_conv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub master_seed: u64,
    /// Labeled components first in the given order, then other labels sorted.
    pub classes: Vec<ClassStats>,
    pub classified: usize,
    pub non_converged: usize,
    pub failed: usize,
    /// Seeds of runs that failed, did not converge or landed outside a single component.
    pub anomalies: Vec<u64>,
    pub runs: Vec<RunOutcome>,
}

impl BatchSummary {
    pub fn class(&self, label: &str) -> Option<&ClassStats> {
        self.classes.iter().find(|c| c.label == label)
    }
}

fn run_one(config: &BatchConfig, index: usize) -> RunOutcome {
    let seed = derive_seed(config.master_seed, index as u64);
    let tol = &config.tolerances;
    let result = randomizer(&config.graph, config.initial_threshold, config.laziness, seed).and_then(|p0| {
        norm_curv_flow_lim(
            &config.graph,
            &p0,
            config.dt,
            config.stoch_corr,
            tol.norm_tolerance,
            tol.lim_tolerance,
            config.t_lim,
        )
    });
    match result {
        Ok(r) => RunOutcome {
            index,
            seed,
            converged: r.converged,
            t_conv: r.t_conv,
            label: r
                .converged
                .then(|| classify_limit(&config.graph, &r.limit, &config.components, tol.threshold)),
            error: None,
        },
        Err(e) => RunOutcome {
            index,
            seed,
            converged: false,
            t_conv: f64::NAN,
            label: None,
            error: Some(e.to_string()),
        },
    }
}

/// Aggregates run outcomes; `components` fixes the leading class order.
pub fn summarize(config: &BatchConfig, runs: Vec<RunOutcome>) -> BatchSummary {
    let mut per_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (label, _) in &config.components {
        per_label.entry(label).or_default();
    }
    for r in &runs {
        if let Some(label) = &r.label {
            per_label.entry(label).or_default().push(r.t_conv);
        }
    }
    let classified: usize = per_label.values().map(Vec::len).sum();
    let stats = |label: &str, times: &[f64]| ClassStats {
        label: label.to_string(),
        count: times.len(),
        share: if classified == 0 { 0.0 } else { times.len() as f64 / classified as f64 },
        mean_t_conv: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
    };
    let mut classes: Vec<ClassStats> = config
        .components
        .iter()
        .map(|(label, _)| stats(label, &per_label[label.as_str()]))
        .collect();
    classes.extend(
        per_label
            .iter()
            .filter(|(label, _)| config.components.iter().all(|(l, _)| l != *label))
            .map(|(label, times)| stats(label, times)),
    );
    let single = |label: &str| config.components.iter().any(|(l, _)| l == label);
    let anomalies = runs
        .iter()
        .filter(|r| r.error.is_some() || !r.converged || r.label.as_deref().is_some_and(|l| !single(l)))
        .map(|r| r.seed)
        .collect();
    BatchSummary {
        count: runs.len(),
        master_seed: config.master_seed,
        classes,
        classified,
        non_converged: runs.iter().filter(|r| r.error.is_none() && !r.converged).count(),
        failed: runs.iter().filter(|r| r.error.is_some()).count(),
        anomalies,
        runs,
    }
}

/// Runs `config.count` flows; run `i` uses seed `derive_seed(master_seed, i)`
/// whatever the execution mode, so summaries are reproducible.
pub fn run_batch(config: &BatchConfig, exec: Execution) -> Result<BatchSummary> {
    if config.count == 0 {
        return Err(invalid("batch count must be >= 1"));
    }
    config.tolerances.validate()?;
    let n = config.graph.n();
    if let Some((label, _)) = config.components.iter().find(|(_, vs)| vs.iter().any(|&x| x >= n)) {
        return Err(invalid(format!("component {label} names a vertex outside the graph")));
    }
    let runs = exec.map(config.count, |i| run_one(config, i));
    Ok(summarize(config, runs))
}
