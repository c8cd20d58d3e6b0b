//! Curvature flow integration, stochastic correction and numerical limits.
//!
//! The normalized flow evaluates the closed per-edge rate equation over the
//! combinatorial neighbours, so rates that vanish inside a triangle can regrow.
//! The matrix form `-4 Q 1 + 2 C p` serves arbitrary normalizations `C`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bakry_emery::{Dimension, LocalCurvatureData};
use crate::error::{invalid, Error, Result};
use crate::graph::CombinatorialGraph;
use crate::par::Execution;
use crate::weights::{first_non_markovian_row, require_markovian, stochastic_correction_on, WeightScheme};

/// Comparison lags of the limit criterion, in time units.
pub const LIMIT_LAGS: [f64; 2] = [10.0, 20.0];

/// Default interval between limit-finder checkpoints, in time units.
pub const CHECKPOINT_INTERVAL: f64 = 50.0;

fn check_shapes(a: &CombinatorialGraph, p: &WeightScheme) -> Result<()> {
    if a.n() != p.n() {
        return Err(invalid(format!("graph has {} vertices, scheme has {}", a.n(), p.n())));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Grid steps closest to each of [`LIMIT_LAGS`]; exact when `dt` divides 10.
pub fn lag_steps(dt: f64) -> Result<[usize; 2]> {
    check_dt(dt)?;
    let steps = LIMIT_LAGS.map(|lag| (lag / dt).round() as usize);
    if steps[0] < 1 {
        return Err(invalid(format!("dt = {dt} exceeds the comparison lag {}", LIMIT_LAGS[0])));
    }
    Ok(steps)
}

/// Right-hand side of the normalized flow, `C_x = K^d_inf(x)`, in closed form.
///
/// For an edge `x -> y` of `a`, with all sums over combinatorial neighbours
/// `y', y''` of `x` and `D_x = sum_y' p_xy'`:
///
/// `p_xy (-4 p_yx - 2 sum_{y' != y} p_yy' + 4/D_x sum_y' p_xy' p_y'x
///  + 1/D_x sum_{y', y''} p_xy' p_y'y'' - p_yy) + sum_{y' != y} p_xy' p_y'y`.
///
/// Exact for Markovian `p`; the diagonal and non-edges have derivative zero.
pub fn flow_rhs_explicit(a: &CombinatorialGraph, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.n();
    let mut out = DMatrix::zeros(n, n);
    let mut nb = Vec::with_capacity(n);
    for x in 0..n {
        nb.clear();
        nb.extend(a.neighbors(x));
        let d_x: f64 = nb.iter().map(|&y| p[(x, y)]).sum();
        if d_x <= 0.0 {
            continue;
        }
        let back: f64 = nb.iter().map(|&y| p[(x, y)] * p[(y, x)]).sum();
        let two_step: f64 = nb
            .iter()
            .map(|&y1| p[(x, y1)] * nb.iter().map(|&y2| p[(y1, y2)]).sum::<f64>())
            .sum();
        let common = (4.0 * back + two_step) / d_x;
        for &y in &nb {
            let mut across = 0.0;
            let mut inflow = 0.0;
            for &y1 in &nb {
                if y1 != y {
                    across += p[(y, y1)];
                    inflow += p[(x, y1)] * p[(y1, y)];
                }
            }
            out[(x, y)] = p[(x, y)] * (-4.0 * p[(y, x)] - 2.0 * across + common - p[(y, y)]) + inflow;
        }
    }
    out
}

/// Matrix form of the flow: row `x` is `-4 Q_x 1 + 2 C_x p_x` on the support
/// sphere, plus `sum_{y' != y} p_xy' p_y'y` on edges of `a` with zero rate.
pub fn flow_rhs(a: &CombinatorialGraph, p: &WeightScheme, c: &[f64]) -> Result<DMatrix<f64>> {
    check_shapes(a, p)?;
    if c.len() != p.n() {
        return Err(invalid(format!("expected {} normalization values, got {}", p.n(), c.len())));
    }
    let n = p.n();
    let mut out = DMatrix::zeros(n, n);
    for x in 0..n {
        let local = LocalCurvatureData::new(p, x, 0.0)?;
        if local.is_isolated() {
            continue;
        }
        let q1 = local.q.column_sum();
        for (i, &y) in local.s1.iter().enumerate() {
            out[(x, y)] = -4.0 * q1[i] + 2.0 * c[x] * local.delta[i];
        }
        for y in a.neighbors(x).filter(|&y| p.rate(x, y) <= 0.0) {
            out[(x, y)] = a
                .neighbors(x)
                .filter(|&v| v != y)
                .map(|v| p.rate(x, v) * p.rate(v, y))
                .sum();
        }
    }
    Ok(out)
}

fn upper_bounds_unchecked(p: &WeightScheme) -> Result<Vec<f64>> {
    (0..p.n())
        .map(|x| Ok(LocalCurvatureData::new(p, x, 0.0)?.upper_bound(Dimension::Infinite).unwrap_or(0.0)))
        .collect()
}

/// `K^{d(x, .)}_inf(x)` per vertex, zero at isolated vertices.
pub fn k_inf_bounds(a: &CombinatorialGraph, p: &WeightScheme, norm_tolerance: f64) -> Result<Vec<f64>> {
    check_shapes(a, p)?;
    require_markovian(p, norm_tolerance)?;
    upper_bounds_unchecked(p)
}

/// Normalization functions `C_x(t)` for [`curv_flow`].
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    Zero,
    /// `C_x = K^d_inf(x)` recomputed at every stage.
    UpperBound,
    Constant(Vec<f64>),
}

/// One classical RK4 step of `p' = rhs(p)`.
///
/// The diagonal of the result is copied from `p` and negative entries are
/// clamped to zero. Non-finite stage values give [`Error::Divergence`] with
/// `time` and `step` zero, for the caller to fill in.
pub fn rk4_step<F>(p: &WeightScheme, dt: f64, mut rhs: F) -> Result<WeightScheme>
where
    F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let diverged = || Error::Divergence { time: 0.0, step: 0 };
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    let p0 = p.matrix();
    let k1 = rhs(p0)?;
    let s1 = p0 + &k1 * (0.5 * dt);
    if !finite(&s1) {
        return Err(diverged());
    }
    let k2 = rhs(&s1)?;
    let s2 = p0 + &k2 * (0.5 * dt);
    if !finite(&s2) {
        return Err(diverged());
    }
    let k3 = rhs(&s2)?;
    let s3 = p0 + &k3 * dt;
    if !finite(&s3) {
        return Err(diverged());
    }
    let k4 = rhs(&s3)?;
    let mut next = p0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if !finite(&next) {
        return Err(diverged());
    }
    for x in 0..next.nrows() {
        for y in 0..next.ncols() {
            if x == y {
                next[(x, y)] = p0[(x, y)];
            } else if next[(x, y)] < 0.0 {
                next[(x, y)] = 0.0;
            }
        }
    }
    Ok(WeightScheme::from_matrix_unchecked(next))
}

fn step_count(t_max: f64, dt: f64) -> Result<usize> {
    check_dt(dt)?;
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(invalid(format!("t_max must be >= 0, got {t_max}")));
    }
    Ok((t_max / dt + 1e-9).floor() as usize)
}

/// Snapshots `P(0), P(dt), P(2 dt), ...` of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub dt: f64,
    pub schemes: Vec<WeightScheme>,
    /// Times at which a stochastic correction was applied.
    pub corrections: Vec<f64>,
    pub graph: CombinatorialGraph,
    /// Set when the correction policy stopped the integration early.
    pub stopped_at: Option<f64>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.schemes.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn last(&self) -> &WeightScheme {
        self.schemes.last().expect("trajectory is nonempty")
    }
}

/// Non-normalized flow without Markov correction.
pub fn curv_flow(
    a: &CombinatorialGraph,
    p0: &WeightScheme,
    t_max: f64,
    dt: f64,
    c: &Normalization,
) -> Result<FlowTrajectory> {
    check_shapes(a, p0)?;
    let steps = step_count(t_max, dt)?;
    if let Normalization::Constant(v) = c {
        if v.len() != p0.n() {
            return Err(invalid(format!("expected {} normalization values, got {}", p0.n(), v.len())));
        }
    }
    let zeros = vec![0.0; p0.n()];
    let rhs = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let p = WeightScheme::from_matrix_unchecked(m.clone());
        match c {
            Normalization::Zero => flow_rhs(a, &p, &zeros),
            Normalization::UpperBound => flow_rhs(a, &p, &upper_bounds_unchecked(&p)?),
            Normalization::Constant(v) => flow_rhs(a, &p, v),
        }
    };
    let mut schemes = Vec::with_capacity(steps + 1);
    schemes.push(p0.clone());
    for step in 1..=steps {
        let next = rk4_step(schemes.last().expect("nonempty"), dt, rhs).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence { time: step as f64 * dt, step },
            other => other,
        })?;
        schemes.push(next);
    }
    Ok(FlowTrajectory { dt, schemes, corrections: Vec::new(), graph: a.clone(), stopped_at: None })
}

/// Response to a row sum drifting beyond `norm_tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionChoice {
    /// Stop and keep the schemes computed so far.
    Stop,
    /// Normalize now and from then on without asking.
    NormalizeAlways,
    /// Normalize now and ask again next time.
    NormalizeOnce,
}

/// Decides how drift away from the Markov property is handled.
pub trait CorrectionPolicy {
    fn on_drift(&mut self, t: f64) -> CorrectionChoice;

    /// Called after every correction.
    fn on_corrected(&mut self, _t: f64) {}
}

/// Always normalizes.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoCorrect;

impl CorrectionPolicy for AutoCorrect {
    fn on_drift(&mut self, _t: f64) -> CorrectionChoice {
        CorrectionChoice::NormalizeAlways
    }
}

/// Stops at the first drift.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopOnDrift;

impl CorrectionPolicy for StopOnDrift {
    fn on_drift(&mut self, _t: f64) -> CorrectionChoice {
        CorrectionChoice::Stop
    }
}

/// Advances a normalized flow one step at a time, applying the correction policy.
struct Stepper<'a> {
    a: &'a CombinatorialGraph,
    dt: f64,
    norm_tolerance: f64,
    auto: bool,
    policy: &'a mut dyn CorrectionPolicy,
    corrections: Vec<f64>,
}

enum Advance {
    Next(WeightScheme),
    Stopped,
}

impl Stepper<'_> {
    fn advance(&mut self, p: &WeightScheme, step: usize) -> Result<Advance> {
        let t = step as f64 * self.dt;
        let a = self.a;
        let next = rk4_step(p, self.dt, |m| Ok(flow_rhs_explicit(a, m))).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence { time: t, step },
            other => other,
        })?;
        if first_non_markovian_row(&next, self.norm_tolerance).is_none() {
            return Ok(Advance::Next(next));
        }
        if !self.auto {
            match self.policy.on_drift(t) {
                CorrectionChoice::Stop => return Ok(Advance::Stopped),
                CorrectionChoice::NormalizeAlways => self.auto = true,
                CorrectionChoice::NormalizeOnce => {}
            }
        }
        let corrected = stochastic_correction_on(a, &next)?;
        self.corrections.push(t);
        self.policy.on_corrected(t);
        Ok(Advance::Next(corrected))
    }
}

/// Normalized flow on `[0, t_max]`; `stoch_corr = false` stops at the first drift.
pub fn norm_curv_flow(
    a: &CombinatorialGraph,
    p0: &WeightScheme,
    t_max: f64,
    dt: f64,
    stoch_corr: bool,
    norm_tolerance: f64,
) -> Result<FlowTrajectory> {
    if stoch_corr {
        norm_curv_flow_with(a, p0, t_max, dt, norm_tolerance, &mut AutoCorrect)
    } else {
        norm_curv_flow_with(a, p0, t_max, dt, norm_tolerance, &mut StopOnDrift)
    }
}

pub fn norm_curv_flow_with(
    a: &CombinatorialGraph,
    p0: &WeightScheme,
    t_max: f64,
    dt: f64,
    norm_tolerance: f64,
    policy: &mut dyn CorrectionPolicy,
) -> Result<FlowTrajectory> {
    check_shapes(a, p0)?;
    require_markovian(p0, norm_tolerance)?;
    let steps = step_count(t_max, dt)?;
    let mut stepper = Stepper { a, dt, norm_tolerance, auto: false, policy, corrections: Vec::new() };
    let mut schemes = Vec::with_capacity(steps + 1);
    schemes.push(p0.clone());
    let mut stopped_at = None;
    for step in 1..=steps {
        match stepper.advance(schemes.last().expect("nonempty"), step)? {
            Advance::Next(p) => schemes.push(p),
            Advance::Stopped => {
                stopped_at = Some(step as f64 * dt);
                break;
            }
        }
    }
    Ok(FlowTrajectory { dt, schemes, corrections: stepper.corrections, graph: a.clone(), stopped_at })
}

/// Outcome of [`norm_curv_flow_lim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub converged: bool,
    /// Convergence time, or `t_lim` when not converged.
    pub t_conv: f64,
    #[serde(rename = "P")]
    pub limit: WeightScheme,
}

/// Parameters of the limit finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub dt: f64,
    pub norm_tolerance: f64,
    pub lim_tolerance: f64,
    pub t_lim: f64,
    /// Time between checkpoints.
    pub checkpoint_interval: f64,
}

impl Default for LimitParams {
    fn default() -> Self {
        Self {
            dt: 0.3,
            norm_tolerance: 1e-3,
            lim_tolerance: 1e-3,
            t_lim: 10_000.0,
            checkpoint_interval: CHECKPOINT_INTERVAL,
        }
    }
}

/// Resumable state of the limit finder: the trailing window ending at `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub dt: f64,
    /// Oldest first; at most `lag_steps(dt)[1] + 1` schemes.
    pub history: Vec<WeightScheme>,
    pub auto_correct: bool,
    pub corrections: Vec<f64>,
}

fn max_abs_diff(p: &WeightScheme, q: &WeightScheme) -> f64 {
    (p.matrix() - q.matrix()).amax()
}

/// Integrates until every entry of `P(t)` is within `lim_tolerance` of `P(t + 10)`
/// and `P(t + 20)`, checked on a trailing window, or until `t` passes `t_lim`.
pub fn norm_curv_flow_lim(
    a: &CombinatorialGraph,
    p0: &WeightScheme,
    dt: f64,
    stoch_corr: bool,
    norm_tolerance: f64,
    lim_tolerance: f64,
    t_lim: f64,
) -> Result<LimitResult> {
    let params = LimitParams { dt, norm_tolerance, lim_tolerance, t_lim, ..LimitParams::default() };
    let start = Checkpoint { step: 0, dt, history: vec![p0.clone()], auto_correct: false, corrections: Vec::new() };
    if stoch_corr {
        norm_curv_flow_lim_from(a, start, &params, &mut AutoCorrect, &mut |_| Ok(()))
    } else {
        norm_curv_flow_lim_from(a, start, &params, &mut StopOnDrift, &mut |_| Ok(()))
    }
}

/// [`norm_curv_flow_lim`] from a checkpoint, reporting a new checkpoint every
/// `params.checkpoint_interval` time units. A `Stop` decision yields [`Error::Stopped`].
pub fn norm_curv_flow_lim_from(
    a: &CombinatorialGraph,
    start: Checkpoint,
    params: &LimitParams,
    policy: &mut dyn CorrectionPolicy,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<LimitResult> {
    let [w1, w2] = lag_steps(params.dt)?;
    if (start.dt - params.dt).abs() > 1e-12 {
        return Err(invalid(format!("checkpoint dt {} differs from dt {}", start.dt, params.dt)));
    }
    if params.t_lim.is_nan() || params.t_lim <= 0.0 {
        return Err(invalid(format!("t_lim must be positive, got {}", params.t_lim)));
    }
    if params.lim_tolerance <= 0.0 {
        return Err(invalid("lim_tolerance must be positive"));
    }
    let Some(first) = start.history.first() else {
        return Err(invalid("checkpoint history is empty"));
    };
    check_shapes(a, first)?;
    if start.step == 0 {
        require_markovian(first, params.norm_tolerance)?;
    }
    let mut history: VecDeque<WeightScheme> = start.history.into_iter().collect();
    while history.len() > w2 + 1 {
        history.pop_front();
    }
    let every = ((params.checkpoint_interval / params.dt).round() as usize).max(1);
    let mut stepper = Stepper {
        a,
        dt: params.dt,
        norm_tolerance: params.norm_tolerance,
        auto: start.auto_correct,
        policy,
        corrections: start.corrections,
    };
    let mut step = start.step;
    loop {
        if history.len() == w2 + 1 {
            let oldest = &history[0];
            if max_abs_diff(oldest, &history[w1]) < params.lim_tolerance
                && max_abs_diff(oldest, &history[w2]) < params.lim_tolerance
            {
                return Ok(LimitResult { converged: true, t_conv: (step - w2) as f64 * params.dt, limit: oldest.clone() });
            }
        }
        let t_oldest = (step + 1).saturating_sub(history.len()) as f64 * params.dt;
        if t_oldest >= params.t_lim {
            let last = history.back().expect("nonempty").clone();
            return Ok(LimitResult { converged: false, t_conv: params.t_lim, limit: last });
        }
        step += 1;
        match stepper.advance(history.back().expect("nonempty"), step)? {
            Advance::Next(p) => history.push_back(p),
            Advance::Stopped => return Err(Error::Stopped(step as f64 * params.dt)),
        }
        if history.len() > w2 + 1 {
            history.pop_front();
        }
        if step.is_multiple_of(every) {
            on_checkpoint(&Checkpoint {
                step,
                dt: params.dt,
                history: history.iter().cloned().collect(),
                auto_correct: stepper.auto,
                corrections: stepper.corrections.clone(),
            })?;
        }
    }
}

/// Per-vertex values at every `k`-th snapshot of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSeries {
    pub times: Vec<f64>,
    /// `values[i][x]`; `NaN` where undefined (upper bounds at isolated vertices).
    pub values: Vec<Vec<f64>>,
    pub dimension: Dimension,
}

fn series<F>(traj: &FlowTrajectory, k: usize, dim: Dimension, exec: Execution, f: F) -> Result<CurvatureSeries>
where
    F: Fn(&LocalCurvatureData) -> f64 + Sync + Send,
{
    if k == 0 {
        return Err(invalid("stride k must be >= 1"));
    }
    let picked: Vec<usize> = (0..traj.schemes.len()).step_by(k).collect();
    let values = exec
        .map(picked.len(), |i| {
            let p = &traj.schemes[picked[i]];
            (0..p.n()).map(|x| Ok(f(&LocalCurvatureData::new(p, x, 0.0)?))).collect::<Result<Vec<f64>>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CurvatureSeries { times: picked.iter().map(|&i| i as f64 * traj.dt).collect(), values, dimension: dim })
}

/// `K_N` of every vertex at every `k`-th snapshot.
pub fn calc_curvatures(traj: &FlowTrajectory, dim: Dimension, k: usize) -> Result<CurvatureSeries> {
    series(traj, k, dim, Execution::default(), |l| l.curvature(dim))
}

/// Upper bound `K^d_N` of every vertex at every `k`-th snapshot.
pub fn calc_curv_upper_bound(traj: &FlowTrajectory, dim: Dimension, k: usize) -> Result<CurvatureSeries> {
    series(traj, k, dim, Execution::default(), |l| l.upper_bound(dim).unwrap_or(f64::NAN))
}
