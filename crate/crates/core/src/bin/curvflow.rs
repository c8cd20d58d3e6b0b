//! Command-line front end: generators, flows, limits, curvature, stability,
//! batches and DOT rendering. Results go to stdout or `--out`; failures print
//! a JSON object on stderr and exit nonzero.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use curvflow::bakry_emery::{curvatures, sharpness_defect};
use curvflow::batch::{run_batch, BatchConfig};
use curvflow::export::{
    curvature_csv, export_graph_dot, read_json, reference_bounds_apply, series_csv, to_json, trajectory_csv,
    write_json, write_text,
};
use curvflow::flow::{
    calc_curv_upper_bound, calc_curvatures, norm_curv_flow_lim_from, norm_curv_flow_with, AutoCorrect, Checkpoint,
    CorrectionChoice, CorrectionPolicy, LimitParams,
};
use curvflow::graph::{self, CombinatorialGraph};
use curvflow::stability::equilibrium_type;
use curvflow::weights::{is_markovian, randomizer, srw, ToleranceConfig};
use curvflow::{fixtures, Dimension, Error, Execution, Result, WeightScheme};

/// Environment variable naming the default directory for per-run batch outputs.
const OUT_DIR_ENV: &str = "CURVFLOW_OUT_DIR";

#[derive(Parser)]
#[command(name = "curvflow", version, about = "Curvature and curvature flow of weighted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph and print it as JSON.
    Gen {
        /// complete:N, path:N, cycle:N, hypercube:D, random:N:P, octahedron,
        /// wedge, dumbbell, random-example, file:PATH; `A*B` is the Cartesian product.
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Build a weighting scheme and print it as JSON.
    Weights {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        out: Output,
    },
    /// Fixed-horizon normalized flow, written as trajectory CSV.
    Flow {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        t_max: f64,
        /// Keep every k-th snapshot.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Also write per-vertex curvature and upper-bound series CSVs with this prefix.
        #[arg(long)]
        curvature_prefix: Option<PathBuf>,
        #[arg(long, default_value = "inf")]
        dim: Dimension,
        #[command(flatten)]
        out: Output,
    },
    /// Run the flow until its limit is detected; prints the limit as JSON.
    Limit {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1e-3)]
        lim_tolerance: f64,
        #[arg(long, default_value_t = 10_000.0)]
        t_lim: f64,
        /// Snapshot file written every `--checkpoint-interval` time units.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 50.0)]
        checkpoint_interval: f64,
        /// Continue from `--checkpoint` when it exists.
        #[arg(long, requires = "checkpoint")]
        resume: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Per-vertex curvature and upper bound as CSV.
    Curvature {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "inf")]
        dim: Dimension,
        #[command(flatten)]
        out: Output,
    },
    /// Curvature sharpness check.
    Sharp {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 1e-3)]
        norm_tolerance: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Stability of a curvature sharp equilibrium.
    Stability {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 1e-3)]
        norm_tolerance: f64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        eigenvalues: bool,
        #[arg(long)]
        jacobian: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Seeded batch of flows from random initial schemes.
    Batch {
        #[arg(long)]
        graph: String,
        /// `LABEL=v,v,...;LABEL=...`; defaults to the fixture's components.
        #[arg(long)]
        components: Option<String>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        lim_tolerance: f64,
        #[arg(long, default_value_t = 1e-3)]
        norm_tolerance: f64,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[arg(long, default_value_t = 10_000.0)]
        t_lim: f64,
        #[arg(long)]
        sequential: bool,
        /// Directory for one JSON file per run; defaults to $CURVFLOW_OUT_DIR.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// DOT rendering of a weighted graph.
    Render {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value_t = 2)]
        decimals: usize,
        /// Label vertices with their laziness.
        #[arg(long)]
        laziness: bool,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct Input {
    /// Graph spec (see `gen`).
    #[arg(long)]
    graph: String,
    /// srw, lazy-srw, random, file:PATH or a fixture scheme
    /// (random-example, degenerate-k6, octahedron-perturbed, octahedron-equilibrium, clockwise,
    /// path-twelve).
    #[arg(long, default_value = "srw")]
    weights: String,
    /// Lower bound on random rates; numerically-zero cutoff elsewhere.
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long)]
    lazy: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.3)]
    dt: f64,
    #[arg(long, default_value_t = 1e-3)]
    norm_tolerance: f64,
    /// Normalize drifting rows automatically instead of asking.
    #[arg(long)]
    stoch_corr: bool,
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => write_text(path, text),
            None => {
                let mut stdout = io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") })
                    .or_else(|e| if e.kind() == io::ErrorKind::BrokenPipe { Ok(()) } else { Err(e) })
                    .map_err(|e| Error::Io { context: "stdout".into(), message: e.to_string() })
            }
        }
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        self.emit(&to_json(value)?)
    }
}

fn parse_count(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse(format!("{what} {s:?}: {e}")))
}

fn fixture_components(spec: &str) -> Option<Vec<(String, Vec<usize>)>> {
    match spec {
        "wedge" => Some(fixtures::wedge_k4_k5_k2_k3().1),
        "dumbbell" => Some(fixtures::dumbbell().1),
        _ => None,
    }
}

fn parse_graph(spec: &str, seed: u64) -> Result<CombinatorialGraph> {
    if let Some((left, right)) = spec.split_once('*') {
        return Ok(graph::cart_prod(&parse_graph(left, seed)?, &parse_graph(right, seed)?));
    }
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "complete" => graph::complete(parse_count(arg, "vertex count")?),
        "path" => graph::path(parse_count(arg, "vertex count")?),
        "cycle" => graph::cycle(parse_count(arg, "vertex count")?),
        "hypercube" => graph::hypercube(parse_count(arg, "dimension")?),
        "random" => {
            let (n, p) = arg
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected random:N:P, got {spec:?}")))?;
            let p: f64 = p.parse().map_err(|e| Error::Parse(format!("edge probability {p:?}: {e}")))?;
            graph::rand_adj_mat(parse_count(n, "vertex count")?, p, true, seed)
        }
        "octahedron" => Ok(fixtures::octahedron()),
        "wedge" => Ok(fixtures::wedge_k4_k5_k2_k3().0),
        "dumbbell" => Ok(fixtures::dumbbell().0),
        "random-example" => Ok(fixtures::random_graph_example().0),
        "file" => read_json(arg),
        _ => Err(Error::Parse(format!("unknown graph spec {spec:?}"))),
    }
}

fn parse_weights(input: &Input, a: &CombinatorialGraph) -> Result<WeightScheme> {
    let p = match input.weights.split_once(':').unwrap_or((input.weights.as_str(), "")) {
        ("srw", _) => srw(a, input.lazy),
        ("lazy-srw", _) => srw(a, true),
        ("random", _) => randomizer(a, input.threshold, input.lazy, input.seed)?,
        ("file", path) => read_json(path)?,
        ("random-example", _) => fixtures::random_graph_example().1,
        ("degenerate-k6", _) => fixtures::degenerate_k6().1,
        ("octahedron-perturbed", _) => fixtures::octahedron_perturbed(),
        ("octahedron-equilibrium", _) => fixtures::octahedron_degenerate_equilibrium(),
        ("clockwise", _) => fixtures::clockwise_cycle(a.n()),
        ("path-twelve", _) => fixtures::path_twelve().1,
        _ => return Err(Error::Parse(format!("unknown weights spec {:?}", input.weights))),
    };
    p.check_support(a)?;
    Ok(p)
}

fn load(input: &Input) -> Result<(CombinatorialGraph, WeightScheme)> {
    let a = parse_graph(&input.graph, input.seed)?;
    let p = parse_weights(input, &a)?;
    Ok((a, p))
}

fn parse_components(s: &str) -> Result<Vec<(String, Vec<usize>)>> {
    s.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            let (label, vs) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected LABEL=v,v,... in {part:?}")))?;
            let vs = vs
                .split(',')
                .map(|v| parse_count(v.trim(), "vertex"))
                .collect::<Result<Vec<_>>>()?;
            Ok((label.trim().to_string(), vs))
        })
        .collect()
}

/// Asks on the terminal how to handle drift away from the Markov property.
struct Prompt {
    asked_always: bool,
}

impl CorrectionPolicy for Prompt {
    fn on_drift(&mut self, t: f64) -> CorrectionChoice {
        eprintln!("'norm_tolerance' has been exceeded at one or more vertices, at time t = {t} Would you like to:");
        eprintln!("A = Stop calculation and return list of P-matrices so far");
        eprintln!(
            "B = Apply manual normalization now, and apply it again when necessary without asking (you will still be notified when it is applied)"
        );
        eprintln!("C = Apply manual normalization now, and ask again before reapplying it");
        let stdin = io::stdin();
        loop {
            eprint!("Please enter A, B or C here: ");
            let mut line = String::new();
            match stdin.lock().read_line(&mut line) {
                Ok(0) | Err(_) => return CorrectionChoice::Stop,
                Ok(_) => {}
            }
            match line.trim().to_ascii_uppercase().as_str() {
                "A" => return CorrectionChoice::Stop,
                "B" => {
                    self.asked_always = true;
                    return CorrectionChoice::NormalizeAlways;
                }
                "C" => return CorrectionChoice::NormalizeOnce,
                _ => {}
            }
        }
    }

    fn on_corrected(&mut self, t: f64) {
        if self.asked_always {
            notify(t);
        }
    }
}

/// Normalizes automatically and reports each correction.
struct Notify;

impl CorrectionPolicy for Notify {
    fn on_drift(&mut self, t: f64) -> CorrectionChoice {
        AutoCorrect.on_drift(t)
    }

    fn on_corrected(&mut self, t: f64) {
        notify(t);
    }
}

fn notify(t: f64) {
    eprintln!("Transition rates have been artificially normalized at time t = {t}");
}

fn policy(stoch_corr: bool) -> Box<dyn CorrectionPolicy> {
    if stoch_corr {
        Box::new(Notify)
    } else {
        Box::new(Prompt { asked_always: false })
    }
}

fn limit(
    input: &Input,
    run: &RunArgs,
    params: LimitParams,
    checkpoint: Option<&Path>,
    resume: bool,
) -> Result<curvflow::LimitResult> {
    let (a, p) = load(input)?;
    let start = match checkpoint.filter(|path| resume && path.exists()) {
        Some(path) => read_json::<Checkpoint>(path)?,
        None => Checkpoint { step: 0, dt: params.dt, history: vec![p], auto_correct: false, corrections: Vec::new() },
    };
    let mut save = |c: &Checkpoint| match checkpoint {
        Some(path) => write_json(path, c),
        None => Ok(()),
    };
    let mut policy = policy(run.stoch_corr);
    let result = norm_curv_flow_lim_from(&a, start, &params, policy.as_mut(), &mut save)?;
    if !result.converged {
        eprintln!("no convergence before t_lim = {}", params.t_lim);
    }
    Ok(result)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { spec, seed, out } => out.emit_json(&parse_graph(&spec, seed)?),
        Command::Weights { input, out } => out.emit_json(&load(&input)?.1),
        Command::Flow { input, run, t_max, stride, curvature_prefix, dim, out } => {
            let (a, p) = load(&input)?;
            let mut policy = policy(run.stoch_corr);
            let traj = norm_curv_flow_with(&a, &p, t_max, run.dt, run.norm_tolerance, policy.as_mut())?;
            if let Some(t) = traj.stopped_at {
                eprintln!("stopped at t = {t}");
            }
            if let Some(prefix) = curvature_prefix {
                let markovian = traj.schemes.iter().all(|q| is_markovian(q, run.norm_tolerance));
                let bounds = reference_bounds_apply(markovian, dim);
                let name = |suffix: &str| {
                    let mut s = prefix.clone().into_os_string();
                    s.push(suffix);
                    PathBuf::from(s)
                };
                write_text(name("_curvature.csv"), &series_csv(&calc_curvatures(&traj, dim, stride)?, bounds)?)?;
                write_text(name("_upper.csv"), &series_csv(&calc_curv_upper_bound(&traj, dim, stride)?, bounds)?)?;
            }
            out.emit(&trajectory_csv(&traj, stride)?)
        }
        Command::Limit { input, run, lim_tolerance, t_lim, checkpoint, checkpoint_interval, resume, out } => {
            let params = LimitParams {
                dt: run.dt,
                norm_tolerance: run.norm_tolerance,
                lim_tolerance,
                t_lim,
                checkpoint_interval,
            };
            out.emit_json(&limit(&input, &run, params, checkpoint.as_deref(), resume)?)
        }
        Command::Curvature { input, dim, out } => {
            let (_, p) = load(&input)?;
            out.emit(&curvature_csv(&curvatures(&p, dim, &ToleranceConfig::default())?))
        }
        Command::Sharp { input, norm_tolerance, out } => {
            let (a, p) = load(&input)?;
            let defect = sharpness_defect(&a, &p)?;
            let markovian = is_markovian(&p, norm_tolerance);
            out.emit_json(&json!({
                "sharp": markovian && defect <= input.threshold,
                "markovian": markovian,
                "defect": defect,
                "threshold": input.threshold,
            }))
        }
        Command::Stability { input, norm_tolerance, eigenvalues, jacobian, out } => {
            let (a, p) = load(&input)?;
            out.emit_json(&equilibrium_type(&a, &p, eigenvalues, jacobian, norm_tolerance, input.threshold)?)
        }
        Command::Batch {
            graph,
            components,
            count,
            seed,
            dt,
            lim_tolerance,
            norm_tolerance,
            threshold,
            t_lim,
            sequential,
            out_dir,
            out,
        } => {
            let a = parse_graph(&graph, seed)?;
            let components = match components {
                Some(s) => parse_components(&s)?,
                None => fixture_components(&graph)
                    .ok_or_else(|| Error::InvalidArgument(format!("--components is required for {graph:?}")))?,
            };
            let mut config = BatchConfig::new(a, components, count, seed);
            config.dt = dt;
            config.t_lim = t_lim;
            config.tolerances = ToleranceConfig { threshold, norm_tolerance, lim_tolerance, support_eps: 0.0 };
            config.initial_threshold = threshold;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let summary = run_batch(&config, exec)?;
            if let Some(dir) = out_dir.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)) {
                for r in &summary.runs {
                    write_json(dir.join(format!("run_{:06}.json", r.index)), r)?;
                }
            }
            out.emit_json(&summary)
        }
        Command::Render { input, title, decimals, laziness, out } => {
            let (a, p) = load(&input)?;
            out.emit(&export_graph_dot(&a, &p, input.threshold, &title, decimals, laziness)?)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid-argument",
        Error::RetryLimit { .. } => "retry-limit",
        Error::InfeasibleThreshold { .. } => "infeasible-threshold",
        Error::Unsupported(_) => "unsupported",
        Error::NotMarkovian { .. } => "not-markovian",
        Error::UncorrectableRow { .. } => "uncorrectable-row",
        Error::PsdViolation { .. } => "psd-violation",
        Error::IsolatedVertex(_) => "isolated-vertex",
        Error::Divergence { .. } => "divergence",
        Error::NotAnEquilibrium(_) => "not-an-equilibrium",
        Error::Stopped(_) => "stopped",
        Error::Eigensolver(_) => "eigensolver",
        Error::Io { .. } => "io",
        Error::Parse(_) => "parse",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.print().ok();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
