//! `plap`: command-line front end for p-Laplace evolution on weighted graphs.
//!
//! Exit codes: 0 success, 1 a verified property failed or output could not be
//! written, 2 unreadable or malformed input, 3 violated precondition, 4 solver
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use plap_core::analysis::{
    check_contraction, check_domination, check_lq_monotonicity, check_mass_conservation,
    check_order_preservation, check_positivity, decay_fit, energy_inequality_check,
    extinction_bound, extinction_bound_limit, poincare_check, poincare_constant, regularity_probe,
};
use plap_core::graph::{isoperimetric_constant, Graph, IsoOptions, Sampling};
use plap_core::io;
use plap_core::scenario::{self, run_batch, Scenario, ScenarioError};
use plap_core::solver::{InnerMethod, Method, SolverConfig, Trajectory, TrajectoryMeta};

#[derive(Parser)]
#[command(
    name = "plap",
    version,
    about = "Parabolic p-Laplace evolution on weighted graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated graph in the line format.
    Generate(GenerateArgs),
    /// Integrate a scenario and write the trajectory CSV and report JSON.
    Solve(Box<SolveArgs>),
    /// Check a property of a stored trajectory and print a JSON report.
    Verify(VerifyArgs),
    /// Estimate the d-isoperimetric constant by subset enumeration.
    Iso(IsoArgs),
    /// Evaluate the extinction time bound T0.
    Bound(BoundArgs),
    /// Fit decay rates, energy inequalities or Hölder exponents to a trajectory.
    Fit(FitArgs),
    /// Compute the Poincaré constant and test it on random functions.
    Poincare(PoincareArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Graph file in the line format.
    #[arg(long, conflicts_with = "generator")]
    graph: Option<PathBuf>,
    /// Generator spec such as `lattice:2:8:halo`, `path:9`, `cycle:6`,
    /// `two-node`, `star:4`, `random:30:7`.
    #[arg(long)]
    generator: Option<String>,
}

impl GraphArgs {
    fn load(&self, seed: u64) -> Result<Graph, ScenarioError> {
        match (&self.graph, &self.generator) {
            (Some(f), None) => Ok(io::parse_graph_file(f)?),
            (None, Some(spec)) => scenario::generate(spec, seed),
            _ => Err(ScenarioError::Parse(
                "give one of --graph or --generator".into(),
            )),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator spec.
    spec: String,
    /// Seed for random generators (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Explicit,
    Implicit,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON scenario files; runs them as a batch and ignores the other
    /// scenario flags.
    #[arg(long, num_args = 1..)]
    scenario: Vec<PathBuf>,
    /// Worker threads for batch runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Exponent p > 1.
    #[arg(long)]
    p: Option<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Initial data: `delta:<id>`, `delta:center`, `indicator:<id>;...`,
    /// `const:<c>`, `file:<path>`, `expr:<expression>`.
    #[arg(long)]
    f0: Option<String>,
    /// `neumann`, `dirichlet` or `dirichlet:<id>;...`.
    #[arg(long, default_value = "neumann")]
    boundary: String,
    /// JSON document with SolverConfig fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Integrator (default: implicit for p < 2, explicit otherwise).
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Implicit step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Explicit absolute tolerance.
    #[arg(long)]
    atol: Option<f64>,
    /// Explicit relative tolerance.
    #[arg(long)]
    rtol: Option<f64>,
    /// Inner proximal solve tolerance.
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Inner proximal iteration cap.
    #[arg(long)]
    inner_max_iter: Option<usize>,
    /// Use gradient descent instead of Newton for the inner solve.
    #[arg(long)]
    gradient_descent: bool,
    /// Sup-norm threshold below which the state counts as extinct.
    #[arg(long)]
    extinction_eps: Option<f64>,
    /// Output sampling interval.
    #[arg(long)]
    every: Option<f64>,
    /// Keep integrating after sustained extinction.
    #[arg(long)]
    no_stop_on_extinction: bool,
    /// Checks: mass, positivity, lq1, lq2, lqinf, extinction, energy.
    #[arg(long = "check", value_delimiter = ',')]
    checks: Vec<String>,
    /// Dimension for `extinction` bounds and `energy`.
    #[arg(long)]
    d: Option<f64>,
    /// Constant of the extinction bound (default: Sobolev-chain heuristic).
    #[arg(long = "C")]
    c: Option<f64>,
    /// Seed (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Append a `mass` column to the CSV.
    #[arg(long)]
    with_mass: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl SolveArgs {
    fn scenario(&self) -> Result<Scenario, ScenarioError> {
        let need =
            |name: &str| ScenarioError::Parse(format!("--{name} is required without --scenario"));
        let p = self.p.ok_or_else(|| need("p"))?;
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<SolverConfig>(&text)
                    .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?
            }
            None => match plap_core::operator::Exponent::new(p) {
                Ok(e) => SolverConfig::for_exponent(e),
                Err(_) => SolverConfig::default(),
            },
        };
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Explicit => Method::ExplicitAdaptive,
                MethodArg::Implicit => Method::ImplicitEuler,
            };
        }
        macro_rules! set {
            ($($field:ident <- $flag:expr),*) => {$(if let Some(v) = $flag { cfg.$field = v; })*};
        }
        set!(dt <- self.dt, atol <- self.atol, rtol <- self.rtol, inner_tol <- self.inner_tol,
             inner_max_iter <- self.inner_max_iter, extinction_eps <- self.extinction_eps,
             dense_output_every <- self.every);
        if self.gradient_descent {
            cfg.inner_method = InnerMethod::GradientDescent;
        }
        if self.no_stop_on_extinction {
            cfg.stop_on_extinction = false;
        }
        Ok(Scenario {
            graph_file: self.graph.graph.clone(),
            generator: self.graph.generator.clone(),
            p,
            boundary: self.boundary.clone(),
            f0: self.f0.clone().ok_or_else(|| need("f0"))?,
            horizon: self.horizon.ok_or_else(|| need("T"))?,
            solver: Some(cfg),
            checks: self.checks.clone(),
            d: self.d,
            c: self.c,
            seed: self.seed,
            with_mass: self.with_mass,
            base_dir: PathBuf::new(),
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Mass,
    Positivity,
    Lq1,
    Lq2,
    Lqinf,
    Contraction,
    Order,
    Domination,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Trajectory CSV.
    #[arg(long)]
    trajectory: PathBuf,
    /// Second trajectory for contraction (other run), order (upper run) and
    /// domination (Neumann run; `--trajectory` is the Dirichlet run).
    #[arg(long)]
    other: Option<PathBuf>,
    #[arg(long, value_enum)]
    check: CheckArg,
    /// Tolerance of the check.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Exponent recorded in the report.
    #[arg(long)]
    p: Option<f64>,
    /// Seed for random generators (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IsoArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Isoperimetric dimension d > 1.
    #[arg(long)]
    d: f64,
    /// Random subsets examined above the exhaustive cap.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Refuse to sample: error above the exhaustive cap.
    #[arg(long)]
    exhaustive_only: bool,
    /// Largest subset size considered.
    #[arg(long)]
    max_size: Option<usize>,
    /// Seed (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    d: f64,
    #[arg(long)]
    p: f64,
    /// Constant C of the bound.
    #[arg(long = "C")]
    c: f64,
    /// ℓ^m_ν norm of f0 with m = d(2 − p)/p.
    #[arg(long)]
    f0_norm: f64,
    /// Also report the p → 1 limit, using this value of ‖f0‖ in ℓ^d_ν.
    #[arg(long)]
    limit_norm: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Trajectory CSV.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    p: f64,
    /// Decay fit window start.
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    /// Decay fit window end (default: final time).
    #[arg(long)]
    t_max: Option<f64>,
    /// Check the extinction energy inequality at level k (needs --d).
    #[arg(long)]
    energy_level: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    /// Probe time regularity at this node instead.
    #[arg(long)]
    holder: Option<String>,
    /// Seed for random generators (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoincareArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Random test functions.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Seed (default: PLAP_SEED or 0x5eed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(scenario::default_seed)
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), ScenarioError> {
    let text = io::to_json(value).map_err(|e| ScenarioError::Output(e.to_string()))?;
    io::emit(&text, out).map_err(|e| ScenarioError::Output(e.to_string()))
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn load_trajectory(g: &Graph, path: &Path, p: f64) -> Result<Trajectory, ScenarioError> {
    let meta = TrajectoryMeta {
        p,
        boundary: "unknown".into(),
        method: "csv".into(),
        config_hash: path.display().to_string(),
    };
    Ok(io::read_trajectory_csv(g, path, meta)?)
}

fn generate(a: &GenerateArgs) -> Result<i32, ScenarioError> {
    let g = scenario::generate(&a.spec, seed_or_default(a.seed))?;
    io::emit(&io::emit_graph(&g), a.out.as_deref())
        .map_err(|e| ScenarioError::Output(e.to_string()))?;
    Ok(0)
}

fn solve(a: &SolveArgs) -> Result<i32, ScenarioError> {
    if a.scenario.is_empty() {
        let s = a.scenario()?;
        let art = scenario::execute(&s)?;
        let (csv, json) = art.write(&a.out, "trajectory")?;
        eprintln!("wrote {} and {}", csv.display(), json.display());
        return Ok(0);
    }
    let list = a
        .scenario
        .iter()
        .map(|p| Scenario::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut code = 0;
    for (path, outcome) in a.scenario.iter().zip(run_batch(&list, a.jobs)) {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario");
        match (outcome.artifacts, outcome.error) {
            (Some(art), _) => {
                let (csv, json) = art.write(&a.out, stem)?;
                eprintln!(
                    "{}: wrote {} and {}",
                    path.display(),
                    csv.display(),
                    json.display()
                );
            }
            (None, Some(e)) => {
                eprintln!("{}: {e}", path.display());
                if code == 0 {
                    code = outcome.exit_code;
                }
            }
            (None, None) => unreachable!("failed outcomes carry an error"),
        }
    }
    Ok(code)
}

fn verify(a: &VerifyArgs) -> Result<i32, ScenarioError> {
    let g = a.graph.load(seed_or_default(a.seed))?;
    let p = a.p.unwrap_or(f64::NAN);
    let traj = load_trajectory(&g, &a.trajectory, p)?;
    let other = || -> Result<Trajectory, ScenarioError> {
        let path = a
            .other
            .as_ref()
            .ok_or_else(|| ScenarioError::Parse("this check needs --other".into()))?;
        load_trajectory(&g, path, p)
    };
    let report = match a.check {
        CheckArg::Mass => check_mass_conservation(&g, &traj, a.tol)?,
        CheckArg::Positivity => check_positivity(&g, &traj, a.tol)?,
        CheckArg::Lq1 => check_lq_monotonicity(&g, &traj, 1.0, a.tol)?,
        CheckArg::Lq2 => check_lq_monotonicity(&g, &traj, 2.0, a.tol)?,
        CheckArg::Lqinf => check_lq_monotonicity(&g, &traj, f64::INFINITY, a.tol)?,
        CheckArg::Contraction => check_contraction(&g, &traj, &other()?, a.tol)?,
        CheckArg::Order => check_order_preservation(&g, &traj, &other()?, a.tol)?,
        CheckArg::Domination => check_domination(&g, &traj, &other()?, a.tol)?,
    };
    emit_json(&to_value(&report), a.out.as_deref())?;
    Ok(if report.pass { 0 } else { 1 })
}

fn iso(a: &IsoArgs) -> Result<i32, ScenarioError> {
    let seed = seed_or_default(a.seed);
    let g = a.graph.load(seed)?;
    let opts = IsoOptions {
        max_subset_size: a.max_size.unwrap_or(usize::MAX),
        sampling: (!a.exhaustive_only).then_some(Sampling {
            samples: a.samples,
            seed,
        }),
    };
    let est = isoperimetric_constant(&g, a.d, &opts)?;
    let maximizer: Vec<&str> = est.maximizer.iter().map(|&v| g.id(v)).collect();
    let value = json!({
        "d": a.d,
        "value": est.value,
        "maximizer": maximizer,
        "subsets_examined": est.subsets_examined,
        "exhaustive": est.exhaustive,
        "seed": seed,
    });
    emit_json(&value, a.out.as_deref())?;
    Ok(0)
}

fn bound(a: &BoundArgs) -> Result<i32, ScenarioError> {
    let b = extinction_bound(a.d, a.p, a.c, a.f0_norm)?;
    let mut value = to_value(&b);
    if let Some(n) = a.limit_norm {
        value["limit_p_to_1"] = json!(extinction_bound_limit(a.d, a.c, n)?);
    }
    emit_json(&value, a.out.as_deref())?;
    Ok(0)
}

fn fit(a: &FitArgs) -> Result<i32, ScenarioError> {
    let g = a.graph.load(seed_or_default(a.seed))?;
    let traj = load_trajectory(&g, &a.trajectory, a.p)?;
    let value = if let Some(id) = &a.holder {
        let v = g
            .node(id)
            .map_err(|_| ScenarioError::Precondition(format!("unknown node `{id}`")))?;
        to_value(&regularity_probe(&traj, a.p, v, id)?)
    } else if let Some(k) = a.energy_level {
        let d =
            a.d.ok_or_else(|| ScenarioError::Parse("--energy-level needs --d".into()))?;
        to_value(&energy_inequality_check(&g, &traj, d, a.p, k)?)
    } else {
        let t_max = a.t_max.unwrap_or_else(|| traj.final_time());
        to_value(&decay_fit(&g, &traj, a.p, [a.t_min, t_max])?)
    };
    emit_json(&value, a.out.as_deref())?;
    Ok(0)
}

fn poincare(a: &PoincareArgs) -> Result<i32, ScenarioError> {
    let seed = seed_or_default(a.seed);
    let g = a.graph.load(seed)?;
    let c = poincare_constant(&g)?;
    let ratio = poincare_check(&g, c, a.samples, seed)?;
    let value = json!({
        "constant": c,
        "worst_ratio": ratio,
        "samples": a.samples,
        "seed": seed,
        "holds": ratio <= 1.0 + 1e-9,
    });
    emit_json(&value, a.out.as_deref())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Iso(a) => iso(a),
        Command::Bound(a) => bound(a),
        Command::Fit(a) => fit(a),
        Command::Poincare(a) => poincare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("plap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
