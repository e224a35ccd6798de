//! Scenario descriptions and their execution into CSV and JSON artifacts.
//!
//! Generator specs: `lattice:<d>:<n>[:halo]`, `path:<n>`, `cycle:<n>`,
//! `two-node`, `star:<leaves>`, `random:<n>[:<seed>]`.
//!
//! Initial data specs: `delta:<id>` (`delta:center` picks the lattice
//! center), `indicator:<id>[;<id>...]`, `const:<c>`, `file:<path>` with lines
//! `<id> <value>`, and `expr:<expression>` evaluated per node with variables
//! `i` (node index), `nu`, and on lattices `x0, x1, ...` (also `x, y, z`).
//!
//! Boundary specs: `neumann`, `dirichlet` (whole node set, absorbing through
//! the halo) and `dirichlet:<id>[;<id>...]`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, check_lq_monotonicity, check_mass_conservation, check_positivity,
    energy_inequality_check, sobolev_reference, EnergyInequality, PropertyReport,
};
use crate::graph::{
    center_node, cycle, isoperimetric_constant, lattice_box, path, random_connected, star,
    two_node, Graph, GraphError, IsoOptions, LatticeSpec, NodeFunction, NodeId, Sampling,
};
use crate::io::{self, IoError};
use crate::operator::{Boundary, DirichletTruncation, Exponent};
use crate::solver::{
    evolve, extinction_time, BoundInputs, ExtinctionRecord, Method, SolverConfig, SolverError,
};

/// Seed used when neither the scenario nor `PLAP_SEED` provides one.
pub const DEFAULT_SEED: u64 = 0x5eed;

/// `PLAP_SEED` if set to an integer, otherwise [`DEFAULT_SEED`].
pub fn default_seed() -> u64 {
    std::env::var("PLAP_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("solver failed: {0}")]
    Solver(SolverError),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl ScenarioError {
    /// 2 for unreadable or malformed input, 3 for violated preconditions,
    /// 4 for solver failures, 1 for output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse(_) => 2,
            ScenarioError::Precondition(_) => 3,
            ScenarioError::Solver(_) => 4,
            ScenarioError::Output(_) => 1,
        }
    }
}

impl From<IoError> for ScenarioError {
    fn from(e: IoError) -> Self {
        ScenarioError::Parse(e.to_string())
    }
}

impl From<SolverError> for ScenarioError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InnerNotConverged { .. }
            | SolverError::StepUnderflow { .. }
            | SolverError::NonFinite { .. } => ScenarioError::Solver(e),
            other => ScenarioError::Precondition(other.to_string()),
        }
    }
}

impl From<GraphError> for ScenarioError {
    fn from(e: GraphError) -> Self {
        ScenarioError::Precondition(e.to_string())
    }
}

impl From<analysis::AnalysisError> for ScenarioError {
    fn from(e: analysis::AnalysisError) -> Self {
        ScenarioError::Precondition(e.to_string())
    }
}

fn parse_field<T: std::str::FromStr>(spec: &str, what: &str, s: &str) -> Result<T, ScenarioError> {
    s.parse()
        .map_err(|_| ScenarioError::Parse(format!("`{spec}`: {what} `{s}` is not valid")))
}

/// Builds a graph from a generator spec. `seed` is used by `random:<n>`
/// when the generator string carries no seed of its own.
pub fn generate(spec: &str, seed: u64) -> Result<Graph, ScenarioError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let g = match parts.as_slice() {
        ["lattice", d, n] | ["lattice", d, n, "nohalo"] => lattice_box(&LatticeSpec::new(
            parse_field(spec, "dimension", d)?,
            parse_field(spec, "side", n)?,
            false,
        ))?,
        ["lattice", d, n, "halo"] => lattice_box(&LatticeSpec::new(
            parse_field(spec, "dimension", d)?,
            parse_field(spec, "side", n)?,
            true,
        ))?,
        ["path", n] => path(parse_field(spec, "length", n)?)?,
        ["cycle", n] => cycle(parse_field(spec, "length", n)?)?,
        ["two-node"] => two_node(),
        ["star", k] => star(parse_field(spec, "leaf count", k)?)?,
        ["random", n] | ["random", n, _] => {
            let n: usize = parse_field(spec, "size", n)?;
            let seed = match parts.get(2) {
                Some(s) => parse_field(spec, "seed", s)?,
                None => seed,
            };
            random_connected(n, n / 2, seed)?
        }
        _ => {
            return Err(ScenarioError::Parse(format!(
                "unknown generator spec `{spec}`"
            )))
        }
    };
    Ok(g)
}

fn node_list(g: &Graph, list: &str) -> Result<Vec<NodeId>, ScenarioError> {
    list.split(';')
        .map(|id| {
            g.node(id.trim())
                .map_err(|_| ScenarioError::Precondition(format!("unknown node `{}`", id.trim())))
        })
        .collect()
}

pub fn parse_boundary(g: &Graph, spec: &str) -> Result<Boundary, ScenarioError> {
    match spec.split_once(':') {
        None if spec == "neumann" => Ok(Boundary::Neumann),
        None if spec == "dirichlet" => Ok(Boundary::Dirichlet(DirichletTruncation::whole(g))),
        Some(("dirichlet", list)) => Ok(Boundary::Dirichlet(DirichletTruncation::new(
            g,
            &node_list(g, list)?,
        )?)),
        _ => Err(ScenarioError::Parse(format!(
            "unknown boundary spec `{spec}`"
        ))),
    }
}

/// Resolves an initial data spec; relative `file:` paths are taken from `base`.
pub fn initial_data(g: &Graph, spec: &str, base: &Path) -> Result<NodeFunction, ScenarioError> {
    let Some((kind, arg)) = spec.split_once(':') else {
        return Err(ScenarioError::Parse(format!(
            "initial data spec `{spec}` has no kind"
        )));
    };
    match kind {
        "delta" if arg == "center" => Ok(NodeFunction::delta(g, center_node(g))?),
        "delta" => {
            let v = g
                .node(arg)
                .map_err(|_| ScenarioError::Precondition(format!("unknown node `{arg}`")))?;
            Ok(NodeFunction::delta(g, v)?)
        }
        "indicator" => Ok(NodeFunction::indicator(g, &node_list(g, arg)?)?),
        "const" => Ok(NodeFunction::constant(
            g,
            parse_field(spec, "constant", arg)?,
        )),
        "file" => {
            let text = io::read_file(&base.join(arg))?;
            let mut f = NodeFunction::zeros(g);
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                let [id, value] = fields.as_slice() else {
                    return Err(ScenarioError::Parse(format!(
                        "{arg}:{}: expected `<id> <value>`",
                        i + 1
                    )));
                };
                let v = g.node(id).map_err(|_| {
                    ScenarioError::Parse(format!("{arg}:{}: unknown node `{id}`", i + 1))
                })?;
                let x: f64 = parse_field(spec, "value", value)?;
                if !x.is_finite() {
                    return Err(ScenarioError::Parse(format!(
                        "{arg}:{}: value is not finite",
                        i + 1
                    )));
                }
                f.values_mut()[v.0] = x;
            }
            Ok(f)
        }
        "expr" => eval_expression(g, arg),
        _ => Err(ScenarioError::Parse(format!(
            "unknown initial data kind `{kind}`"
        ))),
    }
}

fn eval_expression(g: &Graph, expr: &str) -> Result<NodeFunction, ScenarioError> {
    let tree = build_operator_tree::<DefaultNumericTypes>(expr)
        .map_err(|e| ScenarioError::Parse(format!("expression `{expr}`: {e}")))?;
    let mut values = Vec::with_capacity(g.node_count());
    for v in g.nodes() {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut set = |name: &str, x: f64| {
            ctx.set_value(name.to_string(), Value::Float(x))
                .expect("fresh context accepts variables");
        };
        set("i", v.0 as f64);
        set("nu", g.nu(v));
        if let Some(c) = g.coordinates(v) {
            for (k, &x) in c.iter().enumerate() {
                set(&format!("x{k}"), x as f64);
                if let Some(alias) = ["x", "y", "z"].get(k) {
                    set(alias, x as f64);
                }
            }
        }
        let x = tree.eval_number_with_context(&ctx).map_err(|e| {
            ScenarioError::Precondition(format!("expression `{expr}` at `{}`: {e}", g.id(v)))
        })?;
        if !x.is_finite() {
            return Err(ScenarioError::Precondition(format!(
                "expression `{expr}` is not finite at `{}`",
                g.id(v)
            )));
        }
        values.push(x);
    }
    Ok(NodeFunction::new(g, values)?)
}

fn neumann() -> String {
    "neumann".into()
}

/// One run: graph, exponent, boundary, initial data, horizon, integrator
/// settings and the checks to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    pub p: f64,
    #[serde(default = "neumann")]
    pub boundary: String,
    pub f0: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Defaults to [`SolverConfig::for_exponent`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// Any of `mass`, `positivity`, `lq1`, `lq2`, `lqinf`, `extinction`,
    /// `energy`.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Dimension for `extinction` bounds and `energy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Constant of the extinction bound; the Sobolev-chain heuristic when absent.
    #[serde(default, rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub with_mass: bool,
    /// Directory for relative paths; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(format!("scenario: {e}")))
    }

    /// Reads a JSON scenario; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let mut s = Self::from_json(&io::read_file(path)?)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(default_seed)
    }

    pub fn exponent(&self) -> Result<Exponent, ScenarioError> {
        Exponent::new(self.p).map_err(|e| ScenarioError::Precondition(e.to_string()))
    }

    pub fn config(&self) -> Result<SolverConfig, ScenarioError> {
        let cfg = match self.solver {
            Some(c) => c,
            None => SolverConfig::for_exponent(self.exponent()?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn graph(&self) -> Result<Graph, ScenarioError> {
        match (&self.graph_file, &self.generator) {
            (Some(f), None) => Ok(io::parse_graph_file(&self.base_dir.join(f))?),
            (None, Some(spec)) => generate(spec, self.seed()),
            _ => Err(ScenarioError::Parse(
                "exactly one of `graph_file` and `generator` must be given".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// True when `C` came from the Sobolev-chain heuristic.
    pub heuristic: bool,
    /// Empirical extinction time at or below `T0`.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: SolverConfig,
    pub config_hash: String,
    pub nodes: usize,
    pub edges: usize,
    pub samples: usize,
    pub final_time: f64,
    pub checks: Vec<PropertyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extinction: Option<ExtinctionRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyInequality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: String,
    pub report: ScenarioReport,
}

impl Artifacts {
    pub fn report_json(&self) -> Result<String, ScenarioError> {
        io::to_json(&self.report).map_err(|e| ScenarioError::Output(e.to_string()))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), ScenarioError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| ScenarioError::Output(format!("{}: {e}", dir.display())))?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        let put = |p: &Path, text: &str| {
            std::fs::write(p, text)
                .map_err(|e| ScenarioError::Output(format!("{}: {e}", p.display())))
        };
        put(&csv, &self.csv)?;
        put(&json, &self.report_json()?)?;
        Ok((csv, json))
    }
}

/// Heuristic constant of the extinction bound on `g`: `1/S` for the
/// Sobolev-chain constant `S` built from the estimated isoperimetric
/// constant.
pub fn heuristic_extinction_constant(
    g: &Graph,
    d: f64,
    p: f64,
    seed: u64,
) -> Result<f64, ScenarioError> {
    let opts = IsoOptions {
        sampling: Some(Sampling {
            seed,
            ..Sampling::default()
        }),
        ..IsoOptions::default()
    };
    let iso = isoperimetric_constant(g, d, &opts)?;
    Ok(sobolev_reference(g, d, p, iso.value)?.extinction_constant())
}

/// Tolerance for mass drift: tight for the explicit integrator, a multiple
/// of the inner tolerance for the implicit one.
pub fn mass_tolerance(cfg: &SolverConfig) -> f64 {
    match cfg.method {
        Method::ExplicitAdaptive => 1e-12,
        Method::ImplicitEuler => 10.0 * cfg.inner_tol,
    }
}

/// Tolerance for order, contraction and monotonicity margins.
pub fn property_tolerance(cfg: &SolverConfig) -> f64 {
    1e-9 + cfg.tolerance()
}

/// Runs a scenario and assembles its artifacts without touching the disk
/// (apart from reading inputs).
pub fn execute(s: &Scenario) -> Result<Artifacts, ScenarioError> {
    let g = s.graph()?;
    let p = s.exponent()?;
    let cfg = s.config()?;
    let bc = parse_boundary(&g, &s.boundary)?;
    let f0 = initial_data(&g, &s.f0, &s.base_dir)?;
    if !(s.horizon > 0.0 && s.horizon.is_finite()) {
        return Err(ScenarioError::Precondition(format!(
            "horizon T must be positive, got {}",
            s.horizon
        )));
    }
    let seed = s.seed();
    let traj = evolve(&g, &bc, p, &f0, s.horizon, &cfg)?;
    let mut checks = Vec::new();
    let mut extinction = None;
    let mut bound = None;
    let mut energy = None;
    let need_d = |what: &str| {
        s.d.ok_or_else(|| ScenarioError::Precondition(format!("check `{what}` needs `d`")))
    };
    for name in &s.checks {
        match name.as_str() {
            "mass" => checks.push(check_mass_conservation(&g, &traj, mass_tolerance(&cfg))?),
            "positivity" => checks.push(check_positivity(&g, &traj, property_tolerance(&cfg))?),
            "lq1" | "lq:1" => checks.push(check_lq_monotonicity(
                &g,
                &traj,
                1.0,
                property_tolerance(&cfg),
            )?),
            "lq2" | "lq:2" => checks.push(check_lq_monotonicity(
                &g,
                &traj,
                2.0,
                property_tolerance(&cfg),
            )?),
            "lqinf" | "lq:inf" => checks.push(check_lq_monotonicity(
                &g,
                &traj,
                f64::INFINITY,
                property_tolerance(&cfg),
            )?),
            "energy" => {
                energy = Some(energy_inequality_check(
                    &g,
                    &traj,
                    need_d("energy")?,
                    s.p,
                    0.0,
                )?)
            }
            "extinction" => {
                if !matches!(bc, Boundary::Dirichlet(_)) {
                    return Err(ScenarioError::Precondition(
                        "check `extinction` needs a Dirichlet boundary".into(),
                    ));
                }
                let inputs = match s.d {
                    Some(d) => {
                        let (c, heuristic) = match s.c {
                            Some(c) => (c, false),
                            None => (heuristic_extinction_constant(&g, d, s.p, seed)?, true),
                        };
                        Some((BoundInputs { d, c }, heuristic))
                    }
                    None => None,
                };
                let rec = extinction_time(&g, &bc, p, &f0, s.horizon, &cfg, inputs.map(|i| i.0))?;
                if let (Some((b, heuristic)), Some(t0)) = (inputs, rec.bound_t0) {
                    bound = Some(BoundSummary {
                        t0,
                        c: b.c,
                        heuristic,
                        holds: rec.time.map(|t| t <= t0),
                    });
                }
                extinction = Some(rec);
            }
            other => return Err(ScenarioError::Parse(format!("unknown check `{other}`"))),
        }
    }
    let csv = io::trajectory_csv(&g, &traj, s.with_mass)
        .map_err(|e| ScenarioError::Output(e.to_string()))?;
    Ok(Artifacts {
        csv,
        report: ScenarioReport {
            scenario: s.clone(),
            seed,
            config: cfg,
            config_hash: cfg.hash(),
            nodes: g.node_count(),
            edges: g.edge_count(),
            samples: traj.len(),
            final_time: traj.final_time(),
            checks,
            extinction,
            bound,
            energy,
        },
    })
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub exit_code: i32,
    pub artifacts: Option<Artifacts>,
    pub error: Option<ScenarioError>,
}

/// Runs a scenario; exit code 0 on success, otherwise the error category.
pub fn run_scenario(s: &Scenario) -> ScenarioOutcome {
    match execute(s) {
        Ok(a) => ScenarioOutcome {
            exit_code: 0,
            artifacts: Some(a),
            error: None,
        },
        Err(e) => ScenarioOutcome {
            exit_code: e.exit_code(),
            artifacts: None,
            error: Some(e),
        },
    }
}

/// Runs independent scenarios on up to `workers` threads, one scenario per
/// worker at a time. Outcomes are returned in input order.
pub fn run_batch(scenarios: &[Scenario], workers: usize) -> Vec<ScenarioOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<ScenarioOutcome>>> =
        scenarios.iter().map(|_| Mutex::new(None)).collect();
    let workers = workers.clamp(1, scenarios.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = scenarios.get(i) else { break };
                let out = run_scenario(s);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock")
                .expect("every scenario ran")
        })
        .collect()
}
