//! Time integration of `dφ/dt = −L_p φ` (Neumann) or `−L^(n)_p φ` (Dirichlet).
//!
//! Two integrators are available. The explicit one is an embedded
//! Dormand–Prince 5(4) pair with PI step control and continuous output; it is
//! the default for `p ≥ 2`. For `p < 2` the vector field is not Lipschitz
//! where edge differences vanish, so the default is backward Euler realized as
//! a proximal minimization.
//!
//! Output is always sampled on the uniform grid `k·dense_output_every`,
//! independent of the internal steps.

mod explicit;
mod implicit;
mod linear;

pub use implicit::{InnerMethod, InnerOptions, ProximalOutcome};
pub use linear::{linear_reference, LinearReference, DENSE_NODE_CAP};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis;
use crate::graph::{ExhaustionFamily, Graph, GraphError, NodeFunction};
use crate::operator::{apply, Boundary, DirichletTruncation, Exponent, OperatorError};

use explicit::Explicit;
use implicit::Proximal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("inner proximal solve stopped after {iterations} iterations with residual {residual:e} (target {tol:e})")]
    InnerNotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("step size underflow at t = {t} (h = {h:e}); the field is stiff or non-Lipschitz here, use the implicit method")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state near t = {t}")]
    NonFinite { t: f64 },
    #[error("graph has {nodes} nodes, above the dense cap of {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error("initial data is nonzero at `{0}`, outside the first exhaustion level")]
    SupportEscapes(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExplicitAdaptive,
    ImplicitEuler,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ExplicitAdaptive => "explicit-adaptive",
            Method::ImplicitEuler => "implicit-euler",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "explicit-adaptive" | "explicit" => Ok(Method::ExplicitAdaptive),
            "implicit-euler" | "implicit" => Ok(Method::ImplicitEuler),
            other => Err(SolverError::InvalidConfig(format!(
                "unknown method `{other}`"
            ))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_smoothing() -> f64 {
    0.0
}

fn default_max_steps() -> u64 {
    50_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    pub dt: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub extinction_eps: f64,
    pub dense_output_every: f64,
    #[serde(default)]
    pub inner_method: InnerMethod,
    /// Extra curvature floor of the Newton model for `p < 2`; zero leaves
    /// only the rounding-level floor.
    #[serde(default = "default_smoothing")]
    pub smoothing_radius: f64,
    /// End the run once extinction has been sustained for three samples.
    #[serde(default = "default_true")]
    pub stop_on_extinction: bool,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::ExplicitAdaptive,
            atol: 1e-12,
            rtol: 1e-9,
            dt: 1e-3,
            inner_tol: 1e-10,
            inner_max_iter: 200,
            extinction_eps: 1e-12,
            dense_output_every: 0.01,
            inner_method: InnerMethod::Newton,
            smoothing_radius: default_smoothing(),
            stop_on_extinction: true,
            max_steps: default_max_steps(),
        }
    }
}

impl SolverConfig {
    /// Defaults with the integrator suited to `p`: implicit below 2.
    pub fn for_exponent(p: Exponent) -> Self {
        Self {
            method: if p.value() < 2.0 {
                Method::ImplicitEuler
            } else {
                Method::ExplicitAdaptive
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("atol", self.atol),
            ("rtol", self.rtol),
            ("dt", self.dt),
            ("inner_tol", self.inner_tol),
            ("extinction_eps", self.extinction_eps),
            ("dense_output_every", self.dense_output_every),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.smoothing_radius >= 0.0 && self.smoothing_radius.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "smoothing_radius must be nonnegative and finite, got {}",
                self.smoothing_radius
            )));
        }
        if self.inner_max_iter == 0 {
            return Err(SolverError::InvalidConfig(
                "inner_max_iter must be at least 1".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(SolverError::InvalidConfig(
                "max_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn inner_options(&self) -> InnerOptions {
        InnerOptions {
            tol: self.inner_tol,
            max_iter: self.inner_max_iter,
            method: self.inner_method,
            smoothing: self.smoothing_radius,
        }
    }

    /// Tolerance scale used by property checks on trajectories of this config.
    pub fn tolerance(&self) -> f64 {
        match self.method {
            Method::ExplicitAdaptive => self.atol + self.rtol,
            Method::ImplicitEuler => self.inner_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub p: f64,
    pub boundary: String,
    pub method: String,
    pub config_hash: String,
}

/// Sampled solution: `times[0] = 0`, strictly increasing, one state per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NodeFunction>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<NodeFunction>,
        meta: TrajectoryMeta,
    ) -> Result<Self, SolverError> {
        if times.is_empty() || times.len() != states.len() {
            return Err(SolverError::InvalidInput(format!(
                "{} times for {} states",
                times.len(),
                states.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(SolverError::InvalidInput(
                "trajectory must start at t = 0".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::InvalidInput(
                "times must increase strictly".into(),
            ));
        }
        let n = states[0].len();
        if states.iter().any(|s| s.len() != n) {
            return Err(SolverError::InvalidInput(
                "states have different sizes".into(),
            ));
        }
        Ok(Self {
            times,
            states,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn final_state(&self) -> &NodeFunction {
        self.states.last().expect("nonempty")
    }

    /// Index of the sample whose time is within `1e-9` of `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn state_at(&self, t: f64) -> Option<&NodeFunction> {
        self.index_of(t).map(|i| &self.states[i])
    }
}

/// `−L_p f` (Neumann) or `−L^(n)_p f` (Dirichlet).
pub fn rhs(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f: &NodeFunction,
) -> Result<NodeFunction, SolverError> {
    let mut out = apply(g, bc, p, f)?.into_values();
    out.iter_mut().for_each(|v| *v = -*v);
    Ok(NodeFunction::from_vec_unchecked(out))
}

/// One backward Euler step of length `tau`.
pub fn proximal_step(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f_prev: &NodeFunction,
    tau: f64,
    inner_tol: f64,
    inner_max_iter: usize,
) -> Result<NodeFunction, SolverError> {
    let opts = InnerOptions {
        tol: inner_tol,
        max_iter: inner_max_iter,
        ..InnerOptions::default()
    };
    Ok(NodeFunction::from_vec_unchecked(
        proximal_step_with(g, bc, p, f_prev, tau, &opts)?.u,
    ))
}

/// [`proximal_step`] with full inner options and iteration statistics.
pub fn proximal_step_with(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f_prev: &NodeFunction,
    tau: f64,
    opts: &InnerOptions,
) -> Result<ProximalOutcome, SolverError> {
    f_prev.check_domain(g)?;
    bc.check_domain(g)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SolverError::InvalidInput(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(SolverError::InvalidConfig(
            "inner tolerance must be positive and the iteration cap at least 1".into(),
        ));
    }
    Proximal::new(g, bc, p, *opts).solve(f_prev.values(), tau)
}

fn sup_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Advances a state by arbitrary durations with the configured integrator.
struct Advancer<'a> {
    g: &'a Graph,
    bc: &'a Boundary,
    p: Exponent,
    cfg: &'a SolverConfig,
}

impl Advancer<'_> {
    /// Samples the solution from `y0` at `t0 + k·every` for `k = 1..=count`,
    /// calling `visit` after each; `visit` returns `false` to stop early.
    fn run(
        &self,
        y0: Vec<f64>,
        every: f64,
        count: usize,
        mut visit: impl FnMut(f64, &[f64]) -> bool,
    ) -> Result<(), SolverError> {
        let sample = |k: usize| k as f64 * every;
        match self.cfg.method {
            Method::ExplicitAdaptive => {
                let mut ex = Explicit::new(
                    self.g,
                    self.bc,
                    self.p,
                    self.cfg.atol,
                    self.cfg.rtol,
                    0.0,
                    y0,
                    sample(count),
                );
                let mut buf = vec![0.0; ex.y.len()];
                let mut k = 1;
                let t_end = sample(count);
                while k <= count {
                    let seg = ex.step(t_end)?;
                    if ex.steps > self.cfg.max_steps {
                        return Err(SolverError::InvalidConfig(format!(
                            "step budget of {} exhausted at t = {}",
                            self.cfg.max_steps, ex.t
                        )));
                    }
                    while k <= count && sample(k) <= ex.t {
                        let y: &[f64] = if sample(k) == ex.t {
                            &ex.y
                        } else {
                            seg.eval_into(sample(k), &mut buf);
                            &buf
                        };
                        if !visit(sample(k), y) {
                            return Ok(());
                        }
                        k += 1;
                    }
                }
                Ok(())
            }
            Method::ImplicitEuler => {
                let mut prox = Proximal::new(self.g, self.bc, self.p, self.cfg.inner_options());
                let mut y = y0;
                let mut t = 0.0;
                let dt = self.cfg.dt;
                for k in 1..=count {
                    let target = sample(k);
                    while t < target {
                        let remaining = target - t;
                        // land exactly on sample times; avoid sliver steps
                        let tau = if remaining <= dt * (1.0 + 1e-9) {
                            remaining
                        } else if remaining < 1.5 * dt {
                            remaining / 2.0
                        } else {
                            dt
                        };
                        y = prox.solve(&y, tau)?.u;
                        t = if tau == remaining { target } else { t + tau };
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(SolverError::NonFinite { t });
                    }
                    if !visit(target, &y) {
                        return Ok(());
                    }
                }
                Ok(())
            }
        }
    }

    /// State after evolving `y0` for exactly `dur`.
    fn advance(&self, y0: &[f64], dur: f64) -> Result<Vec<f64>, SolverError> {
        let mut out = y0.to_vec();
        self.run(y0.to_vec(), dur, 1, |_, y| {
            out.copy_from_slice(y);
            true
        })?;
        Ok(out)
    }
}

fn prepare(
    g: &Graph,
    bc: &Boundary,
    f0: &NodeFunction,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, SolverError> {
    cfg.validate()?;
    f0.check_domain(g)?;
    bc.check_domain(g)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SolverError::InvalidInput(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    if f0.values().iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidInput(
            "initial data must be finite".into(),
        ));
    }
    let mut y = f0.values().to_vec();
    // Dirichlet data is zero-extended outside V_n
    if let Boundary::Dirichlet(tr) = bc {
        for (v, x) in y.iter_mut().enumerate() {
            if !tr.inside_mask()[v] {
                *x = 0.0;
            }
        }
    }
    Ok(y)
}

fn meta(bc: &Boundary, p: Exponent, cfg: &SolverConfig) -> TrajectoryMeta {
    TrajectoryMeta {
        p: p.value(),
        boundary: bc.label().to_string(),
        method: cfg.method.label().to_string(),
        config_hash: cfg.hash(),
    }
}

/// Number of samples `K` with `K·every ≥ horizon`.
fn sample_count(horizon: f64, every: f64) -> usize {
    ((horizon / every) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Solves on `[0, T]`, sampling every `cfg.dense_output_every`. When
/// `cfg.stop_on_extinction` is set the run ends once the sup norm has stayed
/// at or below `cfg.extinction_eps` for three consecutive samples.
pub fn evolve(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f0: &NodeFunction,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    let y0 = prepare(g, bc, f0, horizon, cfg)?;
    let every = cfg.dense_output_every;
    let count = sample_count(horizon, every);
    let mut times = vec![0.0];
    let mut below = usize::from(sup_abs(&y0) <= cfg.extinction_eps);
    let mut states = vec![NodeFunction::from_vec_unchecked(y0.clone())];
    let adv = Advancer { g, bc, p, cfg };
    adv.run(y0, every, count, |t, y| {
        times.push(t);
        states.push(NodeFunction::from_vec_unchecked(y.to_vec()));
        if sup_abs(y) <= cfg.extinction_eps {
            below += 1;
        } else {
            below = 0;
        }
        !(cfg.stop_on_extinction && below >= 3)
    })?;
    Trajectory::new(times, states, meta(bc, p, cfg))
}

/// Inputs of the analytic extinction bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub d: f64,
    /// The constant `C` of the bound formula.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionRecord {
    pub extinct: bool,
    /// First time at which the sup norm is known to be at or below the
    /// threshold, refined by bisection; `None` when not extinct.
    pub time: Option<f64>,
    /// Width of the final bisection bracket.
    pub resolution: f64,
    #[serde(rename = "bound_T0")]
    pub bound_t0: Option<f64>,
}

/// Runs until sustained extinction or `horizon`, then localizes the first
/// crossing by bisection to within `min(dt, dense_output_every)/8`.
pub fn extinction_time(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f0: &NodeFunction,
    horizon: f64,
    cfg: &SolverConfig,
    bound: Option<BoundInputs>,
) -> Result<ExtinctionRecord, SolverError> {
    let cfg = SolverConfig {
        stop_on_extinction: true,
        ..*cfg
    };
    let bound_t0 = match bound {
        Some(b) => {
            let pv = p.value();
            let m = b.d * (2.0 / pv - 1.0);
            let norm = analysis::lq_norm(g, f0, m)
                .map_err(|e| SolverError::InvalidInput(e.to_string()))?;
            Some(
                analysis::extinction_bound(b.d, pv, b.c, norm)
                    .map_err(|e| SolverError::InvalidInput(e.to_string()))?
                    .t0,
            )
        }
        None => None,
    };
    let traj = evolve(g, bc, p, f0, horizon, &cfg)?;
    let eps = cfg.extinction_eps;
    let below: Vec<bool> = traj
        .states
        .iter()
        .map(|s| sup_abs(s.values()) <= eps)
        .collect();
    let n = below.len();
    let tail = below.iter().rev().take_while(|&&b| b).count();
    let sustained = (tail >= 3).then(|| n - tail);
    let resolution = cfg.dt.min(cfg.dense_output_every) / 8.0;
    let Some(i) = sustained else {
        return Ok(ExtinctionRecord {
            extinct: false,
            time: None,
            resolution,
            bound_t0,
        });
    };
    if i == 0 {
        return Ok(ExtinctionRecord {
            extinct: true,
            time: Some(0.0),
            resolution: 0.0,
            bound_t0,
        });
    }
    let adv = Advancer {
        g,
        bc,
        p,
        cfg: &cfg,
    };
    let base = traj.states[i - 1].values();
    let (mut lo, mut hi) = (0.0, traj.times[i] - traj.times[i - 1]);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let y = adv.advance(base, mid)?;
        if sup_abs(&y) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ExtinctionRecord {
        extinct: true,
        time: Some(traj.times[i - 1] + hi),
        resolution: hi - lo,
        bound_t0,
    })
}

/// Result of solving the truncated problems of an exhaustion family.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionRun {
    /// One trajectory per level, on the ambient node set.
    pub trajectories: Vec<Trajectory>,
    /// `gaps[k][j] = ‖φ_k(t_j) − φ_{k+1}(t_j)‖_{ℓ²_ν}` on the shared grid.
    pub gaps: Vec<Vec<f64>>,
    /// Largest `φ_k(t,v) − φ_{k+1}(t,v)` over shared samples; nonpositive
    /// when the family is monotone in `k`.
    pub monotonicity_violation: f64,
}

impl ExhaustionRun {
    /// Gap between consecutive levels at time `t`.
    pub fn gaps_at(&self, t: f64) -> Option<Vec<f64>> {
        let j = self.trajectories[0].index_of(t)?;
        self.gaps.iter().map(|row| row.get(j).copied()).collect()
    }
}

/// Solves the Dirichlet problem on every level of `fam` over the ambient
/// graph. Extinction never cuts these runs short so all grids align.
pub fn exhaustion_evolve(
    fam: &ExhaustionFamily,
    p: Exponent,
    f0: &NodeFunction,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<ExhaustionRun, SolverError> {
    let g = fam.ambient();
    f0.check_domain(g)?;
    let first = g.mask(fam.subset(0))?;
    if let Some(v) = g.nodes().find(|v| !first[v.0] && f0[*v] != 0.0) {
        return Err(SolverError::SupportEscapes(g.id(v).to_string()));
    }
    let cfg = SolverConfig {
        stop_on_extinction: false,
        ..*cfg
    };
    let trajectories = fam
        .subsets()
        .iter()
        .map(|s| {
            let bc = Boundary::Dirichlet(DirichletTruncation::new(g, s)?);
            evolve(g, &bc, p, f0, horizon, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut gaps = Vec::new();
    let mut violation = f64::NEG_INFINITY;
    for pair in trajectories.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let len = a.len().min(b.len());
        let mut row = Vec::with_capacity(len);
        for j in 0..len {
            let (x, y) = (a.states[j].values(), b.states[j].values());
            let mut s = 0.0;
            for v in 0..x.len() {
                let d = x[v] - y[v];
                s += g.nu_slice()[v] * d * d;
                violation = violation.max(d);
            }
            row.push(s.sqrt());
        }
        gaps.push(row);
    }
    Ok(ExhaustionRun {
        trajectories,
        gaps,
        monotonicity_violation: if violation.is_finite() {
            violation
        } else {
            0.0
        },
    })
}
