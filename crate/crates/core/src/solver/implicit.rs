//! Backward Euler through the proximal map of the p-energy.
//!
//! One step minimizes `F(u) = (1/2τ)‖u − f‖²_ν + E(u)`; the minimizer solves
//! `u − f + τ L u = 0`. Damped Newton uses the exact Hessian of `F` except that
//! for `p < 2` the curvature `(p−1)|d|^{p−2}` is evaluated at `max(|d|, ε)`
//! with `ε` at the rounding level of the values involved, so the model stays
//! finite while the objective and the stopping residual remain unsmoothed.
//! A step is accepted only if it decreases `F` and does not overshoot the
//! line minimizer by much; the full Newton step on a `|d|^p` term with
//! `p < 2` lands near `−d`, which plain Armijo backtracking accepts.

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::operator::{apply_into, energy_raw, g_p, Boundary, Exponent};

use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    #[default]
    Newton,
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: InnerMethod,
    /// Extra curvature floor radius for `p < 2`, on top of the rounding
    /// level of the values involved.
    pub smoothing: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            method: InnerMethod::Newton,
            smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// `‖u − f + τ L u‖_ν` at return.
    pub residual: f64,
}

/// Spacing of doubles near `x`, with margin: differences of two values of
/// this size are not resolved more finely.
fn rounding(x: f64) -> f64 {
    16.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE)
}

pub(crate) struct Proximal<'a> {
    g: &'a Graph,
    bc: &'a Boundary,
    p: Exponent,
    opts: InnerOptions,
    /// Nodes carrying unknowns; Dirichlet outsiders stay at zero.
    active: Vec<bool>,
    total_nu: f64,
    lap: Vec<f64>,
}

impl<'a> Proximal<'a> {
    pub fn new(g: &'a Graph, bc: &'a Boundary, p: Exponent, opts: InnerOptions) -> Self {
        let active = match bc {
            Boundary::Neumann => vec![true; g.node_count()],
            Boundary::Dirichlet(tr) => tr.inside_mask().to_vec(),
        };
        Self {
            g,
            bc,
            p,
            opts,
            active,
            total_nu: g.total_nu(),
            lap: vec![0.0; g.node_count()],
        }
    }

    fn norm_nu(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.g.nu_slice())
            .map(|(v, nu)| nu * v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn objective(&self, u: &[f64], f: &[f64], tau: f64) -> f64 {
        let quad: f64 = u
            .iter()
            .zip(f)
            .zip(self.g.nu_slice())
            .map(|((a, b), nu)| nu * (a - b) * (a - b))
            .sum();
        quad / (2.0 * tau) + energy_raw(self.g, self.bc, self.p, u)
    }

    /// Gradient of `F` with respect to the Euclidean pairing, zero on inactive
    /// nodes, and the ν-norm of the residual `u − f + τ L u`.
    fn gradient(&mut self, u: &[f64], f: &[f64], tau: f64, grad: &mut [f64]) -> f64 {
        apply_into(self.g, self.bc, self.p, u, &mut self.lap);
        let mut res2 = 0.0;
        for v in 0..u.len() {
            if !self.active[v] {
                grad[v] = 0.0;
                continue;
            }
            let nu = self.g.nu_slice()[v];
            let r = u[v] - f[v] + tau * self.lap[v];
            res2 += nu * r * r;
            grad[v] = nu * r / tau;
        }
        res2.sqrt()
    }

    fn curvature(&self, d: f64, floor: f64) -> f64 {
        let p = self.p.value();
        if p == 2.0 {
            1.0
        } else if p < 2.0 {
            (p - 1.0) * d.abs().max(floor).powf(p - 2.0)
        } else {
            (p - 1.0) * d.abs().powf(p - 2.0)
        }
    }

    /// Solves the proximal problem starting from `u = f`.
    pub fn solve(&mut self, f: &[f64], tau: f64) -> Result<ProximalOutcome, SolverError> {
        let n = f.len();
        let mut u: Vec<f64> = f
            .iter()
            .zip(&self.active)
            .map(|(&x, &a)| if a { x } else { 0.0 })
            .collect();
        let target = self.opts.tol * self.norm_nu(f).max(1.0);
        let mass_f = self.mass(f);
        let mut grad = vec![0.0; n];
        let mut dir = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial_grad = vec![0.0; n];
        let mut res = self.gradient(&u, f, tau, &mut grad);
        let mut obj = self.objective(&u, f, tau);
        let mut gd_step = tau;
        for iter in 0..self.opts.max_iter {
            if res <= target || res <= self.residual_floor(&u, tau) {
                return Ok(ProximalOutcome {
                    u,
                    iterations: iter,
                    residual: res,
                });
            }
            match self.opts.method {
                InnerMethod::Newton => self.newton_direction(&u, tau, &grad, &mut dir),
                InnerMethod::GradientDescent => {
                    for v in 0..n {
                        dir[v] = -gd_step * grad[v] / self.g.nu_slice()[v];
                    }
                }
            }
            let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                // numerically flat direction; fall back to steepest descent
                for v in 0..n {
                    dir[v] = -gd_step * grad[v] / self.g.nu_slice()[v];
                }
            }
            let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            // F is convex along the line, so when the full step fails the
            // sign of the directional derivative brackets the minimizer;
            // plain halving would bounce between mirror points of |d|^p terms
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for v in 0..n {
                    trial[v] = u[v] + alpha * dir[v];
                }
                if matches!(self.bc, Boundary::Neumann) {
                    self.restore_mass(&mut trial, mass_f);
                }
                let t_obj = self.objective(&trial, f, tau);
                let armijo = t_obj <= obj + 1e-4 * alpha * slope;
                let t_res = self.gradient(&trial, f, tau, &mut trial_grad);
                // below rounding level of F the residual decides
                let flat =
                    (t_obj - obj).abs() <= 1e-13 * obj.abs().max(f64::MIN_POSITIVE) && t_res < res;
                let deriv: f64 = trial_grad
                    .iter()
                    .zip(trial.iter().zip(&u))
                    .map(|(gr, (a, b))| gr * (a - b))
                    .sum::<f64>()
                    / alpha;
                // rejects overshoot, also at alpha = 1
                let curvature_ok = deriv <= 0.5 * slope.abs();
                if flat || (armijo && curvature_ok) {
                    std::mem::swap(&mut u, &mut trial);
                    std::mem::swap(&mut grad, &mut trial_grad);
                    obj = t_obj;
                    res = t_res;
                    accepted = true;
                    break;
                }
                if deriv > 0.0 || !t_obj.is_finite() {
                    hi = alpha;
                } else {
                    lo = alpha;
                }
                alpha = 0.5 * (lo + hi);
            }
            if self.opts.method == InnerMethod::GradientDescent {
                gd_step = if alpha == 1.0 {
                    gd_step * 2.0
                } else {
                    gd_step * alpha
                };
            }
            if !accepted {
                break;
            }
        }
        if res <= target || res <= self.residual_floor(&u, tau) {
            return Ok(ProximalOutcome {
                u,
                iterations: self.opts.max_iter,
                residual: res,
            });
        }
        Err(SolverError::InnerNotConverged {
            iterations: self.opts.max_iter,
            residual: res,
            tol: target,
        })
    }

    /// Residual that perturbing every node value by a few ulps can produce.
    /// For `p` near 1 the exact minimizer may need node differences far below
    /// the spacing of doubles, so the target is unreachable below this level.
    fn residual_floor(&self, u: &[f64], tau: f64) -> f64 {
        let g = self.g;
        let p = self.p;
        let ulps = |x: f64| 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE);
        let spread = |d: f64, e: f64| g_p(p, d.abs() + e) - g_p(p, d.abs() - e);
        let mut band = vec![0.0; u.len()];
        for e in g.edges() {
            let (t, h) = (e.tail.0, e.head.0);
            if self.active[t] && self.active[h] {
                let w = e.mu * spread(u[h] - u[t], ulps(u[h].abs().max(u[t].abs())));
                band[t] += w;
                band[h] += w;
            }
        }
        if let Boundary::Dirichlet(tr) = self.bc {
            for (v, &a) in tr.absorption_slice().iter().enumerate() {
                if self.active[v] && a > 0.0 {
                    band[v] += a * spread(u[v], ulps(u[v].abs()));
                }
            }
        }
        band.iter()
            .zip(g.nu_slice())
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|((b, nu), _)| {
                let r = tau * b / nu;
                nu * r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    fn mass(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.g.nu_slice()).map(|(a, nu)| a * nu).sum()
    }

    /// Shifting by a constant leaves `E` unchanged and the optimal shift
    /// matches the mass of `f`.
    fn restore_mass(&self, x: &mut [f64], mass_f: f64) {
        let shift = (mass_f - self.mass(x)) / self.total_nu;
        if shift != 0.0 {
            x.iter_mut().for_each(|v| *v += shift);
        }
    }

    /// Approximately solves `H dir = −grad` by Jacobi-preconditioned CG.
    fn newton_direction(&self, u: &[f64], tau: f64, grad: &[f64], dir: &mut [f64]) {
        let g = self.g;
        let n = u.len();
        let active = &self.active;
        let weights: Vec<f64> = g
            .edges()
            .iter()
            .map(|e| {
                if active[e.tail.0] && active[e.head.0] {
                    e.mu * self.curvature(
                        u[e.head.0] - u[e.tail.0],
                        rounding(u[e.head.0].abs().max(u[e.tail.0].abs())).max(self.opts.smoothing),
                    )
                } else {
                    0.0
                }
            })
            .collect();
        let mut diag: Vec<f64> = (0..n)
            .map(|v| {
                if active[v] {
                    g.nu_slice()[v] / tau
                } else {
                    1.0
                }
            })
            .collect();
        if let Boundary::Dirichlet(tr) = self.bc {
            for v in 0..n {
                let a = tr.absorption_slice()[v];
                if active[v] && a > 0.0 {
                    diag[v] +=
                        a * self.curvature(u[v], f64::MIN_POSITIVE.sqrt().max(self.opts.smoothing));
                }
            }
        }
        let mut precond = diag.clone();
        for (e, w) in g.edges().iter().zip(&weights) {
            precond[e.tail.0] += w;
            precond[e.head.0] += w;
        }
        let hess = |x: &[f64], out: &mut [f64]| {
            for v in 0..n {
                out[v] = if active[v] { diag[v] * x[v] } else { 0.0 };
            }
            for (e, &w) in g.edges().iter().zip(&weights) {
                if w != 0.0 {
                    let d = w * (x[e.head.0] - x[e.tail.0]);
                    out[e.head.0] += d;
                    out[e.tail.0] -= d;
                }
            }
        };
        let b: Vec<f64> = grad.iter().map(|x| -x).collect();
        let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x = 0.0);
        if bnorm == 0.0 {
            return;
        }
        let mut r = b;
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, m)| a / m).collect();
        let mut q = z.clone();
        let mut hq = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let tol = 1e-13 * bnorm;
        for _ in 0..(4 * n + 50) {
            hess(&q, &mut hq);
            let qhq: f64 = q.iter().zip(&hq).map(|(a, b)| a * b).sum();
            if !(qhq > 0.0) {
                break;
            }
            let a = rz / qhq;
            for v in 0..n {
                dir[v] += a * q[v];
                r[v] -= a * hq[v];
            }
            if r.iter().map(|x| x * x).sum::<f64>().sqrt() <= tol {
                break;
            }
            for v in 0..n {
                z[v] = r[v] / precond[v];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for v in 0..n {
                q[v] = z[v] + beta * q[v];
            }
        }
    }
}
