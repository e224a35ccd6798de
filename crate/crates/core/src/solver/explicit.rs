//! Dormand–Prince 5(4) with PI step control and 4th-order dense output.

use crate::graph::Graph;
use crate::operator::{apply_into, Boundary, Exponent};

use super::SolverError;

// The field is autonomous, so the stage nodes c_i never appear.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Continuous extension over the last accepted step.
pub(crate) struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let s1 = 1.0 - s;
        let [c0, c1, c2, c3, c4] = &self.cont;
        for i in 0..out.len() {
            out[i] = c0[i] + s * (c1[i] + s1 * (c2[i] + s * (c3[i] + s1 * c4[i])));
        }
    }
}

pub(crate) struct Explicit<'a> {
    g: &'a Graph,
    bc: &'a Boundary,
    p: Exponent,
    atol: f64,
    rtol: f64,
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    err_old: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    pub steps: u64,
    pub rejected: u64,
}

impl<'a> Explicit<'a> {
    pub fn new(
        g: &'a Graph,
        bc: &'a Boundary,
        p: Exponent,
        atol: f64,
        rtol: f64,
        t0: f64,
        y0: Vec<f64>,
        h_max: f64,
    ) -> Self {
        let n = y0.len();
        let mut s = Self {
            g,
            bc,
            p,
            atol,
            rtol,
            t: t0,
            y: y0,
            h: 0.0,
            err_old: 1e-4,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            steps: 0,
            rejected: 0,
        };
        s.field(0, false);
        s.h = s.initial_step(h_max);
        s
    }

    /// `k[slot] = −L(x)` with `x = tmp` or `x = y`.
    fn field(&mut self, slot: usize, at_tmp: bool) {
        let x = if at_tmp { &self.tmp } else { &self.y };
        apply_into(self.g, self.bc, self.p, x, &mut self.k[slot]);
        self.k[slot].iter_mut().for_each(|v| *v = -*v);
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self, h_max: f64) -> f64 {
        let n = self.y.len();
        let (mut d0, mut d1) = (0.0f64, 0.0f64);
        for i in 0..n {
            let sk = self.atol + self.rtol * self.y[i].abs();
            d0 = d0.max((self.y[i] / sk).abs());
            d1 = d1.max((self.k[0][i] / sk).abs());
        }
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(h_max);
        for i in 0..n {
            self.tmp[i] = self.y[i] + h0 * self.k[0][i];
        }
        self.field(1, true);
        let mut d2 = 0.0f64;
        for i in 0..n {
            let sk = self.atol + self.rtol * self.y[i].abs();
            d2 = d2.max(((self.k[1][i] - self.k[0][i]) / sk).abs());
        }
        d2 /= h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_max)
    }

    /// Takes one accepted step not crossing `t_stop` and returns its
    /// continuous extension.
    pub fn step(&mut self, t_stop: f64) -> Result<DenseSegment, SolverError> {
        let n = self.y.len();
        loop {
            let mut h = self.h;
            let remaining = t_stop - self.t;
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(SolverError::StepUnderflow { t: self.t, h });
            }
            self.stages(h);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sk = self.scale(self.y[i], self.y_new[i]);
                err = err.max((e / sk).abs());
            }
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                self.rejected += 1;
                self.h = h * MIN_FACTOR;
                if self.h <= 1e-14 * self.t.abs().max(1.0) {
                    return Err(SolverError::NonFinite { t: self.t });
                }
                continue;
            }
            let expo = 0.2 - BETA * 0.75;
            if err <= 1.0 {
                let fac = (err.max(1e-16).powf(expo) / self.err_old.powf(BETA) / SAFETY)
                    .clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                self.err_old = err.max(1e-4);
                let seg = self.dense(h);
                self.t = if last { t_stop } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                // first-same-as-last
                self.k.swap(0, 6);
                self.steps += 1;
                // a step shortened to land on t_stop keeps the controller's proposal
                let proposal = h / fac;
                self.h = if last { self.h.max(proposal) } else { proposal };
                return Ok(seg);
            }
            self.rejected += 1;
            let fac = (err.powf(expo) / SAFETY).min(1.0 / MIN_FACTOR);
            self.h = h / fac;
        }
    }

    fn stages(&mut self, h: f64) {
        let n = self.y.len();
        macro_rules! stage {
            ($slot:expr, $($c:expr => $j:expr),+) => {{
                for i in 0..n {
                    self.tmp[i] = self.y[i] + h * (0.0 $(+ $c * self.k[$j][i])+);
                }
                self.field($slot, true);
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            self.y_new[i] = self.y[i]
                + h * (A71 * self.k[0][i]
                    + A73 * self.k[2][i]
                    + A74 * self.k[3][i]
                    + A75 * self.k[4][i]
                    + A76 * self.k[5][i]);
        }
        std::mem::swap(&mut self.tmp, &mut self.y_new);
        self.field(6, true);
        std::mem::swap(&mut self.tmp, &mut self.y_new);
    }

    fn dense(&self, h: f64) -> DenseSegment {
        let n = self.y.len();
        let k = &self.k;
        let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let ydiff = self.y_new[i] - self.y[i];
            let bspl = h * k[0][i] - ydiff;
            cont[0][i] = self.y[i];
            cont[1][i] = ydiff;
            cont[2][i] = bspl;
            cont[3][i] = ydiff - h * k[6][i] - bspl;
            cont[4][i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        DenseSegment {
            t0: self.t,
            h,
            cont,
        }
    }
}
