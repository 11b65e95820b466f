//! Variable-step, linearly-implicit BDF2 for scalar 1-D parabolic problems
//!
//! `u_t = D u_xx + b(t,x) u_x + r(t,x,ū) u + s(t,x)`
//!
//! with Dirichlet data at the ends of an active window. The rate `r` may depend
//! on an extrapolated state `ū` (frozen coefficient), which keeps each step a
//! single tridiagonal solve. Local errors are estimated by comparing the
//! corrector with a quadratic predictor through the last three levels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{solve_tridiagonal, Grid};

/// Values below this magnitude are flushed to zero after each step.
pub const FLUSH: f64 = 1e-280;

/// Per-node coefficients filled by a problem for one step.
#[derive(Debug, Clone, Default)]
pub struct Coefficients {
    pub drift: Vec<f64>,
    pub rate: Vec<f64>,
    pub source: Vec<f64>,
    /// Nodes forced to zero for this step.
    pub pinned: Vec<bool>,
}

impl Coefficients {
    fn new(n: usize) -> Self {
        Self {
            drift: vec![0.0; n],
            rate: vec![0.0; n],
            source: vec![0.0; n],
            pinned: vec![false; n],
        }
    }
}

pub trait ParabolicProblem {
    fn diffusion(&self) -> f64;

    /// Dirichlet values at the left and right ends of the active window.
    fn boundary(&self, t: f64) -> (f64, f64);

    /// Fill coefficients at time `t` on nodes `lo..=hi`, given the frozen state.
    fn coefficients(&self, t: f64, frozen: &[f64], lo: usize, hi: usize, c: &mut Coefficients);

    /// Per-node multiplier on the absolute tolerance, for problems solved in
    /// rescaled variables.
    fn atol_scale(&self, _t: f64, _i: usize) -> f64 {
        1.0
    }
}

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rtol: 1e-5, atol: 1e-7, dt_init: 1e-4, dt_min: 1e-12, dt_max: 1.0 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol >= 0.0
            && self.atol > 0.0
            && self.dt_min > 0.0
            && self.dt_init >= self.dt_min
            && self.dt_max >= self.dt_init;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("step control {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

const STARTUP_STEPS: usize = 2;
const MAX_RATIO: f64 = 1.5;
const MIN_RATIO: f64 = 0.2;
const SAFETY: f64 = 0.9;

pub struct Stepper<P> {
    pub problem: P,
    grid: Grid,
    lo: usize,
    hi: usize,
    t: f64,
    u: Vec<f64>,
    /// Previous levels, most recent first.
    history: Vec<(f64, Vec<f64>)>,
    dt: f64,
    ctrl: StepControl,
    pub stats: StepStats,
    coef: Coefficients,
    frozen: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    work: Vec<f64>,
    scratch: Vec<f64>,
}

impl<P: ParabolicProblem> Stepper<P> {
    pub fn new(problem: P, grid: Grid, t0: f64, u0: Vec<f64>, ctrl: StepControl) -> Result<Self> {
        ctrl.validate()?;
        if u0.len() != grid.n {
            return Err(invalid("initial data length differs from grid"));
        }
        let n = grid.n;
        Ok(Self {
            problem,
            grid,
            lo: 0,
            hi: n - 1,
            t: t0,
            u: u0,
            history: Vec::with_capacity(2),
            dt: ctrl.dt_init,
            ctrl,
            stats: StepStats::default(),
            coef: Coefficients::new(n),
            frozen: vec![0.0; n],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            work: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_values(self) -> Vec<f64> {
        self.u
    }

    /// Advances exactly to `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t < t_target {
            self.step_toward(t_target)?;
        }
        Ok(())
    }

    /// Takes one accepted step, not beyond `t_target`.
    pub fn step_toward(&mut self, t_target: f64) -> Result<()> {
        let remaining = t_target - self.t;
        if remaining <= 0.0 {
            return Ok(());
        }
        let startup = self.history.len() < 2 || self.stats.accepted < STARTUP_STEPS;
        let mut dt = if startup { self.ctrl.dt_init } else { self.dt };
        if let Some((t1, _)) = self.history.first() {
            dt = dt.min(MAX_RATIO * (self.t - t1));
        }
        dt = dt.min(self.ctrl.dt_max);
        loop {
            let (h, last) = if remaining <= dt {
                (remaining, true)
            } else if remaining < 2.0 * dt {
                (0.5 * remaining, false)
            } else {
                (dt, false)
            };
            let new = self.solve_step(h);
            let err = if startup { 0.0 } else { self.error_norm(h, &new) };
            if err.is_finite() && err <= 1.0 {
                let t_new = if last { t_target } else { self.t + h };
                let old = std::mem::replace(&mut self.u, new);
                if self.history.len() == 2 {
                    let mut recycled = self.history.pop().expect("len 2");
                    recycled.0 = self.t;
                    recycled.1 = old;
                    self.history.insert(0, recycled);
                } else {
                    self.history.insert(0, (self.t, old));
                }
                self.t = t_new;
                self.stats.accepted += 1;
                if !startup {
                    let factor = if err == 0.0 {
                        MAX_RATIO
                    } else {
                        (SAFETY * err.powf(-1.0 / 3.0)).clamp(MIN_RATIO, MAX_RATIO)
                    };
                    self.dt = (h * factor).clamp(self.ctrl.dt_min, self.ctrl.dt_max);
                } else {
                    self.dt = self.ctrl.dt_init;
                }
                return Ok(());
            }
            self.stats.rejected += 1;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-1.0 / 3.0)).clamp(MIN_RATIO, 0.9)
            } else {
                MIN_RATIO
            };
            dt = h * factor;
            if dt < self.ctrl.dt_min {
                return Err(Error::StepUnderflow { t: self.t, dt });
            }
        }
    }

    fn solve_step(&mut self, dt: f64) -> Vec<f64> {
        let (lo, hi) = (self.lo, self.hi);
        let t_new = self.t + dt;
        let h = self.grid.dx();
        let d = self.problem.diffusion() / (h * h);
        let bdf2 = self.history.first().map(|(t1, u1)| (dt / (self.t - t1), u1));

        match bdf2 {
            Some((w, u1)) => {
                for i in lo..=hi {
                    self.frozen[i] = self.u[i] + w * (self.u[i] - u1[i]);
                }
            }
            None => self.frozen[lo..=hi].copy_from_slice(&self.u[lo..=hi]),
        }
        self.coef.pinned[lo..=hi].iter_mut().for_each(|p| *p = false);
        self.problem.coefficients(t_new, &self.frozen, lo, hi, &mut self.coef);

        let (alpha0, a1, a2) = match bdf2 {
            Some((w, _)) => ((1.0 + 2.0 * w) / (1.0 + w), 1.0 + w, w * w / (1.0 + w)),
            None => (1.0, 1.0, 0.0),
        };
        let (left, right) = self.problem.boundary(t_new);
        let m = hi - lo + 1;
        for k in 0..m {
            let i = lo + k;
            if k == 0 || k == m - 1 {
                self.lower[k] = 0.0;
                self.upper[k] = 0.0;
                self.diag[k] = 1.0;
                self.work[k] = if k == 0 { left } else { right };
                continue;
            }
            if self.coef.pinned[i] {
                self.lower[k] = 0.0;
                self.upper[k] = 0.0;
                self.diag[k] = 1.0;
                self.work[k] = 0.0;
                continue;
            }
            let b = self.coef.drift[i] / (2.0 * h);
            self.lower[k] = -dt * (d - b);
            self.upper[k] = -dt * (d + b);
            self.diag[k] = alpha0 + dt * (2.0 * d - self.coef.rate[i]);
            let mut rhs = a1 * self.u[i] + dt * self.coef.source[i];
            if let Some((_, u1)) = bdf2 {
                rhs -= a2 * u1[i];
            }
            self.work[k] = rhs;
        }
        solve_tridiagonal(
            &self.lower[..m],
            &self.diag[..m],
            &self.upper[..m],
            &mut self.work[..m],
            &mut self.scratch[..m],
        );
        let mut out = self.u.clone();
        for k in 0..m {
            let v = self.work[k];
            out[lo + k] = if v.abs() < FLUSH { 0.0 } else { v };
        }
        out
    }

    fn error_norm(&self, dt: f64, new: &[f64]) -> f64 {
        let (t1, u1) = &self.history[0];
        let (t2, u2) = &self.history[1];
        let t0 = self.t;
        let tn = t0 + dt;
        // quadratic through (t2,u2), (t1,u1), (t0,u) evaluated at tn
        let l0 = (tn - t1) * (tn - t2) / ((t0 - t1) * (t0 - t2));
        let l1 = (tn - t0) * (tn - t2) / ((t1 - t0) * (t1 - t2));
        let l2 = (tn - t0) * (tn - t1) / ((t2 - t0) * (t2 - t1));
        let w = dt / (t0 - t1);
        let c_corr = dt.powi(3) * (1.0 + w).powi(2) / (6.0 * w * (1.0 + 2.0 * w));
        let c_pred = dt * (tn - t1) * (tn - t2) / 6.0;
        let milne = c_corr / (c_corr + c_pred);
        let mut worst: f64 = 0.0;
        for i in self.lo..=self.hi {
            let pred = l0 * self.u[i] + l1 * u1[i] + l2 * u2[i];
            let est = milne * (new[i] - pred).abs();
            let scale = self.ctrl.atol * self.problem.atol_scale(tn, i) + self.ctrl.rtol * new[i].abs();
            if est > 0.0 {
                worst = worst.max(est / scale);
            }
        }
        worst
    }
}
