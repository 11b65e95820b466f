//! Self-similar variables `τ = log t`, `η = x/√t`, `w = t^{-1/2} e^{x} u`
//! for moving-frame fields, the `w`-equation
//!
//! `w_τ = w_ηη + (η/2 - (3/2)e^{-τ/2}) w_η + w - e^{τ/2+x} g(u)`,
//!
//! the half-line Dirichlet problem `p_τ + L p = 0` with
//! `L = -∂²η - (η/2)∂η - 1`, its polynomial eigenfunctions, and the amplitude
//! estimators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kpp_solver::{to_tail, Field, Frame, ReactionFn};
use crate::numerics::{cubic_interp, least_squares, Grid};
use crate::parabolic::{Coefficients, ParabolicProblem, StepControl, Stepper};

/// Default window for the fitted amplitude.
pub const FIT_WINDOW: (f64, f64) = (1.0, 3.0);

/// Nodes whose absorption exponent `3τ/2 - ηe^{τ/2}` exceeds this are set to 0.
pub const PIN_EXPONENT: f64 = 700.0;

/// Principal profile `η₊ e^{-η²/4}`.
#[inline]
pub fn principal(eta: f64) -> f64 {
    if eta > 0.0 {
        eta * (-0.25 * eta * eta).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarState {
    pub tau: f64,
    pub eta_grid: Grid,
    pub w: Vec<f64>,
    /// `I(τ)/(2√π)`.
    pub alpha_moment: f64,
    /// Least-squares amplitude on [`FIT_WINDOW`] (NaN if the grid misses it).
    pub alpha_fit: f64,
}

impl SelfSimilarState {
    /// Builds a state and evaluates both estimators.
    pub fn new(tau: f64, eta_grid: Grid, w: Vec<f64>) -> Result<Self> {
        if w.len() != eta_grid.n {
            return Err(invalid("w length differs from the grid"));
        }
        let alpha_moment = moment(&eta_grid, &w) / (2.0 * PI.sqrt());
        let alpha_fit = fit_amplitude(&eta_grid, &w, FIT_WINDOW).unwrap_or(f64::NAN);
        Ok(Self { tau, eta_grid, w, alpha_moment, alpha_fit })
    }

    /// `I(τ) = ∫_{η>0} η w dη`.
    pub fn moment(&self) -> f64 {
        moment(&self.eta_grid, &self.w)
    }
}

/// Trapezoid rule for `∫_{η>0} η p dη`; the cell straddling 0 is split.
pub fn moment(grid: &Grid, p: &[f64]) -> f64 {
    let h = grid.dx();
    let mut sum = 0.0;
    for i in 0..grid.n - 1 {
        let (a, b) = (grid.x(i), grid.x(i + 1));
        if b <= 0.0 {
            continue;
        }
        let (fa, fb) = (a * p[i], b * p[i + 1]);
        if a >= 0.0 {
            sum += 0.5 * h * (fa + fb);
        } else {
            // η p vanishes at 0; the integrand is linear on [0, b]
            let f0 = 0.0;
            sum += 0.5 * b * (f0 + fb);
        }
    }
    sum
}

/// Least-squares `c` minimizing `Σ (p - c η e^{-η²/4})²` over nodes in `window`.
pub fn fit_amplitude(grid: &Grid, p: &[f64], window: (f64, f64)) -> Result<f64> {
    let (a, b) = window;
    if !(a > 0.0 && b > a) {
        return Err(invalid(format!("fit window [{a}, {b}]")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..grid.n {
        let eta = grid.x(i);
        if eta >= a && eta <= b {
            xs.push(principal(eta));
            ys.push(p[i]);
        }
    }
    if xs.len() < 2 {
        return Err(invalid(format!("fewer than two nodes in [{a}, {b}]")));
    }
    Ok(least_squares(&[xs], &ys)?.coef[0])
}

/// Moving-frame field at time `t` in self-similar variables on the nodes
/// `η_i = x_i/√t` (the `x`-grid rescaled).
pub fn transform_to_ss(field: &Field) -> Result<SelfSimilarState> {
    check_moving(field)?;
    let t = field.t;
    let st = t.sqrt();
    let g = field.grid;
    let eta_grid = Grid { x_min: g.x_min / st, x_max: g.x_max / st, n: g.n };
    let w = g.nodes().iter().zip(&field.values).map(|(&x, &u)| to_tail(x - 0.5 * t.ln(), u)).collect();
    SelfSimilarState::new(t.ln(), eta_grid, w)
}

/// As [`transform_to_ss`] but resampled onto `eta_grid` by cubic
/// interpolation of the smooth product `e^{x}u`; zero beyond the right edge of
/// the field and `e^{x}` (that is `u = 1`) beyond its left edge.
pub fn transform_onto(field: &Field, eta_grid: Grid) -> Result<SelfSimilarState> {
    check_moving(field)?;
    let t = field.t;
    let st = t.sqrt();
    let g = field.grid;
    let v: Vec<f64> = g.nodes().iter().zip(&field.values).map(|(&x, &u)| to_tail(x, u)).collect();
    let w = eta_grid
        .nodes()
        .iter()
        .map(|&eta| {
            let x = eta * st;
            let v = if x > g.x_max {
                0.0
            } else if x < g.x_min {
                to_tail(x, field.values[0])
            } else {
                cubic_interp(&g, &v, x).max(0.0)
            };
            v / st
        })
        .collect();
    SelfSimilarState::new(t.ln(), eta_grid, w)
}

fn check_moving(field: &Field) -> Result<()> {
    if field.frame != Frame::Moving {
        return Err(invalid("self-similar variables are defined for moving-frame fields"));
    }
    Ok(())
}

/// Moving-frame field `u = e^{τ/2 - x} w` at `t = e^{τ}` on `x_grid`, by cubic
/// interpolation of `w`.
pub fn inverse_transform(state: &SelfSimilarState, x_grid: Grid, reaction: ReactionFn) -> Field {
    let t = state.tau.exp();
    let st = t.sqrt();
    let g = state.eta_grid;
    let values = x_grid
        .nodes()
        .iter()
        .map(|&x| {
            let eta = x / st;
            let w = if eta < g.x_min || eta > g.x_max { 0.0 } else { cubic_interp(&g, &state.w, eta) };
            if w > 0.0 {
                (0.5 * state.tau - x + w.ln()).exp()
            } else {
                0.0
            }
        })
        .collect();
    Field { grid: x_grid, values, t, frame: Frame::Moving, reaction, diffusion: 1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    Moment,
    Fit,
}

/// Amplitude of the principal profile in `state`.
pub fn alpha_estimate(state: &SelfSimilarState, mode: AlphaMode, window: Option<(f64, f64)>) -> Result<f64> {
    let a = match mode {
        AlphaMode::Moment => moment(&state.eta_grid, &state.w) / (2.0 * PI.sqrt()),
        AlphaMode::Fit => {
            let (lo, hi) = window.unwrap_or(FIT_WINDOW);
            if hi > state.eta_grid.x_max {
                return Err(invalid(format!("fit window end {hi} beyond the grid")));
            }
            fit_amplitude(&state.eta_grid, &state.w, (lo, hi))?
        }
    };
    if a < 0.0 {
        return Err(Error::NegativeEstimate(a));
    }
    Ok(a)
}

struct WProblem {
    reaction: ReactionFn,
    etas: Vec<f64>,
    eta_min: f64,
    /// `u` closure on the left (1 behind a step, 0 for compact data).
    left: f64,
    h: f64,
}

impl ParabolicProblem for WProblem {
    fn diffusion(&self) -> f64 {
        1.0
    }

    fn atol_scale(&self, tau: f64, i: usize) -> f64 {
        (self.etas[i] * (0.5 * tau).exp() - 0.5 * tau).exp().min(1.0)
    }

    fn boundary(&self, tau: f64) -> (f64, f64) {
        let e = -0.5 * tau + self.eta_min * (0.5 * tau).exp();
        (self.left * e.exp(), 0.0)
    }

    fn coefficients(&self, tau: f64, frozen: &[f64], lo: usize, hi: usize, c: &mut Coefficients) {
        let s = (0.5 * tau).exp();
        let shift = 1.5 / s;
        let h = self.h;
        // discrete images of s² and s under the central second and first
        // differences applied to e^{sη}; with these, u ≡ 1 is a grid equilibrium
        let m = 4.0 * (0.5 * s * h).sinh().powi(2) / (h * h);
        let d = (s * h).sinh() / h;
        let quad = self.reaction.is_quadratic();
        for i in lo..=hi {
            let eta = self.etas[i];
            let x = eta * s;
            c.drift[i] = 0.5 * eta - shift;
            c.source[i] = 0.0;
            if 1.5 * tau - x > PIN_EXPONENT {
                c.pinned[i] = true;
                c.rate[i] = 0.0;
                continue;
            }
            let mu = (m + 0.5 * eta * (d - s) + 1.5 * (1.0 - d / s)).max(0.0);
            let w = frozen[i].max(0.0);
            let u = if w > 0.0 { (0.5 * tau - x + w.ln()).exp() } else { 0.0 };
            let k = if quad { u } else { self.reaction.kappa(u) };
            c.rate[i] = 1.0 - mu * k;
        }
    }
}

/// Advances `w` to `tau_end`; the absorption coefficient is frozen at the
/// extrapolated state.
pub fn evolve_w(state: &SelfSimilarState, tau_end: f64, reaction: &ReactionFn, ctrl: StepControl) -> Result<SelfSimilarState> {
    if !(tau_end > state.tau) {
        return Err(invalid(format!("tau_end {tau_end} must exceed {}", state.tau)));
    }
    let g = state.eta_grid;
    if g.x_min > -1.0 || g.x_max < 12.0 {
        return Err(invalid(format!("eta grid [{}, {}] must cover [-1, 12]", g.x_min, g.x_max)));
    }
    reaction.check()?;
    let edge = (-0.5 * state.tau + g.x_min * (0.5 * state.tau).exp()).exp();
    let left = if state.w[0] >= 0.5 * edge && edge > 0.0 { 1.0 } else { 0.0 };
    let problem = WProblem { reaction: reaction.clone(), etas: g.nodes(), eta_min: g.x_min, left, h: g.dx() };
    let mut stepper = Stepper::new(problem, g, state.tau, state.w.clone(), ctrl)?;
    stepper.advance_to(tau_end)?;
    SelfSimilarState::new(tau_end, g, stepper.into_values())
}

/// Records `(τ, state)` at each of the increasing `checkpoints`.
pub fn evolve_w_trace(
    state: &SelfSimilarState,
    checkpoints: &[f64],
    reaction: &ReactionFn,
    ctrl: StepControl,
) -> Result<Vec<SelfSimilarState>> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut current = state.clone();
    for &tau in checkpoints {
        current = evolve_w(&current, tau, reaction, ctrl)?;
        out.push(current.clone());
    }
    Ok(out)
}

struct Dirichlet {
    etas: Vec<f64>,
}

impl ParabolicProblem for Dirichlet {
    fn diffusion(&self) -> f64 {
        1.0
    }

    fn boundary(&self, _tau: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn coefficients(&self, _tau: f64, _frozen: &[f64], lo: usize, hi: usize, c: &mut Coefficients) {
        for i in lo..=hi {
            c.drift[i] = 0.5 * self.etas[i];
            c.rate[i] = 1.0;
            c.source[i] = 0.0;
        }
    }
}

/// Solves `p_τ = p_ηη + (η/2)p_η + p` on `[0, η_max]` with `p = 0` at both
/// ends, from `p0` at `τ = 0`, and returns `p` at each of the increasing
/// `taus`. The scheme conserves the discrete moment `Σ η_i p_i` exactly.
pub fn evolve_dirichlet(grid: Grid, p0: &[f64], taus: &[f64], ctrl: StepControl) -> Result<Vec<Vec<f64>>> {
    if grid.x_min != 0.0 {
        return Err(invalid("the Dirichlet problem lives on [0, eta_max]"));
    }
    if p0.len() != grid.n {
        return Err(invalid("p0 length differs from the grid"));
    }
    if p0[0].abs() > 1e-14 {
        return Err(invalid(format!("p0(0) = {} is not 0", p0[0])));
    }
    if taus.iter().any(|&t| t < 0.0) || taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("evaluation times must be increasing and non-negative"));
    }
    let mut start = p0.to_vec();
    start[0] = 0.0;
    *start.last_mut().expect("nonempty") = 0.0;
    let mut stepper = Stepper::new(Dirichlet { etas: grid.nodes() }, grid, 0.0, start, ctrl)?;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        stepper.advance_to(tau)?;
        out.push(stepper.values().to_vec());
    }
    Ok(out)
}

/// Eigenpair of `L` with `φ_k = P_k(η) e^{-η²/4}` and `L φ_k = k φ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPair {
    pub k: usize,
    /// Coefficients of `P_k`, lowest degree first.
    pub poly: Vec<f64>,
}

impl SpectralPair {
    pub fn poly_at(&self, eta: f64) -> f64 {
        horner(&self.poly, eta)
    }

    pub fn eval(&self, eta: f64) -> f64 {
        self.poly_at(eta) * (-0.25 * eta * eta).exp()
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &a)| i as f64 * a).collect()
}

fn add_scaled(acc: &mut Vec<f64>, c: &[f64], scale: f64, shift: usize) {
    if acc.len() < c.len() + shift {
        acc.resize(c.len() + shift, 0.0);
    }
    for (i, &a) in c.iter().enumerate() {
        acc[i + shift] += scale * a;
    }
}

/// `P ↦ P'' - ηP' - P/2 + (η²/4)P`, the polynomial part of
/// `(P e^{-η²/4})''`.
fn second_derivative_step(p: &[f64]) -> Vec<f64> {
    let d1 = derivative(p);
    let d2 = derivative(&d1);
    let mut out = Vec::new();
    add_scaled(&mut out, &d2, 1.0, 0);
    add_scaled(&mut out, &d1, -1.0, 1);
    add_scaled(&mut out, p, -0.5, 0);
    add_scaled(&mut out, p, 0.25, 2);
    out
}

pub const MAX_EIGEN_INDEX: usize = 20;

/// `φ_0 = η e^{-η²/4}` and `φ_{k+1} = φ_k''`.
pub fn hermite_eigen(k: usize) -> Result<SpectralPair> {
    if k > MAX_EIGEN_INDEX {
        return Err(invalid(format!("eigen index {k} > {MAX_EIGEN_INDEX}")));
    }
    let mut poly = vec![0.0, 1.0];
    for _ in 0..k {
        poly = second_derivative_step(&poly);
    }
    Ok(SpectralPair { k, poly })
}

/// `L φ` for `φ = P e^{-η²/4}`, returned as the polynomial factor.
pub fn apply_l(poly: &[f64]) -> Vec<f64> {
    // φ' = (P' - ηP/2) e, φ'' = (P'' - ηP' - P/2 + η²P/4) e
    let d1 = derivative(poly);
    let mut out = second_derivative_step(poly);
    out.iter_mut().for_each(|a| *a = -*a);
    add_scaled(&mut out, &d1, -0.5, 1);
    add_scaled(&mut out, poly, 0.25, 2);
    add_scaled(&mut out, poly, -1.0, 0);
    out
}

/// Adjoint `L* ψ = -ψ'' + ½(ηψ)' - ψ` of a polynomial `ψ`.
pub fn apply_adjoint(psi: &[f64]) -> Vec<f64> {
    let d2 = derivative(&derivative(psi));
    let mut eta_psi = vec![0.0];
    eta_psi.extend_from_slice(psi);
    let d_eta_psi = derivative(&eta_psi);
    let mut out = Vec::new();
    add_scaled(&mut out, &d2, -1.0, 0);
    add_scaled(&mut out, &d_eta_psi, 0.5, 0);
    add_scaled(&mut out, psi, -1.0, 0);
    trim(&mut out);
    out
}

fn trim(c: &mut Vec<f64>) {
    while c.last() == Some(&0.0) {
        c.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    /// Coefficients of `L*ψ`, lowest degree first, trailing zeros removed.
    pub residual: Vec<f64>,
    pub pass: bool,
}

/// Evaluates `L*ψ` exactly for a polynomial `ψ` (default `ψ = η`).
pub fn adjoint_check(psi: Option<&[f64]>) -> AdjointReport {
    let residual = apply_adjoint(psi.unwrap_or(&[0.0, 1.0]));
    let pass = residual.iter().all(|&a| a == 0.0);
    AdjointReport { residual, pass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub amplitude: f64,
    pub weighted_remainder_sup: f64,
}

/// Splits `p` into `A η e^{-η²/4}`, with `A` the moment amplitude, and a
/// remainder measured in the weight `e^{c η²}` (`c = 1/6` by default) over
/// nodes with `η` in `range` (default: all `η > 0`).
pub fn decompose_remainder(grid: &Grid, p: &[f64], weight: Option<f64>, range: Option<(f64, f64)>) -> Decomposition {
    let amplitude = moment(grid, p) / (2.0 * PI.sqrt());
    let c = weight.unwrap_or(1.0 / 6.0);
    let (a, b) = range.unwrap_or((0.0, f64::INFINITY));
    let mut sup: f64 = 0.0;
    for i in 0..grid.n {
        let eta = grid.x(i);
        if eta > a.max(0.0) && eta <= b {
            let r = (p[i] - amplitude * principal(eta)).abs() * (c * eta * eta).exp();
            sup = sup.max(r);
        }
    }
    Decomposition { amplitude, weighted_remainder_sup: sup }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_eigen_polynomials() {
        assert_eq!(hermite_eigen(0).unwrap().poly, vec![0.0, 1.0]);
        assert_eq!(hermite_eigen(1).unwrap().poly, vec![0.0, -1.5, 0.0, 0.25]);
        assert!(hermite_eigen(21).is_err());
    }

    #[test]
    fn moment_of_principal_profile() {
        let g = Grid::new(-1.0, 14.0, 15001).unwrap();
        let w: Vec<f64> = g.nodes().iter().map(|&e| principal(e)).collect();
        assert!((moment(&g, &w) / (2.0 * PI.sqrt()) - 1.0).abs() < 1e-6);
    }
}
