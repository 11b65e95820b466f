//! Explicit barriers: the cosine super-solution in the moving frame and its
//! scalar ODE proxy, the upper-barrier problem on a shrinking half-line, and
//! the sub-solution `p̲ = (ζφ₀ - q η e^{-η²/8}) e^{-F}` with its parameter
//! search.
//!
//! Certification is by dense grid sampling with one grid halving.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kpp_solver::ReactionFn;
use crate::numerics::{cubic_interp, integrate, trapezoid, Grid};
use crate::parabolic::{Coefficients, ParabolicProblem, StepControl, Stepper};
use crate::self_similar::{evolve_w_trace, moment, SelfSimilarState};

/// `η₁ = √28`, beyond which `η²/16 - 3/4 ≥ 1`.
pub fn eta1() -> f64 {
    28f64.sqrt()
}

/// `φ₀(η) = η e^{-η²/4}`.
pub fn phi0(eta: f64) -> f64 {
    eta * (-0.25 * eta * eta).exp()
}

pub fn phi0_prime(eta: f64) -> f64 {
    (1.0 - 0.5 * eta * eta) * (-0.25 * eta * eta).exp()
}

/// `η e^{-η²/8}`.
pub fn corrector(eta: f64) -> f64 {
    eta * (-0.125 * eta * eta).exp()
}

/// `L` applied to [`corrector`], in closed form.
pub fn corrector_image(eta: f64) -> f64 {
    (eta * eta / 16.0 - 0.75) * corrector(eta)
}

/// `(ε₁, ε₂)`: the minimum of `η⁻¹φ₀ e^{η²/8} = e^{-η²/8}` on `[0, η₁]` and of
/// `φ₀' e^{η²/8} = (1 - η²/2) e^{-η²/8}` on `[0, 1]`. Both functions are
/// decreasing, so the minima sit at the right ends.
pub fn epsilon_constants() -> (f64, f64) {
    ((-3.5f64).exp(), 0.5 * (-0.125f64).exp())
}

/// Drift `h(τ) = -γ e^{-(1/2-γ)τ} + (3/2) e^{-τ/2}` of the sub-solution problem.
pub fn drift_h(gamma: f64, tau: f64) -> f64 {
    -gamma * (-(0.5 - gamma) * tau).exp() + 1.5 * (-0.5 * tau).exp()
}

/// `sup_{η≥0} |φ₀'(η)| e^{η²/8} = 4e^{-5/4}`, attained at `η² = 10`.
fn phi0_prime_weighted_sup() -> f64 {
    4.0 * (-1.25f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBarrierSpec {
    pub tau0: f64,
    pub a2: f64,
    pub a3: f64,
    pub c_gamma: f64,
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta1: f64,
}

/// Slack in each sufficient condition of the construction; all must be
/// non-negative (strictly positive for the `ζ > q/ε₂` entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargins {
    /// `ε₁a₃/4 - 3 - 4e^{-τ₀/4}(a₂ + a₃)`.
    pub zeta_rate: f64,
    /// `min (ζ - q/ε₂)` over the sampled `τ ≥ τ₀`.
    pub zeta_over_q: f64,
    /// `a₂ - 1/ε₂`.
    pub a2_floor: f64,
    /// `-h(τ₀)`; `h` stays negative after its first sign change.
    pub drift_sign: f64,
    /// `min (e^{-τ/4} - sup|φ₀'e^{η²/8}| |h|)` over the sampled `τ ≥ τ₀`.
    pub drift_size: f64,
}

impl ConstraintMargins {
    pub fn feasible(&self) -> bool {
        self.zeta_rate >= 0.0
            && self.zeta_over_q > 0.0
            && self.a2_floor > 0.0
            && self.drift_sign > 0.0
            && self.drift_size >= 0.0
    }

    pub fn min(&self) -> f64 {
        [self.zeta_rate, self.zeta_over_q, self.a2_floor, self.drift_sign, self.drift_size]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Offsets `τ - τ₀` at which the `τ`-dependent conditions are sampled.
const CONSTRAINT_SAMPLES: usize = 401;
const CONSTRAINT_HORIZON: f64 = 200.0;

impl SubBarrierSpec {
    /// Fills in `ε₁`, `ε₂` and `η₁`.
    pub fn new(gamma: f64, c_gamma: f64, tau0: f64, a2: f64, a3: f64) -> Self {
        let (eps1, eps2) = epsilon_constants();
        Self { tau0, a2, a3, c_gamma, gamma, eps1, eps2, eta1: eta1() }
    }

    pub fn zeta(&self, tau: f64) -> f64 {
        self.a2 + self.a3 * (-(tau - self.tau0) / 4.0).exp()
    }

    pub fn zeta_dot(&self, tau: f64) -> f64 {
        -0.25 * self.a3 * (-(tau - self.tau0) / 4.0).exp()
    }

    pub fn q(&self, tau: f64) -> f64 {
        (-(tau - self.tau0)).exp() + 4.0 / 3.0 * (-tau / 4.0).exp() * (self.a2 + self.a3)
    }

    pub fn q_dot(&self, tau: f64) -> f64 {
        -(-(tau - self.tau0)).exp() - 1.0 / 3.0 * (-tau / 4.0).exp() * (self.a2 + self.a3)
    }

    /// `F(τ) = ∫₀^τ C_γ e^{-exp(γs/2)} ds`.
    pub fn f_integral(&self, tau: f64) -> Result<f64> {
        let (c, g) = (self.c_gamma, self.gamma);
        integrate(|s| c * (-(0.5 * g * s).exp()).exp(), 0.0, tau, 1e-15, 1e-13)
    }

    /// `F'(τ)`.
    pub fn f_rate(&self, tau: f64) -> f64 {
        self.c_gamma * (-(0.5 * self.gamma * tau).exp()).exp()
    }

    pub fn margins(&self) -> ConstraintMargins {
        let zeta_rate = self.eps1 * self.a3 / 4.0 - 3.0 - 4.0 * (-self.tau0 / 4.0).exp() * (self.a2 + self.a3);
        let mut zeta_over_q = f64::INFINITY;
        let mut drift_size = f64::INFINITY;
        let sup = phi0_prime_weighted_sup();
        for k in 0..CONSTRAINT_SAMPLES {
            let tau = self.tau0 + CONSTRAINT_HORIZON * k as f64 / (CONSTRAINT_SAMPLES - 1) as f64;
            zeta_over_q = zeta_over_q.min(self.zeta(tau) - self.q(tau) / self.eps2);
            drift_size = drift_size.min((-tau / 4.0).exp() - sup * drift_h(self.gamma, tau).abs());
        }
        ConstraintMargins {
            zeta_rate,
            zeta_over_q,
            a2_floor: self.a2 - 1.0 / self.eps2,
            drift_sign: -drift_h(self.gamma, self.tau0),
            drift_size,
        }
    }

    /// `p̲(τ, η)`.
    pub fn value(&self, tau: f64, eta: f64) -> Result<f64> {
        let inner = self.zeta(tau) * phi0(eta) - self.q(tau) * corrector(eta);
        Ok(inner * (-self.f_integral(tau)?).exp())
    }

    /// `(∂τ + L + h∂η + C_γ e^{-exp(γτ/2)}) p̲` from the analytic derivatives
    /// of the ansatz, given `e^{-F(τ)}`.
    pub fn operator_with(&self, tau: f64, eta: f64, decay: f64) -> f64 {
        let h = drift_h(self.gamma, tau);
        let q = self.q(tau);
        let e8 = (-0.125 * eta * eta).exp();
        let inner = self.zeta_dot(tau) * phi0(eta) + self.zeta(tau) * h * phi0_prime(eta)
            - (self.q_dot(tau) + (eta * eta / 16.0 - 0.75) * q) * eta * e8
            + q * h * (0.25 * eta * eta - 1.0) * e8;
        inner * decay
    }

    pub fn operator(&self, tau: f64, eta: f64) -> Result<f64> {
        Ok(self.operator_with(tau, eta, (-self.f_integral(tau)?).exp()))
    }
}

/// Search lattice for [`subsolution_build_on`]: `τ₀` from `tau0_min` to
/// `tau0_max` in steps of `tau0_step`, `a₂ = ⌈1/ε₂⌉ + j/2` for
/// `j < a2_count`, `a₃ = 2^m` for `m ≤ a3_max_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubLattice {
    pub tau0_min: f64,
    pub tau0_max: f64,
    pub tau0_step: f64,
    pub a2_count: usize,
    pub a3_max_exp: u32,
}

impl Default for SubLattice {
    fn default() -> Self {
        Self { tau0_min: 10.0, tau0_max: 60.0, tau0_step: 2.0, a2_count: 40, a3_max_exp: 24 }
    }
}

impl SubLattice {
    pub fn tau0_values(&self) -> Vec<f64> {
        let n = ((self.tau0_max - self.tau0_min) / self.tau0_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.tau0_min + k as f64 * self.tau0_step).collect()
    }

    pub fn a2_values(&self) -> Vec<f64> {
        let base = (1.0 / epsilon_constants().1).ceil();
        (0..self.a2_count).map(|j| base + 0.5 * j as f64).collect()
    }

    pub fn a3_values(&self) -> Vec<f64> {
        (0..=self.a3_max_exp).map(|m| 2f64.powi(m as i32)).collect()
    }
}

/// [`subsolution_build_on`] with the default lattice.
pub fn subsolution_build(gamma: f64, c_gamma: f64) -> Result<SubBarrierSpec> {
    subsolution_build_on(gamma, c_gamma, &SubLattice::default())
}

/// Lexicographically smallest feasible `(τ₀, a₂, a₃)` on the lattice.
pub fn subsolution_build_on(gamma: f64, c_gamma: f64, lattice: &SubLattice) -> Result<SubBarrierSpec> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(invalid(format!("gamma = {gamma} must lie in (0, 1/4)")));
    }
    if !(c_gamma > 0.0) {
        return Err(invalid(format!("C_gamma = {c_gamma} must be positive")));
    }
    for tau0 in lattice.tau0_values() {
        for &a2 in &lattice.a2_values() {
            for &a3 in &lattice.a3_values() {
                let spec = SubBarrierSpec::new(gamma, c_gamma, tau0, a2, a3);
                if spec.margins().feasible() {
                    return Ok(spec);
                }
            }
        }
    }
    Err(Error::Infeasible(format!(
        "tau0 in [{}, {}], {} values of a2, a3 up to 2^{}",
        lattice.tau0_min, lattice.tau0_max, lattice.a2_count, lattice.a3_max_exp
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub n_time: usize,
    pub n_space: usize,
}

impl SampleGrid {
    fn halved(self) -> Self {
        Self { n_time: 2 * self.n_time - 1, n_space: 2 * self.n_space - 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubReport {
    pub spec: SubBarrierSpec,
    pub grid: SampleGrid,
    /// Largest sampled value of `𝓛p̲` (non-positive for a sub-solution).
    pub max_violation: f64,
    pub argmax: (f64, f64),
    /// The sign of `max_violation` is unchanged after halving both steps.
    pub refinement_confirmed: bool,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn sub_scan(spec: &SubBarrierSpec, tau: (f64, f64), eta: (f64, f64), grid: SampleGrid) -> Result<(f64, (f64, f64))> {
    // the first node is η_lo + step: the range is open at 0
    let step = (eta.1 - eta.0) / grid.n_space as f64;
    let etas: Vec<f64> = (1..=grid.n_space).map(|k| eta.0 + step * k as f64).collect();
    let rows: Vec<Result<(f64, (f64, f64))>> = linspace(tau.0, tau.1, grid.n_time)
        .into_par_iter()
        .map(|t| {
            let decay = (-spec.f_integral(t)?).exp();
            Ok(etas.iter().fold((f64::NEG_INFINITY, (t, 0.0)), |best, &e| {
                let v = spec.operator_with(t, e, decay);
                if v > best.0 {
                    (v, (t, e))
                } else {
                    best
                }
            }))
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
    for r in rows {
        let r = r?;
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(best)
}

/// Samples `𝓛p̲` on `tau_range × eta_range` (the left end of `eta_range` is
/// excluded), then again with both steps halved.
pub fn verify_subsolution(
    spec: &SubBarrierSpec,
    tau_range: (f64, f64),
    eta_range: (f64, f64),
    grid: SampleGrid,
) -> Result<SubReport> {
    if tau_range.0 < spec.tau0 || tau_range.1 < tau_range.0 {
        return Err(invalid(format!("tau range {tau_range:?} must start at or after tau0 = {}", spec.tau0)));
    }
    if eta_range.0 < 0.0 || eta_range.1 > 12.0 || eta_range.1 <= eta_range.0 {
        return Err(invalid(format!("eta range {eta_range:?} must lie in (0, 12]")));
    }
    if grid.n_time < 1 || grid.n_space < 1 {
        return Err(invalid("empty sample grid"));
    }
    let (coarse, argmax) = sub_scan(spec, tau_range, eta_range, grid)?;
    let (fine, _) = sub_scan(spec, tau_range, eta_range, grid.halved())?;
    Ok(SubReport {
        spec: *spec,
        grid,
        max_violation: coarse,
        argmax,
        refinement_confirmed: (coarse > 0.0) == (fine > 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperBarrierSpec {
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Amplification `A ≥ 1`.
    pub amplitude: f64,
}

impl SuperBarrierSpec {
    /// `(1 - γ) - (2γ + 2ε + λ)`: the decay of the forcing minus that of the
    /// barrier's image.
    pub fn exponent_gap(&self) -> f64 {
        (1.0 - self.gamma) - (2.0 * self.gamma + 2.0 * self.epsilon + self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.epsilon > 0.0) {
            return Err(invalid("lambda and epsilon must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0 / 3.0) {
            return Err(invalid(format!("gamma = {} must lie in (0, 1/3)", self.gamma)));
        }
        if self.amplitude < 1.0 {
            return Err(invalid(format!("amplitude {} below 1", self.amplitude)));
        }
        if self.exponent_gap() <= 0.0 {
            return Err(invalid(format!("2γ + 2ε + λ ≥ 1 - γ (gap {})", self.exponent_gap())));
        }
        Ok(())
    }

    fn beta(&self) -> f64 {
        self.gamma + self.epsilon
    }

    /// `A t^{-λ} cos(x / t^{γ+ε})`.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.amplitude * t.powf(-self.lambda) * (x * t.powf(-self.beta())).cos()
    }

    /// `(∂t - ∂xx + (3/(2t))(∂x - 1))` applied to [`Self::value`], in closed form.
    pub fn operator(&self, t: f64, x: f64) -> f64 {
        let b = self.beta();
        let theta = x * t.powf(-b);
        let (s, c) = theta.sin_cos();
        let tb = t.powf(-b);
        let cos_part = c * (tb * tb - (self.lambda + 1.5) / t);
        let sin_part = s * (b * theta - 1.5 * tb) / t;
        self.amplitude * t.powf(-self.lambda) * (cos_part + sin_part)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperReport {
    pub spec: SuperBarrierSpec,
    pub grid: SampleGrid,
    /// `min (operator - forcing_bound t^{-(1-γ)})`; positive certifies.
    pub min_margin: f64,
    pub argmin: (f64, f64),
    pub refinement_confirmed: bool,
    /// Whether the spec satisfies the exponent conditions.
    pub admissible: bool,
}

fn super_scan(spec: &SuperBarrierSpec, t_range: (f64, f64), forcing: f64, grid: SampleGrid) -> (f64, (f64, f64)) {
    // log-spaced times, |x| ≤ t^γ
    let (la, lb) = (t_range.0.ln(), t_range.1.ln());
    linspace(la, lb, grid.n_time)
        .into_par_iter()
        .map(|lt| {
            let t = lt.exp();
            let reach = t.powf(spec.gamma);
            let floor = forcing * t.powf(-(1.0 - spec.gamma));
            linspace(-reach, reach, grid.n_space).into_iter().fold((f64::INFINITY, (t, 0.0)), |best, x| {
                let m = spec.operator(t, x) - floor;
                if m < best.0 {
                    (m, (t, x))
                } else {
                    best
                }
            })
        })
        .reduce(|| (f64::INFINITY, (0.0, 0.0)), |a, b| if b.0 < a.0 { b } else { a })
}

/// Samples the super-solution margin for `t` in `t_range` (log-spaced) and
/// `|x| ≤ t^γ`, then again with both steps halved. Specs violating the
/// exponent conditions are evaluated too and flagged.
pub fn verify_supersolution(
    spec: &SuperBarrierSpec,
    t_range: (f64, f64),
    forcing_bound: f64,
    grid: SampleGrid,
) -> Result<SuperReport> {
    if !(t_range.0 >= 1.0 && t_range.1 >= t_range.0) {
        return Err(invalid(format!("t range {t_range:?}")));
    }
    if grid.n_time < 1 || grid.n_space < 2 {
        return Err(invalid("sample grid too small"));
    }
    let (coarse, argmin) = super_scan(spec, t_range, forcing_bound, grid);
    let (fine, _) = super_scan(spec, t_range, forcing_bound, grid.halved());
    Ok(SuperReport {
        spec: *spec,
        grid,
        min_margin: coarse,
        argmin,
        refinement_confirmed: (coarse > 0.0) == (fine > 0.0),
        admissible: spec.validate().is_ok(),
    })
}

/// Solution at `t` of `f' + (1-2γ)t^{-2γ}f = t^{γ-1}`, `f(1) = f1`:
///
/// `f(t) = f1 e^{1 - t^{1-2γ}} + ∫₁^t e^{s^{1-2γ} - t^{1-2γ}} s^{γ-1} ds`.
pub fn ode_proxy(gamma: f64, f1: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0 / 3.0) {
        return Err(invalid(format!("gamma = {gamma} must lie in (0, 1/3)")));
    }
    if !(t >= 1.0) {
        return Err(invalid(format!("t = {t} must be at least 1")));
    }
    if t == 1.0 {
        return Ok(f1);
    }
    let b = 1.0 - 2.0 * gamma;
    let tb = t.powf(b);
    let kernel = |s: f64| (s.powf(b) - tb).exp() * s.powf(gamma - 1.0);
    // the kernel is concentrated in the last few multiples of t^{2γ} before t
    let width = t.powf(2.0 * gamma) / b;
    let mut cuts = vec![t];
    let mut k = 1.0;
    while t - k * width > 1.0 && k < 64.0 {
        cuts.push(t - k * width);
        k *= 2.0;
    }
    cuts.push(1.0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate(kernel, w[1], w[0], 1e-16, 1e-13)?;
    }
    Ok(f1 * (1.0 - tb).exp() + total)
}

/// Cubic smoothstep cutoff: 1 on `[0, 1]`, 0 beyond 2, `C¹` and decreasing.
pub fn cutoff(eta: f64) -> f64 {
    if eta <= 1.0 {
        1.0
    } else if eta >= 2.0 {
        0.0
    } else {
        let s = eta - 1.0;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

fn cutoff_d1(eta: f64) -> f64 {
    if eta <= 1.0 || eta >= 2.0 {
        0.0
    } else {
        let s = eta - 1.0;
        -6.0 * s * (1.0 - s)
    }
}

fn cutoff_d2(eta: f64) -> f64 {
    if eta <= 1.0 || eta >= 2.0 {
        0.0
    } else {
        -6.0 + 12.0 * (eta - 1.0)
    }
}

/// Drift of the shifted upper-barrier problem, `γe^{-(1/2-γ)τ} + (3/2)e^{-τ/2}`.
pub fn upper_drift(gamma: f64, tau: f64) -> f64 {
    gamma * (-(0.5 - gamma) * tau).exp() + 1.5 * (-0.5 * tau).exp()
}

/// Left boundary value `e^{-e^{γτ}}` of the upper barrier.
pub fn upper_boundary(gamma: f64, tau: f64) -> f64 {
    (-(gamma * tau).exp()).exp()
}

/// Forcing `G(τ, η)` of the `p̄` problem, so that
/// `p̄_τ + Lp̄ + b p̄_η = G e^{-e^{γτ}}` when `w̄ = p̄ + e^{-e^{γτ}} g`.
pub fn upper_forcing(gamma: f64, tau: f64, eta: f64) -> f64 {
    let g = cutoff(eta);
    let (g1, g2) = (cutoff_d1(eta), cutoff_d2(eta));
    let lg = -g2 - 0.5 * eta * g1 - g;
    gamma * (gamma * tau).exp() * g - lg - upper_drift(gamma, tau) * g1
}

struct UpperProblem {
    gamma: f64,
    etas: Vec<f64>,
}

impl ParabolicProblem for UpperProblem {
    fn diffusion(&self) -> f64 {
        1.0
    }

    fn boundary(&self, _tau: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn coefficients(&self, tau: f64, _frozen: &[f64], lo: usize, hi: usize, c: &mut Coefficients) {
        let b = upper_drift(self.gamma, tau);
        let scale = upper_boundary(self.gamma, tau);
        for i in lo..=hi {
            let eta = self.etas[i];
            c.drift[i] = 0.5 * eta - b;
            c.rate[i] = 1.0;
            c.source[i] = if eta < 2.0 { scale * upper_forcing(self.gamma, tau, eta) } else { 0.0 };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperCheckpoint {
    pub tau: f64,
    /// `∫₀^∞ η p̄ dη`.
    pub moment: f64,
    /// `∫₀^∞ min(p̄, 0) dη`.
    pub negative_part: f64,
    /// `max (w - w̄)` over the common domain.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBarrierRun {
    pub gamma: f64,
    pub scale: f64,
    /// Grid of the shifted variable `η + e^{-(1/2-γ)τ}`.
    pub grid: Grid,
    pub checkpoints: Vec<UpperCheckpoint>,
    /// `p̄` at the final checkpoint.
    pub p_final: Vec<f64>,
}

impl UpperBarrierRun {
    pub fn min_moment(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.moment).fold(f64::INFINITY, f64::min)
    }

    pub fn max_excess(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.excess).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tolerance on `w - w̄` before a domination failure is reported.
pub const DOMINATION_TOL: f64 = 1e-8;

/// Runs the upper barrier from `w̄₀ = scale · w₀` alongside the reference
/// `w`-equation from `w₀` (given at `τ = 0`), with checkpoints every `dtau`
/// up to `tau_end`.
pub fn upper_barrier_run(
    w0: &SelfSimilarState,
    scale: f64,
    gamma: f64,
    tau_end: f64,
    dtau: f64,
    ctrl: StepControl,
) -> Result<UpperBarrierRun> {
    if w0.tau != 0.0 {
        return Err(invalid(format!("reference data must sit at tau = 0, got {}", w0.tau)));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(invalid(format!("gamma = {gamma} must lie in (0, 1/2)")));
    }
    if !(dtau > 0.0 && tau_end >= dtau) {
        return Err(invalid("need 0 < dtau <= tau_end"));
    }
    let wg = w0.eta_grid;
    let h = wg.dx();
    let grid = Grid::with_spacing(0.0, wg.x_max + 1.0, h)?;
    let etas = grid.nodes();
    // p̄₀(η) = w̄₀(η - 1) - e^{-1} g(η)
    let p0: Vec<f64> = etas
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            if i == 0 || i + 1 == etas.len() {
                return 0.0;
            }
            let x = e - 1.0;
            let w = if x < wg.x_min || x > wg.x_max { 0.0 } else { scale * cubic_interp(&wg, &w0.w, x) };
            w - upper_boundary(gamma, 0.0) * cutoff(e)
        })
        .collect();

    let n = (tau_end / dtau).round() as usize;
    let taus: Vec<f64> = (1..=n).map(|k| k as f64 * dtau).collect();
    let reference = evolve_w_trace(w0, &taus, &ReactionFn::quadratic(), ctrl)?;
    let mut stepper = Stepper::new(UpperProblem { gamma, etas: etas.clone() }, grid, 0.0, p0, ctrl)?;
    let mut checkpoints = Vec::with_capacity(n);
    for (tau, w) in taus.iter().zip(&reference) {
        stepper.advance_to(*tau)?;
        let p = stepper.values();
        let shift = (-(0.5 - gamma) * tau).exp();
        let edge = upper_boundary(gamma, *tau);
        let mut excess = f64::NEG_INFINITY;
        for (k, &eta) in wg.nodes().iter().enumerate() {
            let s = eta + shift;
            if s < 0.0 || s > grid.x_max {
                continue;
            }
            let bar = cubic_interp(&grid, p, s) + edge * cutoff(s);
            excess = excess.max(w.w[k] - bar);
        }
        if excess > DOMINATION_TOL {
            return Err(Error::Domination { tau: *tau, excess });
        }
        let negative: Vec<f64> = p.iter().map(|v| v.min(0.0)).collect();
        checkpoints.push(UpperCheckpoint {
            tau: *tau,
            moment: moment(&grid, p),
            negative_part: trapezoid(h, &negative),
            excess,
        });
    }
    Ok(UpperBarrierRun { gamma, scale, grid, checkpoints, p_final: stepper.into_values() })
}
