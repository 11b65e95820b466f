use std::f64::consts::PI;

use kpp_core::barriers::*;
use kpp_core::numerics::Grid;
use kpp_core::parabolic::StepControl;
use kpp_core::self_similar::SelfSimilarState;
use kpp_core::Error;
use proptest::prelude::*;

/// Minimum of `f` over `[a, b]` sampled with step `h`.
fn grid_min(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let n = ((b - a) / h).round() as usize;
    (0..=n).map(|k| f(a + (b - a) * k as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}

#[test]
fn epsilon_constants_match_grid_minimization() {
    let (e1, e2) = epsilon_constants();
    let phi = |e: f64| e * (-e * e / 4.0).exp();
    let m1 = grid_min(|e| phi(e) / e * (e * e / 8.0).exp(), 1e-5, 28f64.sqrt(), 1e-5);
    let d = 1e-6;
    let m2 = grid_min(|e| (phi(e + d) - phi(e - d)) / (2.0 * d) * (e * e / 8.0).exp(), 0.0, 1.0, 1e-5);
    println!("eps1 = {e1:.8} (grid {m1:.8}), eps2 = {e2:.8} (grid {m2:.8})");
    assert!((e1 - 0.030197).abs() < 5e-7 && (e1 - m1).abs() < 1e-9);
    assert!((e2 - 0.441248).abs() < 5e-7 && (e2 - m2).abs() < 1e-8);
}

#[test]
fn corrector_identity_holds() {
    // f = η e^{-aη²}: f' = (1 - 2aη²)e, f'' = (4a²η³ - 6aη)e
    let a = 0.125;
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let eta = -6.0 + 18.0 * k as f64 / 999.0;
        let e = (-a * eta * eta).exp();
        let f = eta * e;
        let f1 = (1.0 - 2.0 * a * eta * eta) * e;
        let f2 = (4.0 * a * a * eta.powi(3) - 6.0 * a * eta) * e;
        let lf = -f2 - 0.5 * eta * f1 - f;
        worst = worst.max((lf - corrector_image(eta)).abs());
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

/// Feasibility of the two structural inequalities and the `a₂` floor, coded
/// from scratch; `ζ > q/ε₂` is checked on a unit grid over 200 time units.
fn oracle_feasible(tau0: f64, a2: f64, a3: f64) -> bool {
    let eps1 = (-3.5f64).exp();
    let eps2 = 0.5 * (-0.125f64).exp();
    if eps1 * a3 / 4.0 < 3.0 + 4.0 * (-tau0 / 4.0).exp() * (a2 + a3) || a2 <= 1.0 / eps2 {
        return false;
    }
    (0..=200).all(|k| {
        let tau = tau0 + k as f64;
        let zeta = a2 + a3 * (-(tau - tau0) / 4.0).exp();
        let q = (-(tau - tau0)).exp() + 4.0 / 3.0 * (-tau / 4.0).exp() * (a2 + a3);
        zeta > q / eps2
    })
}

#[test]
fn subsolution_build_finds_smallest_lattice_point() {
    let spec = subsolution_build(0.2, 1.0).unwrap();
    println!("tau0 = {}, a2 = {}, a3 = {}", spec.tau0, spec.a2, spec.a3);
    assert!(spec.tau0 <= 40.0);
    assert!(spec.a2 > 1.0 / spec.eps2 && spec.a2 > 2.266);
    assert!(oracle_feasible(spec.tau0, spec.a2, spec.a3));
    // no smaller τ₀ on the lattice works, and the oracle agrees on the first
    let lat = SubLattice::default();
    let first = lat
        .tau0_values()
        .into_iter()
        .find(|&t| lat.a2_values().iter().any(|&a2| lat.a3_values().iter().any(|&a3| oracle_feasible(t, a2, a3))))
        .unwrap();
    assert_eq!(first, spec.tau0);

    for k in 0..=50 {
        let tau = spec.tau0 + k as f64;
        assert!(spec.eps1 * spec.a3 / 4.0 - 3.0 - 4.0 * (-spec.tau0 / 4.0).exp() * (spec.a2 + spec.a3) >= 1e-12);
        assert!(spec.zeta(tau) - spec.q(tau) / spec.eps2 >= 1e-12);
        assert!(spec.q(tau) > 0.0 && spec.zeta_dot(tau) < 0.0);
    }
}

#[test]
fn subsolution_build_rejects_bad_input_and_small_lattice() {
    assert!(subsolution_build(0.3, 1.0).is_err());
    assert!(subsolution_build(0.2, 0.0).is_err());
    let small = SubLattice { tau0_max: 14.0, ..SubLattice::default() };
    assert!(matches!(subsolution_build_on(0.2, 1.0, &small), Err(Error::Infeasible(_))));
}

fn grid() -> SampleGrid {
    SampleGrid { n_time: 121, n_space: 1200 }
}

#[test]
fn built_subsolution_is_certified() {
    let spec = subsolution_build(0.2, 1.0).unwrap();
    let r = verify_subsolution(&spec, (spec.tau0, spec.tau0 + 30.0), (0.0, 12.0), grid()).unwrap();
    println!("max violation {:e} at {:?}", r.max_violation, r.argmax);
    assert!(r.max_violation <= 1e-10);
    assert!(r.refinement_confirmed);
}

#[test]
fn shrinking_a3_breaks_the_subsolution() {
    let spec = subsolution_build(0.2, 1.0).unwrap();
    let halved = SubBarrierSpec { a3: spec.a3 / 2.0, ..spec };
    assert!(halved.margins().zeta_rate < 0.0 && !halved.margins().feasible());
    // the constraint is sufficient only: the sampled operator stays
    // non-positive for a while after it fails
    let r = verify_subsolution(&halved, (spec.tau0, spec.tau0 + 30.0), (0.0, 12.0), grid()).unwrap();
    println!("a3 / 2: max violation {:e}", r.max_violation);
    let broken = (1..=10).find_map(|k| {
        let s = SubBarrierSpec { a3: spec.a3 / 2f64.powi(k), ..spec };
        let r = verify_subsolution(&s, (spec.tau0, spec.tau0 + 30.0), (0.0, 12.0), grid()).unwrap();
        (r.max_violation > 0.0).then_some((s.a3, r))
    });
    let (a3, r) = broken.expect("some reduction of a3 must break the sub-solution");
    println!("a3 = {a3}: max violation {:e} at {:?}", r.max_violation, r.argmax);
    assert!(r.refinement_confirmed);
    assert!(r.argmax.0 < spec.tau0 + 1.0 && r.argmax.1 > 1.0 && r.argmax.1 < spec.eta1);
}

#[test]
fn far_slice_obeys_reduced_bound() {
    let spec = subsolution_build(0.2, 1.0).unwrap();
    for k in 0..=30 {
        let tau = spec.tau0 + k as f64;
        assert!(drift_h(spec.gamma, tau) < 0.0);
        let reduced = spec.zeta(tau) * (-tau / 4.0).exp() - (spec.q_dot(tau) + spec.q(tau));
        assert!(reduced <= 0.0);
        for j in 0..=100 {
            let eta = spec.eta1 + (12.0 - spec.eta1) * j as f64 / 100.0;
            let scaled = spec.operator_with(tau, eta, 1.0) * (eta * eta / 8.0).exp() / eta;
            assert!(scaled <= reduced + 1e-12 * reduced.abs(), "tau {tau} eta {eta}: {scaled} > {reduced}");
        }
    }
}

fn sub_fd(spec: &SubBarrierSpec, tau: f64, eta: f64) -> f64 {
    let (dt, dx) = (1e-3, 1e-3);
    let p = |t: f64, e: f64| spec.value(t, e).unwrap();
    let pt = (p(tau + dt, eta) - p(tau - dt, eta)) / (2.0 * dt);
    let pe = (p(tau, eta + dx) - p(tau, eta - dx)) / (2.0 * dx);
    let pee = (p(tau, eta + dx) - 2.0 * p(tau, eta) + p(tau, eta - dx)) / (dx * dx);
    let lp = -pee - 0.5 * eta * pe - p(tau, eta);
    pt + lp + drift_h(spec.gamma, tau) * pe + spec.f_rate(tau) * p(tau, eta)
}

#[test]
fn super_barrier_certified_in_admissible_regime() {
    let spec = SuperBarrierSpec { lambda: 0.05, gamma: 0.25, epsilon: 0.05, amplitude: 10.0 };
    spec.validate().unwrap();
    let r = verify_supersolution(&spec, (1e3, 1e5), 1.0, SampleGrid { n_time: 201, n_space: 201 }).unwrap();
    println!("min margin {:e} at {:?}", r.min_margin, r.argmin);
    assert!(r.min_margin > 0.0 && r.refinement_confirmed && r.admissible);
}

#[test]
fn super_barrier_fails_for_large_gamma() {
    let spec = SuperBarrierSpec { lambda: 0.05, gamma: 0.4, epsilon: 0.05, amplitude: 10.0 };
    assert!(spec.validate().is_err());
    assert!(spec.exponent_gap() < 0.0);
    for amp in [10.0, 1e2, 1e3, 1e4] {
        let s = SuperBarrierSpec { amplitude: amp, ..spec };
        let ends = [1e5, 1e8, 1e11, 1e14, 1e17];
        let broken = ends.iter().find(|&&t_end| {
            let r = verify_supersolution(&s, (1e3, t_end), 1.0, SampleGrid { n_time: 61, n_space: 41 }).unwrap();
            assert!(!r.admissible);
            r.min_margin < 0.0
        });
        println!("A = {amp}: margin negative once the window reaches {broken:?}");
        assert!(broken.is_some());
    }
}

#[test]
fn cosine_fact_and_operator_match_finite_differences() {
    let spec = SuperBarrierSpec { lambda: 0.05, gamma: 0.25, epsilon: 0.05, amplitude: 10.0 };
    for &(t, x) in &[(1e3, 3.0), (5e3, -7.5), (2e4, 11.0), (1e5, 0.0)] {
        let (dt, dx) = (1e-2 * t, 1e-2);
        let s = |t: f64, x: f64| spec.value(t, x);
        let sxx = (s(t, x + dx) - 2.0 * s(t, x) + s(t, x - dx)) / (dx * dx);
        let beta: f64 = 0.3;
        let fact = t.powf(-2.0 * beta) * s(t, x);
        assert!((-sxx - fact).abs() <= 1e-6 * fact.abs().max(1e-12), "{t} {x}: {} vs {fact}", -sxx);
        // fourth-order in time, the t-scale is large
        let st = (-s(t + 2.0 * dt, x) + 8.0 * s(t + dt, x) - 8.0 * s(t - dt, x) + s(t - 2.0 * dt, x)) / (12.0 * dt);
        let sx = (s(t, x + dx) - s(t, x - dx)) / (2.0 * dx);
        let fd = st - sxx + 1.5 / t * (sx - s(t, x));
        let exact = spec.operator(t, x);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{t} {x}: {fd} vs {exact}");
    }
}

/// Classical RK4 for `f' = t^{γ-1} - (1-2γ)t^{-2γ}f` from `f(1) = f1`.
fn rk4(gamma: f64, f1: f64, t_end: f64, steps: usize) -> f64 {
    let rhs = |t: f64, f: f64| t.powf(gamma - 1.0) - (1.0 - 2.0 * gamma) * t.powf(-2.0 * gamma) * f;
    // uniform in log t so the early region is resolved
    let (mut s, ds) = (0.0f64, t_end.ln() / steps as f64);
    let g = |s: f64, f: f64| s.exp() * rhs(s.exp(), f);
    let mut f = f1;
    for _ in 0..steps {
        let k1 = g(s, f);
        let k2 = g(s + 0.5 * ds, f + 0.5 * ds * k1);
        let k3 = g(s + 0.5 * ds, f + 0.5 * ds * k2);
        let k4 = g(s + ds, f + ds * k3);
        f += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += ds;
    }
    f
}

#[test]
fn ode_proxy_matches_rk4() {
    assert_eq!(ode_proxy(0.25, 0.7, 1.0).unwrap(), 0.7);
    for t in [10.0, 100.0, 1e4] {
        let exact = ode_proxy(0.25, 1.0, t).unwrap();
        let oracle = rk4(0.25, 1.0, t, 200_000);
        println!("t = {t}: quadrature {exact:.12}, rk4 {oracle:.12}");
        assert!((exact - oracle).abs() <= 1e-8 * oracle.abs());
    }
    let scaled = |t: f64| ode_proxy(0.25, 0.0, t).unwrap() * t.powf(0.25);
    println!("f t^(1-3γ): {} at 1e2, {} at 1e4", scaled(1e2), scaled(1e4));
    assert!(scaled(1e4) < scaled(1e2));
    assert!(ode_proxy(0.4, 1.0, 10.0).is_err());
    assert!(ode_proxy(0.25, 1.0, 0.5).is_err());
}

fn compact_data() -> SelfSimilarState {
    let g = Grid::with_spacing(-1.0, 12.0, 0.01).unwrap();
    let w0 = g
        .nodes()
        .iter()
        .map(|&e| if (0.5..=2.0).contains(&e) { 0.5 * (PI * (e - 0.5) / 1.5).sin().powi(2) } else { 0.0 })
        .collect();
    SelfSimilarState::new(0.0, g, w0).unwrap()
}

fn ctrl() -> StepControl {
    StepControl { rtol: 1e-7, atol: 1e-10, dt_init: 1e-5, dt_min: 1e-14, dt_max: 0.05 }
}

#[test]
fn upper_barrier_dominates_and_keeps_mass() {
    assert!((upper_boundary(0.2, 3.0) - (-(0.6f64).exp()).exp()).abs() < 1e-15);
    assert!((upper_boundary(0.2, 3.0).ln() + 1.8221).abs() < 1e-4);
    let run = upper_barrier_run(&compact_data(), 2.0, 0.2, 6.0, 0.5, ctrl()).unwrap();
    for c in &run.checkpoints {
        println!("tau {:4.1}  I = {:.6}  negative part = {:.3e}  max(w - wbar) = {:.3e}", c.tau, c.moment, c.negative_part, c.excess);
    }
    assert!(run.max_excess() <= 0.0);
}

#[test]
fn enlarged_barrier_keeps_moment_above_one() {
    let run = upper_barrier_run(&compact_data(), 8.0, 0.2, 6.0, 0.5, ctrl()).unwrap();
    println!("min I = {:.6}", run.min_moment());
    assert!(run.min_moment() >= 1.0);
}

#[test]
fn undersized_barrier_reports_domination_failure() {
    let err = upper_barrier_run(&compact_data(), 0.25, 0.2, 2.0, 0.5, ctrl()).map(|_| ()).unwrap_err();
    assert!(matches!(err, Error::Domination { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sub_operator_matches_finite_differences(dt in 0.0..30.0f64, eta in 0.05..11.9f64) {
        let spec = subsolution_build(0.2, 1.0).unwrap();
        let tau = spec.tau0 + 0.01 + dt;
        let exact = spec.operator(tau, eta).unwrap();
        let fd = sub_fd(&spec, tau, eta);
        let scale = spec.zeta(tau) * (eta * (-eta * eta / 8.0).exp()).max(1e-3);
        prop_assert!((fd - exact).abs() <= 1e-5 * scale, "{} vs {}", fd, exact);
    }

    #[test]
    fn feasibility_is_monotone_in_tau0(shift in 0.0..40.0f64) {
        let spec = subsolution_build(0.2, 1.0).unwrap();
        let later = SubBarrierSpec::new(spec.gamma, spec.c_gamma, spec.tau0 + shift, spec.a2, spec.a3);
        let (a, b) = (spec.margins(), later.margins());
        prop_assert!(b.feasible());
        prop_assert!(b.zeta_rate >= a.zeta_rate);
    }
}
