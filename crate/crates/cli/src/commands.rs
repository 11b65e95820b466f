//! Subcommand bodies. Each writes its artifacts to the output directory and
//! returns a JSON summary, also saved as `<name>.json`.

use std::path::Path;

use kpp_core::barriers::{
    epsilon_constants, subsolution_build, verify_subsolution, verify_supersolution, SampleGrid, SuperBarrierSpec,
};
use kpp_core::bbm::{derivative_martingale, max_cdf, median, median_shift_fit, simulate, BbmConfig, Normalization};
use kpp_core::kpp_solver::{boundary_limits, fit_log_coefficient, Field, Frame};
use kpp_core::numerics::Grid;
use kpp_core::self_similar::{alpha_estimate, evolve_w, transform_onto, transform_to_ss, AlphaMode};
use kpp_core::wave_profile::tail_constants;
use serde_json::{json, Value};

use crate::checkpoint::{self, FieldRecord, Snapshot, StateRecord};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{emit_outputs, Artifact, Format};
use crate::pipeline::{evolve_stage, run_pipeline, wave_stage};

fn finish(cfg: &ExperimentConfig, name: &'static str, summary: Value) -> Result<Value, CliError> {
    emit_outputs(&Artifact::Summary(name, &summary), Format::Json, &cfg.out_dir.join(format!("{name}.json")))?;
    Ok(summary)
}

pub fn wave(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let p = wave_stage(cfg)?;
    emit_outputs(&Artifact::Wave(&p), Format::Csv, &cfg.out_dir.join("wave.csv"))?;
    let (k, omega) = tail_constants(&p, cfg.wave.tail_window).map_err(CliError::stage("tail constants"))?;
    finish(
        cfg,
        "wave",
        json!({
            "residual_norm": p.residual_norm,
            "k_tail": p.k_tail,
            "omega_fit": p.omega_fit,
            "tail_window": cfg.wave.tail_window,
            "k_window": k,
            "omega_window": omega,
        }),
    )
}

pub fn evolve(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let (trace, field) = evolve_stage(cfg, cfg.evolve.frame)?;
    let dir = &cfg.out_dir;
    emit_outputs(&Artifact::Trace(&trace), Format::Csv, &dir.join("front_trace.csv"))?;
    emit_outputs(&Artifact::Field(&field), Format::Csv, &dir.join("field.csv"))?;
    checkpoint::save(&Snapshot::Field(FieldRecord::from(&field)), &dir.join("field.ckpt"))?;
    let (lo, hi) = field.min_max();
    let (left, right) = boundary_limits(&field);
    let mut summary = json!({
        "frame": field.frame,
        "t_end": field.t,
        "front": trace.samples.last().map(|s| s.1),
        "min": lo,
        "max": hi,
        "boundary_gaps": [left, right],
    });
    if field.frame == Frame::Lab {
        let window = cfg.resolved().fit.window.expect("resolved");
        summary["speed"] = json!(trace.samples.last().map(|s| s.1 / s.0));
        match fit_log_coefficient(&trace, Some(window)) {
            Ok((c1, se)) => summary["c1"] = json!({ "value": c1, "stderr": se, "window": window }),
            Err(e) => summary["c1"] = json!({ "error": e.to_string() }),
        }
    }
    finish(cfg, "evolve", summary)
}

/// Self-similar amplitude of a moving-frame field, either loaded from a
/// checkpoint or computed with the configured evolution.
pub fn selfsim(cfg: &ExperimentConfig, field: Option<&Path>) -> Result<Value, CliError> {
    let field: Field = match field {
        Some(path) => checkpoint::load(path)?.into_field()?,
        None => evolve_stage(cfg, Frame::Moving)?.1,
    };
    let s = &cfg.selfsim;
    let state = transform_to_ss(&field).map_err(CliError::stage("self-similar transform"))?;
    emit_outputs(&Artifact::SelfSimilar(&state), Format::Csv, &cfg.out_dir.join("selfsim.csv"))?;
    let amplitudes = |st| -> Result<Value, CliError> {
        let m = alpha_estimate(st, AlphaMode::Moment, None).map_err(CliError::stage("amplitude"))?;
        let f = alpha_estimate(st, AlphaMode::Fit, Some(s.fit_window)).map_err(CliError::stage("amplitude"))?;
        Ok(json!({ "tau": st.tau, "alpha_moment": m, "alpha_fit": f, "x_inf": -m.ln() }))
    };
    let mut summary = json!({ "initial": amplitudes(&state)? });
    if let Some(tau_end) = s.tau_end {
        let grid = Grid::with_spacing(-1.0, 12.0, s.eta_step).map_err(CliError::stage("self-similar evolution"))?;
        let start = transform_onto(&field, grid).map_err(CliError::stage("self-similar evolution"))?;
        let end = evolve_w(&start, tau_end, &field.reaction, s.step).map_err(CliError::stage("self-similar evolution"))?;
        emit_outputs(&Artifact::SelfSimilar(&end), Format::Csv, &cfg.out_dir.join("selfsim_end.csv"))?;
        checkpoint::save(&Snapshot::SelfSimilar(StateRecord::from(&end)), &cfg.out_dir.join("selfsim_end.ckpt"))?;
        summary["final"] = amplitudes(&end)?;
    }
    finish(cfg, "selfsim", summary)
}

pub fn barrier(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let b = &cfg.barrier;
    let (eps1, eps2) = epsilon_constants();
    let spec = subsolution_build(b.gamma, b.c_gamma).map_err(CliError::stage("subsolution build"))?;
    let sub = verify_subsolution(
        &spec,
        (spec.tau0, spec.tau0 + b.tau_span),
        (0.0, b.eta_max),
        SampleGrid { n_time: b.sub_samples.0, n_space: b.sub_samples.1 },
    )
    .map_err(CliError::stage("subsolution check"))?;
    let sup_spec = SuperBarrierSpec {
        lambda: b.super_lambda,
        gamma: b.super_gamma,
        epsilon: b.super_epsilon,
        amplitude: b.super_amplitude,
    };
    let sup = verify_supersolution(
        &sup_spec,
        b.super_t_range,
        b.super_forcing_bound,
        SampleGrid { n_time: b.super_samples.0, n_space: b.super_samples.1 },
    )
    .map_err(CliError::stage("supersolution check"))?;
    finish(
        cfg,
        "barrier",
        json!({
            "epsilon_constants": [eps1, eps2],
            "subsolution": sub,
            "subsolution_certified": sub.max_violation <= 0.0 && sub.refinement_confirmed,
            "supersolution": sup,
            "supersolution_certified": sup.min_margin > 0.0 && sup.refinement_confirmed && sup.admissible,
        }),
    )
}

pub fn bbm(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let b = &cfg.bbm;
    let bc = BbmConfig {
        branch_rate: b.branch_rate,
        diffusion: b.diffusion,
        t_end: b.t_end,
        replicates: b.replicates,
        seed: cfg.seed,
        checkpoints: b.checkpoints.clone(),
    };
    let ens = simulate(&bc).map_err(CliError::stage("bbm simulation"))?;
    let t = b.t_end;
    let reach = bc.speed() * t + 5.0;
    let n = ((reach + 5.0) / b.tail_step).ceil() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| -5.0 + b.tail_step * i as f64).collect();
    let tail = max_cdf(&ens, t, &xs).map_err(CliError::stage("bbm tail"))?;
    emit_outputs(&Artifact::Tail(&tail), Format::Csv, &cfg.out_dir.join("bbm_tail.csv"))?;
    let maxima = ens.maxima(t).map_err(CliError::stage("bbm tail"))?;
    let z = derivative_martingale(&ens, t, Normalization::Native).map_err(CliError::stage("bbm martingale"))?;
    let mut summary = json!({
        "t_end": t,
        "replicates": b.replicates,
        "seed": cfg.seed,
        "speed": bc.speed(),
        "median_max": median(&maxima),
        "derivative_martingale_mean": z.iter().sum::<f64>() / z.len() as f64,
    });
    if b.median_fit.len() >= 4 {
        match median_shift_fit(&ens, &b.median_fit) {
            Ok(fit) => summary["median_shift"] = serde_json::to_value(fit).expect("fit serializes"),
            Err(e) => summary["median_shift"] = json!({ "error": e.to_string() }),
        }
    }
    finish(cfg, "bbm", summary)
}

pub fn xinfty(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let report = run_pipeline(cfg)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}
