//! Front shift from the moving-frame front and from the self-similar amplitude,
//! computed on one run.

use std::time::Instant;

use kpp_core::kpp_solver::{
    extract_xinf, fit_log_model, fit_xinf_unchecked, frame_shift, init_data, moving_grid, record_trace,
    Field, Frame, FrontTrace, ReactionFn,
};
use kpp_core::self_similar::{alpha_estimate, transform_to_ss, AlphaMode};
use kpp_core::wave_profile::{solve_wave, WaveProfile};
use kpp_core::Error;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, FieldRecord, Snapshot};
use crate::config::{ExperimentConfig, FORMAT_VERSION};
use crate::error::CliError;
use crate::output::{emit_outputs, Artifact, Format};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub format_version: String,
    pub config_hash: String,
    pub t_end: f64,
    pub level: f64,
    /// Shift from the fitted front position.
    pub x_inf_front: f64,
    pub x_inf_front_stderr: f64,
    /// Moment estimate of the amplitude at `t_end`.
    pub alpha: f64,
    /// `-log alpha`.
    pub x_inf_alpha: f64,
    /// `x_inf_front - x_inf_alpha`.
    pub difference: f64,
    /// Log coefficient of the front in lab coordinates, when the fit is
    /// well posed.
    pub c1_fit: Option<f64>,
    pub c1_stderr: Option<f64>,
    pub fit_window: (f64, f64),
    pub fit_model: String,
    pub fit_residual: f64,
    pub residual_tol: f64,
    pub pre_asymptotic: bool,
    pub notes: Vec<String>,
    pub runtimes: Vec<StageTime>,
}

pub fn wave_stage(cfg: &ExperimentConfig) -> Result<WaveProfile, CliError> {
    let w = &cfg.wave;
    solve_wave(w.half_width, w.n, w.tol).map_err(CliError::stage("wave"))
}

/// Sample times `w0·10^{j/m}` in `[t_first, t_end]`, where `w0` is the start
/// of the fit window, followed by `t_end`.
pub fn sample_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let c = cfg.resolved();
    let (t0, t1) = (c.evolve.t_first.expect("resolved"), c.evolve.t_end);
    let w0 = c.fit.window.expect("resolved").0;
    let m = c.evolve.samples_per_decade as f64;
    let lo = (m * (t0 / w0).log10()).ceil() as i64;
    let hi = (m * (t1 / w0).log10()).floor() as i64;
    let mut ts: Vec<f64> = (lo..=hi).map(|j| w0 * 10f64.powf(j as f64 / m)).filter(|&t| t >= t0 && t <= t1).collect();
    if ts.last().is_some_and(|&t| t1 - t < 1e-9 * t1) {
        ts.pop();
    }
    ts.push(t1);
    ts
}

/// Runs the configured front evolution from `t = 1`.
pub fn evolve_stage(cfg: &ExperimentConfig, frame: Frame) -> Result<(FrontTrace, Field), CliError> {
    let e = &cfg.evolve;
    let grid = match frame {
        Frame::Moving => moving_grid(e.t_end, e.dx),
        Frame::Lab => kpp_core::kpp_solver::lab_grid(e.t_end, e.dx, 1.0),
    }
    .map_err(CliError::stage("evolve"))?;
    let field = init_data(&e.init, grid, frame, ReactionFn::quadratic()).map_err(CliError::stage("evolve"))?;
    record_trace(&field, e.level, &sample_times(cfg), e.step).map_err(CliError::stage("evolve"))
}

/// The trace in lab coordinates, using the exact frame change.
pub fn to_lab(trace: &FrontTrace) -> FrontTrace {
    match trace.frame {
        Frame::Lab => trace.clone(),
        Frame::Moving => FrontTrace {
            level: trace.level,
            samples: trace.samples.iter().map(|&(t, s)| (t, s + frame_shift(t))).collect(),
            frame: Frame::Lab,
        },
    }
}

struct Clock {
    times: Vec<StageTime>,
    start: Instant,
}

impl Clock {
    fn new() -> Self {
        Self { times: Vec::new(), start: Instant::now() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.times.push(StageTime { stage: stage.into(), seconds: (now - self.start).as_secs_f64() });
        self.start = now;
    }
}

/// wave, moving-frame evolution, front fit, self-similar transform, amplitude.
/// Each stage writes its artifacts to `out_dir` before the next one starts.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineReport, CliError> {
    config.validate()?;
    if config.evolve.frame != Frame::Moving {
        return Err(CliError::Config("the pipeline runs in the moving frame".into()));
    }
    config.prepare_out_dir()?;
    let cfg = config.resolved();
    let dir = &cfg.out_dir;
    let mut clock = Clock::new();
    let mut notes = Vec::new();

    let profile = wave_stage(&cfg)?;
    emit_outputs(&Artifact::Wave(&profile), Format::Csv, &dir.join("wave.csv"))?;
    clock.lap("wave");

    let (trace, field) = evolve_stage(&cfg, Frame::Moving)?;
    emit_outputs(&Artifact::Trace(&trace), Format::Csv, &dir.join("front_trace.csv"))?;
    emit_outputs(&Artifact::Field(&field), Format::Csv, &dir.join("field_final.csv"))?;
    checkpoint::save(&Snapshot::Field(FieldRecord::from(&field)), &dir.join("field_final.ckpt"))?;
    clock.lap("evolve");

    let window = cfg.fit.window.expect("resolved");
    let tol = cfg.fit.residual_tol;
    let (estimate, pre_asymptotic) = match extract_xinf(&trace, &profile, Some(window), tol) {
        Ok(e) => (e, false),
        Err(err @ (Error::PreAsymptotic { .. } | Error::InvalidInput(_))) => {
            notes.push(format!("front fit: {err}"));
            (fit_xinf_unchecked(&trace, &profile, Some(window)).map_err(CliError::stage("front fit"))?, true)
        }
        Err(err) => return Err(CliError::stage("front fit")(err)),
    };
    let x_inf_front = estimate.x_inf.expect("set by the shift fit");
    let (c1_fit, c1_stderr) = match fit_log_model(&to_lab(&trace), Some(window)) {
        Ok(e) => (e.c1, Some(e.stderr[0].1)),
        Err(err) => {
            notes.push(format!("log coefficient fit: {err}"));
            (None, None)
        }
    };
    clock.lap("front fit");

    let state = transform_to_ss(&field).map_err(CliError::stage("self-similar transform"))?;
    emit_outputs(&Artifact::SelfSimilar(&state), Format::Csv, &dir.join("selfsim_final.csv"))?;
    clock.lap("self-similar transform");

    let alpha = alpha_estimate(&state, AlphaMode::Moment, None).map_err(CliError::stage("amplitude"))?;
    clock.lap("amplitude");

    let x_inf_alpha = -alpha.ln();
    let report = PipelineReport {
        format_version: FORMAT_VERSION.into(),
        config_hash: config.hash(),
        t_end: cfg.evolve.t_end,
        level: cfg.evolve.level,
        x_inf_front,
        x_inf_front_stderr: estimate.stderr[0].1,
        alpha,
        x_inf_alpha,
        difference: x_inf_front - x_inf_alpha,
        c1_fit,
        c1_stderr,
        fit_window: estimate.window,
        fit_model: estimate.model,
        fit_residual: estimate.residual_rms,
        residual_tol: tol,
        pre_asymptotic,
        notes,
        runtimes: clock.times,
    };
    emit_outputs(&Artifact::Report(&report), Format::Json, &dir.join("report.json"))?;
    Ok(report)
}
