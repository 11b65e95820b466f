//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use kpp_core::kpp_solver::{Frame, InitSpec};
use kpp_core::parabolic::StepControl;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub wave: WaveSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub selfsim: SelfSimSection,
    #[serde(default)]
    pub barrier: BarrierSection,
    #[serde(default)]
    pub bbm: BbmSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("kpp-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    pub half_width: f64,
    pub n: usize,
    pub tol: f64,
    pub tail_window: (f64, f64),
}

impl Default for WaveSection {
    fn default() -> Self {
        Self { half_width: 25.0, n: 2001, tol: 1e-8, tail_window: (6.0, 14.0) }
    }
}

/// Front evolution. `init` is given in the coordinates of `frame` at `t = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub frame: Frame,
    pub t_end: f64,
    pub dx: f64,
    pub level: f64,
    pub init: InitSpec,
    /// Front samples per decade of time, on a geometric grid through the
    /// start of the fit window.
    pub samples_per_decade: usize,
    /// First sample time; `max(1, t_end/100)` when absent.
    pub t_first: Option<f64>,
    pub step: StepControl,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            frame: Frame::Moving,
            t_end: 2000.0,
            dx: 0.05,
            level: 0.5,
            init: InitSpec::step_at(-2.0),
            samples_per_decade: 15,
            t_first: None,
            step: StepControl { rtol: 1e-7, atol: 1e-10, dt_init: 1e-4, dt_min: 1e-12, dt_max: 50.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// `[t_end/10, t_end]` when absent.
    pub window: Option<(f64, f64)>,
    pub residual_tol: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { window: None, residual_tol: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfSimSection {
    pub fit_window: (f64, f64),
    /// Continue in self-similar variables up to this `τ` when set.
    pub tau_end: Option<f64>,
    pub eta_step: f64,
    pub step: StepControl,
}

impl Default for SelfSimSection {
    fn default() -> Self {
        Self {
            fit_window: (1.0, 3.0),
            tau_end: None,
            eta_step: 0.01,
            step: StepControl { rtol: 1e-6, atol: 1e-9, dt_init: 1e-4, dt_min: 1e-12, dt_max: 0.1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub gamma: f64,
    pub c_gamma: f64,
    pub tau_span: f64,
    pub eta_max: f64,
    pub sub_samples: (usize, usize),
    pub super_lambda: f64,
    pub super_gamma: f64,
    pub super_epsilon: f64,
    pub super_amplitude: f64,
    pub super_t_range: (f64, f64),
    pub super_forcing_bound: f64,
    pub super_samples: (usize, usize),
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            c_gamma: 1.0,
            tau_span: 30.0,
            eta_max: 12.0,
            sub_samples: (121, 1200),
            super_lambda: 0.05,
            super_gamma: 0.25,
            super_epsilon: 0.05,
            super_amplitude: 10.0,
            super_t_range: (1e3, 1e5),
            super_forcing_bound: 1.0,
            super_samples: (201, 201),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BbmSection {
    pub branch_rate: f64,
    pub diffusion: f64,
    pub t_end: f64,
    pub replicates: usize,
    pub checkpoints: Vec<f64>,
    /// Checkpoints used for the median-shift fit (at least four).
    pub median_fit: Vec<f64>,
    pub tail_step: f64,
}

impl Default for BbmSection {
    fn default() -> Self {
        Self {
            branch_rate: 1.0,
            diffusion: 0.5,
            t_end: 8.0,
            replicates: 10_000,
            checkpoints: vec![5.0, 6.0, 7.0],
            median_fit: vec![5.0, 6.0, 7.0, 8.0],
            tail_step: 0.05,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            out_dir: default_out_dir(),
            seed: 0,
            wave: WaveSection::default(),
            evolve: EvolveSection::default(),
            fit: FitSection::default(),
            selfsim: SelfSimSection::default(),
            barrier: BarrierSection::default(),
            bbm: BbmSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("format_version {:?} not recognized (expected {FORMAT_VERSION:?})", self.format_version));
        }
        let w = &self.wave;
        if !(w.half_width >= 20.0 && w.n >= 200 && w.tol > 0.0) {
            return bad(format!("wave section {w:?}"));
        }
        if !(w.tail_window.1 - w.tail_window.0 >= 5.0) {
            return bad(format!("tail window {:?} shorter than 5", w.tail_window));
        }
        let e = &self.evolve;
        if !(e.t_end > 1.0 && e.dx > 0.0 && e.level > 0.0 && e.level < 1.0 && e.samples_per_decade >= 1) {
            return bad(format!("evolve section: t_end {}, dx {}, level {}, samples per decade {}", e.t_end, e.dx, e.level, e.samples_per_decade));
        }
        if let Some(t) = e.t_first {
            if !(t >= 1.0 && t < e.t_end) {
                return bad(format!("t_first {t} outside [1, t_end)"));
            }
        }
        e.step.validate().or_else(|err| bad(err.to_string()))?;
        if let Some((a, b)) = self.fit.window {
            if !(a < b) {
                return bad(format!("fit window ({a}, {b})"));
            }
        }
        if !(self.fit.residual_tol > 0.0) {
            return bad("fit.residual_tol must be positive".into());
        }
        let s = &self.selfsim;
        if !(s.fit_window.0 < s.fit_window.1 && s.eta_step > 0.0) {
            return bad(format!("selfsim section {s:?}"));
        }
        s.step.validate().or_else(|err| bad(err.to_string()))?;
        let b = &self.bbm;
        if !(b.t_end >= 0.0 && b.tail_step > 0.0) || b.replicates == 0 {
            return bad(format!("bbm section: t_end {}, replicates {}, tail_step {}", b.t_end, b.replicates, b.tail_step));
        }
        Ok(())
    }

    /// Copy with every optional field filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let t_end = c.evolve.t_end;
        c.evolve.t_first = Some(c.evolve.t_first.unwrap_or((t_end / 100.0).max(1.0)));
        c.fit.window = Some(c.fit.window.unwrap_or((t_end / 10.0, t_end)));
        c
    }

    /// SHA-256 of the resolved configuration in canonical JSON, ignoring the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut c = self.resolved();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_out_dir(&self) -> Result<(), CliError> {
        let dir = &self.out_dir;
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let probe = dir.join(".write-test");
        std::fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
        std::fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
    }
}
