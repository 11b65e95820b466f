//! CSV and JSON writers. Floats are printed in shortest round-trip form.
//!
//! CSV schemas (first row is the header):
//!
//! | artifact      | columns                 |
//! |---------------|-------------------------|
//! | wave          | `xi,phi`                |
//! | front trace   | `t,sigma,level,frame`   |
//! | field         | `x,u`                   |
//! | self-similar  | `eta,w`                 |
//! | tail          | `x,p,half_width`        |

use std::fmt;
use std::path::Path;

use kpp_core::bbm::TailPoint;
use kpp_core::kpp_solver::{Field, FrontTrace};
use kpp_core::self_similar::SelfSimilarState;
use kpp_core::wave_profile::WaveProfile;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::pipeline::PipelineReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

pub enum Artifact<'a> {
    Wave(&'a WaveProfile),
    Trace(&'a FrontTrace),
    Field(&'a Field),
    SelfSimilar(&'a SelfSimilarState),
    Tail(&'a [TailPoint]),
    Report(&'a PipelineReport),
    /// Free-form summary of a subcommand.
    Summary(&'static str, &'a serde_json::Value),
}

impl Artifact<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Artifact::Wave(_) => "wave",
            Artifact::Trace(_) => "front trace",
            Artifact::Field(_) => "field",
            Artifact::SelfSimilar(_) => "self-similar state",
            Artifact::Tail(_) => "tail",
            Artifact::Report(_) => "pipeline report",
            Artifact::Summary(name, _) => name,
        }
    }

    fn table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let pairs = |xs: Vec<f64>, ys: &[f64]| xs.iter().zip(ys).map(|(x, y)| vec![x.to_string(), y.to_string()]).collect();
        Some(match self {
            Artifact::Wave(p) => (vec!["xi", "phi"], pairs(p.xi_grid.nodes(), &p.phi)),
            Artifact::Trace(tr) => (
                vec!["t", "sigma", "level", "frame"],
                tr.samples
                    .iter()
                    .map(|(t, s)| vec![t.to_string(), s.to_string(), tr.level.to_string(), tr.frame.to_string()])
                    .collect(),
            ),
            Artifact::Field(f) => (vec!["x", "u"], pairs(f.nodes(), &f.values)),
            Artifact::SelfSimilar(s) => (vec!["eta", "w"], pairs(s.eta_grid.nodes(), &s.w)),
            Artifact::Tail(ps) => (
                vec!["x", "p", "half_width"],
                ps.iter().map(|p| vec![p.x.to_string(), p.p.to_string(), p.half_width.to_string()]).collect(),
            ),
            Artifact::Report(_) | Artifact::Summary(..) => return None,
        })
    }

    fn json(&self) -> Option<serde_json::Value> {
        let v = match self {
            Artifact::Wave(p) => serde_json::to_value(p),
            Artifact::Trace(tr) => serde_json::to_value(tr),
            Artifact::SelfSimilar(s) => serde_json::to_value(s),
            Artifact::Tail(ps) => serde_json::to_value(ps),
            Artifact::Report(r) => serde_json::to_value(r),
            Artifact::Summary(_, v) => Ok((*v).clone()),
            Artifact::Field(_) => return None,
        };
        Some(v.expect("artifacts serialize"))
    }
}

pub fn emit_outputs(artifact: &Artifact, format: Format, path: &Path) -> Result<(), CliError> {
    let unsupported = || CliError::Unsupported { artifact: artifact.name(), format };
    match format {
        Format::Csv => {
            let (header, rows) = artifact.table().ok_or_else(unsupported)?;
            let csv_err = |e: csv::Error| CliError::io(path, e.into());
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            w.write_record(&header).map_err(csv_err)?;
            for r in rows {
                w.write_record(&r).map_err(csv_err)?;
            }
            w.flush().map_err(|e| CliError::io(path, e))
        }
        Format::Json => {
            let v = artifact.json().ok_or_else(unsupported)?;
            let mut text = serde_json::to_string_pretty(&v).expect("values serialize");
            text.push('\n');
            std::fs::write(path, text).map_err(|e| CliError::io(path, e))
        }
    }
}
