//! Versioned, checksummed snapshots of fields and self-similar states.
//!
//! File layout: a `kpp-lab-checkpoint <version>` line, a `sha256 <hex>` line,
//! then the JSON payload the digest is taken over.

use std::path::Path;

use kpp_core::kpp_solver::{Field, Frame, ReactionFn};
use kpp_core::numerics::Grid;
use kpp_core::self_similar::SelfSimilarState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CHECKPOINT_VERSION: &str = "1";
const MAGIC: &str = "kpp-lab-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub t: f64,
    pub frame: Frame,
    pub reaction: String,
    pub diffusion: f64,
}

impl From<&Field> for FieldRecord {
    fn from(f: &Field) -> Self {
        Self {
            grid: f.grid,
            values: f.values.clone(),
            t: f.t,
            frame: f.frame,
            reaction: f.reaction.tag().to_string(),
            diffusion: f.diffusion,
        }
    }
}

/// The primary data of a [`SelfSimilarState`]; the amplitude estimates are
/// recomputed on load (one of them is NaN on grids that miss its window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub tau: f64,
    pub eta_grid: Grid,
    pub w: Vec<f64>,
}

impl From<&SelfSimilarState> for StateRecord {
    fn from(s: &SelfSimilarState) -> Self {
        Self { tau: s.tau, eta_grid: s.eta_grid, w: s.w.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Snapshot {
    Field(FieldRecord),
    SelfSimilar(StateRecord),
}

impl Snapshot {
    /// Rebuilds the field; custom reactions cannot be restored from a tag.
    pub fn into_field(self) -> Result<Field, CliError> {
        match self {
            Snapshot::Field(r) => Ok(Field {
                grid: r.grid,
                values: r.values,
                t: r.t,
                frame: r.frame,
                reaction: ReactionFn::from_tag(&r.reaction).map_err(CliError::stage("checkpoint"))?,
                diffusion: r.diffusion,
            }),
            Snapshot::SelfSimilar(_) => Err(CliError::Config("checkpoint holds a self-similar state, not a field".into())),
        }
    }

    pub fn into_state(self) -> Result<SelfSimilarState, CliError> {
        match self {
            Snapshot::SelfSimilar(r) => SelfSimilarState::new(r.tau, r.eta_grid, r.w).map_err(CliError::stage("checkpoint")),
            Snapshot::Field(_) => Err(CliError::Config("checkpoint holds a field, not a self-similar state".into())),
        }
    }
}

pub fn save(snapshot: &Snapshot, path: &Path) -> Result<(), CliError> {
    let payload = serde_json::to_string(snapshot).expect("snapshots serialize");
    let digest = hex::encode(Sha256::digest(payload.as_bytes()));
    let text = format!("{MAGIC} {CHECKPOINT_VERSION}\nsha256 {digest}\n{payload}");
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Snapshot, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let corrupted = |reason: &str| CliError::Corrupted { path: path.to_path_buf(), reason: reason.into() };
    let text = std::str::from_utf8(&bytes).map_err(|_| corrupted("not UTF-8"))?;
    let mut parts = text.splitn(3, '\n');
    let version = parts
        .next()
        .and_then(|l| l.strip_prefix(MAGIC))
        .and_then(|l| l.strip_prefix(' '))
        .ok_or_else(|| corrupted("missing header"))?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::Version { path: path.to_path_buf(), found: version.into(), expected: CHECKPOINT_VERSION.into() });
    }
    let digest = parts.next().and_then(|l| l.strip_prefix("sha256 ")).ok_or_else(|| corrupted("missing checksum"))?;
    let payload = parts.next().ok_or_else(|| corrupted("missing payload"))?;
    if hex::encode(Sha256::digest(payload.as_bytes())) != digest {
        return Err(corrupted("checksum mismatch"));
    }
    serde_json::from_str(payload).map_err(|e| corrupted(&e.to_string()))
}
