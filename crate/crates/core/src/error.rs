use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("boundary layer thickness {b} exceeds the domain inradius {inradius}")]
    LayerTooThick { b: f64, inradius: f64 },

    #[error("cannot sample from a region of zero volume")]
    DegenerateRegion,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("source rate too large for the time step (e^(s dt) - 1 = {growth}); reduce dt")]
    SourceTooStrong { growth: f64 },

    #[error(
        "unstable step at t = {time}: particle {id} moved {displacement}, more than the domain \
         diameter {diameter} (time step violates the stability bound)"
    )]
    Instability {
        time: f64,
        id: u64,
        displacement: f64,
        diameter: f64,
    },

    #[error("patch {patch_id}: target density {density} exceeds the configured ceiling {ceiling}")]
    DensityCeiling {
        patch_id: usize,
        density: f64,
        ceiling: f64,
    },

    #[error(
        "patch {patch_id}: outflux unsustainable, layer starved for {steps} consecutive steps"
    )]
    Starvation { patch_id: usize, steps: usize },

    #[error("power-law fit needs at least 4 points with distinct masses, got {0}")]
    TooFewPoints(usize),

    #[error("power-law fit is unidentifiable: the data carry no trend")]
    Unidentifiable,

    #[error("unknown experiment preset `{0}`")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
