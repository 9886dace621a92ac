use std::path::PathBuf;

use thiserror::Error;

use crate::solver::Violation;

/// Coordinate axis reported by range errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
    Angle,
    Beamlet,
    Voxel,
    Phase,
    Aperture,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Axis::Row => "row",
            Axis::Column => "column",
            Axis::Angle => "angle",
            Axis::Beamlet => "beamlet",
            Axis::Voxel => "voxel",
            Axis::Phase => "phase",
            Axis::Aperture => "aperture",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} index {value} out of range 1..={max}")]
    Range { axis: Axis, value: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("uncertainty set is empty: {0}")]
    InfeasibleSet(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid phantom spec: {0}")]
    Spec(String),

    #[error("model is infeasible: {0}")]
    Infeasible(String),

    #[error("limit reached without a solution: {0}")]
    Limit(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("{0}")]
    State(String),

    #[error("cannot normalize: {0}")]
    Normalize(String),

    #[error("warm start rejected with {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    WarmStartRejected(Vec<Violation>),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("corrupt dataset: {0}")]
    Corruption(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("external solver failed: {0}")]
    External(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
