use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by map handling, scene construction, and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural or parse problem in a map CSV. `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    CkmFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: non-finite gain value")]
    NonFiniteGain { path: PathBuf, line: usize },

    #[error("{path}:{line}: expected node ({x} m, {y} m), found ({found_x} m, {found_y} m)")]
    MissingNode {
        path: PathBuf,
        line: usize,
        x: f64,
        y: f64,
        found_x: f64,
        found_y: f64,
    },

    #[error("{path}: non-uniform grid: {msg}")]
    NonUniformGrid { path: PathBuf, msg: String },

    #[error("scene file {path}: {msg}")]
    SceneFormat { path: PathBuf, msg: String },

    /// A parameter or derived quantity violates its documented range.
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error("query ({x} m, {y} m) lies outside the map extent {bounds}")]
    OutsideMap { x: f64, y: f64, bounds: String },

    #[error("a grid node coincides with the transmitter; path distance is zero")]
    ZeroDistance,

    #[error("UAV {uav} at ({x} m, {y} m) is outside the target area")]
    InfeasiblePlacement { uav: usize, x: f64, y: f64 },

    /// The interpolation system cannot be solved reliably.
    #[error("degenerate interpolation set (condition number {cond:.3e})")]
    DegenerateSet { cond: f64 },

    /// A fitted model failed to reproduce its own interpolation data.
    #[error("interpolation residual {residual:.3e} exceeds tolerance")]
    InterpolationResidual { residual: f64 },

    /// Random redraws could not restore a usable interpolation set.
    #[error("interpolation set still degenerate after {attempts} redraws")]
    SetRepairExhausted { attempts: usize },

    #[error("exhaustive search needs {required} evaluations, over the budget of {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
