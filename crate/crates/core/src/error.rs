use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integrand is not finite at abscissa x = {x:e} (value {value})")]
    NonFiniteIntegrand { x: f64, value: f64 },

    #[error("kernel is not finite at entry ({i}, {j}), argument {argument:e}: value {value}")]
    NonFiniteKernel {
        i: usize,
        j: usize,
        argument: f64,
        value: f64,
    },

    #[error("kernel evaluation failed on level curve r = {r:e}, angle t = {t:.6}: value {value}")]
    LevelCurve { r: f64, t: f64, value: f64 },

    #[error("insufficient frequency window: tail ratio {tail_ratio:e} exceeds {rel_tail:e} at {samples} samples")]
    InsufficientFrequencyWindow {
        tail_ratio: f64,
        rel_tail: f64,
        samples: usize,
    },

    #[error("j range does not cover the declared support; missing octaves {missing:?}")]
    UncoveredSupport { missing: Vec<i32> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("Lanczos bidiagonalization did not converge after {iterations} steps; residuals {residuals:?}")]
    LanczosNonConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("integral diverges or fails to converge at x = {x:e}: estimates {estimates:?}")]
    Divergent { x: f64, estimates: Vec<f64> },

    #[error("radial tail does not decay: end contribution ratio {ratio:e}")]
    RadialTail { ratio: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
