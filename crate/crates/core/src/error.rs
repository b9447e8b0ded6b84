use thiserror::Error;

/// Errors raised by the geometry, optics, transport, solver and diagnostic layers.
///
/// Each variant names the hypothesis or precondition that failed so callers
/// (notably the CLI) can map it to a distinct exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("total internal reflection: radicand {radicand:e} < 0 at t = {t}")]
    TotalInternalReflection { t: f64, radicand: f64 },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error(
        "admissibility violated: worst x·m = {worst_dot:.6} gives margin {margin:.6} \
         above the refraction threshold {threshold:.6}, required margin {required:.6} \
         (extremal source {source_dir:?}, target {target_dir:?})"
    )]
    Admissibility {
        worst_dot: f64,
        threshold: f64,
        margin: f64,
        required: f64,
        source_dir: [f64; 3],
        target_dir: [f64; 3],
    },

    #[error(
        "energy budget violated: emitted {emitted:.6e} < required {required:.6e} \
         = target total {target_total:.6e} / (1 - C_eps), C_eps = {c_eps:.6}"
    )]
    Budget { emitted: f64, required: f64, target_total: f64, c_eps: f64 },

    #[error("infeasible target {index}: {reason}")]
    Infeasible { index: usize, reason: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("density error: {0}")]
    Density(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("finite-difference margin error: {0}")]
    Margin(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
