use thiserror::Error;

/// Errors surfaced by the bound-computation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Amplitude imbalance outside the model's validity range (requires 1 + eps > 0).
    #[error("invalid amplitude imbalance eps = {eps}: model requires eps > -1")]
    InvalidImbalance { eps: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// UE location for which the arccos branch of the DOA is undefined.
    #[error("degenerate geometry at p = ({px}, {py}): require ||p|| > 0 and py > 0")]
    DegenerateGeometry { px: f64, py: f64 },

    /// Nuisance block of the channel FIM is too ill-conditioned to marginalize.
    #[error("near-singular nuisance block: condition estimate {cond:.3e} exceeds {threshold:.3e}")]
    NearSingularNuisanceBlock { cond: f64, threshold: f64 },

    /// Location-domain FIM is too ill-conditioned to invert for PEB/OEB.
    #[error("near-singular location FIM: condition estimate {cond:.3e} exceeds {threshold:.3e}")]
    NearSingularLocationFim { cond: f64, threshold: f64 },

    /// Oracle time grid too coarse to resolve the pulse.
    #[error("grid too coarse: oversampling {oversampling} < 4 samples per symbol")]
    GridTooCoarse { oversampling: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
