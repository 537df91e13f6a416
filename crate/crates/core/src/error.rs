use alloc::string::String;

/// Errors raised by the quantizer, network IR, engine and allocator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("bit-width {bitwidth} outside supported range {min}..={max}")]
    BitwidthRange { bitwidth: u32, min: u32, max: u32 },

    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("SQNR undefined: signal has zero energy")]
    ZeroSignal,

    #[error("shape mismatch in layer `{layer}`: {detail}")]
    ShapeMismatch { layer: String, detail: String },

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("quantization plan does not cover layer `{0}`")]
    PlanCoverage(String),

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("exhaustive search guard exceeded: {0}")]
    GuardExceeded(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
