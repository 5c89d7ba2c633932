//! Error type shared by every module in the crate.

use thiserror::Error;

/// Coarse failure category, used by callers (e.g. the CLI) to map errors
/// onto exit codes without matching every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments or contract violations caught before any computation.
    Usage,
    /// Problems with input data: parsing, ordering, missing values.
    Data,
    /// Numerical failures: grid support, divergence, residues out of bounds.
    Numerical,
}

/// Errors produced by the numerical and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence length {0} is not a positive power of two")]
    NonPowerOfTwoLength(usize),

    #[error("sequence contains a non-finite value at index {0}")]
    NonFiniteInput(usize),

    #[error("grid contract violated: {0}")]
    GridContract(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "inverted density has imaginary residue {residue:.3e} above the {limit:.3e} bound; \
         the input is not a valid characteristic-function sample for this grid"
    )]
    ImaginaryResidue { residue: f64, limit: f64 },

    #[error(
        "characteristic function magnitude {magnitude:.3e} at the grid edge t = ±{half_width} \
         exceeds {limit:.3e}; widen the frequency support `a`"
    )]
    TailDecay {
        magnitude: f64,
        half_width: f64,
        limit: f64,
    },

    #[error("point {value} lies outside the interpolation-safe span [{lo}, {hi}]")]
    OutsideSpan { value: f64, lo: f64, hi: f64 },

    #[error("observation {index} (value {value}) lies outside the density grid span [{lo}, {hi}]")]
    ObservationOutsideSpan {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite accumulation at observation {index}")]
    NonFiniteAccumulation { index: usize },

    #[error("cumulative density integrates to {integral} instead of 1; widen the output span")]
    GridSupport { integral: f64 },

    #[error("sample kurtosis {kurtosis} is not above 3; method-of-moments init is undefined, use the default init")]
    MomentsUndefined { kurtosis: f64 },

    #[error(
        "outlier rule flags {flagged} of {total} observations ({percent:.1}%), above the \
         {max_percent:.1}% cap; raise `max_removal_fraction` to override"
    )]
    ExcessiveRemoval {
        flagged: usize,
        total: usize,
        percent: f64,
        max_percent: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("model cdf decreases by {drop:.3e} over the sample range")]
    NonMonotoneCdf { drop: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Category of the failure, for exit-code mapping.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NonPowerOfTwoLength(_) | GridContract(_) | InvalidParams(_) | Domain(_) => {
                ErrorCategory::Usage
            }
            NonFiniteInput(_) | MomentsUndefined { .. } | ExcessiveRemoval { .. }
            | Parse { .. } | Io { .. } | Csv { .. } => ErrorCategory::Data,
            ImaginaryResidue { .. }
            | TailDecay { .. }
            | OutsideSpan { .. }
            | ObservationOutsideSpan { .. }
            | NonFiniteAccumulation { .. }
            | GridSupport { .. }
            | NonMonotoneCdf { .. } => ErrorCategory::Numerical,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
