use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the core numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An MDP component violates its invariants. `index` points at the first
    /// offending entry in the flattened field (e.g. `s * A + a` for `reward`).
    #[error("invalid MDP: {field}[{index}]: {detail}")]
    InvalidMdp {
        field: &'static str,
        index: usize,
        detail: String,
    },
    #[error("invalid policy: row {row}: {detail}")]
    InvalidPolicy { row: usize, detail: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("step size too large: entry ({state}, {action}) became {value:e}")]
    StepSizeTooLarge {
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("advantage is not zero-mean under the policy at state {state}: {mean:e}")]
    InconsistentAdvantage { state: usize, mean: f64 },
    #[error("logits do not reproduce the policy at state {state}")]
    LogitPolicyMismatch { state: usize },
    #[error("invalid target: entry ({state}, {action}) is {value:e}")]
    InvalidTarget {
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("line search exhausted its backtracking budget")]
    LineSearchExhausted,
    #[error("infeasible gap: {0}")]
    InfeasibleGap(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration {t}: {source}")]
    AtIteration { t: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at(self, t: usize) -> Self {
        Error::AtIteration {
            t,
            source: Box::new(self),
        }
    }

    /// Strips any iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
