use num_bigint::BigUint;
use thiserror::Error;

/// Errors surfaced by constructions and checks.
///
/// All shipped closed-form rules are total; stream errors can only arise from
/// derived rules whose inputs break a documented precondition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("stream `{label}` produced a non-increasing element at position {position}")]
    NotIncreasing { label: String, position: usize },

    #[error("chain violation at level {level}: pick {element} is not an element of the previous chain member")]
    ChainViolation { level: usize, element: BigUint },

    #[error("luzin length violation at stage {stage}: k_{stage} = {length} does not exceed the {occupied} predecessor elements already present")]
    LuzinLength {
        stage: usize,
        length: BigUint,
        occupied: BigUint,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
