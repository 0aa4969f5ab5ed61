use thiserror::Error;

use crate::model::RegimeKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("closed form requires chi = 0 (got {0})")]
    UnsupportedChi(f64),

    #[error("Hamiltonian is not PT-symmetric (requires theta = pi/4 and chi = 0)")]
    NotPtSymmetric,

    #[error("operation requires the {expected:?} regime, parameters are {found:?}")]
    WrongRegime {
        expected: RegimeKind,
        found: RegimeKind,
    },

    #[error("kappa*sin(phi)/(dm2 + sigma) = {0} < -1 has no arccosh parameterization")]
    UnsupportedBranch(f64),

    #[error("G-norm of a state vanished ({0:e})")]
    DegenerateNorm(f64),

    #[error("sigma + dm2*sin(2 theta) = 0: z is undefined")]
    DegenerateSech,

    #[error("evolved density matrix trace underflowed ({0:e})")]
    VanishingNorm(f64),

    #[error("not a valid density matrix: {0}")]
    InvalidDensity(String),

    #[error("(alpha, beta) not reachable from a real Hamiltonian: sinh(alpha)cos(beta) = {got}, required {required}")]
    UnreachableAngles { got: f64, required: f64 },

    #[error("empty grid")]
    EmptyGrid,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
