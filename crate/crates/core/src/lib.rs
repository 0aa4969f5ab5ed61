//! Two-flavor neutrino oscillations under non-Hermitian Hamiltonians.
//!
//! Two frameworks are implemented side by side: the bi-orthonormal G-metric
//! construction for the PT-symmetric Hamiltonian ([`gmetric`]) and the
//! trace-preserving density-matrix evolution ([`brodygraefe`]). The
//! [`oracle`] module cross-checks every closed form against direct numerical
//! evolution.

pub mod brodygraefe;
pub mod error;
pub mod gmetric;
pub mod linalg2;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod scan;
pub mod units;

pub use error::{Error, Result};
pub use linalg2::{CMat2, CVec2, Complex};
pub use model::{OscillationParams, Regime, RegimeKind};
pub use quad::ProbabilityQuad;
pub use units::UnitsMode;
