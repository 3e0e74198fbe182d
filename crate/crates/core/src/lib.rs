//! Completely positive and q-positive maps on matrix algebras.
//!
//! Maps on M_n(ℂ) are stored as n²×n² action matrices in the row-major
//! matrix-unit basis. The crate covers Choi/Kraus/Schur forms, resolvent
//! families and q-positivity sampling, limit maps and the q-subordination
//! order, corners, and canonical forms for E₂, E₃ and unital q-positive maps
//! on M₂.

pub mod classify;
pub mod config;
pub mod corners;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod random;
pub mod resolvent;
pub mod scan;
pub mod superop;

pub use config::ToleranceConfig;
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use superop::{ChoiMatrix, CpCheck, RectangularMap, Superoperator};
pub use limits::{DominanceVerdict, LimitMethod, LimitReport, LimitResiduals};
pub use resolvent::{LimitCheck, QPositivityVerdict, VerdictTag};
pub use scan::{GridMeta, MinEigSample};
pub use corners::{CornerProblem, HypermaxWitness};
pub use classify::{CanonicalForm, CanonicalParams, Family, GeneratorExtraction};
