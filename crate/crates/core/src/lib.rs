//! Fitted-value shrinkage regression.
//!
//! The estimator shrinks least-squares fitted values toward the sample mean,
//! `γ P_X y + (1 − γ) ȳ 1`, so its fitted values depend on the design only
//! through its column space. The crate provides the estimator, the γ selectors
//! for both `n > rank(X)` and interpolating designs, ridge and least-squares
//! baselines, and a Monte Carlo harness for comparing them.

pub mod baselines;
pub mod error;
pub mod linalg;
pub mod probability;
pub mod shrinkage;
pub mod simhub;
pub mod tuning;

pub use error::{FvsError, Result};
pub use linalg::{DesignMatrix, RankTolerance};
pub use probability::RngStream;
pub use shrinkage::{fit_fvs, fit_fvs_submodel, ShrinkageFit, ShrinkageTarget};
pub use tuning::{TuningMethod, TuningResult};
