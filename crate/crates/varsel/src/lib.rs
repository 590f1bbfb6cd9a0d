//! Variable selection for high-dimensional linear and logistic regression.
//!
//! The crate bundles three families of selection tools that are usually spread
//! over separate packages:
//!
//! * L0 information criteria (AIC, BIC, RIC, mBIC, mAIC, mBIC2, mAIC2, EBIC)
//!   minimized by stepwise search ([`criteria`], [`stepwise`]),
//! * sorted-L1 penalized estimation (SLOPE) and LASSO, solved by accelerated
//!   proximal gradient and coordinate descent ([`slope`], [`lasso`]), with
//!   BH-derived tuning sequences and K-fold cross-validation ([`cv`]),
//! * model-X Gaussian knockoffs with the FDR-controlling selection threshold
//!   ([`knockoffs`]).
//!
//! A Monte-Carlo harness ([`sim`]) reproduces error-rate and prediction studies
//! over declarative scenario specs with reproducible per-replicate seeding.
//!
//! Replicate-level loops run on rayon when the `parallel` feature (default) is
//! enabled; disabling it yields a dependency-free sequential build with
//! bit-identical results.

pub mod criteria;
pub mod cv;
pub mod data;
pub mod error;
pub mod glm;
pub mod knockoffs;
pub mod lasso;
pub mod linalg;
pub mod normal;
pub mod parallel;
pub mod rng;
pub mod sim;
pub mod slope;
pub mod stepwise;

pub use data::{Dataset, Family, Standardization, StandardizeMode};
pub use error::Error;
pub use rng::RngStream;
