//! Sorted-L1 penalized estimation: the exact prox, BH-derived tuning
//! sequences, and monotone-FISTA solvers for the plain and mean-shift
//! objectives.

mod lambda;
mod prox;
mod solver;

pub use lambda::{make_lambda, read_lambda_csv, write_lambda_csv, LambdaRule, LambdaSequence};
pub use prox::{prox_sorted_l1, sorted_l1_norm};
pub use solver::{
    cumsum_violation, fit_mean_shift, fit_slope, kkt_residual, magnitude_clusters,
    mean_shift_mu_lambda, slope_path, MeanShiftFit, SlopeFit, SlopeOptions, SlopePathPoint,
};
