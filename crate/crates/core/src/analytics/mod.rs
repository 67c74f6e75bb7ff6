//! Scaling collapses and exponent estimation on wealth histograms.

mod collapse;
mod estimators;
mod regime;

pub use collapse::{
    collapse, collapse_distance, collapse_occupancy, uncollapse, Binning, CollapseOptions,
    ScaledDistribution,
};
pub use estimators::{
    gaussian_moment_test, hill_sensitivity_sweep, hill_tail_exponent, robust_width,
    robust_width_with, stretched_exponent_from_log_density, stretched_exponential_fit,
    width_exponent_fit, FitResult, WidthEstimator, HILL_SWEEP,
};
pub use regime::{ScalingRegime, Transient, WidthFn};
