//! Post-processing: autocorrelation, block slicing, least-squares fits of the
//! correlation model, estimator statistics and the Fourier baseline.

mod autocorr;
mod fit;
mod fourier;
mod stats;

pub use autocorr::{
    autocorrelation, autocorrelation_direct, autocorrelation_with, slice_blocks, AutocorrResult, BlockSpec, Grouping,
    Normalization,
};
pub use fit::{fit_autocorrelation, fit_autocorrelation_from, FitBounds, FitModelSpec, FitParams, FitResult, Range};
pub use fourier::{fourier_baseline, FourierBaseline};
pub use stats::{estimator_distribution, freedman_diaconis, stats_from_fits, EstimatorStats, Histogram};
