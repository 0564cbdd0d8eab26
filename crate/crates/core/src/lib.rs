//! Fisher information, protocol design, Monte Carlo synthesis and estimation
//! for Qdyne and correlation-spectroscopy (CS) nano-NMR under diffusion noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`envelopes`]: correlation envelopes `C(z)` and the phase covariance model.
//! * [`fisher`]: single-measurement and total Fisher information for both
//!   protocols (quadrature, brute-force sums, closed forms), the information
//!   ratio `R_δ` and parameter sweeps.
//! * [`protocol`]: experimental-design calculators.
//! * [`simulate`]: statistically polarized signals and photon traces.
//! * [`estimate`]: autocorrelation, block slicing, least-squares fitting,
//!   estimator statistics and the Fourier baseline.
//! * [`pipeline`]: simulate → slice → fit → rmse, compared to the Cramér–Rao bound.
//!
//! Library quantities are SI: seconds, rad/s, Tesla.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelopes;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod par;
pub mod pipeline;
pub mod protocol;
pub mod quad;
pub mod simulate;
pub mod special;

pub use envelopes::{CorrelationModel, EnvelopeKind, NuisanceDecay};
pub use error::{Error, Result};
pub use fisher::{FisherMethod, FisherResult, ProtocolTiming, ReadoutParams};
pub use par::Execution;
