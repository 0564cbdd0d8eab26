pub mod envelope;
pub mod estimate;
pub mod fisher;
pub mod ingest;
pub mod optimize;
pub mod pipeline;
pub mod ratio_map;
pub mod simulate;
pub mod undersample;

use std::f64::consts::PI;

/// rad/s to Hz.
pub(crate) fn hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}
