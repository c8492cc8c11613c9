pub mod enhance;
pub mod evaluate;
pub mod gradcheck;
pub mod stats;
pub mod weights;

use std::time::Instant;

pub(crate) fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
