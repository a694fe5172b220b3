use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when deciding whether the duration is an exact multiple
/// of the sampling period, so that e.g. 0.3 / 0.1 still yields four slots.
const MULTIPLE_TOLERANCE: f64 = 1e-9;

/// One sampled frame position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSlot {
    pub index: usize,
    pub timestamp_s: f64,
}

impl FrameSlot {
    pub fn new(index: usize, timestamp_s: f64) -> Self {
        Self { index, timestamp_s }
    }
}

/// Uniform sampling schedule: one slot every `period_s` seconds over
/// `[0, duration_s]`, including 0 and including the end when the duration
/// is a multiple of the period.
pub fn build_sampling_schedule(duration_s: f64, period_s: f64) -> Result<Vec<FrameSlot>> {
    if period_s <= 0.0 || !period_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sampling period must be a positive finite number, got {period_s}"
        )));
    }
    if duration_s < 0.0 || !duration_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "duration must be a non-negative finite number, got {duration_s}"
        )));
    }
    let count = slot_count(duration_s, period_s);
    Ok((0..count)
        .map(|i| FrameSlot::new(i, i as f64 * period_s))
        .collect())
}

fn slot_count(duration_s: f64, period_s: f64) -> usize {
    let ratio = duration_s / period_s;
    (ratio + ratio.max(1.0) * MULTIPLE_TOLERANCE).floor() as usize + 1
}
