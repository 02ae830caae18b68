use thiserror::Error;

use crate::congestion::Mode;
use crate::engine::SimTime;
use crate::netmodel::SEGMENT_SIZE;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PacingError {
    #[error("smoothed RTT must be positive")]
    ZeroRtt,
    #[error("congestion window below one segment")]
    TinyWindow,
}

/// Gap between full-size segments when one window is spread over a fraction
/// of the smoothed RTT: half in Slow Start, three quarters otherwise.
pub fn pacing_interval(cwnd_bytes: u64, srtt: SimTime, mode: Mode) -> Result<SimTime, PacingError> {
    if srtt == SimTime::ZERO {
        return Err(PacingError::ZeroRtt);
    }
    if cwnd_bytes < SEGMENT_SIZE {
        return Err(PacingError::TinyWindow);
    }
    let (num, den) = mode.pacing_fraction();
    let ns = u128::from(srtt.as_nanos()) * u128::from(num) * u128::from(SEGMENT_SIZE)
        / (u128::from(den) * u128::from(cwnd_bytes));
    Ok(SimTime::from_nanos(ns as u64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PacerState {
    pub interval: SimTime,
    pub next_release: SimTime,
    pub initial_burst_remaining: u32,
}

impl PacerState {
    pub fn new(initial_burst: u32) -> Self {
        PacerState { initial_burst_remaining: initial_burst, ..Default::default() }
    }

    /// Earliest time the next packet may leave.
    pub fn release_time(&self, now: SimTime) -> SimTime {
        if self.initial_burst_remaining > 0 {
            now
        } else {
            self.next_release.max(now)
        }
    }

    pub fn can_send(&self, now: SimTime) -> bool {
        self.release_time(now) <= now
    }

    pub fn on_send(&mut self, now: SimTime, interval: SimTime) {
        self.interval = interval;
        if self.initial_burst_remaining > 0 {
            self.initial_burst_remaining -= 1;
            self.next_release = now + interval;
        } else {
            self.next_release = self.next_release.max(now) + interval;
        }
    }
}
