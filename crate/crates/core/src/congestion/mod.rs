//! Congestion controllers: Cubic with Slow Start, and Blitzstart, which is
//! the same Cubic started directly in congestion avoidance with a window
//! sized from a client-supplied bandwidth hint.

mod blitz;
mod cubic;

pub use blitz::{bdp_bytes, blitzstart_init, BlitzstartConfig, OverestimateProfile};
pub use cubic::{
    cubic_k, cubic_window, delay_threshold, on_congestion_event, slow_start_exit_check, slow_start_on_ack, Cubic,
    ExitCheck, HyStart,
};

use crate::engine::SimTime;
use crate::netmodel::SEGMENT_SIZE;

/// Lower bound on the congestion window.
pub const MIN_WINDOW: u64 = 2 * SEGMENT_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    SlowStart,
    CongestionAvoidance,
    Recovery,
}

impl Mode {
    /// Fraction of the smoothed RTT over which one window is paced.
    pub fn pacing_fraction(self) -> (u64, u64) {
        match self {
            Mode::SlowStart => (1, 2),
            Mode::CongestionAvoidance | Mode::Recovery => (3, 4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicParams {
    /// Cubic scaling constant, segments per second cubed.
    pub c: f64,
    /// Multiplicative decrease factor.
    pub beta: f64,
    pub initial_window_segs: u64,
    /// Packets released without pacing when a connection starts sending.
    pub initial_burst: u32,
}

impl Default for CubicParams {
    fn default() -> Self {
        CubicParams { c: 0.4, beta: 0.7, initial_window_segs: 32, initial_burst: 10 }
    }
}

impl CubicParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(format!("c must be positive, got {}", self.c));
        }
        if self.initial_window_segs < 2 {
            return Err("initial window must be at least 2 segments".into());
        }
        Ok(())
    }

    pub fn initial_window(&self) -> u64 {
        self.initial_window_segs * SEGMENT_SIZE
    }
}

/// Controller state. Windows are in wire bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CongestionState {
    pub mode: Mode,
    pub cwnd: u64,
    pub ssthresh: u64,
    /// Window just before the last reduction (or at epoch start).
    pub w_max: u64,
    pub epoch_start: SimTime,
    /// Seconds from `epoch_start` until the window returns to `w_max`.
    pub cubic_k: f64,
    /// Packets up to this number belong to the current congestion event.
    pub recovery_until_pkt_num: Option<u64>,
}

impl CongestionState {
    pub fn slow_start(params: &CubicParams) -> Self {
        CongestionState {
            mode: Mode::SlowStart,
            cwnd: params.initial_window(),
            ssthresh: u64::MAX,
            w_max: 0,
            epoch_start: SimTime::ZERO,
            cubic_k: 0.0,
            recovery_until_pkt_num: None,
        }
    }

    /// Start a congestion-avoidance epoch whose plateau is the current window.
    pub fn enter_avoidance(&mut self, now: SimTime) {
        self.mode = Mode::CongestionAvoidance;
        self.ssthresh = self.cwnd;
        self.w_max = self.cwnd;
        self.epoch_start = now;
        self.cubic_k = 0.0;
    }
}

/// What the transport reports to the controller for one acknowledgment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckSignal {
    pub newly_acked_bytes: u64,
    pub largest_acked: u64,
    pub largest_sent: u64,
    pub rtt_sample: Option<SimTime>,
    pub min_rtt: SimTime,
}

pub trait CongestionController: Send {
    fn state(&self) -> &CongestionState;

    fn cwnd(&self) -> u64 {
        self.state().cwnd
    }

    fn mode(&self) -> Mode {
        self.state().mode
    }

    /// Packets the sender may release back-to-back when it starts sending.
    fn initial_burst(&self) -> u32;

    fn on_packet_sent(&mut self, pkt_num: u64, now: SimTime);

    fn on_ack(&mut self, ack: &AckSignal, now: SimTime);

    /// Loss of `lost_pkt_num` was detected. Returns whether the window was
    /// reduced (at most once per round trip).
    fn on_loss(&mut self, lost_pkt_num: u64, largest_sent: u64, now: SimTime) -> bool;

    /// Whether the controller has been in Slow Start at any point.
    fn ever_slow_start(&self) -> bool;
}
