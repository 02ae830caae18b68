use crate::engine::SimTime;
use crate::netmodel::SEGMENT_SIZE;

use super::{AckSignal, CongestionController, CongestionState, CubicParams, Mode, MIN_WINDOW};

/// Number of RTT samples a round needs before the delay check applies.
pub const HYSTART_MIN_SAMPLES: u32 = 8;
const HYSTART_MIN_THRESHOLD: SimTime = SimTime::from_millis(4);

/// Per-ack Slow Start growth. Leaves Slow Start once the threshold is met.
pub fn slow_start_on_ack(state: &mut CongestionState, newly_acked_bytes: u64, now: SimTime) {
    debug_assert_eq!(state.mode, Mode::SlowStart);
    state.cwnd = state.cwnd.saturating_add(newly_acked_bytes);
    if state.cwnd >= state.ssthresh {
        state.cwnd = state.ssthresh;
        state.enter_avoidance(now);
    }
}

/// Delay increase that ends Slow Start: `max(4 ms, min_rtt / 8)`.
pub fn delay_threshold(min_rtt: SimTime) -> SimTime {
    HYSTART_MIN_THRESHOLD.max(min_rtt.mul_ratio(1, 8))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCheck {
    Stay,
    Exit,
}

/// Delay-increase rule applied to a round's minimum RTT sample.
pub fn slow_start_exit_check(round_min_rtt: SimTime, min_rtt: SimTime) -> ExitCheck {
    if round_min_rtt >= min_rtt + delay_threshold(min_rtt) {
        ExitCheck::Exit
    } else {
        ExitCheck::Stay
    }
}

/// Round bookkeeping for the delay-based Slow Start exit. A round ends when
/// the first packet sent after the previous round ended is acknowledged; the
/// round minimum is taken over its first [`HYSTART_MIN_SAMPLES`] samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HyStart {
    round_end: Option<u64>,
    round_min: Option<SimTime>,
    samples: u32,
}

impl HyStart {
    pub fn on_ack(&mut self, ack: &AckSignal) -> ExitCheck {
        if self.round_end.is_none_or(|end| ack.largest_acked >= end) {
            self.round_end = Some(ack.largest_sent);
            self.round_min = None;
            self.samples = 0;
        }
        let Some(sample) = ack.rtt_sample else {
            return ExitCheck::Stay;
        };
        if self.samples >= HYSTART_MIN_SAMPLES {
            return ExitCheck::Stay;
        }
        self.samples += 1;
        let min = self.round_min.map_or(sample, |m| m.min(sample));
        self.round_min = Some(min);
        if self.samples == HYSTART_MIN_SAMPLES {
            slow_start_exit_check(min, ack.min_rtt)
        } else {
            ExitCheck::Stay
        }
    }
}

/// `K = cbrt((w_max - cwnd_epoch) / C)` with windows in segments.
pub fn cubic_k(params: &CubicParams, w_max: u64, cwnd_epoch: u64) -> f64 {
    let diff = w_max.saturating_sub(cwnd_epoch) as f64 / SEGMENT_SIZE as f64;
    (diff / params.c).cbrt()
}

/// `W(t) = C (t - K)^3 + W_max`, converted to bytes and floored at the
/// minimum window.
pub fn cubic_window(params: &CubicParams, state: &CongestionState, now: SimTime) -> u64 {
    let t = now.saturating_sub(state.epoch_start).as_secs_f64();
    let w_max_segs = state.w_max as f64 / SEGMENT_SIZE as f64;
    let segs = params.c * (t - state.cubic_k).powi(3) + w_max_segs;
    let bytes = (segs * SEGMENT_SIZE as f64).round();
    if bytes <= MIN_WINDOW as f64 {
        MIN_WINDOW
    } else {
        bytes as u64
    }
}

/// Multiplicative decrease and start of a new Cubic epoch.
pub fn on_congestion_event(state: &mut CongestionState, params: &CubicParams, now: SimTime, largest_sent: u64) {
    state.w_max = state.cwnd;
    let reduced = (state.cwnd as f64 * params.beta).round() as u64;
    state.cwnd = reduced.max(MIN_WINDOW);
    state.ssthresh = state.cwnd;
    state.epoch_start = now;
    state.cubic_k = cubic_k(params, state.w_max, state.cwnd);
    state.mode = Mode::Recovery;
    state.recovery_until_pkt_num = Some(largest_sent);
}

/// Cubic congestion control. Starts in Slow Start unless constructed from a
/// pre-initialized state.
#[derive(Clone, Debug)]
pub struct Cubic {
    params: CubicParams,
    state: CongestionState,
    hystart: HyStart,
    initial_burst: u32,
    ever_slow_start: bool,
}

impl Cubic {
    pub fn new(params: CubicParams) -> Self {
        let state = CongestionState::slow_start(&params);
        Self::from_state(params, state)
    }

    pub fn from_state(params: CubicParams, state: CongestionState) -> Self {
        Cubic {
            params,
            state,
            hystart: HyStart::default(),
            initial_burst: params.initial_burst,
            ever_slow_start: state.mode == Mode::SlowStart,
        }
    }

    pub fn with_initial_burst(mut self, burst: u32) -> Self {
        self.initial_burst = burst;
        self
    }

    pub fn params(&self) -> &CubicParams {
        &self.params
    }

    fn grow_avoidance(&mut self, newly_acked: u64, now: SimTime) {
        let target = cubic_window(&self.params, &self.state, now);
        // Never grow faster than Slow Start would.
        let capped = target.min(self.state.cwnd + newly_acked);
        if capped > self.state.cwnd {
            self.state.cwnd = capped;
        }
    }
}

impl CongestionController for Cubic {
    fn state(&self) -> &CongestionState {
        &self.state
    }

    fn initial_burst(&self) -> u32 {
        self.initial_burst
    }

    fn on_packet_sent(&mut self, _pkt_num: u64, _now: SimTime) {}

    fn on_ack(&mut self, ack: &AckSignal, now: SimTime) {
        match self.state.mode {
            Mode::SlowStart => {
                let exit = self.hystart.on_ack(ack);
                slow_start_on_ack(&mut self.state, ack.newly_acked_bytes, now);
                if exit == ExitCheck::Exit && self.state.mode == Mode::SlowStart {
                    self.state.enter_avoidance(now);
                }
            }
            Mode::Recovery => {
                if self.state.recovery_until_pkt_num.is_none_or(|end| ack.largest_acked > end) {
                    self.state.mode = Mode::CongestionAvoidance;
                    self.grow_avoidance(ack.newly_acked_bytes, now);
                }
            }
            Mode::CongestionAvoidance => self.grow_avoidance(ack.newly_acked_bytes, now),
        }
    }

    fn on_loss(&mut self, lost_pkt_num: u64, largest_sent: u64, now: SimTime) -> bool {
        if self.state.recovery_until_pkt_num.is_some_and(|end| lost_pkt_num <= end) {
            return false;
        }
        on_congestion_event(&mut self.state, &self.params, now, largest_sent);
        true
    }

    fn ever_slow_start(&self) -> bool {
        self.ever_slow_start
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEG: u64 = SEGMENT_SIZE;

    fn params() -> CubicParams {
        CubicParams::default()
    }

    fn ack(bytes: u64, largest_acked: u64, largest_sent: u64, rtt_ms: u64) -> AckSignal {
        AckSignal {
            newly_acked_bytes: bytes,
            largest_acked,
            largest_sent,
            rtt_sample: Some(SimTime::from_millis(rtt_ms)),
            min_rtt: SimTime::from_millis(50),
        }
    }

    #[test]
    fn full_window_ack_doubles() {
        let mut s = CongestionState::slow_start(&params());
        slow_start_on_ack(&mut s, 32 * SEG, SimTime::ZERO);
        assert_eq!(s.cwnd, 64 * SEG);
        assert_eq!(s.mode, Mode::SlowStart);
    }

    #[test]
    fn per_ack_increment() {
        let mut s = CongestionState::slow_start(&params());
        slow_start_on_ack(&mut s, 1350, SimTime::ZERO);
        assert_eq!(s.cwnd, 32 * SEG + 1350);
    }

    #[test]
    fn reaching_ssthresh_enters_avoidance() {
        let mut s = CongestionState::slow_start(&params());
        s.ssthresh = 40 * SEG;
        slow_start_on_ack(&mut s, 10 * SEG, SimTime::from_millis(3));
        assert_eq!(s.mode, Mode::CongestionAvoidance);
        assert_eq!(s.cwnd, 40 * SEG);
        assert_eq!(s.w_max, 40 * SEG);
    }

    #[test]
    fn exit_check_threshold() {
        let min = SimTime::from_millis(50);
        assert_eq!(delay_threshold(min), SimTime::from_micros(6250));
        assert_eq!(slow_start_exit_check(SimTime::from_millis(57), min), ExitCheck::Exit);
        assert_eq!(slow_start_exit_check(min, min), ExitCheck::Stay);
        assert_eq!(delay_threshold(SimTime::from_millis(10)), SimTime::from_millis(4));
    }

    #[test]
    fn hystart_needs_a_full_round_of_samples() {
        let mut h = HyStart::default();
        for i in 0..7 {
            assert_eq!(h.on_ack(&ack(SEG, i, 40, 60)), ExitCheck::Stay);
        }
        assert_eq!(h.on_ack(&ack(SEG, 7, 40, 60)), ExitCheck::Exit);
        // A single low sample within the first eight keeps the flow in Slow Start.
        let mut h = HyStart::default();
        h.on_ack(&ack(SEG, 0, 40, 50));
        for i in 1..8 {
            assert_eq!(h.on_ack(&ack(SEG, i, 40, 70)), ExitCheck::Stay);
        }
    }

    #[test]
    fn loss_in_slow_start_sets_ssthresh() {
        let mut c = Cubic::new(params());
        c.state.cwnd = 100 * SEG;
        assert!(c.on_loss(5, 20, SimTime::from_millis(100)));
        assert_eq!(c.state().ssthresh, 70 * SEG);
        assert_eq!(c.mode(), Mode::Recovery);
    }

    #[test]
    fn decrease_from_200_segments() {
        let mut s = CongestionState::slow_start(&params());
        s.cwnd = 200 * SEG;
        on_congestion_event(&mut s, &params(), SimTime::ZERO, 10);
        assert_eq!(s.cwnd, 140 * SEG);
        assert_eq!(s.w_max, 200 * SEG);
    }

    #[test]
    fn one_reduction_per_round() {
        let mut c = Cubic::new(params());
        c.state.cwnd = 200 * SEG;
        assert!(c.on_loss(3, 50, SimTime::ZERO));
        assert!(!c.on_loss(4, 60, SimTime::from_millis(1)));
        assert_eq!(c.cwnd(), 140 * SEG);
        // A packet sent after the event starts a new one.
        assert!(c.on_loss(51, 60, SimTime::from_millis(2)));
        assert_eq!(c.cwnd(), 98 * SEG);
    }

    #[test]
    fn floor_is_kept() {
        let mut s = CongestionState::slow_start(&params());
        s.cwnd = MIN_WINDOW;
        on_congestion_event(&mut s, &params(), SimTime::ZERO, 1);
        assert_eq!(s.cwnd, MIN_WINDOW);
        assert_eq!(cubic_window(&params(), &s, SimTime::ZERO), MIN_WINDOW);
    }

    #[test]
    fn cubic_k_and_plateau() {
        let p = params();
        let mut s = CongestionState::slow_start(&p);
        s.cwnd = 100 * SEG;
        on_congestion_event(&mut s, &p, SimTime::ZERO, 0);
        assert!((s.cubic_k - 75f64.cbrt()).abs() < 1e-12);
        assert!((s.cubic_k - 4.217).abs() < 1e-3);
        assert_eq!(cubic_window(&p, &s, SimTime::ZERO), 70 * SEG);
        let k_ns = (s.cubic_k * 1e9).round() as u64;
        let at_k = cubic_window(&p, &s, SimTime::from_nanos(k_ns));
        assert!(at_k.abs_diff(100 * SEG) <= 1);
        let past = cubic_window(&p, &s, SimTime::from_nanos(k_ns + 1_000_000_000));
        assert!(past.abs_diff((100.4 * SEG as f64) as u64) <= 1, "{past}");
    }

    #[test]
    fn recovery_ends_after_newer_packet_acked() {
        let mut c = Cubic::new(params());
        c.state.cwnd = 100 * SEG;
        c.on_loss(10, 30, SimTime::ZERO);
        c.on_ack(&ack(SEG, 25, 40, 50), SimTime::from_millis(10));
        assert_eq!(c.mode(), Mode::Recovery);
        assert_eq!(c.cwnd(), 70 * SEG);
        c.on_ack(&ack(SEG, 31, 40, 50), SimTime::from_millis(60));
        assert_eq!(c.mode(), Mode::CongestionAvoidance);
        assert!(c.cwnd() >= 70 * SEG);
    }

    #[test]
    fn delay_exit_moves_to_avoidance_at_current_window() {
        let mut c = Cubic::new(params());
        for i in 0..8 {
            c.on_ack(&ack(SEG, i, 40, 60), SimTime::from_millis(100));
        }
        assert_eq!(c.mode(), Mode::CongestionAvoidance);
        assert_eq!(c.cwnd(), 40 * SEG);
        assert_eq!(c.state().w_max, 40 * SEG);
        assert!(c.ever_slow_start());
    }
}
