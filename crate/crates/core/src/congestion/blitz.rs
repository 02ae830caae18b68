use crate::engine::SimTime;
use crate::signaling::{AccessTech, BandwidthHint, Factor};

use super::{CongestionState, CubicParams, Mode, MIN_WINDOW};

/// Server-side scaling applied to the signaled estimate, per access
/// technology.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverestimateProfile {
    /// The same factor for every technology.
    Uniform(Factor),
    /// 1.5 for deeply buffered mobile access (3G, LTE), 1.0 otherwise.
    MobilePreset,
}

impl Default for OverestimateProfile {
    fn default() -> Self {
        OverestimateProfile::Uniform(Factor::ONE)
    }
}

impl OverestimateProfile {
    pub fn factor_for(self, tech: AccessTech) -> Factor {
        match self {
            OverestimateProfile::Uniform(f) => f,
            OverestimateProfile::MobilePreset if tech.is_mobile() => Factor::from_milli(1500).expect("nonzero"),
            OverestimateProfile::MobilePreset => Factor::ONE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlitzstartConfig {
    pub overestimate: Factor,
    /// Pace the whole first window instead of bursting the initial packets.
    pub pace_all: bool,
}

impl Default for BlitzstartConfig {
    fn default() -> Self {
        BlitzstartConfig { overestimate: Factor::ONE, pace_all: false }
    }
}

/// `bandwidth * factor * rtt / 8`, in bytes, rounded down. Computed in
/// 128-bit integers so the result is exact.
pub fn bdp_bytes(bandwidth_kbps: u32, factor: Factor, rtt: SimTime) -> u64 {
    let num = u128::from(bandwidth_kbps) * 1000 * u128::from(factor.milli()) * u128::from(rtt.as_nanos());
    let den = 8u128 * 1000 * 1_000_000_000;
    u64::try_from(num / den).unwrap_or(u64::MAX)
}

/// Initial controller state for a Blitzstart connection: the window is the
/// hinted bandwidth-delay product and the connection starts in congestion
/// avoidance with that window as the Cubic plateau.
///
/// A hint without an estimate, or a zero RTT, yields the ordinary Slow Start
/// state so the server degrades to standard behavior.
pub fn blitzstart_init(
    hint: &BandwidthHint,
    min_rtt: SimTime,
    cfg: &BlitzstartConfig,
    params: &CubicParams,
    now: SimTime,
) -> CongestionState {
    if !hint.has_estimate() || min_rtt == SimTime::ZERO {
        return CongestionState::slow_start(params);
    }
    let cwnd = bdp_bytes(hint.bandwidth_kbps, cfg.overestimate, min_rtt).max(MIN_WINDOW);
    let mut state = CongestionState {
        mode: Mode::CongestionAvoidance,
        cwnd,
        ssthresh: cwnd,
        w_max: cwnd,
        epoch_start: now,
        cubic_k: 0.0,
        recovery_until_pkt_num: None,
    };
    state.enter_avoidance(now);
    state
}
