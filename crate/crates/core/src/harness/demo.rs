//! Two-flow startup traces on a 50 Mbit/s, 50 ms bottleneck: a single
//! baseline flow leaving Slow Start, and a second baseline flow joining
//! once the first has saturated the link.

use std::fmt::Write as _;

use crate::congestion::{CubicParams, Mode};
use crate::engine::SimTime;
use crate::transport::ControllerSpec;

use super::metrics::{link_config, rolling_bandwidth_every};
use super::scenario::{ScenarioConfig, LONG_FLOW_BYTES};
use super::sim::{simulate, CwndSample, FlowSpec, Recording, SimConfig, SimOutcome, StartRule};

pub const TOP_DURATION: SimTime = SimTime::from_secs(3);
/// How long the second flow is observed after it starts.
pub const BOTTOM_OBSERVATION: SimTime = SimTime::from_secs(120);
pub const SHORT_WINDOW: SimTime = SimTime::from_millis(50);
pub const LONG_WINDOW: SimTime = SimTime::from_secs(1);
/// Share of capacity that counts as saturated.
pub const SATURATION_SHARE: f64 = 0.95;
/// Allowed relative distance from the fair share.
pub const FAIR_TOLERANCE: f64 = 0.2;

fn backlogged(start: StartRule) -> FlowSpec {
    FlowSpec { transfer_bytes: LONG_FLOW_BYTES, controller: ControllerSpec::Baseline, start, ends_run: false }
}

fn base_config(seed: u64, flows: Vec<FlowSpec>, end: SimTime) -> SimConfig {
    let sc = ScenarioConfig::dsl_fast();
    SimConfig {
        link: link_config(&sc),
        rtt: sc.rtt,
        flows,
        seed,
        sender_jitter_max: sc.jitter.sender_max,
        end,
        cubic: CubicParams::default(),
        record: Recording { trace: false, cwnd: true, deliveries: true },
    }
}

#[derive(Clone, Debug)]
pub struct Fig1Top {
    pub outcome: SimOutcome,
    pub capacity_bps: f64,
    /// 50 ms rolling receive rate on a 1 ms grid.
    pub bandwidth: Vec<f64>,
    pub slow_start_exit: Option<SimTime>,
    /// First instant the rolling rate reaches the saturation share.
    pub saturation: Option<SimTime>,
    /// Window growth over consecutive round trips while in Slow Start.
    pub round_ratios: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Fig1Bottom {
    pub outcome: SimOutcome,
    pub capacity_bps: f64,
    pub second_start: SimTime,
    pub step: SimTime,
    /// Per flow, 50 ms rolling rate on `step`.
    pub short_window: Vec<Vec<f64>>,
    /// Per flow, 1 s rolling rate on `step`.
    pub long_window: Vec<Vec<f64>>,
    /// Time from the second flow's start until its 1 s rate first lies
    /// within the tolerance of half the capacity.
    pub time_to_fair: Option<SimTime>,
}

/// Window in force at `t` according to the log of one flow.
fn cwnd_at(log: &[CwndSample], t: SimTime) -> Option<u64> {
    let i = log.partition_point(|c| c.time <= t);
    (i > 0).then(|| log[i - 1].cwnd)
}

pub fn fig1_top(seed: u64) -> Fig1Top {
    let cfg = base_config(seed, vec![backlogged(StartRule::At(SimTime::ZERO))], TOP_DURATION);
    let rtt = cfg.rtt;
    let capacity_bps = cfg.link.rate_bps as f64;
    let outcome = simulate(cfg);
    let bandwidth =
        rolling_bandwidth_every(&outcome.deliveries, 1, SHORT_WINDOW, TOP_DURATION, SimTime::from_millis(1))
            .pop()
            .unwrap_or_default();
    let log: Vec<CwndSample> = outcome.cwnd_log.iter().filter(|c| c.flow_id == 0).copied().collect();
    let slow_start_exit = log.iter().find(|c| c.mode != Mode::SlowStart).map(|c| c.time);
    let saturation =
        bandwidth.iter().position(|&b| b >= SATURATION_SHARE * capacity_bps).map(|i| SimTime::from_millis(i as u64));

    let mut round_ratios = Vec::new();
    if let (Some(est), Some(exit)) = (outcome.flows[0].established_at, slow_start_exit) {
        let mut t = est;
        while t + rtt + rtt <= exit {
            if let (Some(a), Some(b)) = (cwnd_at(&log, t + rtt), cwnd_at(&log, t + rtt + rtt)) {
                round_ratios.push(b as f64 / a as f64);
            }
            t += rtt;
        }
    }
    Fig1Top { outcome, capacity_bps, bandwidth, slow_start_exit, saturation, round_ratios }
}

pub fn fig1_bottom(seed: u64) -> Fig1Bottom {
    let sc = ScenarioConfig::dsl_fast();
    let second = StartRule::AfterSaturation { not_before: sc.short_flow_start, jitter_max: sc.jitter.start_max };
    let end = sc.short_flow_start + sc.jitter.start_max + BOTTOM_OBSERVATION;
    let cfg = base_config(seed, vec![backlogged(StartRule::At(SimTime::ZERO)), backlogged(second)], end);
    let capacity_bps = cfg.link.rate_bps as f64;
    let outcome = simulate(cfg);
    let second_start = outcome.flows[1].started_at.expect("second flow starts before the end");
    let step = SimTime::from_millis(10);
    let short_window = rolling_bandwidth_every(&outcome.deliveries, 2, SHORT_WINDOW, end, step);
    let long_window = rolling_bandwidth_every(&outcome.deliveries, 2, LONG_WINDOW, end, step);
    let fair = capacity_bps / 2.0;
    let from = ((second_start + LONG_WINDOW).as_nanos() / step.as_nanos()) as usize + 1;
    let time_to_fair = long_window[1]
        .iter()
        .enumerate()
        .skip(from)
        .find(|(_, &b)| (b - fair).abs() <= FAIR_TOLERANCE * fair)
        .map(|(i, _)| SimTime::from_nanos(step.as_nanos() * i as u64) - second_start);
    Fig1Bottom { outcome, capacity_bps, second_start, step, short_window, long_window, time_to_fair }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::SlowStart => "slow_start",
        Mode::CongestionAvoidance => "avoidance",
        Mode::Recovery => "recovery",
    }
}

pub fn cwnd_csv(log: &[CwndSample]) -> String {
    let mut s = String::from("time_us,flow_id,cwnd_bytes,mode\n");
    for c in log {
        let _ = writeln!(s, "{},{},{},{}", c.time.as_micros(), c.flow_id, c.cwnd, mode_name(c.mode));
    }
    s
}

pub fn top_bandwidth_csv(top: &Fig1Top) -> String {
    let mut s = String::from("time_ms,bps_50ms\n");
    for (i, b) in top.bandwidth.iter().enumerate() {
        let _ = writeln!(s, "{i},{b:.0}");
    }
    s
}

pub fn bottom_bandwidth_csv(bottom: &Fig1Bottom) -> String {
    let mut s = String::from("time_ms,flow0_bps_50ms,flow1_bps_50ms,flow0_bps_1s,flow1_bps_1s\n");
    let step_ms = bottom.step.as_millis_f64();
    for i in 0..bottom.short_window[0].len() {
        let _ = writeln!(
            s,
            "{},{:.0},{:.0},{:.0},{:.0}",
            i as f64 * step_ms,
            bottom.short_window[0][i],
            bottom.short_window[1][i],
            bottom.long_window[0][i],
            bottom.long_window[1][i]
        );
    }
    s
}
