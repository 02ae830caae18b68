use crate::congestion::{BlitzstartConfig, CubicParams};
use crate::engine::{mix_seed, SimTime};
use crate::netmodel::LinkConfig;
use crate::signaling::{encode_hint, estimate, BandwidthHint, EstimateContext};
use crate::transport::ControllerSpec;

use super::scenario::{MinRttSource, ScenarioConfig, Variant, SIM_CAP};
use super::sim::{simulate, Delivery, FlowSpec, Recording, SimConfig, SimOutcome, StartRule};

pub const LONG_FLOW: u32 = 0;
pub const SHORT_FLOW: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// `None` when the short flow did not finish before the cap.
    pub fct: Option<SimTime>,
    pub lost_pkts: u64,
    pub retransmitted_bytes: u64,
    pub inflation_ratio: f64,
    pub fairness_ratio: Option<f64>,
    pub short_bytes: u64,
    pub long_bytes: u64,
    pub timeout: bool,
    pub short_start: Option<SimTime>,
    pub bottleneck_drops: u64,
}

/// `short_bytes / long_bytes`; below one the long flow got more.
pub fn fairness_ratio(short_bytes: u64, long_bytes: u64) -> Option<f64> {
    (long_bytes > 0).then(|| short_bytes as f64 / long_bytes as f64)
}

/// Per-repetition seed; identical for every variant so runs pair up.
pub fn rep_seed(seed_base: u64, rep: u32) -> u64 {
    mix_seed(seed_base, u64::from(rep))
}

/// The encoded hint a client in this scenario would send.
pub fn client_hint(cfg: &ScenarioConfig, variant: Variant) -> Option<(Vec<u8>, BlitzstartConfig)> {
    match variant {
        Variant::Baseline => None,
        Variant::Blitz { factor, overestimate } => {
            let ctx = EstimateContext { access_tech: cfg.access_tech, now: cfg.short_flow_start };
            let base = estimate(&cfg.estimator, cfg.bottleneck_kbps, ctx);
            let kbps = u32::try_from(factor.apply(u64::from(base.bandwidth_kbps))).unwrap_or(u32::MAX);
            let mut hint = BandwidthHint::new(cfg.access_tech, kbps);
            if cfg.min_rtt_source == MinRttSource::Path {
                hint = hint.with_min_rtt(cfg.rtt);
            }
            Some((encode_hint(&hint), BlitzstartConfig { overestimate, pace_all: false }))
        }
    }
}

pub fn link_config(cfg: &ScenarioConfig) -> LinkConfig {
    LinkConfig {
        rate_bps: cfg.bottleneck_bps(),
        prop_delay: cfg.rtt.mul_ratio(1, 2),
        buffer_pkts: cfg.buffer_pkts,
        burst_pkts: 1,
    }
}

/// Simulation setup for one repetition: a baseline long flow from time
/// zero and the short flow under test once the bottleneck is saturated.
pub fn scenario_sim(cfg: &ScenarioConfig, rep: u32, record: Recording) -> SimConfig {
    let controller = match client_hint(cfg, cfg.variant) {
        None => ControllerSpec::Baseline,
        Some((hint, bcfg)) => ControllerSpec::Blitzstart { hint, cfg: bcfg },
    };
    SimConfig {
        link: link_config(cfg),
        rtt: cfg.rtt,
        flows: vec![
            FlowSpec {
                transfer_bytes: cfg.long_flow_bytes,
                controller: ControllerSpec::Baseline,
                start: StartRule::At(SimTime::ZERO),
                ends_run: false,
            },
            FlowSpec {
                transfer_bytes: cfg.short_flow_bytes,
                controller,
                start: StartRule::AfterSaturation {
                    not_before: cfg.short_flow_start,
                    jitter_max: cfg.jitter.start_max,
                },
                ends_run: true,
            },
        ],
        seed: rep_seed(cfg.seed_base, rep),
        sender_jitter_max: cfg.jitter.sender_max,
        end: SIM_CAP,
        cubic: CubicParams::default(),
        record,
    }
}

pub fn summarize(cfg: &ScenarioConfig, seed: u64, out: &SimOutcome) -> RunResult {
    let short = &out.flows[SHORT_FLOW as usize];
    let fct = short.fct();
    let (short_bytes, long_bytes) = match (short.egress_at_start.as_slice(), short.egress_at_finish.as_slice()) {
        ([l0, s0], [l1, s1]) => (s1 - s0, l1 - l0),
        _ => (0, 0),
    };
    let timeout = fct.is_none();
    RunResult {
        seed,
        fct,
        lost_pkts: short.stats.pkts_lost,
        retransmitted_bytes: short.stats.bytes_retransmitted,
        inflation_ratio: short.stats.bytes_retransmitted as f64 / cfg.short_flow_bytes as f64,
        fairness_ratio: if timeout { None } else { fairness_ratio(short_bytes, long_bytes) },
        short_bytes,
        long_bytes,
        timeout,
        short_start: short.started_at,
        bottleneck_drops: short.dropped_pkts,
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, rep: u32) -> RunResult {
    let sim = scenario_sim(cfg, rep, Recording::default());
    let seed = sim.seed;
    let out = simulate(sim);
    summarize(cfg, seed, &out)
}

/// Bits per second delivered to each flow over the trailing `window`,
/// sampled on a 1 ms grid from zero to `until`. Returns one series per
/// flow id below `flows`.
pub fn rolling_bandwidth(deliveries: &[Delivery], flows: u32, window: SimTime, until: SimTime) -> Vec<Vec<f64>> {
    rolling_bandwidth_every(deliveries, flows, window, until, SimTime::from_millis(1))
}

pub fn rolling_bandwidth_every(
    deliveries: &[Delivery],
    flows: u32,
    window: SimTime,
    until: SimTime,
    step: SimTime,
) -> Vec<Vec<f64>> {
    assert!(window > SimTime::ZERO && step > SimTime::ZERO);
    let n = (until.as_nanos() / step.as_nanos()) as usize + 1;
    let secs = window.as_secs_f64();
    let mut out = Vec::with_capacity(flows as usize);
    for f in 0..flows {
        let mine: Vec<&Delivery> = deliveries.iter().filter(|d| d.flow_id == f).collect();
        let (mut lo, mut hi, mut bytes) = (0usize, 0usize, 0u64);
        let mut series = Vec::with_capacity(n);
        for i in 0..n {
            let t = SimTime::from_nanos(step.as_nanos() * i as u64);
            while hi < mine.len() && mine[hi].time <= t {
                bytes += mine[hi].bytes;
                hi += 1;
            }
            // Window is (t - window, t].
            while lo < hi && mine[lo].time + window <= t {
                bytes -= mine[lo].bytes;
                lo += 1;
            }
            series.push(bytes as f64 * 8.0 / secs);
        }
        out.push(series);
    }
    out
}
