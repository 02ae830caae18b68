//! Invariant suite behind `blitzsim validate`.

use std::collections::VecDeque;
use std::panic;

use crate::congestion::{cubic_k, cubic_window, CongestionState, CubicParams, Mode, MIN_WINDOW};
use crate::engine::{SimRng, SimTime};
use crate::netmodel::{EnqueueOutcome, Link, LinkConfig, Packet, SEGMENT_SIZE};
use crate::signaling::{decode_hint, encode_hint, AccessTech, BandwidthHint};
use crate::transport::ControllerSpec;

use super::emit::trace_csv;
use super::metrics::scenario_sim;
use super::scenario::{ScenarioConfig, Variant, KB_70, MB_2};
use super::sim::{simulate, CwndSample, FlowSpec, Recording, SimConfig, StartRule};

pub const HINT_TRIALS: u32 = 100_000;
/// Allowed relative deviation of the measured link rate.
pub const RATE_TOLERANCE: f64 = 0.005;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        determinism(seed),
        conservation(seed),
        token_bucket_rate(),
        buffer_bound(seed),
        cubic_plateau(),
        cubic_shape(),
        slow_start_doubling(seed),
        hint_roundtrip(seed),
        decode_totality(seed),
    ]
}

pub fn determinism(seed: u64) -> Check {
    let cfg = ScenarioConfig::dsl_fast().with_size(MB_2).with_variant(Variant::blitz(1000)).with_seed(seed);
    let rec = Recording { trace: true, cwnd: true, deliveries: true };
    let a = simulate(scenario_sim(&cfg, 0, rec));
    let b = simulate(scenario_sim(&cfg, 0, rec));
    let same = a == b && trace_csv(&a.trace) == trace_csv(&b.trace);
    Check::new("determinism", same, format!("{} events, {} trace rows", a.events, a.trace.len()))
}

/// Every finished flow received exactly its transfer, and every packet
/// offered to the bottleneck is accounted for.
pub fn conservation(seed: u64) -> Check {
    let mut runs = 0;
    let mut failures = Vec::new();
    for sc in ScenarioConfig::presets() {
        for size in [KB_70, MB_2] {
            for v in [Variant::Baseline, Variant::blitz(1000), Variant::blitz(4000)] {
                let cfg = sc.clone().with_size(size).with_variant(v).with_seed(seed);
                let out = simulate(scenario_sim(&cfg, 0, Recording::default()));
                runs += 1;
                for f in &out.flows {
                    if f.finished_at.is_some() && f.received_bytes != f.transfer_bytes {
                        failures.push(format!(
                            "{} {} {v} flow {}: received {}",
                            sc.name, size, f.flow_id, f.received_bytes
                        ));
                    }
                    if f.injected_pkts != f.delivered_pkts + f.dropped_pkts + f.in_network_pkts {
                        failures.push(format!(
                            "{} {} {v} flow {}: {} != {} + {} + {}",
                            sc.name,
                            size,
                            f.flow_id,
                            f.injected_pkts,
                            f.delivered_pkts,
                            f.dropped_pkts,
                            f.in_network_pkts
                        ));
                    }
                }
            }
        }
    }
    let detail = if failures.is_empty() { format!("{runs} runs") } else { failures.join("; ") };
    Check::new("conservation", failures.is_empty(), detail)
}

/// Keep a 50 Mbit/s link backlogged for 1.2 s and compare its egress rate
/// over one second with the configured rate.
pub fn token_bucket_rate() -> Check {
    let cfg =
        LinkConfig { rate_bps: 50_000_000, prop_delay: SimTime::from_millis(25), buffer_pkts: 208, burst_pkts: 1 };
    let mut link = Link::new(cfg).record_departures();
    let end = SimTime::from_millis(1200);
    let mut now = SimTime::ZERO;
    let mut pn = 0;
    let mut due = VecDeque::new();
    while now < end {
        while link.occupancy() < cfg.buffer_pkts {
            pn += 1;
            if let EnqueueOutcome::Accepted { departure } = link.enqueue(Packet::data(0, pn, 0, 1350, now), now) {
                due.push_back(departure);
            }
        }
        now = due.pop_front().expect("backlogged link has a departure");
        link.dequeue(now);
    }
    let rate =
        link.link_utilization(SimTime::from_millis(100), SimTime::from_millis(1100)).expect("departures recorded");
    let err = (rate - cfg.rate_bps as f64).abs() / cfg.rate_bps as f64;
    Check::new("token bucket rate", err <= RATE_TOLERANCE, format!("{rate:.0} bit/s, error {:.4} %", err * 100.0))
}

pub fn buffer_bound(seed: u64) -> Check {
    let mut worst = Vec::new();
    let mut ok = true;
    for sc in ScenarioConfig::presets() {
        let cfg = sc.clone().with_size(MB_2).with_variant(Variant::blitz(4000)).with_seed(seed);
        let out = simulate(scenario_sim(&cfg, 0, Recording::default()));
        ok &= out.max_occupancy <= sc.buffer_pkts;
        worst.push(format!("{} {}/{}", sc.name, out.max_occupancy, sc.buffer_pkts));
    }
    Check::new("buffer occupancy", ok, worst.join(", "))
}

fn epoch(params: &CubicParams, w_max_segs: u64) -> CongestionState {
    let w_max = w_max_segs * SEGMENT_SIZE;
    let cwnd = (w_max as f64 * params.beta).round() as u64;
    CongestionState {
        mode: Mode::CongestionAvoidance,
        cwnd,
        ssthresh: cwnd,
        w_max,
        epoch_start: SimTime::ZERO,
        cubic_k: cubic_k(params, w_max, cwnd),
        recovery_until_pkt_num: None,
    }
}

pub fn cubic_plateau() -> Check {
    let params = CubicParams::default();
    let mut worst = 0u64;
    for w in [2u64, 10, 100, 208, 1000, 5000] {
        let st = epoch(&params, w);
        let at_k = SimTime::from_nanos((st.cubic_k * 1e9).round() as u64);
        worst = worst.max(cubic_window(&params, &st, at_k).abs_diff(st.w_max.max(MIN_WINDOW)));
    }
    Check::new("cubic W(K) = W_max", worst <= 1, format!("largest deviation {worst} B"))
}

/// Concave and increasing up to K, flat at K, convex and increasing after.
pub fn cubic_shape() -> Check {
    let params = CubicParams::default();
    let st = epoch(&params, 100);
    let k = st.cubic_k;
    let w = |t: f64| cubic_window(&params, &st, SimTime::from_nanos((t * 1e9) as u64)) as f64;
    let h = 0.25;
    let mut ok = (w(0.0) - 70.0 * SEGMENT_SIZE as f64).abs() <= 1.0;
    let mut t = h;
    while t + h < 2.0 * k {
        let (a, b, c) = (w(t - h), w(t), w(t + h));
        ok &= a <= b && b <= c;
        let second = a - 2.0 * b + c;
        if t + h < k {
            ok &= second <= 1.0;
        } else if t - h > k {
            ok &= second >= -1.0;
        }
        t += h;
    }
    Check::new("cubic shape", ok, format!("K = {k:.3} s for W_max 100 segments"))
}

/// On a path with a generous buffer the window doubles every round trip
/// until the transfer ends.
pub fn slow_start_doubling(seed: u64) -> Check {
    let rtt = SimTime::from_millis(50);
    let cfg = SimConfig {
        link: LinkConfig {
            rate_bps: 1_000_000_000,
            prop_delay: rtt.mul_ratio(1, 2),
            buffer_pkts: 10_000,
            burst_pkts: 1,
        },
        rtt,
        flows: vec![FlowSpec {
            transfer_bytes: 3_000_000,
            controller: ControllerSpec::Baseline,
            start: StartRule::At(SimTime::ZERO),
            ends_run: true,
        }],
        seed,
        sender_jitter_max: SimTime::ZERO,
        end: SimTime::from_secs(10),
        cubic: CubicParams::default(),
        record: Recording { trace: false, cwnd: true, deliveries: false },
    };
    let out = simulate(cfg);
    let f = &out.flows[0];
    let log: Vec<&CwndSample> = out.cwnd_log.iter().collect();
    let all_ss = log.iter().all(|c| c.mode == Mode::SlowStart);
    let est = f.established_at.unwrap_or(SimTime::ZERO);
    let mut ratios = Vec::new();
    let mut t = est + rtt;
    let fin = f.finished_at.unwrap_or(SimTime::ZERO);
    while t + rtt + rtt <= fin {
        let at = |x: SimTime| log.iter().take_while(|c| c.time <= x).last().map(|c| c.cwnd);
        if let (Some(a), Some(b)) = (at(t), at(t + rtt)) {
            ratios.push(b as f64 / a as f64);
        }
        t += rtt;
    }
    let ok = all_ss && f.stats.pkts_lost == 0 && ratios.len() >= 3 && ratios.iter().all(|r| (r - 2.0).abs() <= 0.1);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Check::new("slow start doubling", ok, format!("per-round ratios [{}]", shown.join(", ")))
}

fn random_hint(rng: &mut SimRng) -> BandwidthHint {
    let tech = AccessTech::ALL[rng.below(AccessTech::ALL.len() as u64) as usize];
    let kbps = rng.next_u64() as u32;
    let hint = BandwidthHint::new(tech, kbps);
    if rng.below(2) == 0 {
        hint
    } else {
        BandwidthHint { min_rtt_us: Some(rng.next_u64() as u32), ..hint }
    }
}

pub fn hint_roundtrip(seed: u64) -> Check {
    let mut rng = SimRng::new(seed, 10);
    let mut bad = 0;
    for _ in 0..HINT_TRIALS {
        let h = random_hint(&mut rng);
        if decode_hint(&encode_hint(&h)) != Ok(h) {
            bad += 1;
        }
    }
    Check::new("hint roundtrip", bad == 0, format!("{HINT_TRIALS} hints, {bad} mismatches"))
}

/// Random byte strings, half of them mutations of valid encodings, must
/// decode to a value or an error without panicking.
pub fn decode_totality(seed: u64) -> Check {
    let mut rng = SimRng::new(seed, 11);
    let mut inputs = Vec::with_capacity(HINT_TRIALS as usize);
    for i in 0..HINT_TRIALS {
        let bytes = if i % 2 == 0 {
            let len = rng.below(16) as usize;
            (0..len).map(|_| rng.next_u64() as u8).collect::<Vec<u8>>()
        } else {
            let mut b = encode_hint(&random_hint(&mut rng));
            let pos = rng.below(b.len() as u64) as usize;
            b[pos] ^= 1 << rng.below(8);
            if rng.below(4) == 0 {
                b.truncate(rng.below(b.len() as u64) as usize);
            }
            b
        };
        inputs.push(bytes);
    }
    let (mut ok, mut err) = (0u32, 0u32);
    let result = panic::catch_unwind(|| {
        let mut counts = (0u32, 0u32);
        for b in &inputs {
            match decode_hint(b) {
                Ok(_) => counts.0 += 1,
                Err(_) => counts.1 += 1,
            }
        }
        counts
    });
    let passed = match result {
        Ok(counts) => {
            (ok, err) = counts;
            true
        }
        Err(_) => false,
    };
    Check::new("decode totality", passed, format!("{HINT_TRIALS} inputs, {ok} decoded, {err} rejected"))
}
