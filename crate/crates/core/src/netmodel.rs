//! Dumbbell bottleneck: token-bucket shaped link with a drop-tail buffer and
//! fixed propagation delay.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::SimTime;

/// Full-size datagram on the wire, in bytes.
pub const SEGMENT_SIZE: u64 = 1500;
/// Stream payload carried by a full-size datagram.
pub const MAX_PAYLOAD: u64 = 1350;
/// Per-packet header overhead (IP + UDP + QUIC framing).
pub const HEADER_OVERHEAD: u64 = SEGMENT_SIZE - MAX_PAYLOAD;
/// Wire length of an acknowledgment.
pub const ACK_SIZE: u64 = 40;
/// Wire length of the server's handshake flight packet.
pub const HANDSHAKE_SIZE: u64 = 1200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Ack,
    Handshake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub flow_id: u32,
    pub kind: PacketKind,
    /// Per-flow packet number; retransmissions get fresh numbers.
    pub pkt_num: u64,
    /// First stream byte carried (data packets).
    pub seq: u64,
    /// Stream payload bytes.
    pub payload: u64,
    /// Bytes on the wire.
    pub len: u64,
    pub sent_at: SimTime,
}

impl Packet {
    pub fn data(flow_id: u32, pkt_num: u64, seq: u64, payload: u64, sent_at: SimTime) -> Self {
        debug_assert!(payload > 0 && payload <= MAX_PAYLOAD);
        Packet { flow_id, kind: PacketKind::Data, pkt_num, seq, payload, len: payload + HEADER_OVERHEAD, sent_at }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkConfigError {
    #[error("link rate must be positive")]
    ZeroRate,
    #[error("buffer must hold at least one packet")]
    ZeroBuffer,
    #[error("burst must be at least one packet")]
    ZeroBurst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkConfig {
    pub rate_bps: u64,
    /// One-way propagation delay.
    pub prop_delay: SimTime,
    pub buffer_pkts: usize,
    pub burst_pkts: u32,
}

impl LinkConfig {
    pub fn new(rate_bps: u64, prop_delay: SimTime, buffer_pkts: usize) -> Result<Self, LinkConfigError> {
        let cfg = LinkConfig { rate_bps, prop_delay, buffer_pkts, burst_pkts: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LinkConfigError> {
        if self.rate_bps == 0 {
            return Err(LinkConfigError::ZeroRate);
        }
        if self.buffer_pkts == 0 {
            return Err(LinkConfigError::ZeroBuffer);
        }
        if self.burst_pkts == 0 {
            return Err(LinkConfigError::ZeroBurst);
        }
        Ok(())
    }

    /// Serialization time of `len` bytes, rounded down to the nanosecond.
    pub fn serialization_time(&self, len: u64) -> SimTime {
        SimTime::from_nanos((u128::from(len) * 8 * 1_000_000_000 / u128::from(self.rate_bps)) as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted { departure: SimTime },
    Dropped,
}

/// Per-flow packet accounting at the bottleneck.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowCounters {
    pub injected_pkts: u64,
    pub injected_bytes: u64,
    pub dropped_pkts: u64,
    pub departed_pkts: u64,
    pub departed_bytes: u64,
    pub delivered_pkts: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Departure {
    at: SimTime,
    bytes: u64,
}

/// Runtime state of one bottleneck link.
///
/// Tokens are tracked in "bit-nanoseconds" (`bits * 1e9`) so that refill and
/// serialization are exact integer arithmetic at any rate.
#[derive(Debug)]
pub struct Link {
    cfg: LinkConfig,
    queue: VecDeque<(Packet, SimTime)>,
    busy_until: SimTime,
    /// Leftover sub-nanosecond serialization time, in bit-ns units.
    carry: u128,
    /// Burst credit accrued while idle, in bit-ns units.
    tokens: u128,
    last_refill: SimTime,
    nonempty_since: Option<SimTime>,
    max_occupancy: usize,
    flows: Vec<FlowCounters>,
    departures: Option<Vec<(Departure, u32)>>,
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Self {
        cfg.validate().expect("invalid link config");
        Link {
            cfg,
            queue: VecDeque::with_capacity(cfg.buffer_pkts),
            busy_until: SimTime::ZERO,
            carry: 0,
            tokens: 0,
            last_refill: SimTime::ZERO,
            nonempty_since: None,
            max_occupancy: 0,
            flows: Vec::new(),
            departures: None,
        }
    }

    /// Keep a log of every departure so that [`Link::link_utilization`] can
    /// be evaluated afterwards.
    pub fn record_departures(mut self) -> Self {
        self.departures = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn occupancy(&self) -> usize {
        self.queue.len()
    }

    pub fn max_occupancy(&self) -> usize {
        self.max_occupancy
    }

    /// Time since which the queue has been continuously non-empty.
    pub fn nonempty_since(&self) -> Option<SimTime> {
        self.nonempty_since
    }

    pub fn counters(&self, flow_id: u32) -> FlowCounters {
        self.flows.get(flow_id as usize).copied().unwrap_or_default()
    }

    fn flow_mut(&mut self, flow_id: u32) -> &mut FlowCounters {
        let idx = flow_id as usize;
        if self.flows.len() <= idx {
            self.flows.resize(idx + 1, FlowCounters::default());
        }
        &mut self.flows[idx]
    }

    /// Offer a packet to the link at `now`.
    pub fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome {
        let flow = self.flow_mut(packet.flow_id);
        flow.injected_pkts += 1;
        flow.injected_bytes += packet.len;
        if self.queue.len() >= self.cfg.buffer_pkts {
            self.flow_mut(packet.flow_id).dropped_pkts += 1;
            return EnqueueOutcome::Dropped;
        }

        let start = now.max(self.busy_until);
        let rate = u128::from(self.cfg.rate_bps);
        let burst_cap = u128::from(self.cfg.burst_pkts - 1) * u128::from(SEGMENT_SIZE) * 8 * 1_000_000_000;
        if start > self.last_refill {
            let idle = u128::from((start - self.last_refill).as_nanos());
            self.tokens = (self.tokens + idle * rate).min(burst_cap);
        }
        let need = u128::from(packet.len) * 8 * 1_000_000_000;
        let departure = if self.tokens >= need {
            self.tokens -= need;
            start
        } else {
            let owed = need - self.tokens + self.carry;
            self.tokens = 0;
            let ns = owed / rate;
            self.carry = owed % rate;
            start + SimTime::from_nanos(ns as u64)
        };
        self.busy_until = departure;
        self.last_refill = departure;

        if self.queue.is_empty() {
            self.nonempty_since = Some(now);
        }
        self.queue.push_back((packet, departure));
        self.max_occupancy = self.max_occupancy.max(self.queue.len());
        EnqueueOutcome::Accepted { departure }
    }

    /// Remove the head-of-line packet, which must be due at `now`.
    pub fn dequeue(&mut self, now: SimTime) -> Packet {
        let (packet, departure) = self.queue.pop_front().expect("dequeue from empty link");
        debug_assert_eq!(departure, now, "departure out of order");
        if self.queue.is_empty() {
            self.nonempty_since = None;
        }
        let flow = self.flow_mut(packet.flow_id);
        flow.departed_pkts += 1;
        flow.departed_bytes += packet.len;
        if let Some(log) = self.departures.as_mut() {
            log.push((Departure { at: now, bytes: packet.len }, packet.flow_id));
        }
        packet
    }

    pub fn mark_delivered(&mut self, flow_id: u32) {
        self.flow_mut(flow_id).delivered_pkts += 1;
    }

    pub fn departed_bytes(&self, flow_id: u32) -> u64 {
        self.counters(flow_id).departed_bytes
    }

    /// Throughput at the link egress over `[from, to)`, in bits per second.
    /// Requires departure recording.
    pub fn link_utilization(&self, from: SimTime, to: SimTime) -> Result<f64, WindowError> {
        let log = self.departures.as_ref().ok_or(WindowError::NotRecorded)?;
        let bytes: u64 = log.iter().filter(|(d, _)| d.at >= from && d.at < to).map(|(d, _)| d.bytes).sum();
        utilization(bytes, from, to)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("measurement window is empty")]
    Empty,
    #[error("departures were not recorded on this link")]
    NotRecorded,
}

/// `bytes * 8 / (to - from)` in bits per second.
pub fn utilization(bytes: u64, from: SimTime, to: SimTime) -> Result<f64, WindowError> {
    if to <= from {
        return Err(WindowError::Empty);
    }
    Ok(bytes as f64 * 8.0 / (to - from).as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link_50m(buffer: usize) -> Link {
        Link::new(LinkConfig::new(50_000_000, SimTime::from_millis(25), buffer).unwrap())
    }

    fn full(flow: u32, n: u64) -> Packet {
        Packet::data(flow, n, n * MAX_PAYLOAD, MAX_PAYLOAD, SimTime::ZERO)
    }

    #[test]
    fn serialization_of_full_segment_at_50m() {
        let cfg = LinkConfig::new(50_000_000, SimTime::ZERO, 1).unwrap();
        assert_eq!(cfg.serialization_time(1500), SimTime::from_micros(240));
    }

    #[test]
    fn back_to_back_departures_keep_order() {
        let mut link = link_50m(10);
        let a = link.enqueue(full(0, 0), SimTime::ZERO);
        let b = link.enqueue(full(0, 1), SimTime::ZERO);
        assert_eq!(a, EnqueueOutcome::Accepted { departure: SimTime::from_micros(240) });
        assert_eq!(b, EnqueueOutcome::Accepted { departure: SimTime::from_micros(480) });
        assert_eq!(link.dequeue(SimTime::from_micros(240)).pkt_num, 0);
        assert_eq!(link.dequeue(SimTime::from_micros(480)).pkt_num, 1);
    }

    #[test]
    fn full_buffer_drops() {
        let mut link = link_50m(208);
        for i in 0..208 {
            assert!(matches!(link.enqueue(full(3, i), SimTime::ZERO), EnqueueOutcome::Accepted { .. }));
        }
        assert_eq!(link.enqueue(full(3, 208), SimTime::ZERO), EnqueueOutcome::Dropped);
        assert_eq!(link.counters(3).dropped_pkts, 1);
        assert_eq!(link.occupancy(), 208);
    }

    #[test]
    fn idle_gap_does_not_bank_credit_with_unit_burst() {
        let mut link = link_50m(4);
        link.enqueue(full(0, 0), SimTime::ZERO);
        link.dequeue(SimTime::from_micros(240));
        let out = link.enqueue(full(0, 1), SimTime::from_millis(10));
        assert_eq!(out, EnqueueOutcome::Accepted { departure: SimTime::from_millis(10) + SimTime::from_micros(240) });
    }

    #[test]
    fn larger_burst_banks_idle_credit() {
        let mut cfg = LinkConfig::new(50_000_000, SimTime::ZERO, 8).unwrap();
        cfg.burst_pkts = 3;
        let mut link = Link::new(cfg);
        let t = SimTime::from_millis(10);
        // Two packets of credit accrue while idle; the third is serialized.
        assert_eq!(link.enqueue(full(0, 0), t), EnqueueOutcome::Accepted { departure: t });
        assert_eq!(link.enqueue(full(0, 1), t), EnqueueOutcome::Accepted { departure: t });
        assert_eq!(link.enqueue(full(0, 2), t), EnqueueOutcome::Accepted { departure: t + SimTime::from_micros(240) });
    }

    #[test]
    fn fractional_serialization_does_not_drift() {
        // 1500 B at 7 Mbit/s is 1714285.71.. ns; 7000 packets take exactly 12 s.
        let mut link = Link::new(LinkConfig::new(7_000_000, SimTime::ZERO, 10_000).unwrap());
        let mut last = SimTime::ZERO;
        for i in 0..7000 {
            if let EnqueueOutcome::Accepted { departure } = link.enqueue(full(0, i), SimTime::ZERO) {
                last = departure;
            }
        }
        assert_eq!(last, SimTime::from_secs(12));
    }

    #[test]
    fn utilization_cases() {
        assert_eq!(utilization(0, SimTime::ZERO, SimTime::from_secs(1)).unwrap(), 0.0);
        let u = utilization(1500, SimTime::ZERO, SimTime::from_millis(1)).unwrap();
        assert!((u - 12e6).abs() < 1e-6);
        assert_eq!(utilization(1, SimTime::from_secs(1), SimTime::from_secs(1)), Err(WindowError::Empty));
    }

    #[test]
    fn saturated_link_meets_rate() {
        let mut link = link_50m(100_000).record_departures();
        let mut t = SimTime::ZERO;
        for i in 0..10_000 {
            if let EnqueueOutcome::Accepted { departure } = link.enqueue(full(0, i), SimTime::ZERO) {
                t = departure;
            }
        }
        let mut now = SimTime::ZERO;
        while link.occupancy() > 0 {
            now = link.queue.front().unwrap().1;
            link.dequeue(now);
        }
        assert_eq!(now, t);
        let u = link.link_utilization(SimTime::ZERO, SimTime::from_secs(2)).unwrap();
        assert!((u - 50e6).abs() / 50e6 < 0.005, "{u}");
    }
}
