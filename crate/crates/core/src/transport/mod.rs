//! Simplified QUIC-like reliable transport: a sender that sequences stream
//! bytes into numbered packets, paces them, tracks acknowledgments, detects
//! losses with packet and time thresholds, and retransmits under fresh packet
//! numbers; plus the receiving side that generates ACKs.

mod pacer;
mod ranges;
mod receiver;

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

pub use pacer::{pacing_interval, PacerState, PacingError};
pub use ranges::RangeSet;
pub use receiver::{Receiver, ReceiverAction, ACK_EVERY, MAX_ACK_DELAY, MAX_ACK_RANGES};

use crate::congestion::{
    blitzstart_init, AckSignal, BlitzstartConfig, CongestionController, CongestionState, Cubic, CubicParams, Mode,
};
use crate::engine::SimTime;
use crate::netmodel::{Packet, PacketKind, HANDSHAKE_SIZE, MAX_PAYLOAD, SEGMENT_SIZE};
use crate::signaling::decode_hint;

/// Packets acknowledged after a missing one before it is declared lost.
pub const PACKET_THRESHOLD: u64 = 3;
/// Time threshold, as a fraction of `max(srtt, latest_rtt)`.
pub const TIME_THRESHOLD: (u64, u64) = (9, 8);
const TIMER_GRANULARITY: SimTime = SimTime::from_millis(1);
/// Retransmission timeout for the handshake flight before any RTT sample.
pub const HANDSHAKE_TIMEOUT: SimTime = SimTime::from_secs(1);

/// Acknowledgment frame: inclusive packet-number ranges, highest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckInfo {
    pub ranges: Vec<(u64, u64)>,
    pub largest_acked: u64,
    pub ack_delay: SimTime,
}

impl AckInfo {
    pub fn single(pkt_num: u64) -> Self {
        AckInfo { ranges: vec![(pkt_num, pkt_num)], largest_acked: pkt_num, ack_delay: SimTime::ZERO }
    }

    /// Build from ascending or descending ranges; normalizes to highest first.
    pub fn from_ranges(mut ranges: Vec<(u64, u64)>) -> Self {
        ranges.sort_by_key(|r| std::cmp::Reverse(r.0));
        let largest_acked = ranges.first().map_or(0, |r| r.1);
        AckInfo { ranges, largest_acked, ack_delay: SimTime::ZERO }
    }
}

/// Which controller the server runs for a connection.
#[derive(Clone, Debug, PartialEq)]
pub enum ControllerSpec {
    /// Cubic with Slow Start.
    Baseline,
    /// The encoded bandwidth hint as received from the client, and server
    /// policy. An undecodable or empty hint falls back to Slow Start.
    Blitzstart { hint: Vec<u8>, cfg: BlitzstartConfig },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionConfig {
    pub flow_id: u32,
    pub transfer_bytes: u64,
    pub controller: ControllerSpec,
    pub cubic: CubicParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Handshake,
    Established,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SentPacket {
    seq: u64,
    payload: u64,
    wire_len: u64,
    sent_at: SimTime,
    retransmission: bool,
}

/// Smoothed RTT estimation with 1/8 and 1/4 gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RttEstimator {
    pub srtt: SimTime,
    pub rttvar: SimTime,
    pub min_rtt: SimTime,
    pub latest: SimTime,
    pub samples: u64,
}

impl RttEstimator {
    pub fn update(&mut self, sample: SimTime) {
        if self.samples == 0 {
            self.srtt = sample;
            self.rttvar = sample.mul_ratio(1, 2);
            self.min_rtt = sample;
        } else {
            self.min_rtt = self.min_rtt.min(sample);
            let dev = if self.srtt > sample { self.srtt - sample } else { sample - self.srtt };
            self.rttvar = SimTime::from_nanos((3 * self.rttvar.as_nanos() + dev.as_nanos()) / 4);
            self.srtt = SimTime::from_nanos((7 * self.srtt.as_nanos() + sample.as_nanos()) / 8);
        }
        self.latest = sample;
        self.samples += 1;
    }

    pub fn has_sample(&self) -> bool {
        self.samples > 0
    }

    /// Probe timeout: `2 srtt + 4 rttvar`.
    pub fn pto(&self) -> SimTime {
        self.srtt + self.srtt + SimTime::from_nanos(4 * self.rttvar.as_nanos()).max(TIMER_GRANULARITY)
    }

    pub fn loss_delay(&self) -> SimTime {
        self.srtt.max(self.latest).mul_ratio(TIME_THRESHOLD.0, TIME_THRESHOLD.1).max(TIMER_GRANULARITY)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnectionStats {
    pub pkts_sent: u64,
    pub wire_bytes_sent: u64,
    /// Stream payload bytes put on the wire, including retransmissions.
    pub payload_sent: u64,
    pub bytes_acked: u64,
    pub pkts_lost: u64,
    pub bytes_lost: u64,
    pub bytes_retransmitted: u64,
    pub pkts_retransmitted: u64,
    pub congestion_events: u64,
    pub pto_count: u64,
    pub handshake_retries: u64,
    /// ACKs referencing packet numbers never sent.
    pub anomalies: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AckOutcome {
    pub rtt_sample: Option<SimTime>,
    pub newly_acked_bytes: u64,
    pub completed: bool,
    pub handshake_completed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SendOutcome {
    pub packets: Vec<Packet>,
    /// When the pacer will next permit a packet, if data and window allow.
    pub next_release: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerKind {
    Handshake,
    TimeThreshold,
    Probe,
}

/// Sending side of one flow.
pub struct Connection {
    cfg: ConnectionConfig,
    phase: Phase,
    start_at: Option<SimTime>,
    established_at: Option<SimTime>,
    finished_at: Option<SimTime>,
    handshake_pkt: Option<(u64, SimTime)>,
    handshake_timeout: SimTime,
    next_pkt_num: u64,
    next_seq: u64,
    sent: BTreeMap<u64, SentPacket>,
    bytes_in_flight: u64,
    retransmit: VecDeque<Range<u64>>,
    acked: RangeSet,
    largest_acked: Option<u64>,
    largest_sent: u64,
    last_eliciting_sent: SimTime,
    rtt: RttEstimator,
    cc: Option<Box<dyn CongestionController>>,
    hint_fallback: bool,
    pacer: PacerState,
    probes_pending: u32,
    pto_backoff: u32,
    stats: ConnectionStats,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("flow_id", &self.cfg.flow_id)
            .field("phase", &self.phase)
            .field("next_seq", &self.next_seq)
            .field("in_flight", &self.bytes_in_flight)
            .field("cc", &self.cc.as_ref().map(|c| *c.state()))
            .finish()
    }
}

impl Connection {
    pub fn new(cfg: ConnectionConfig) -> Self {
        Connection {
            cfg,
            phase: Phase::Idle,
            start_at: None,
            established_at: None,
            finished_at: None,
            handshake_pkt: None,
            handshake_timeout: HANDSHAKE_TIMEOUT,
            next_pkt_num: 0,
            next_seq: 0,
            sent: BTreeMap::new(),
            bytes_in_flight: 0,
            retransmit: VecDeque::new(),
            acked: RangeSet::new(),
            largest_acked: None,
            largest_sent: 0,
            last_eliciting_sent: SimTime::ZERO,
            rtt: RttEstimator::default(),
            cc: None,
            hint_fallback: false,
            pacer: PacerState::default(),
            probes_pending: 0,
            pto_backoff: 0,
            stats: ConnectionStats::default(),
        }
    }

    pub fn flow_id(&self) -> u32 {
        self.cfg.flow_id
    }

    pub fn config(&self) -> &ConnectionConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn start_at(&self) -> Option<SimTime> {
        self.start_at
    }

    pub fn established_at(&self) -> Option<SimTime> {
        self.established_at
    }

    pub fn finished_at(&self) -> Option<SimTime> {
        self.finished_at
    }

    /// Flow completion time: start to acknowledgment of the last byte.
    pub fn fct(&self) -> Option<SimTime> {
        Some(self.finished_at? - self.start_at?)
    }

    pub fn stats(&self) -> &ConnectionStats {
        &self.stats
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn acked_ranges(&self) -> &RangeSet {
        &self.acked
    }

    pub fn controller(&self) -> Option<&dyn CongestionController> {
        self.cc.as_deref()
    }

    pub fn cc_state(&self) -> Option<CongestionState> {
        self.cc.as_ref().map(|c| *c.state())
    }

    /// Whether a Blitzstart connection degraded to Slow Start because its
    /// hint was missing or malformed.
    pub fn hint_fallback(&self) -> bool {
        self.hint_fallback
    }

    pub fn pacer(&self) -> &PacerState {
        &self.pacer
    }

    fn alloc_pkt_num(&mut self) -> u64 {
        let n = self.next_pkt_num;
        self.next_pkt_num += 1;
        n
    }

    /// Begin the connection: emits the server's handshake flight, whose
    /// acknowledgment supplies the first RTT sample.
    pub fn start(&mut self, now: SimTime) -> Packet {
        assert_eq!(self.phase, Phase::Idle, "connection already started");
        self.phase = Phase::Handshake;
        self.start_at = Some(now);
        self.handshake_packet(now)
    }

    fn handshake_packet(&mut self, now: SimTime) -> Packet {
        let pkt_num = self.alloc_pkt_num();
        self.handshake_pkt = Some((pkt_num, now));
        self.largest_sent = pkt_num;
        self.stats.pkts_sent += 1;
        self.stats.wire_bytes_sent += HANDSHAKE_SIZE;
        Packet {
            flow_id: self.cfg.flow_id,
            kind: PacketKind::Handshake,
            pkt_num,
            seq: 0,
            payload: 0,
            len: HANDSHAKE_SIZE,
            sent_at: now,
        }
    }

    fn establish(&mut self, now: SimTime) {
        self.phase = Phase::Established;
        self.established_at = Some(now);
        let params = self.cfg.cubic;
        let cc: Box<dyn CongestionController> = match &self.cfg.controller {
            ControllerSpec::Baseline => Box::new(Cubic::new(params)),
            ControllerSpec::Blitzstart { hint, cfg } => match decode_hint(hint) {
                Ok(h) if h.has_estimate() => {
                    let min_rtt = h.min_rtt().unwrap_or(self.rtt.min_rtt);
                    let state = blitzstart_init(&h, min_rtt, cfg, &params, now);
                    let burst = if cfg.pace_all { 0 } else { params.initial_burst };
                    Box::new(Cubic::from_state(params, state).with_initial_burst(burst))
                }
                _ => {
                    self.hint_fallback = true;
                    Box::new(Cubic::new(params))
                }
            },
        };
        self.pacer = PacerState::new(cc.initial_burst());
        self.cc = Some(cc);
        if self.cfg.transfer_bytes == 0 {
            self.phase = Phase::Finished;
            self.finished_at = Some(now);
        }
    }

    fn has_data_to_send(&mut self) -> bool {
        while let Some(front) = self.retransmit.front() {
            if self.acked.covers(front.clone()) {
                self.retransmit.pop_front();
            } else {
                return true;
            }
        }
        self.next_seq < self.cfg.transfer_bytes
    }

    /// Next byte range to put in a packet, preferring retransmissions.
    fn next_chunk(&mut self) -> Option<(Range<u64>, bool)> {
        while let Some(range) = self.retransmit.pop_front() {
            let gaps = self.acked.gaps(range.clone());
            let Some(first) = gaps.first().cloned() else {
                continue;
            };
            let end = first.end.min(first.start + MAX_PAYLOAD);
            // Put back whatever this packet does not carry.
            if end < range.end {
                self.retransmit.push_front(end..range.end);
            }
            return Some((first.start..end, true));
        }
        if self.next_seq < self.cfg.transfer_bytes {
            let start = self.next_seq;
            let end = (start + MAX_PAYLOAD).min(self.cfg.transfer_bytes);
            self.next_seq = end;
            return Some((start..end, false));
        }
        None
    }

    fn window_allows(&self) -> bool {
        let cwnd = self.cc.as_ref().map_or(0, |c| c.cwnd());
        self.bytes_in_flight + SEGMENT_SIZE <= cwnd
    }

    /// Release every packet that data, window and pacer currently permit.
    pub fn on_send_opportunity(&mut self, now: SimTime) -> SendOutcome {
        let mut out = SendOutcome::default();
        if self.phase != Phase::Established {
            return out;
        }
        loop {
            if !self.has_data_to_send() {
                break;
            }
            let probe = self.probes_pending > 0;
            if !probe && !self.window_allows() {
                break;
            }
            if !probe && !self.pacer.can_send(now) {
                out.next_release = Some(self.pacer.release_time(now));
                break;
            }
            let Some((range, retx)) = self.next_chunk() else {
                break;
            };
            if probe {
                self.probes_pending -= 1;
            }
            out.packets.push(self.emit(range, retx, now));
        }
        out
    }

    fn emit(&mut self, range: Range<u64>, retransmission: bool, now: SimTime) -> Packet {
        let pkt_num = self.alloc_pkt_num();
        let payload = range.end - range.start;
        let pkt = Packet::data(self.cfg.flow_id, pkt_num, range.start, payload, now);
        self.sent
            .insert(pkt_num, SentPacket { seq: range.start, payload, wire_len: pkt.len, sent_at: now, retransmission });
        self.bytes_in_flight += pkt.len;
        self.largest_sent = pkt_num;
        self.last_eliciting_sent = now;
        self.stats.pkts_sent += 1;
        self.stats.wire_bytes_sent += pkt.len;
        self.stats.payload_sent += payload;
        if retransmission {
            self.stats.bytes_retransmitted += payload;
            self.stats.pkts_retransmitted += 1;
        }
        let cc = self.cc.as_mut().expect("established");
        cc.on_packet_sent(pkt_num, now);
        let mode = cc.mode();
        let cwnd = cc.cwnd().max(SEGMENT_SIZE);
        let srtt = if self.rtt.srtt == SimTime::ZERO { SimTime::from_nanos(1) } else { self.rtt.srtt };
        let interval = pacing_interval(cwnd, srtt, mode).expect("validated inputs");
        self.pacer.on_send(now, interval);
        pkt
    }

    /// Process an acknowledgment. Loss detection is a separate step; see
    /// [`Connection::detect_losses`].
    pub fn on_ack(&mut self, ack: &AckInfo, now: SimTime) -> AckOutcome {
        let mut out = AckOutcome::default();
        if self.phase == Phase::Idle {
            self.stats.anomalies += 1;
            return out;
        }
        if ack.largest_acked >= self.next_pkt_num {
            self.stats.anomalies += 1;
            return out;
        }

        if self.phase == Phase::Handshake {
            if let Some((pn, sent_at)) = self.handshake_pkt {
                if ack.ranges.iter().any(|&(lo, hi)| lo <= pn && pn <= hi) {
                    let sample = now - sent_at;
                    self.rtt.update(sample);
                    out.rtt_sample = Some(sample);
                    out.handshake_completed = true;
                    self.handshake_pkt = None;
                    self.establish(now);
                }
            }
            return out;
        }

        let mut largest_newly_acked: Option<(u64, SimTime)> = None;
        for &(lo, hi) in &ack.ranges {
            let hit: Vec<u64> = self.sent.range(lo..=hi).map(|(&k, _)| k).collect();
            for pn in hit {
                let p = self.sent.remove(&pn).expect("present");
                self.bytes_in_flight -= p.wire_len;
                out.newly_acked_bytes += p.wire_len;
                self.stats.bytes_acked += p.payload;
                self.acked.insert(p.seq..p.seq + p.payload);
                if largest_newly_acked.is_none_or(|(l, _)| pn > l) {
                    largest_newly_acked = Some((pn, p.sent_at));
                }
            }
        }
        if self.largest_acked.is_none_or(|l| ack.largest_acked > l) {
            self.largest_acked = Some(ack.largest_acked);
        }
        if let Some((pn, sent_at)) = largest_newly_acked {
            if pn == ack.largest_acked {
                let sample = now - sent_at;
                self.rtt.update(sample);
                out.rtt_sample = Some(sample);
            }
        }
        if out.newly_acked_bytes > 0 {
            self.pto_backoff = 0;
            let signal = AckSignal {
                newly_acked_bytes: out.newly_acked_bytes,
                largest_acked: ack.largest_acked,
                largest_sent: self.largest_sent,
                rtt_sample: out.rtt_sample,
                min_rtt: self.rtt.min_rtt,
            };
            if let Some(cc) = self.cc.as_mut() {
                cc.on_ack(&signal, now);
            }
        }
        if self.phase == Phase::Established && self.acked.covers(0..self.cfg.transfer_bytes) {
            self.phase = Phase::Finished;
            self.finished_at = Some(now);
            out.completed = true;
        }
        out
    }

    /// Declare lost every outstanding packet that is at least
    /// [`PACKET_THRESHOLD`] numbers below the largest acknowledged one, or
    /// that was sent more than `9/8 max(srtt, latest_rtt)` ago while a later
    /// packet has been acknowledged. Lost ranges are queued for
    /// retransmission and the controller sees one congestion signal.
    pub fn detect_losses(&mut self, now: SimTime) -> Vec<u64> {
        let Some(largest) = self.largest_acked else {
            return Vec::new();
        };
        let loss_delay = self.rtt.loss_delay();
        let mut lost = Vec::new();
        for (&pn, p) in self.sent.range(..largest) {
            let by_count = pn + PACKET_THRESHOLD <= largest;
            let by_time = p.sent_at + loss_delay <= now;
            if by_count || by_time {
                lost.push(pn);
            } else {
                break;
            }
        }
        if lost.is_empty() {
            return lost;
        }
        for &pn in &lost {
            let p = self.sent.remove(&pn).expect("present");
            self.bytes_in_flight -= p.wire_len;
            self.stats.pkts_lost += 1;
            self.stats.bytes_lost += p.payload;
            self.retransmit.push_back(p.seq..p.seq + p.payload);
        }
        if self.phase == Phase::Established || self.phase == Phase::Finished {
            let newest = *lost.last().expect("nonempty");
            let largest_sent = self.largest_sent;
            if let Some(cc) = self.cc.as_mut() {
                if cc.on_loss(newest, largest_sent, now) {
                    self.stats.congestion_events += 1;
                }
            }
        }
        lost
    }

    /// Deadline of the loss-detection timer, if one is needed.
    pub fn loss_timer(&self) -> Option<(SimTime, TimerKind)> {
        match self.phase {
            Phase::Idle | Phase::Finished => None,
            Phase::Handshake => {
                self.handshake_pkt.map(|(_, sent_at)| (sent_at + self.handshake_timeout, TimerKind::Handshake))
            }
            Phase::Established => {
                if let Some(largest) = self.largest_acked {
                    if let Some((_, p)) = self.sent.range(..largest).next() {
                        return Some((p.sent_at + self.rtt.loss_delay(), TimerKind::TimeThreshold));
                    }
                }
                if self.sent.is_empty() {
                    return None;
                }
                let backoff = 1u64 << self.pto_backoff.min(16);
                let pto = SimTime::from_nanos(self.rtt.pto().as_nanos() * backoff);
                Some((self.last_eliciting_sent + pto, TimerKind::Probe))
            }
        }
    }

    /// Handle expiry of the loss-detection timer. Returns packets to send
    /// immediately (handshake retransmission); data probes are released by
    /// the next [`Connection::on_send_opportunity`].
    pub fn on_loss_timer(&mut self, now: SimTime) -> Option<Packet> {
        let (deadline, kind) = self.loss_timer()?;
        if deadline > now {
            return None;
        }
        match kind {
            TimerKind::Handshake => {
                self.stats.handshake_retries += 1;
                self.handshake_timeout = self.handshake_timeout + self.handshake_timeout;
                Some(self.handshake_packet(now))
            }
            TimerKind::TimeThreshold => {
                self.detect_losses(now);
                None
            }
            TimerKind::Probe => {
                self.stats.pto_count += 1;
                self.pto_backoff += 1;
                if let Some(p) = self.sent.values().next() {
                    self.retransmit.push_front(p.seq..p.seq + p.payload);
                    self.probes_pending = 1;
                }
                None
            }
        }
    }

    /// Bytes in flight as recomputed from the sent map.
    pub fn recount_in_flight(&self) -> u64 {
        self.sent.values().map(|p| p.wire_len).sum()
    }

    pub fn outstanding_packets(&self) -> usize {
        self.sent.len()
    }

    pub fn mode(&self) -> Option<Mode> {
        self.cc.as_ref().map(|c| c.mode())
    }

    pub fn retransmissions_outstanding(&self) -> usize {
        self.sent.values().filter(|p| p.retransmission).count()
    }
}

#[cfg(test)]
mod tests;
