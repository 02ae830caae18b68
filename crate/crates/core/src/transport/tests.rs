use super::*;
use crate::signaling::{encode_hint, AccessTech, BandwidthHint};

const RTT: SimTime = SimTime::from_millis(50);

fn baseline(bytes: u64) -> Connection {
    Connection::new(ConnectionConfig {
        flow_id: 1,
        transfer_bytes: bytes,
        controller: ControllerSpec::Baseline,
        cubic: CubicParams::default(),
    })
}

/// Start and complete the handshake with an RTT of exactly 50 ms.
fn established(bytes: u64) -> (Connection, SimTime) {
    let mut c = baseline(bytes);
    let hs = c.start(SimTime::ZERO);
    let out = c.on_ack(&AckInfo::single(hs.pkt_num), RTT);
    assert!(out.handshake_completed);
    (c, RTT)
}

fn ack_range(lo: u64, hi: u64) -> AckInfo {
    AckInfo::from_ranges(vec![(lo, hi)])
}

#[test]
fn handshake_gives_first_sample() {
    let (c, _) = established(70_000);
    assert_eq!(c.rtt().srtt, RTT);
    assert_eq!(c.rtt().min_rtt, RTT);
    assert_eq!(c.rtt().rttvar, SimTime::from_millis(25));
    assert_eq!(c.mode(), Some(Mode::SlowStart));
}

#[test]
fn burst_of_ten_then_paced() {
    let (mut c, t0) = established(10_000_000);
    let out = c.on_send_opportunity(t0);
    assert_eq!(out.packets.len(), 10);
    let gap = SimTime::from_nanos(781_250);
    assert_eq!(out.next_release, Some(t0 + gap));
    let mut t = t0;
    let mut sent = 10;
    while sent < 32 {
        t = c.on_send_opportunity(t).next_release.expect("paced");
        let n = c.on_send_opportunity(t).packets.len();
        sent += n;
        assert_eq!(n, 1);
    }
    assert_eq!(t, t0 + SimTime::from_nanos(781_250 * 22));
    // Window now full: nothing to send and no pacing deadline.
    let later = t + SimTime::from_millis(10);
    assert_eq!(c.on_send_opportunity(later), SendOutcome::default());
    assert_eq!(c.bytes_in_flight(), 32 * SEGMENT_SIZE);
}

#[test]
fn seventy_kilobytes_is_fifty_two_packets() {
    let (mut c, mut now) = established(70_000);
    let mut data_pkts = 0u64;
    let mut next_ack_from = 1u64;
    while c.phase() != Phase::Finished && now < SimTime::from_secs(10) {
        let out = c.on_send_opportunity(now);
        data_pkts += out.packets.len() as u64;
        if let Some(last) = out.packets.last() {
            now += RTT;
            c.on_ack(&ack_range(next_ack_from.min(last.pkt_num), last.pkt_num), now);
            next_ack_from = last.pkt_num + 1;
        } else {
            now = out.next_release.unwrap_or(now + SimTime::from_millis(1));
        }
    }
    assert_eq!(data_pkts, 52);
    assert_eq!(c.stats().bytes_acked, 70_000);
    assert_eq!(c.stats().bytes_retransmitted, 0);
}

#[test]
fn completion_time_includes_handshake() {
    let (mut c, t0) = established(1_000);
    let p = c.on_send_opportunity(t0).packets;
    assert_eq!(p.len(), 1);
    let done = SimTime::from_millis(120);
    let out = c.on_ack(&AckInfo::single(p[0].pkt_num), done);
    assert!(out.completed);
    assert_eq!(c.fct(), Some(done));
}

#[test]
fn duplicate_ack_is_idempotent() {
    let (mut c, t0) = established(100_000);
    let p = c.on_send_opportunity(t0).packets;
    let ack = ack_range(p[0].pkt_num, p[3].pkt_num);
    let first = c.on_ack(&ack, t0 + RTT);
    assert_eq!(first.newly_acked_bytes, 4 * SEGMENT_SIZE);
    let cwnd = c.cc_state().unwrap().cwnd;
    let again = c.on_ack(&ack, t0 + RTT);
    assert_eq!(again.newly_acked_bytes, 0);
    assert_eq!(c.cc_state().unwrap().cwnd, cwnd);
}

#[test]
fn unknown_packet_number_is_an_anomaly() {
    let (mut c, t0) = established(100_000);
    let out = c.on_ack(&AckInfo::single(999), t0);
    assert_eq!(out, AckOutcome::default());
    assert_eq!(c.stats().anomalies, 1);
}

#[test]
fn packet_threshold_loss() {
    let (mut c, t0) = established(100_000);
    let p = c.on_send_opportunity(t0).packets;
    assert_eq!(p.len(), 10);
    // Data packets carry numbers 1..=10; ACK 2..=5 with 1 missing.
    assert_eq!(p[0].pkt_num, 1);
    c.on_ack(&ack_range(2, 5), t0 + SimTime::from_millis(1));
    let lost = c.detect_losses(t0 + SimTime::from_millis(1));
    assert_eq!(lost, vec![1]);
    assert_eq!(c.stats().bytes_lost, MAX_PAYLOAD);
    assert_eq!(c.cc_state().unwrap().mode, Mode::Recovery);
    // The lost range goes out again under a fresh number.
    let retx = c.on_send_opportunity(t0 + SimTime::from_millis(2)).packets;
    assert!(retx.iter().any(|r| r.seq == p[0].seq && r.pkt_num > 10));
    assert_eq!(c.stats().bytes_retransmitted, MAX_PAYLOAD);
}

#[test]
fn below_threshold_needs_time() {
    let (mut c, t0) = established(100_000);
    c.on_send_opportunity(t0);
    let t1 = t0 + SimTime::from_millis(1);
    c.on_ack(&ack_range(2, 3), t1);
    assert!(c.detect_losses(t1).is_empty());
    let (deadline, kind) = c.loss_timer().unwrap();
    assert_eq!(kind, TimerKind::TimeThreshold);
    assert!(c.on_loss_timer(deadline).is_none());
    assert_eq!(c.stats().pkts_lost, 1);
}

#[test]
fn acked_packets_are_never_lost() {
    let (mut c, t0) = established(100_000);
    c.on_send_opportunity(t0);
    c.on_ack(&ack_range(1, 1), t0 + RTT);
    c.on_ack(&ack_range(5, 10), t0 + RTT);
    let lost = c.detect_losses(t0 + SimTime::from_secs(10));
    assert_eq!(lost, vec![2, 3, 4]);
    assert!(c.detect_losses(t0 + SimTime::from_secs(20)).is_empty());
}

#[test]
fn probe_timeout_retransmits_oldest() {
    let (mut c, t0) = established(100_000);
    let p = c.on_send_opportunity(t0).packets;
    assert!(c.detect_losses(t0 + SimTime::from_secs(1)).is_empty());
    let (deadline, kind) = c.loss_timer().unwrap();
    assert_eq!(kind, TimerKind::Probe);
    // 2 srtt + 4 rttvar with srtt 50 ms and rttvar 25 ms.
    assert_eq!(deadline, t0 + SimTime::from_millis(200));
    c.on_loss_timer(deadline);
    assert_eq!(c.stats().pto_count, 1);
    // The probe ignores the window and pacer.
    let probe = c.on_send_opportunity(deadline).packets;
    assert_eq!(probe[0].seq, p[0].seq);
    // Backoff doubles the next deadline.
    let (next, _) = c.loss_timer().unwrap();
    assert_eq!(next, deadline + SimTime::from_millis(400));
}

#[test]
fn handshake_retry_doubles() {
    let mut c = baseline(1_000);
    c.start(SimTime::ZERO);
    let (d1, kind) = c.loss_timer().unwrap();
    assert_eq!((d1, kind), (HANDSHAKE_TIMEOUT, TimerKind::Handshake));
    let retry = c.on_loss_timer(d1).expect("retry");
    assert_eq!(retry.kind, PacketKind::Handshake);
    let (d2, _) = c.loss_timer().unwrap();
    assert_eq!(d2, d1 + HANDSHAKE_TIMEOUT + HANDSHAKE_TIMEOUT);
}

#[test]
fn blitzstart_starts_in_avoidance() {
    let hint = encode_hint(&BandwidthHint::new(AccessTech::Dsl, 50_000));
    let mut c = Connection::new(ConnectionConfig {
        flow_id: 2,
        transfer_bytes: 2_000_000,
        controller: ControllerSpec::Blitzstart { hint, cfg: BlitzstartConfig::default() },
        cubic: CubicParams::default(),
    });
    let hs = c.start(SimTime::ZERO);
    c.on_ack(&AckInfo::single(hs.pkt_num), RTT);
    let st = c.cc_state().unwrap();
    assert_eq!(st.mode, Mode::CongestionAvoidance);
    assert_eq!(st.cwnd, 312_500);
    assert!(!c.hint_fallback());
    let out = c.on_send_opportunity(RTT);
    assert_eq!(out.packets.len(), 10);
}

#[test]
fn malformed_hint_falls_back() {
    let mut c = Connection::new(ConnectionConfig {
        flow_id: 2,
        transfer_bytes: 2_000_000,
        controller: ControllerSpec::Blitzstart { hint: vec![9, 9], cfg: BlitzstartConfig::default() },
        cubic: CubicParams::default(),
    });
    let hs = c.start(SimTime::ZERO);
    c.on_ack(&AckInfo::single(hs.pkt_num), RTT);
    assert!(c.hint_fallback());
    assert_eq!(c.mode(), Some(Mode::SlowStart));
}

#[test]
fn smoothing() {
    let mut r = RttEstimator::default();
    r.update(SimTime::from_millis(80));
    r.update(SimTime::from_millis(40));
    assert_eq!(r.srtt, SimTime::from_millis(75));
    assert_eq!(r.rttvar, SimTime::from_millis(40));
    assert_eq!(r.min_rtt, SimTime::from_millis(40));
    assert!(r.min_rtt <= r.srtt);
}
