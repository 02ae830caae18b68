use crate::engine::SimTime;
use crate::netmodel::{Packet, PacketKind};

use super::ranges::RangeSet;
use super::AckInfo;

/// Maximum delay before a pending acknowledgment is sent.
pub const MAX_ACK_DELAY: SimTime = SimTime::from_millis(25);
/// Acknowledge at least every this many ack-eliciting packets.
pub const ACK_EVERY: u32 = 2;
/// Packet-number ranges reported per ACK.
pub const MAX_ACK_RANGES: usize = 32;
const TRACKED_RANGES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReceiverAction {
    AckNow(AckInfo),
    /// Arm the delayed-ACK timer at the given time.
    ArmTimer(SimTime),
    Nothing,
}

/// Client side of a flow: reassembles stream bytes and generates ACKs.
#[derive(Clone, Debug)]
pub struct Receiver {
    flow_id: u32,
    pkts: RangeSet,
    bytes: RangeSet,
    largest: Option<u64>,
    pending_eliciting: u32,
    timer_armed: bool,
    acks_sent: u64,
    duplicate_pkts: u64,
}

impl Receiver {
    pub fn new(flow_id: u32) -> Self {
        Receiver {
            flow_id,
            pkts: RangeSet::new(),
            bytes: RangeSet::new(),
            largest: None,
            pending_eliciting: 0,
            timer_armed: false,
            acks_sent: 0,
            duplicate_pkts: 0,
        }
    }

    pub fn flow_id(&self) -> u32 {
        self.flow_id
    }

    /// Stream bytes received, as disjoint ranges.
    pub fn received(&self) -> &RangeSet {
        &self.bytes
    }

    /// Length of the contiguous prefix of the stream received so far.
    pub fn contiguous_bytes(&self) -> u64 {
        self.bytes.iter().next().filter(|r| r.start == 0).map_or(0, |r| r.end)
    }

    pub fn acks_sent(&self) -> u64 {
        self.acks_sent
    }

    pub fn duplicate_pkts(&self) -> u64 {
        self.duplicate_pkts
    }

    pub fn on_packet(&mut self, pkt: &Packet, now: SimTime) -> ReceiverAction {
        debug_assert_eq!(pkt.flow_id, self.flow_id);
        if pkt.kind == PacketKind::Ack {
            return ReceiverAction::Nothing;
        }
        if self.pkts.contains(pkt.pkt_num) {
            self.duplicate_pkts += 1;
            return ReceiverAction::AckNow(self.build_ack());
        }
        let in_order = self.largest.is_none_or(|l| pkt.pkt_num == l + 1);
        self.pkts.insert(pkt.pkt_num..pkt.pkt_num + 1);
        self.pkts.truncate_low(TRACKED_RANGES);
        self.largest = Some(self.largest.map_or(pkt.pkt_num, |l| l.max(pkt.pkt_num)));
        if pkt.kind == PacketKind::Data {
            self.bytes.insert(pkt.seq..pkt.seq + pkt.payload);
        }
        self.pending_eliciting += 1;

        if pkt.kind == PacketKind::Handshake || !in_order || self.pending_eliciting >= ACK_EVERY {
            ReceiverAction::AckNow(self.build_ack())
        } else if !self.timer_armed {
            self.timer_armed = true;
            ReceiverAction::ArmTimer(now + MAX_ACK_DELAY)
        } else {
            ReceiverAction::Nothing
        }
    }

    /// Delayed-ACK timer expiry.
    pub fn on_ack_timer(&mut self, _now: SimTime) -> Option<AckInfo> {
        self.timer_armed = false;
        (self.pending_eliciting > 0).then(|| self.build_ack())
    }

    /// Whether a delayed-ACK timer is logically armed. After an immediate ACK
    /// any armed timer is stale and may be cancelled.
    pub fn timer_armed(&self) -> bool {
        self.timer_armed
    }

    fn build_ack(&mut self) -> AckInfo {
        self.pending_eliciting = 0;
        self.timer_armed = false;
        self.acks_sent += 1;
        let ranges: Vec<(u64, u64)> =
            self.pkts.iter_desc().take(MAX_ACK_RANGES).map(|r| (r.start, r.end - 1)).collect();
        AckInfo { largest_acked: ranges[0].1, ranges, ack_delay: SimTime::ZERO }
    }
}
