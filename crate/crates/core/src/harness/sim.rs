//! Dumbbell topology: every flow's sender feeds one shared bottleneck, data
//! reaches the receivers after half an RTT of propagation, and ACKs return
//! over an uncongested path of the same delay.

use crate::congestion::{CubicParams, Mode};
use crate::engine::{mix_seed, EventHandle, EventKind, Scheduler, SimRng, SimTime, Target};
use crate::netmodel::{EnqueueOutcome, Link, LinkConfig, Packet, ACK_SIZE};
use crate::transport::{
    AckInfo, Connection, ConnectionConfig, ConnectionStats, ControllerSpec, Phase, Receiver, ReceiverAction,
};

const LINK: Target = Target::Link(0);
const GATE: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartRule {
    At(SimTime),
    /// Start once the bottleneck queue has been non-empty for two RTTs, but
    /// not before `not_before`, plus a uniform delay in `[0, jitter_max)`.
    AfterSaturation {
        not_before: SimTime,
        jitter_max: SimTime,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub transfer_bytes: u64,
    pub controller: ControllerSpec,
    pub start: StartRule,
    /// The run ends when every flow marked here has finished.
    pub ends_run: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Recording {
    pub trace: bool,
    pub cwnd: bool,
    pub deliveries: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub link: LinkConfig,
    pub rtt: SimTime,
    pub flows: Vec<FlowSpec>,
    pub seed: u64,
    pub sender_jitter_max: SimTime,
    pub end: SimTime,
    pub cubic: CubicParams,
    pub record: Recording,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceEvent {
    Send,
    Deliver,
    Drop,
    Ack,
}

impl TraceEvent {
    pub fn name(self) -> &'static str {
        match self {
            TraceEvent::Send => "send",
            TraceEvent::Deliver => "deliver",
            TraceEvent::Drop => "drop",
            TraceEvent::Ack => "ack",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub flow_id: u32,
    pub event: TraceEvent,
    pub pkt_num: u64,
    pub seq: u64,
    pub len: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwndSample {
    pub time: SimTime,
    pub flow_id: u32,
    pub cwnd: u64,
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub time: SimTime,
    pub flow_id: u32,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOutcome {
    pub flow_id: u32,
    pub transfer_bytes: u64,
    pub started_at: Option<SimTime>,
    pub established_at: Option<SimTime>,
    pub finished_at: Option<SimTime>,
    pub stats: ConnectionStats,
    pub ever_slow_start: bool,
    pub first_data_mode: Option<Mode>,
    pub hint_fallback: bool,
    /// Contiguous stream prefix held by the receiver.
    pub received_bytes: u64,
    /// Bottleneck egress bytes of every flow when this flow started and
    /// finished.
    pub egress_at_start: Vec<u64>,
    pub egress_at_finish: Vec<u64>,
    pub injected_pkts: u64,
    pub dropped_pkts: u64,
    pub delivered_pkts: u64,
    /// Accepted by the link but not yet delivered when the run ended.
    pub in_network_pkts: u64,
}

impl FlowOutcome {
    pub fn fct(&self) -> Option<SimTime> {
        Some(self.finished_at? - self.started_at?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub end_time: SimTime,
    pub gate_at: Option<SimTime>,
    pub flows: Vec<FlowOutcome>,
    pub max_occupancy: usize,
    pub events: u64,
    pub trace: Vec<TraceRecord>,
    pub cwnd_log: Vec<CwndSample>,
    pub deliveries: Vec<Delivery>,
}

enum InTransit {
    Link(Packet),
    Receiver(Packet),
    Sender(AckInfo),
}

struct FlowState {
    spec: FlowSpec,
    conn: Connection,
    receiver: Receiver,
    rng: SimRng,
    last_enqueue: SimTime,
    pacing: Option<(SimTime, EventHandle)>,
    loss_timer: Option<(SimTime, EventHandle)>,
    ack_timer: Option<EventHandle>,
    egress_at_start: Vec<u64>,
    egress_at_finish: Vec<u64>,
    first_data_mode: Option<Mode>,
    last_logged: Option<(u64, Mode)>,
}

struct Sim {
    cfg: SimConfig,
    one_way: SimTime,
    link: Link,
    flows: Vec<FlowState>,
    slots: Vec<Option<InTransit>>,
    free: Vec<usize>,
    start_rng: SimRng,
    gate: Option<EventHandle>,
    gate_at: Option<SimTime>,
    trace: Vec<TraceRecord>,
    cwnd_log: Vec<CwndSample>,
    deliveries: Vec<Delivery>,
}

pub fn simulate(cfg: SimConfig) -> SimOutcome {
    assert!(cfg.rtt > SimTime::ZERO, "rtt must be positive");
    let one_way = cfg.rtt.mul_ratio(1, 2);
    let flows = cfg
        .flows
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let id = i as u32;
            FlowState {
                spec: spec.clone(),
                conn: Connection::new(ConnectionConfig {
                    flow_id: id,
                    transfer_bytes: spec.transfer_bytes,
                    controller: spec.controller.clone(),
                    cubic: cfg.cubic,
                }),
                receiver: Receiver::new(id),
                rng: SimRng::new(mix_seed(cfg.seed, u64::from(id)), 1),
                last_enqueue: SimTime::ZERO,
                pacing: None,
                loss_timer: None,
                ack_timer: None,
                egress_at_start: Vec::new(),
                egress_at_finish: Vec::new(),
                first_data_mode: None,
                last_logged: None,
            }
        })
        .collect();
    let mut sim = Sim {
        link: Link::new(cfg.link),
        one_way,
        flows,
        slots: Vec::new(),
        free: Vec::new(),
        start_rng: SimRng::new(cfg.seed, 2),
        gate: None,
        gate_at: None,
        trace: Vec::new(),
        cwnd_log: Vec::new(),
        deliveries: Vec::new(),
        cfg,
    };
    let mut sched = Scheduler::new();
    for (i, f) in sim.flows.iter().enumerate() {
        if let StartRule::At(t) = f.spec.start {
            sched.schedule(t, EventKind::AppStart, Target::Sender(i as u32), 0);
        }
    }
    let end = sim.cfg.end;
    let events = sched.run_until(end, |s, ev| sim.dispatch(s, ev));
    sim.finish(sched.now(), events)
}

impl Sim {
    fn store(&mut self, item: InTransit) -> u64 {
        if let Some(i) = self.free.pop() {
            self.slots[i] = Some(item);
            i as u64
        } else {
            self.slots.push(Some(item));
            (self.slots.len() - 1) as u64
        }
    }

    fn take(&mut self, slot: u64) -> InTransit {
        let i = slot as usize;
        self.free.push(i);
        self.slots[i].take().expect("slot in use")
    }

    fn record(&mut self, time: SimTime, flow_id: u32, event: TraceEvent, pkt: &Packet) {
        if self.cfg.record.trace {
            self.trace.push(TraceRecord { time, flow_id, event, pkt_num: pkt.pkt_num, seq: pkt.seq, len: pkt.len });
        }
    }

    fn egress_snapshot(&self) -> Vec<u64> {
        (0..self.flows.len() as u32).map(|f| self.link.departed_bytes(f)).collect()
    }

    fn dispatch(&mut self, s: &mut Scheduler, ev: crate::engine::Event) {
        let now = ev.fire_at;
        match (ev.kind, ev.target) {
            (EventKind::AppStart, Target::Sim) => self.on_gate(s, now),
            (EventKind::AppStart, Target::Sender(f)) => self.on_start(s, f, now),
            (EventKind::PacketArrival, Target::Link(_)) => self.on_link_arrival(s, ev.payload, now),
            (EventKind::PacketDeparture, Target::Link(_)) => self.on_departure(s, now),
            (EventKind::PacketArrival, Target::Receiver(f)) => self.on_receive(s, f, ev.payload, now),
            (EventKind::AckDelayTimer, Target::Receiver(f)) => {
                let fs = &mut self.flows[f as usize];
                fs.ack_timer = None;
                if let Some(ack) = fs.receiver.on_ack_timer(now) {
                    self.send_ack(s, f, ack, now);
                }
            }
            (EventKind::PacketArrival, Target::Sender(f)) => self.on_ack_arrival(s, f, ev.payload, now),
            (EventKind::PacingTimer, Target::Sender(f)) => {
                self.flows[f as usize].pacing = None;
                self.pump(s, f, now);
            }
            (EventKind::LossTimer, Target::Sender(f)) => {
                self.flows[f as usize].loss_timer = None;
                if let Some(pkt) = self.flows[f as usize].conn.on_loss_timer(now) {
                    self.inject(s, f, pkt, now);
                }
                self.pump(s, f, now);
            }
            (kind, target) => unreachable!("unexpected event {kind:?} for {target:?}"),
        }
    }

    fn waiting_for_gate(&self) -> bool {
        self.gate_at.is_none() && self.flows.iter().any(|f| matches!(f.spec.start, StartRule::AfterSaturation { .. }))
    }

    fn gate_earliest(&self) -> SimTime {
        self.flows
            .iter()
            .filter_map(|f| match f.spec.start {
                StartRule::AfterSaturation { not_before, .. } => Some(not_before),
                StartRule::At(_) => None,
            })
            .min()
            .unwrap_or(SimTime::ZERO)
    }

    fn on_gate(&mut self, s: &mut Scheduler, now: SimTime) {
        self.gate = None;
        self.gate_at = Some(now);
        for i in 0..self.flows.len() {
            if let StartRule::AfterSaturation { not_before, jitter_max } = self.flows[i].spec.start {
                let jitter = SimTime::from_nanos(self.start_rng.below(jitter_max.as_nanos()));
                let at = now.max(not_before) + jitter;
                s.schedule(at, EventKind::AppStart, Target::Sender(i as u32), 0);
            }
        }
    }

    fn on_start(&mut self, s: &mut Scheduler, f: u32, now: SimTime) {
        let snapshot = self.egress_snapshot();
        let fs = &mut self.flows[f as usize];
        fs.egress_at_start = snapshot;
        let pkt = fs.conn.start(now);
        self.inject(s, f, pkt, now);
        self.rearm_loss_timer(s, f, now);
    }

    /// Hand a packet to the bottleneck after the sender's processing jitter.
    fn inject(&mut self, s: &mut Scheduler, f: u32, pkt: Packet, now: SimTime) {
        self.record(now, f, TraceEvent::Send, &pkt);
        let max = self.cfg.sender_jitter_max.as_nanos();
        let fs = &mut self.flows[f as usize];
        let jitter = SimTime::from_nanos(fs.rng.below(max + 1));
        let at = (now + jitter).max(fs.last_enqueue);
        fs.last_enqueue = at;
        let slot = self.store(InTransit::Link(pkt));
        s.schedule(at, EventKind::PacketArrival, LINK, slot);
    }

    fn on_link_arrival(&mut self, s: &mut Scheduler, slot: u64, now: SimTime) {
        let InTransit::Link(pkt) = self.take(slot) else { unreachable!("link slot holds a data packet") };
        let was_empty = self.link.occupancy() == 0;
        match self.link.enqueue(pkt, now) {
            EnqueueOutcome::Accepted { departure } => {
                s.schedule(departure, EventKind::PacketDeparture, LINK, 0);
                if was_empty && self.waiting_for_gate() {
                    let at = (now + self.cfg.rtt + self.cfg.rtt).max(self.gate_earliest());
                    self.gate = Some(s.schedule(at, EventKind::AppStart, Target::Sim, GATE));
                }
            }
            EnqueueOutcome::Dropped => self.record(now, pkt.flow_id, TraceEvent::Drop, &pkt),
        }
    }

    fn on_departure(&mut self, s: &mut Scheduler, now: SimTime) {
        let pkt = self.link.dequeue(now);
        if self.link.occupancy() == 0 {
            if let Some(h) = self.gate.take() {
                s.cancel(h);
            }
        }
        let slot = self.store(InTransit::Receiver(pkt));
        s.schedule(now + self.one_way, EventKind::PacketArrival, Target::Receiver(pkt.flow_id), slot);
    }

    fn on_receive(&mut self, s: &mut Scheduler, f: u32, slot: u64, now: SimTime) {
        let InTransit::Receiver(pkt) = self.take(slot) else { unreachable!("receiver slot holds a data packet") };
        self.link.mark_delivered(f);
        self.record(now, f, TraceEvent::Deliver, &pkt);
        if self.cfg.record.deliveries {
            self.deliveries.push(Delivery { time: now, flow_id: f, bytes: pkt.len });
        }
        let fs = &mut self.flows[f as usize];
        match fs.receiver.on_packet(&pkt, now) {
            ReceiverAction::AckNow(ack) => {
                if let Some(h) = fs.ack_timer.take() {
                    s.cancel(h);
                }
                self.send_ack(s, f, ack, now);
            }
            ReceiverAction::ArmTimer(at) => {
                fs.ack_timer = Some(s.schedule(at, EventKind::AckDelayTimer, Target::Receiver(f), 0));
            }
            ReceiverAction::Nothing => {}
        }
    }

    fn send_ack(&mut self, s: &mut Scheduler, f: u32, ack: AckInfo, now: SimTime) {
        let slot = self.store(InTransit::Sender(ack));
        s.schedule(now + self.one_way, EventKind::PacketArrival, Target::Sender(f), slot);
    }

    fn on_ack_arrival(&mut self, s: &mut Scheduler, f: u32, slot: u64, now: SimTime) {
        let InTransit::Sender(ack) = self.take(slot) else { unreachable!("sender slot holds an ACK") };
        if self.cfg.record.trace {
            self.trace.push(TraceRecord {
                time: now,
                flow_id: f,
                event: TraceEvent::Ack,
                pkt_num: ack.largest_acked,
                seq: 0,
                len: ACK_SIZE,
            });
        }
        let fs = &mut self.flows[f as usize];
        let was_done = fs.conn.phase() == Phase::Finished;
        let out = fs.conn.on_ack(&ack, now);
        fs.conn.detect_losses(now);
        if out.completed && !was_done {
            let snapshot = self.egress_snapshot();
            self.flows[f as usize].egress_at_finish = snapshot;
            if self.flows[f as usize].spec.ends_run
                && self.flows.iter().filter(|x| x.spec.ends_run).all(|x| x.conn.phase() == Phase::Finished)
            {
                self.log_cwnd(f, now);
                s.stop();
                return;
            }
        }
        self.pump(s, f, now);
    }

    fn log_cwnd(&mut self, f: u32, now: SimTime) {
        if !self.cfg.record.cwnd {
            return;
        }
        let fs = &mut self.flows[f as usize];
        if let Some(st) = fs.conn.cc_state() {
            let key = (st.cwnd, st.mode);
            if fs.last_logged != Some(key) {
                fs.last_logged = Some(key);
                self.cwnd_log.push(CwndSample { time: now, flow_id: f, cwnd: st.cwnd, mode: st.mode });
            }
        }
    }

    /// Send whatever the connection permits, then re-arm its timers.
    fn pump(&mut self, s: &mut Scheduler, f: u32, now: SimTime) {
        self.log_cwnd(f, now);
        let fs = &mut self.flows[f as usize];
        let out = fs.conn.on_send_opportunity(now);
        if fs.first_data_mode.is_none() && !out.packets.is_empty() {
            fs.first_data_mode = fs.conn.mode();
        }
        match (out.next_release, fs.pacing) {
            (Some(at), Some((cur, _))) if at == cur => {}
            (next, cur) => {
                if let Some((_, h)) = cur {
                    s.cancel(h);
                }
                fs.pacing = next.map(|at| (at, s.schedule(at, EventKind::PacingTimer, Target::Sender(f), 0)));
            }
        }
        for pkt in out.packets {
            self.inject(s, f, pkt, now);
        }
        self.rearm_loss_timer(s, f, now);
    }

    fn rearm_loss_timer(&mut self, s: &mut Scheduler, f: u32, now: SimTime) {
        let fs = &mut self.flows[f as usize];
        let want = fs.conn.loss_timer().map(|(at, _)| at.max(now));
        match (want, fs.loss_timer) {
            (Some(at), Some((cur, _))) if at == cur => {}
            (want, cur) => {
                if let Some((_, h)) = cur {
                    s.cancel(h);
                }
                fs.loss_timer = want.map(|at| (at, s.schedule(at, EventKind::LossTimer, Target::Sender(f), 0)));
            }
        }
    }

    fn finish(self, end_time: SimTime, events: u64) -> SimOutcome {
        let mut in_network = vec![0u64; self.flows.len()];
        for item in self.slots.iter().flatten() {
            if let InTransit::Receiver(p) = item {
                in_network[p.flow_id as usize] += 1;
            }
        }
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, fs)| {
                let counters = self.link.counters(i as u32);
                FlowOutcome {
                    flow_id: i as u32,
                    transfer_bytes: fs.spec.transfer_bytes,
                    started_at: fs.conn.start_at(),
                    established_at: fs.conn.established_at(),
                    finished_at: fs.conn.finished_at(),
                    stats: *fs.conn.stats(),
                    ever_slow_start: fs.conn.controller().is_some_and(|c| c.ever_slow_start()),
                    first_data_mode: fs.first_data_mode,
                    hint_fallback: fs.conn.hint_fallback(),
                    received_bytes: fs.receiver.contiguous_bytes(),
                    egress_at_start: fs.egress_at_start.clone(),
                    egress_at_finish: fs.egress_at_finish.clone(),
                    injected_pkts: counters.injected_pkts,
                    dropped_pkts: counters.dropped_pkts,
                    delivered_pkts: counters.delivered_pkts,
                    in_network_pkts: counters.injected_pkts - counters.dropped_pkts - counters.departed_pkts
                        + in_network[i],
                }
            })
            .collect::<Vec<_>>();
        SimOutcome {
            end_time,
            gate_at: self.gate_at,
            flows,
            max_occupancy: self.link.max_occupancy(),
            events,
            trace: self.trace,
            cwnd_log: self.cwnd_log,
            deliveries: self.deliveries,
        }
    }
}
