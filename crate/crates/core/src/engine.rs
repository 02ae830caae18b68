//! Deterministic discrete-event core: virtual clock, event queue and seeded
//! randomness.
//!
//! Time is kept in integer nanoseconds. Events are totally ordered by
//! `(fire_at, seq)` where `seq` is issued at scheduling time, so two runs that
//! schedule the same events in the same order dispatch them identically.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Virtual time in nanoseconds since simulation start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub const fn as_micros(self) -> u64 {
        self.0 / 1_000
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    /// Multiply by a rational `num / den`, rounding down.
    pub fn mul_ratio(self, num: u64, den: u64) -> SimTime {
        SimTime((u128::from(self.0) * u128::from(num) / u128::from(den)) as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulation clock overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("negative simulation time"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}ms", self.as_millis_f64())
    }
}

/// Closed set of event kinds. Behavior differences live in the target and
/// payload, never in new queue semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    PacketArrival,
    PacketDeparture,
    PacingTimer,
    LossTimer,
    AckDelayTimer,
    AppStart,
    SimEnd,
}

/// Which simulated entity an event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Link(u32),
    Sender(u32),
    Receiver(u32),
    Sim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub target: Target,
    /// Opaque payload, e.g. an index into a packet store.
    pub payload: u64,
}

/// Handle returned by [`Scheduler::schedule`]; allows cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug)]
struct Queued {
    key: (SimTime, u64),
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Event queue plus virtual clock.
#[derive(Debug, Default)]
pub struct Scheduler {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Queued>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
    stop: bool,
    scheduled: u64,
    cancelled_total: u64,
    dispatched: u64,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedule an event. Panics if `fire_at` lies in the past: that is a
    /// programming error, not a modeled condition.
    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind, target: Target, payload: u64) -> EventHandle {
        assert!(fire_at >= self.now, "event scheduled in the past: {fire_at} < {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.live.insert(seq);
        let event = Event { fire_at, seq, kind, target, payload };
        self.heap.push(Reverse(Queued { key: (fire_at, seq), event }));
        EventHandle(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: EventKind, target: Target, payload: u64) -> EventHandle {
        self.schedule(self.now + delay, kind, target, payload)
    }

    /// Cancel a pending event. Cancelling an already dispatched or cancelled
    /// event is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if self.live.remove(&handle.0) {
            self.cancelled.insert(handle.0);
            self.cancelled_total += 1;
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.0)
    }

    /// Request that the current `run_until` returns after the event being
    /// dispatched.
    pub fn stop(&mut self) {
        self.stop = true;
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn scheduled_total(&self) -> u64 {
        self.scheduled
    }

    pub fn cancelled_total(&self) -> u64 {
        self.cancelled_total
    }

    pub fn dispatched_total(&self) -> u64 {
        self.dispatched
    }

    /// Dispatch every event with `fire_at <= end` in `(fire_at, seq)` order.
    /// The handler may schedule further events. Returns the number of events
    /// dispatched by this call.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler, Event),
    {
        self.stop = false;
        let mut count = 0;
        while let Some(Reverse(head)) = self.heap.peek() {
            if head.key.0 > end {
                break;
            }
            let Reverse(q) = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&q.event.seq) {
                continue;
            }
            self.live.remove(&q.event.seq);
            debug_assert!(q.event.fire_at >= self.now);
            self.now = q.event.fire_at;
            self.dispatched += 1;
            count += 1;
            handler(self, q.event);
            if self.stop {
                return count;
            }
        }
        if end != SimTime::MAX && end > self.now {
            self.now = end;
        }
        count
    }
}

/// Seeded pseudo-random stream. ChaCha8 gives identical draws on every
/// platform for a given `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `[0, bound)`; returns 0 for `bound == 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            0
        } else {
            self.inner.random_range(0..bound)
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}

/// SplitMix64 finalizer; used to derive per-repetition seeds from a base seed.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
