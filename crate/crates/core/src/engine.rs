//! Discrete-event core: virtual clock, cancellable event queue and seeded
//! random streams.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is assigned at
//! scheduling time, so two events at the same instant fire in the order they
//! were scheduled.
//!
//! Random streams use ChaCha8 keyed by a SplitMix64 expansion of
//! `(run seed, FNV-1a(purpose label), node id + 1)`; node-less streams use 0
//! for the node component. Reals are drawn from the top 53 bits of a `u64`.
//! Nothing here depends on the platform or on `std` hashing.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::error::Error as StdError;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::NodeId;

/// Virtual time in integer microseconds since simulation start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            SimTime(0)
        } else {
            SimTime((s * 1e6).round() as u64)
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn saturating_add(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(other.0))
    }

    pub fn times(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Who an event is addressed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Node(NodeId),
    Harness,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Node(n) => write!(f, "node {n}"),
            Target::Harness => f.write_str("harness"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug)]
pub struct Event<A> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: Target,
    pub action: A,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event scheduled in the past: at {at}, clock is {now}")]
    PastSchedule { at: SimTime, now: SimTime },
    #[error("run_until called while a run is in progress")]
    Reentrant,
    #[error("invalid draw parameter: {0}")]
    Parameter(String),
    #[error("handler for event seq {seq} at {at} ({target}) failed: {source}")]
    Handler {
        at: SimTime,
        seq: u64,
        target: Target,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
}

struct Entry<A> {
    fire_at: SimTime,
    seq: u64,
    target: Target,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<A> Eq for Entry<A> {}

impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Entry<A> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Event queue plus virtual clock. Single-threaded; one per run.
pub struct Scheduler<A> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<A>>,
    pending: HashSet<u64>,
    running: bool,
}

impl<A> Default for Scheduler<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            running: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of scheduled, not yet fired, not cancelled events.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, action: A, target: Target, at: SimTime) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::PastSchedule { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { fire_at: at, seq, target, action });
        self.pending.insert(seq);
        Ok(EventHandle(seq))
    }

    /// Schedules relative to the current clock; cannot be in the past.
    pub fn schedule_in(&mut self, action: A, target: Target, delay: SimTime) -> EventHandle {
        let at = self.now.saturating_add(delay);
        self.schedule(action, target, at).expect("relative schedule is never in the past")
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Pops the next live event with `fire_at <= t_end` and advances the clock.
    fn pop_until(&mut self, t_end: SimTime) -> Option<Event<A>> {
        loop {
            let top = self.heap.peek()?;
            if top.fire_at > t_end {
                return None;
            }
            let e = self.heap.pop().expect("peeked");
            if !self.pending.remove(&e.seq) {
                continue;
            }
            self.now = e.fire_at;
            return Some(Event { fire_at: e.fire_at, seq: e.seq, target: e.target, action: e.action });
        }
    }

    /// Executes events in `(fire_at, seq)` order up to and including
    /// `t_end`, then leaves the clock at `t_end`. Returns the number fired.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, EngineError>
    where
        E: StdError + Send + Sync + 'static,
        F: FnMut(&mut Scheduler<A>, Event<A>) -> Result<(), E>,
    {
        if self.running {
            return Err(EngineError::Reentrant);
        }
        self.running = true;
        let mut fired = 0u64;
        while let Some(ev) = self.pop_until(t_end) {
            let (at, seq, target) = (ev.fire_at, ev.seq, ev.target);
            fired += 1;
            if let Err(e) = handler(self, ev) {
                self.running = false;
                return Err(EngineError::Handler { at, seq, target, source: Box::new(e) });
            }
        }
        if self.now < t_end {
            self.now = t_end;
        }
        self.running = false;
        Ok(fired)
    }
}

/// Identity of a random stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub purpose: &'static str,
    pub node: Option<NodeId>,
}

/// What to draw from a stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Draw {
    UniformReal,
    /// Integer in `[lo, hi)`.
    UniformInt { lo: u64, hi: u64 },
    Bernoulli(f64),
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, purpose: &'static str, node: Option<NodeId>) -> Self {
        let node_part = node.map_or(0, |n| n.0 as u64 + 1);
        let mut state = seed ^ fnv1a(purpose).rotate_left(17) ^ node_part.wrapping_mul(0xd6e8_feb8_6659_fd93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream { id: StreamId { seed, purpose, node }, rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn id(&self) -> &StreamId {
        &self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform real in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi)`, unbiased by rejection. `lo < hi`.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo < hi, "empty range {lo}..{hi}");
        let span = hi - lo;
        let zone = u64::MAX - (u64::MAX % span);
        loop {
            let v = self.next_u64();
            if v < zone {
                return lo + v % span;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool, EngineError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(EngineError::Parameter(format!("bernoulli p={p} outside [0,1]")));
        }
        Ok(self.uniform() < p)
    }

    /// Generic draw; booleans come back as 0.0 / 1.0.
    pub fn draw(&mut self, kind: Draw) -> Result<f64, EngineError> {
        match kind {
            Draw::UniformReal => Ok(self.uniform()),
            Draw::UniformInt { lo, hi } => {
                if lo >= hi {
                    return Err(EngineError::Parameter(format!("empty integer range {lo}..{hi}")));
                }
                Ok(self.uniform_int(lo, hi) as f64)
            }
            Draw::Bernoulli(p) => Ok(if self.bernoulli(p)? { 1.0 } else { 0.0 }),
        }
    }
}
