//! Common protocol interface.
//!
//! Each node owns one [`Routing`] instance. Handlers never touch the event
//! queue or the radio directly: they push [`Command`]s into the [`Ctx`] and
//! the simulator applies them. That keeps every protocol testable as a plain
//! state machine.

use std::collections::VecDeque;

use crate::engine::{RngStream, SimTime};
use crate::metrics::DropReason;
use crate::packet::{Dst, GenId, Packet};
use crate::NodeId;

pub mod anthocnet;
pub mod ara;
pub mod dsr;

pub use anthocnet::{AhnConfig, AhnNode};
pub use ara::{AraConfig, AraNode};
pub use dsr::{DsrConfig, DsrNode};

/// Hop budget given to application packets.
pub const DATA_TTL: u8 = 32;

/// Current connectivity as seen by the simulator.
pub trait LinkOracle {
    fn in_range(&self, a: NodeId, b: NodeId) -> bool;
}

/// Timers any protocol may arm. Stale timers are ignored by the protocol
/// when they fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timer {
    DiscoveryRetry { dst: NodeId, attempt: u32 },
    BufferExpiry { gen: GenId, copy: u8 },
    Proactive { dst: NodeId },
    Evaporate,
}

#[derive(Debug, PartialEq)]
pub enum Command {
    Send { packet: Packet, to: Dst },
    /// A control packet reached its target.
    Arrived(Packet),
    /// An application packet (DATA or ACK) reached its final destination.
    DeliverApp(Packet),
    Drop { packet: Packet, reason: DropReason },
    Timer { after: SimTime, timer: Timer },
}

/// Per-invocation handle given to protocol handlers.
pub struct Ctx<'a> {
    pub me: NodeId,
    pub now: SimTime,
    pub rng: &'a mut RngStream,
    links: &'a dyn LinkOracle,
    next_seq: &'a mut u64,
    pub out: Vec<Command>,
}

impl<'a> Ctx<'a> {
    pub fn new(me: NodeId, now: SimTime, rng: &'a mut RngStream, links: &'a dyn LinkOracle, next_seq: &'a mut u64) -> Self {
        Ctx { me, now, rng, links, next_seq, out: Vec::new() }
    }

    pub fn in_range(&self, other: NodeId) -> bool {
        other != self.me && self.links.in_range(self.me, other)
    }

    /// Fresh packet identity for a packet originated here.
    pub fn next_gen(&mut self) -> GenId {
        let seq = *self.next_seq;
        *self.next_seq += 1;
        GenId { origin: self.me, seq }
    }

    pub fn unicast(&mut self, mut packet: Packet, to: NodeId) {
        packet.src = self.me;
        packet.dst = Dst::Node(to);
        self.out.push(Command::Send { packet, to: Dst::Node(to) });
    }

    pub fn broadcast(&mut self, mut packet: Packet) {
        packet.src = self.me;
        packet.dst = Dst::Broadcast;
        self.out.push(Command::Send { packet, to: Dst::Broadcast });
    }

    pub fn arrived(&mut self, packet: Packet) {
        self.out.push(Command::Arrived(packet));
    }

    pub fn deliver_app(&mut self, packet: Packet) {
        self.out.push(Command::DeliverApp(packet));
    }

    pub fn drop(&mut self, packet: Packet, reason: DropReason) {
        self.out.push(Command::Drop { packet, reason });
    }

    pub fn timer(&mut self, after: SimTime, timer: Timer) {
        self.out.push(Command::Timer { after, timer });
    }

    /// Pre-fills the packet fields set on originated frames.
    pub fn originate(&mut self, packet: &mut Packet) {
        packet.origin = self.me;
        packet.created_at = self.now;
        packet.meta.trail = vec![self.me];
    }
}

pub trait Routing {
    /// Called once at t = 0.
    fn start(&mut self, _ctx: &mut Ctx) {}
    /// An application packet (DATA or ACK) originated here.
    fn originate(&mut self, ctx: &mut Ctx, packet: Packet);
    fn receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet);
    /// Unicast of `packet` to `next_hop` failed because the neighbour was
    /// out of range at delivery time.
    fn link_break(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet);
    fn timer(&mut self, ctx: &mut Ctx, timer: Timer);
    fn session_started(&mut self, _ctx: &mut Ctx, _dst: NodeId) {}
    fn session_stopped(&mut self, _ctx: &mut Ctx, _dst: NodeId) {}
}

/// The protocol instance of one node.
pub enum Router {
    Dsr(DsrNode),
    Ahn(AhnNode),
    Ara(AraNode),
}

macro_rules! dispatch {
    ($self:ident, $r:ident => $e:expr) => {
        match $self {
            Router::Dsr($r) => $e,
            Router::Ahn($r) => $e,
            Router::Ara($r) => $e,
        }
    };
}

impl Routing for Router {
    fn start(&mut self, ctx: &mut Ctx) {
        dispatch!(self, r => r.start(ctx))
    }
    fn originate(&mut self, ctx: &mut Ctx, packet: Packet) {
        dispatch!(self, r => r.originate(ctx, packet))
    }
    fn receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        dispatch!(self, r => r.receive(ctx, from, packet))
    }
    fn link_break(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        dispatch!(self, r => r.link_break(ctx, next_hop, packet))
    }
    fn timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        dispatch!(self, r => r.timer(ctx, timer))
    }
    fn session_started(&mut self, ctx: &mut Ctx, dst: NodeId) {
        dispatch!(self, r => r.session_started(ctx, dst))
    }
    fn session_stopped(&mut self, ctx: &mut Ctx, dst: NodeId) {
        dispatch!(self, r => r.session_stopped(ctx, dst))
    }
}

/// Packets waiting for a route, each with an expiry time. Oldest first.
#[derive(Debug)]
pub struct SendBuffer {
    capacity: usize,
    timeout: SimTime,
    entries: VecDeque<(SimTime, Packet)>,
}

impl SendBuffer {
    pub fn new(capacity: usize, timeout: SimTime) -> Self {
        SendBuffer { capacity, timeout, entries: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timeout(&self) -> SimTime {
        self.timeout
    }

    /// Buffers the packet; when full the oldest entry is evicted and returned.
    pub fn push(&mut self, packet: Packet, now: SimTime) -> Option<Packet> {
        let evicted = if self.entries.len() >= self.capacity { self.entries.pop_front().map(|e| e.1) } else { None };
        self.entries.push_back((now + self.timeout, packet));
        evicted
    }

    pub fn has_for(&self, dst: NodeId) -> bool {
        self.entries.iter().any(|(_, p)| p.final_dst == dst)
    }

    /// Removes and returns every packet for `dst`, oldest first.
    pub fn take_for(&mut self, dst: NodeId) -> Vec<Packet> {
        let (take, keep): (VecDeque<_>, VecDeque<_>) = self.entries.drain(..).partition(|(_, p)| p.final_dst == dst);
        self.entries = keep;
        take.into_iter().map(|e| e.1).collect()
    }

    /// Removes the given packet copy if it is still buffered and expired.
    pub fn expire(&mut self, gen: GenId, copy: u8, now: SimTime) -> Option<Packet> {
        let pos = self.entries.iter().position(|(exp, p)| p.gen_id == gen && p.copy == copy && *exp <= now)?;
        self.entries.remove(pos).map(|e| e.1)
    }
}

/// Samples index `i` with probability `w_i / Σ w`. `weights` must be
/// non-empty with a positive finite sum.
pub fn sample_weighted(weights: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}
