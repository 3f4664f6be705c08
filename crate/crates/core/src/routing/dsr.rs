//! Dynamic Source Routing.
//!
//! Route discovery floods a route request that accumulates a route record;
//! only the target answers, once per arriving copy, by unicasting the
//! completed record back along its reverse. Data carries the full source
//! route. A broken link purges every cached route using it; the origin
//! salvages with another cached route when it has one and otherwise starts
//! a new discovery.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::engine::SimTime;
use crate::metrics::DropReason;
use crate::packet::{Body, Packet, PacketKind};
use crate::routing::{Ctx, Routing, SendBuffer, Timer, DATA_TTL};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct DsrConfig {
    pub rreq_ttl: u8,
    pub buffer_timeout: SimTime,
    pub buffer_capacity: usize,
    /// First retry delay; doubles on every further attempt.
    pub discovery_base: SimTime,
    pub discovery_tries: u32,
    pub seen_expiry: SimTime,
    pub max_routes_per_dst: usize,
}

impl Default for DsrConfig {
    fn default() -> Self {
        DsrConfig {
            rreq_ttl: 16,
            buffer_timeout: SimTime::from_secs(30),
            buffer_capacity: 64,
            discovery_base: SimTime::from_secs(1),
            discovery_tries: 3,
            seen_expiry: SimTime::from_secs(60),
            max_routes_per_dst: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CachedRoute {
    pub route: Vec<NodeId>,
    pub inserted: SimTime,
}

fn is_simple(route: &[NodeId]) -> bool {
    route.iter().enumerate().all(|(i, n)| !route[..i].contains(n))
}

fn uses_link(route: &[NodeId], a: NodeId, b: NodeId) -> bool {
    route.windows(2).any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
}

/// Source routes per destination, in order of first insertion.
#[derive(Clone, Debug)]
pub struct RouteCache {
    me: NodeId,
    max_per_dst: usize,
    routes: BTreeMap<NodeId, Vec<CachedRoute>>,
}

impl RouteCache {
    pub fn new(me: NodeId, max_per_dst: usize) -> Self {
        RouteCache { me, max_per_dst, routes: BTreeMap::new() }
    }

    /// Adds a route, or refreshes the timestamp of an identical one. Routes
    /// that do not start here or contain a cycle are rejected.
    pub fn insert(&mut self, route: Vec<NodeId>, now: SimTime) -> bool {
        if route.len() < 2 || route[0] != self.me || !is_simple(&route) {
            return false;
        }
        let dst = *route.last().expect("len >= 2");
        let list = self.routes.entry(dst).or_default();
        if let Some(existing) = list.iter_mut().find(|c| c.route == route) {
            existing.inserted = now;
            return true;
        }
        if list.len() < self.max_per_dst {
            list.push(CachedRoute { route, inserted: now });
        }
        true
    }

    /// The preferred route: the earliest-inserted survivor.
    pub fn best(&self, dst: NodeId) -> Option<&[NodeId]> {
        self.routes.get(&dst).and_then(|l| l.first()).map(|c| c.route.as_slice())
    }

    pub fn routes_for(&self, dst: NodeId) -> &[CachedRoute] {
        self.routes.get(&dst).map_or(&[], Vec::as_slice)
    }

    /// Removes every route that uses the link `a - b`. Returns how many went.
    pub fn purge_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let mut removed = 0;
        for list in self.routes.values_mut() {
            let before = list.len();
            list.retain(|c| !uses_link(&c.route, a, b));
            removed += before - list.len();
        }
        self.routes.retain(|_, l| !l.is_empty());
        removed
    }

    pub fn len(&self) -> usize {
        self.routes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

/// `(origin, request id)` pairs already handled, forgotten after a while.
#[derive(Debug, Default)]
struct SeenRequests {
    seen: HashMap<(NodeId, u32), SimTime>,
    order: VecDeque<(SimTime, (NodeId, u32))>,
}

impl SeenRequests {
    fn evict(&mut self, now: SimTime, expiry: SimTime) {
        while let Some(&(t, key)) = self.order.front() {
            if now.saturating_sub(t) <= expiry {
                break;
            }
            self.order.pop_front();
            if self.seen.get(&key) == Some(&t) {
                self.seen.remove(&key);
            }
        }
    }

    /// Returns false if the key was already present.
    fn insert(&mut self, key: (NodeId, u32), now: SimTime) -> bool {
        if self.seen.contains_key(&key) {
            return false;
        }
        self.seen.insert(key, now);
        self.order.push_back((now, key));
        true
    }
}

pub struct DsrNode {
    me: NodeId,
    cfg: DsrConfig,
    cache: RouteCache,
    seen: SeenRequests,
    buffer: SendBuffer,
    /// Destination -> discovery attempt in progress.
    pending: BTreeMap<NodeId, u32>,
    next_request_id: u32,
    rreq_sent: u64,
}

impl DsrNode {
    pub fn new(me: NodeId, cfg: DsrConfig) -> Self {
        DsrNode {
            me,
            cache: RouteCache::new(me, cfg.max_routes_per_dst),
            seen: SeenRequests::default(),
            buffer: SendBuffer::new(cfg.buffer_capacity, cfg.buffer_timeout),
            pending: BTreeMap::new(),
            next_request_id: 0,
            rreq_sent: 0,
            cfg,
        }
    }

    pub fn cache(&self) -> &RouteCache {
        &self.cache
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn discovery_pending(&self, dst: NodeId) -> bool {
        self.pending.contains_key(&dst)
    }

    /// Route requests originated by this node.
    pub fn requests_sent(&self) -> u64 {
        self.rreq_sent
    }

    fn send_along(&mut self, ctx: &mut Ctx, mut packet: Packet, route: Vec<NodeId>) {
        let next = route[1];
        packet.body = Body::SourceRoute(route);
        ctx.unicast(packet, next);
    }

    fn buffer_packet(&mut self, ctx: &mut Ctx, packet: Packet) {
        let (gen, copy) = (packet.gen_id, packet.copy);
        if let Some(old) = self.buffer.push(packet, ctx.now) {
            ctx.drop(old, DropReason::BufferOverflow);
        }
        ctx.timer(self.buffer.timeout(), Timer::BufferExpiry { gen, copy });
    }

    fn start_discovery(&mut self, ctx: &mut Ctx, dst: NodeId, attempt: u32) {
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.seen.insert((self.me, request_id), ctx.now);
        let gen = ctx.next_gen();
        let rreq = Packet::new(
            PacketKind::DsrRreq,
            gen,
            dst,
            self.cfg.rreq_ttl,
            Body::RouteRequest { request_id, record: vec![self.me] },
            ctx.now,
        );
        ctx.broadcast(rreq);
        self.rreq_sent += 1;
        self.pending.insert(dst, attempt);
        let backoff = self.cfg.discovery_base.times(1u64 << (attempt - 1).min(16));
        ctx.timer(backoff, Timer::DiscoveryRetry { dst, attempt });
    }

    /// Sends an application packet from its origin: on the preferred cached
    /// route if there is one, otherwise buffered behind a discovery.
    pub fn dsr_originate(&mut self, ctx: &mut Ctx, packet: Packet) {
        let dst = packet.final_dst;
        if let Some(route) = self.cache.best(dst) {
            let route = route.to_vec();
            self.send_along(ctx, packet, route);
            return;
        }
        self.buffer_packet(ctx, packet);
        if !self.pending.contains_key(&dst) {
            self.start_discovery(ctx, dst, 1);
        }
    }

    pub fn dsr_handle_rreq(&mut self, ctx: &mut Ctx, mut rreq: Packet) {
        let Body::RouteRequest { request_id, record } = &mut rreq.body else {
            ctx.drop(rreq, DropReason::ProtocolError);
            return;
        };
        if record.contains(&self.me) {
            return;
        }
        if rreq.final_dst == self.me {
            let mut route = record.clone();
            route.push(self.me);
            ctx.arrived(rreq);
            let back = route[route.len() - 2];
            let rrep = Packet::new(
                PacketKind::DsrRrep,
                ctx.next_gen(),
                route[0],
                DATA_TTL,
                Body::RouteReply { route },
                ctx.now,
            );
            ctx.unicast(rrep, back);
            return;
        }
        self.seen.evict(ctx.now, self.cfg.seen_expiry);
        if !self.seen.insert((rreq.origin, *request_id), ctx.now) {
            return;
        }
        if rreq.ttl == 0 {
            return;
        }
        record.push(self.me);
        rreq.ttl -= 1;
        ctx.broadcast(rreq);
    }

    pub fn dsr_handle_rrep(&mut self, ctx: &mut Ctx, rrep: Packet) {
        let Body::RouteReply { route } = &rrep.body else {
            ctx.drop(rrep, DropReason::ProtocolError);
            return;
        };
        let Some(idx) = route.iter().position(|&n| n == self.me) else {
            ctx.drop(rrep, DropReason::ProtocolError);
            return;
        };
        if idx > 0 {
            let back = route[idx - 1];
            ctx.unicast(rrep, back);
            return;
        }
        let route = route.clone();
        let dst = *route.last().expect("reply route has a target");
        ctx.arrived(rrep);
        self.cache.insert(route, ctx.now);
        self.pending.remove(&dst);
        for p in self.buffer.take_for(dst) {
            self.dsr_originate(ctx, p);
        }
    }

    /// Relays a source-routed packet to the next node on its embedded route.
    pub fn dsr_forward(&mut self, ctx: &mut Ctx, packet: Packet) {
        let Body::SourceRoute(route) = &packet.body else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        let Some(idx) = route.iter().position(|&n| n == self.me) else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        if idx + 1 == route.len() {
            if packet.final_dst == self.me {
                ctx.deliver_app(packet);
            } else {
                ctx.drop(packet, DropReason::ProtocolError);
            }
            return;
        }
        let next = route[idx + 1];
        ctx.unicast(packet, next);
    }

    pub fn dsr_handle_link_break(&mut self, ctx: &mut Ctx, to: NodeId, packet: Packet) {
        self.cache.purge_link(self.me, to);
        if !packet.is_application() {
            ctx.drop(packet, DropReason::LinkBreak);
            return;
        }
        if packet.origin == self.me {
            // Salvage at the source.
            self.dsr_originate(ctx, packet);
            return;
        }
        let prefix: Vec<NodeId> = match &packet.body {
            Body::SourceRoute(route) => match route.iter().position(|&n| n == self.me) {
                Some(idx) => route[..=idx].to_vec(),
                None => Vec::new(),
            },
            _ => Vec::new(),
        };
        if prefix.len() >= 2 {
            let back = prefix[prefix.len() - 2];
            let rerr = Packet::new(
                PacketKind::DsrRerr,
                ctx.next_gen(),
                prefix[0],
                DATA_TTL,
                Body::RouteError { from: self.me, to, path: prefix },
                ctx.now,
            );
            ctx.unicast(rerr, back);
        }
        ctx.drop(packet, DropReason::LinkBreak);
    }

    fn handle_rerr(&mut self, ctx: &mut Ctx, rerr: Packet) {
        let Body::RouteError { from, to, path } = &rerr.body else {
            ctx.drop(rerr, DropReason::ProtocolError);
            return;
        };
        self.cache.purge_link(*from, *to);
        match path.iter().position(|&n| n == self.me) {
            Some(0) => ctx.arrived(rerr),
            Some(idx) => {
                let back = path[idx - 1];
                ctx.unicast(rerr, back);
            }
            None => ctx.drop(rerr, DropReason::ProtocolError),
        }
    }
}

impl Routing for DsrNode {
    fn originate(&mut self, ctx: &mut Ctx, packet: Packet) {
        self.dsr_originate(ctx, packet);
    }

    fn receive(&mut self, ctx: &mut Ctx, _from: NodeId, packet: Packet) {
        match packet.kind {
            PacketKind::DsrRreq => self.dsr_handle_rreq(ctx, packet),
            PacketKind::DsrRrep => self.dsr_handle_rrep(ctx, packet),
            PacketKind::DsrRerr => self.handle_rerr(ctx, packet),
            PacketKind::Data | PacketKind::Ack => self.dsr_forward(ctx, packet),
            _ => ctx.drop(packet, DropReason::ProtocolError),
        }
    }

    fn link_break(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        self.dsr_handle_link_break(ctx, next_hop, packet);
    }

    fn timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::DiscoveryRetry { dst, attempt } => {
                if self.pending.get(&dst) != Some(&attempt) {
                    return;
                }
                if self.cache.best(dst).is_some() || !self.buffer.has_for(dst) || attempt >= self.cfg.discovery_tries {
                    self.pending.remove(&dst);
                } else {
                    self.start_discovery(ctx, dst, attempt + 1);
                }
            }
            Timer::BufferExpiry { gen, copy } => {
                if let Some(p) = self.buffer.expire(gen, copy, ctx.now) {
                    ctx.drop(p, DropReason::BufferExpired);
                }
            }
            Timer::Proactive { .. } | Timer::Evaporate => {}
        }
    }
}
