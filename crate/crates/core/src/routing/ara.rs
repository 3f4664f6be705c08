//! Ant-colony based routing (ARA).
//!
//! A forward ant flooded from the source lays reverse pheromone `φ₀/hops`
//! toward the source at every node it reaches; the destination answers with
//! a backward ant that lays forward pheromone the same way. Data reinforces
//! the entry it uses, all entries evaporate once per second, and a failed
//! link zeroes its entries.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::engine::SimTime;
use crate::metrics::DropReason;
use crate::packet::{Body, GenId, Packet, PacketKind};
use crate::routing::{sample_weighted, Ctx, Routing, SendBuffer, Timer, DATA_TTL};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct AraConfig {
    pub phi0: f64,
    pub reinforce: f64,
    pub decay: f64,
    pub floor: f64,
    pub t_stale: SimTime,
    pub evaporate_every: SimTime,
    pub ant_ttl: u8,
    pub discovery_retry: SimTime,
    pub discovery_tries: u32,
    pub buffer_timeout: SimTime,
    pub buffer_capacity: usize,
    pub registry_memory: SimTime,
}

impl Default for AraConfig {
    fn default() -> Self {
        AraConfig {
            phi0: 1.0,
            reinforce: 0.1,
            decay: 0.98,
            floor: 1e-3,
            t_stale: SimTime::from_secs(10),
            evaporate_every: SimTime::from_secs(1),
            ant_ttl: 16,
            discovery_retry: SimTime::from_secs(1),
            discovery_tries: 3,
            buffer_timeout: SimTime::from_secs(30),
            buffer_capacity: 64,
            registry_memory: SimTime::from_secs(60),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AraEntry {
    pub next: NodeId,
    /// 0 means deactivated.
    pub phi: f64,
    floor_since: Option<SimTime>,
}

#[derive(Clone, Debug, Default)]
pub struct AraRouteTable {
    /// destination -> entries sorted by next hop.
    entries: BTreeMap<NodeId, Vec<AraEntry>>,
}

impl AraRouteTable {
    pub fn phi(&self, dest: NodeId, next: NodeId) -> Option<f64> {
        self.entries.get(&dest)?.iter().find(|e| e.next == next).map(|e| e.phi)
    }

    pub fn entries_for(&self, dest: NodeId) -> &[AraEntry] {
        self.entries.get(&dest).map_or(&[], Vec::as_slice)
    }

    pub fn has_active(&self, dest: NodeId) -> bool {
        self.entries_for(dest).iter().any(|e| e.phi > 0.0)
    }

    /// Creates the entry, or raises it to at least `phi` (reactivating it).
    pub fn upsert(&mut self, dest: NodeId, next: NodeId, phi: f64) {
        let list = self.entries.entry(dest).or_default();
        match list.binary_search_by_key(&next, |e| e.next) {
            Ok(i) => {
                if phi > list[i].phi {
                    list[i].phi = phi;
                    list[i].floor_since = None;
                }
            }
            Err(i) => list.insert(i, AraEntry { next, phi, floor_since: None }),
        }
    }

    pub fn reinforce(&mut self, dest: NodeId, next: NodeId, delta: f64) {
        if let Some(e) = self.entries.get_mut(&dest).and_then(|l| l.iter_mut().find(|e| e.next == next)) {
            if e.phi > 0.0 {
                e.phi += delta;
                e.floor_since = None;
            }
        }
    }

    pub fn zero(&mut self, dest: NodeId, next: NodeId) {
        if let Some(e) = self.entries.get_mut(&dest).and_then(|l| l.iter_mut().find(|e| e.next == next)) {
            e.phi = 0.0;
            e.floor_since = None;
        }
    }

    pub fn zero_via(&mut self, next: NodeId) {
        for e in self.entries.values_mut().flat_map(|l| l.iter_mut()).filter(|e| e.next == next) {
            e.phi = 0.0;
            e.floor_since = None;
        }
    }

    /// One evaporation step: `φ ← max(floor, ρ·φ)`; entries held at the
    /// floor for longer than `t_stale` are deactivated.
    pub fn evaporate(&mut self, now: SimTime, rho: f64, floor: f64, t_stale: SimTime) {
        for e in self.entries.values_mut().flat_map(|l| l.iter_mut()).filter(|e| e.phi > 0.0) {
            e.phi = (rho * e.phi).max(floor);
            if e.phi <= floor {
                let since = *e.floor_since.get_or_insert(now);
                if now.saturating_sub(since) > t_stale {
                    e.phi = 0.0;
                    e.floor_since = None;
                }
            }
        }
    }

    /// Forwarding distribution `φ / Σ φ` over active entries accepted by `usable`.
    pub fn distribution(&self, dest: NodeId, usable: impl Fn(NodeId) -> bool) -> Vec<(NodeId, f64)> {
        let act: Vec<&AraEntry> = self.entries_for(dest).iter().filter(|e| e.phi > 0.0 && usable(e.next)).collect();
        let total: f64 = act.iter().map(|e| e.phi).sum();
        act.into_iter().map(|e| (e.next, e.phi / total)).collect()
    }
}

/// Packet identities already processed at a node.
#[derive(Debug, Default)]
pub struct DuplicateRegistry {
    seen: HashMap<(GenId, u8), SimTime>,
    order: VecDeque<(SimTime, (GenId, u8))>,
}

impl DuplicateRegistry {
    /// Registers the identity; false if it was already present.
    pub fn register(&mut self, id: GenId, copy: u8, now: SimTime) -> bool {
        if self.seen.contains_key(&(id, copy)) {
            return false;
        }
        self.seen.insert((id, copy), now);
        self.order.push_back((now, (id, copy)));
        true
    }

    pub fn contains(&self, id: GenId, copy: u8) -> bool {
        self.seen.contains_key(&(id, copy))
    }

    fn evict(&mut self, now: SimTime, memory: SimTime) {
        while let Some(&(t, key)) = self.order.front() {
            if now.saturating_sub(t) <= memory {
                break;
            }
            self.order.pop_front();
            self.seen.remove(&key);
        }
    }
}

pub struct AraNode {
    me: NodeId,
    cfg: AraConfig,
    table: AraRouteTable,
    registry: DuplicateRegistry,
    buffer: SendBuffer,
    pending: BTreeMap<NodeId, u32>,
    next_seq: u32,
    fant_sent: u64,
}

impl AraNode {
    pub fn new(me: NodeId, cfg: AraConfig) -> Self {
        AraNode {
            me,
            table: AraRouteTable::default(),
            registry: DuplicateRegistry::default(),
            buffer: SendBuffer::new(cfg.buffer_capacity, cfg.buffer_timeout),
            pending: BTreeMap::new(),
            next_seq: 0,
            fant_sent: 0,
            cfg,
        }
    }

    pub fn table(&self) -> &AraRouteTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut AraRouteTable {
        &mut self.table
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn discoveries(&self) -> u64 {
        self.fant_sent
    }

    pub fn ara_discover(&mut self, ctx: &mut Ctx, dest: NodeId, attempt: u32) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let gen = ctx.next_gen();
        self.registry.register(gen, 0, ctx.now);
        let fant = Packet::new(PacketKind::AraFant, gen, dest, self.cfg.ant_ttl, Body::AraAnt { seq, hops: 0 }, ctx.now);
        ctx.broadcast(fant);
        self.fant_sent += 1;
        self.pending.insert(dest, attempt);
        ctx.timer(self.cfg.discovery_retry, Timer::DiscoveryRetry { dst: dest, attempt });
    }

    fn seen_before(&mut self, ctx: &Ctx, p: &Packet) -> bool {
        self.registry.evict(ctx.now, self.cfg.registry_memory);
        !self.registry.register(p.gen_id, p.copy, ctx.now)
    }

    pub fn ara_handle_fant(&mut self, ctx: &mut Ctx, from: NodeId, mut fant: Packet) {
        if self.seen_before(ctx, &fant) {
            return;
        }
        let Body::AraAnt { seq, hops } = &mut fant.body else {
            ctx.drop(fant, DropReason::ProtocolError);
            return;
        };
        *hops += 1;
        let (seq, h) = (*seq, *hops);
        self.table.upsert(fant.origin, from, self.cfg.phi0 / h as f64);
        if fant.final_dst == self.me {
            let origin = fant.origin;
            ctx.arrived(fant);
            let gen = ctx.next_gen();
            self.registry.register(gen, 0, ctx.now);
            let bant = Packet::new(PacketKind::AraBant, gen, origin, DATA_TTL, Body::AraAnt { seq, hops: 0 }, ctx.now);
            ctx.unicast(bant, from);
            return;
        }
        if fant.ttl == 0 {
            return;
        }
        fant.ttl -= 1;
        ctx.broadcast(fant);
    }

    fn best_active(&self, ctx: &Ctx, dest: NodeId) -> Option<NodeId> {
        self.table
            .entries_for(dest)
            .iter()
            .filter(|e| e.phi > 0.0 && ctx.in_range(e.next))
            .fold(None, |best: Option<&AraEntry>, e| match best {
                Some(b) if b.phi >= e.phi => Some(b),
                _ => Some(e),
            })
            .map(|e| e.next)
    }

    pub fn ara_handle_bant(&mut self, ctx: &mut Ctx, from: NodeId, mut bant: Packet) {
        if self.seen_before(ctx, &bant) {
            ctx.drop(bant, DropReason::Duplicate);
            return;
        }
        let Body::AraAnt { hops, .. } = &mut bant.body else {
            ctx.drop(bant, DropReason::ProtocolError);
            return;
        };
        *hops += 1;
        let h = *hops;
        let dest = bant.origin;
        self.table.upsert(dest, from, self.cfg.phi0 / h as f64);
        if bant.final_dst == self.me {
            ctx.arrived(bant);
            self.pending.remove(&dest);
            for p in self.buffer.take_for(dest) {
                self.route(ctx, p, DropReason::NoRoute);
            }
            return;
        }
        match self.best_active(ctx, bant.final_dst) {
            Some(next) => ctx.unicast(bant, next),
            None => ctx.drop(bant, DropReason::NoRoute),
        }
    }

    fn buffer_packet(&mut self, ctx: &mut Ctx, packet: Packet) {
        let (gen, copy) = (packet.gen_id, packet.copy);
        if let Some(old) = self.buffer.push(packet, ctx.now) {
            ctx.drop(old, DropReason::BufferOverflow);
        }
        ctx.timer(self.buffer.timeout(), Timer::BufferExpiry { gen, copy });
    }

    /// Picks a next hop for an application packet held here. With no usable
    /// entry the origin buffers and discovers; anyone else reports back one
    /// hop and drops with `fail`.
    fn route(&mut self, ctx: &mut Ctx, mut packet: Packet, fail: DropReason) {
        let dest = packet.final_dst;
        // Entries through neighbours that left range are failed links.
        let gone: Vec<NodeId> = self
            .table
            .entries_for(dest)
            .iter()
            .filter(|e| e.phi > 0.0 && !ctx.in_range(e.next))
            .map(|e| e.next)
            .collect();
        for n in gone {
            self.table.zero_via(n);
        }
        let active: Vec<(NodeId, f64)> =
            self.table.entries_for(dest).iter().filter(|e| e.phi > 0.0).map(|e| (e.next, e.phi)).collect();
        if !active.is_empty() {
            if packet.ttl == 0 {
                ctx.drop(packet, DropReason::Ttl);
                return;
            }
            let w: Vec<f64> = active.iter().map(|a| a.1).collect();
            let next = active[sample_weighted(&w, ctx.rng)].0;
            self.table.reinforce(dest, next, self.cfg.reinforce);
            packet.ttl -= 1;
            ctx.unicast(packet, next);
            return;
        }
        if packet.origin == self.me {
            self.buffer_packet(ctx, packet);
            if !self.pending.contains_key(&dest) {
                self.ara_discover(ctx, dest, 1);
            }
            return;
        }
        if let Some(prev) = packet.previous_hop() {
            let rerr = Packet::new(PacketKind::AraRerr, ctx.next_gen(), prev, 1, Body::AraError { dest }, ctx.now);
            ctx.unicast(rerr, prev);
        }
        ctx.drop(packet, fail);
    }

    pub fn ara_forward_data(&mut self, ctx: &mut Ctx, packet: Packet) {
        if packet.final_dst == self.me {
            ctx.deliver_app(packet);
            return;
        }
        if self.seen_before(ctx, &packet) {
            ctx.drop(packet, DropReason::Duplicate);
            return;
        }
        self.route(ctx, packet, DropReason::NoRoute);
    }

    pub fn ara_handle_failure(&mut self, ctx: &mut Ctx, lost: NodeId, packet: Packet) {
        self.table.zero_via(lost);
        if packet.is_application() {
            self.route(ctx, packet, DropReason::LinkBreak);
        } else {
            ctx.drop(packet, DropReason::LinkBreak);
        }
    }

    fn handle_rerr(&mut self, ctx: &mut Ctx, from: NodeId, rerr: Packet) {
        let Body::AraError { dest } = rerr.body else {
            ctx.drop(rerr, DropReason::ProtocolError);
            return;
        };
        self.table.zero(dest, from);
        ctx.arrived(rerr);
    }
}

impl Routing for AraNode {
    fn start(&mut self, ctx: &mut Ctx) {
        ctx.timer(self.cfg.evaporate_every, Timer::Evaporate);
    }

    fn originate(&mut self, ctx: &mut Ctx, packet: Packet) {
        self.registry.register(packet.gen_id, packet.copy, ctx.now);
        self.route(ctx, packet, DropReason::NoRoute);
    }

    fn receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        match packet.kind {
            PacketKind::Data | PacketKind::Ack => self.ara_forward_data(ctx, packet),
            PacketKind::AraFant => self.ara_handle_fant(ctx, from, packet),
            PacketKind::AraBant => self.ara_handle_bant(ctx, from, packet),
            PacketKind::AraRerr => self.handle_rerr(ctx, from, packet),
            _ => ctx.drop(packet, DropReason::ProtocolError),
        }
    }

    fn link_break(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        self.ara_handle_failure(ctx, next_hop, packet);
    }

    fn timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Evaporate => {
                self.table.evaporate(ctx.now, self.cfg.decay, self.cfg.floor, self.cfg.t_stale);
                ctx.timer(self.cfg.evaporate_every, Timer::Evaporate);
            }
            Timer::DiscoveryRetry { dst, attempt } => {
                if self.pending.get(&dst) != Some(&attempt) {
                    return;
                }
                if self.table.has_active(dst) || !self.buffer.has_for(dst) {
                    self.pending.remove(&dst);
                    for p in self.buffer.take_for(dst) {
                        self.route(ctx, p, DropReason::NoRoute);
                    }
                } else if attempt < self.cfg.discovery_tries {
                    self.ara_discover(ctx, dst, attempt + 1);
                } else {
                    self.pending.remove(&dst);
                    for p in self.buffer.take_for(dst) {
                        ctx.drop(p, DropReason::Undeliverable);
                    }
                }
            }
            Timer::BufferExpiry { gen, copy } => {
                if let Some(p) = self.buffer.expire(gen, copy, ctx.now) {
                    ctx.drop(p, DropReason::BufferExpired);
                }
            }
            Timer::Proactive { .. } => {}
        }
    }
}
