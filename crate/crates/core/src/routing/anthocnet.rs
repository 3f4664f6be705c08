//! AntHocNet.
//!
//! Reactive forward ants flood toward a destination and are rebroadcast
//! only while they stay within the acceptance factor of the best ant of
//! their generation seen at that node. The destination turns each arriving
//! ant into a backward ant that retraces the path and deposits pheromone.
//! Data and ants pick next hops stochastically from pheromone raised to a
//! per-class exponent. While a session is active its source keeps sampling
//! paths with proactive ants.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::engine::SimTime;
use crate::metrics::DropReason;
use crate::packet::{AntState, Body, Packet, PacketKind};
use crate::routing::{sample_weighted, Ctx, Routing, SendBuffer, Timer, DATA_TTL};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct AhnConfig {
    pub acceptance: f64,
    pub beta_ant: f64,
    pub beta_data: f64,
    pub gamma: f64,
    /// Per-hop time constant in seconds used by the path cost.
    pub t_hop: f64,
    pub proactive_interval: SimTime,
    pub p_bcast: f64,
    /// Hops a proactive ant may take by broadcast where no pheromone exists.
    pub proactive_off_ttl: u8,
    pub ant_ttl: u8,
    pub buffer_timeout: SimTime,
    pub buffer_capacity: usize,
    pub discovery_retry: SimTime,
    pub discovery_tries: u32,
    pub generation_memory: SimTime,
}

impl Default for AhnConfig {
    fn default() -> Self {
        AhnConfig {
            acceptance: 1.5,
            beta_ant: 1.0,
            beta_data: 2.0,
            gamma: 0.7,
            t_hop: 0.003,
            proactive_interval: SimTime::from_millis(500),
            p_bcast: 0.1,
            proactive_off_ttl: 2,
            ant_ttl: 16,
            buffer_timeout: SimTime::from_secs(30),
            buffer_capacity: 64,
            discovery_retry: SimTime::from_secs(1),
            discovery_tries: 3,
            generation_memory: SimTime::from_secs(10),
        }
    }
}

/// `τ(n, d)` for every known `(neighbour, destination)`. Stored values are > 0.
#[derive(Clone, Debug, Default)]
pub struct PheromoneTable {
    /// destination -> (neighbour, τ), sorted by neighbour.
    entries: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl PheromoneTable {
    pub fn get(&self, via: NodeId, dest: NodeId) -> Option<f64> {
        self.entries.get(&dest)?.iter().find(|e| e.0 == via).map(|e| e.1)
    }

    pub fn entries_for(&self, dest: NodeId) -> &[(NodeId, f64)] {
        self.entries.get(&dest).map_or(&[], Vec::as_slice)
    }

    pub fn has(&self, dest: NodeId) -> bool {
        self.entries.contains_key(&dest)
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    /// Blends `inv_cost` into `τ(via, dest)`: `γ·τ + (1−γ)·inv_cost`, or
    /// `inv_cost` for a new entry. Returns the stored value.
    pub fn deposit(&mut self, via: NodeId, dest: NodeId, inv_cost: f64, gamma: f64) -> f64 {
        let list = self.entries.entry(dest).or_default();
        match list.binary_search_by_key(&via, |e| e.0) {
            Ok(i) => {
                list[i].1 = gamma * list[i].1 + (1.0 - gamma) * inv_cost;
                list[i].1
            }
            Err(i) => {
                list.insert(i, (via, inv_cost));
                inv_cost
            }
        }
    }

    /// Deletes `τ(via, dest)`. True if that was the last entry for `dest`.
    pub fn remove(&mut self, via: NodeId, dest: NodeId) -> bool {
        let Some(list) = self.entries.get_mut(&dest) else { return false };
        let before = list.len();
        list.retain(|e| e.0 != via);
        if list.is_empty() {
            self.entries.remove(&dest);
            return before > 0;
        }
        false
    }

    /// Deletes every entry through `via`; returns the destinations left with none.
    pub fn remove_neighbor(&mut self, via: NodeId) -> Vec<NodeId> {
        let dests: Vec<NodeId> = self.entries.keys().copied().collect();
        dests.into_iter().filter(|&d| self.remove(via, d)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Acceptance test for a forward ant against the best ant of its generation.
pub fn ahn_accept_ant(hops: u32, travel_time: f64, best: Option<(u32, f64)>, a: f64) -> bool {
    match best {
        None => true,
        Some((bh, bt)) => hops as f64 <= a * bh as f64 && travel_time <= a * bt,
    }
}

/// Per-hop cost used by the backward ant: `(T + h·T_hop) / 2`.
pub fn path_cost(t_remaining: f64, h_remaining: u32, t_hop: f64) -> f64 {
    (t_remaining + h_remaining as f64 * t_hop) / 2.0
}

/// Selection distribution over the candidates: `τ^β / Σ τ^β`.
pub fn next_hop_distribution(candidates: &[(NodeId, f64)], beta: f64) -> Vec<(NodeId, f64)> {
    let w: Vec<f64> = candidates.iter().map(|c| c.1.powf(beta)).collect();
    let total: f64 = w.iter().sum();
    candidates.iter().zip(w).map(|(c, w)| (c.0, w / total)).collect()
}

/// Samples from `candidates` with probability proportional to `τ^β`.
pub fn stochastic_next_hop(candidates: &[(NodeId, f64)], beta: f64, rng: &mut crate::engine::RngStream) -> Option<NodeId> {
    if candidates.is_empty() {
        return None;
    }
    let w: Vec<f64> = candidates.iter().map(|c| c.1.powf(beta)).collect();
    Some(candidates[sample_weighted(&w, rng)].0)
}

type GenKey = (NodeId, NodeId, u32);

/// Best (hops, time) seen per ant generation; each component only decreases.
#[derive(Debug, Default)]
pub struct GenerationBest {
    best: HashMap<GenKey, (u32, f64)>,
    order: VecDeque<(SimTime, GenKey)>,
}

impl GenerationBest {
    pub fn get(&self, key: GenKey) -> Option<(u32, f64)> {
        self.best.get(&key).copied()
    }

    pub fn update(&mut self, key: GenKey, hops: u32, time: f64, now: SimTime) {
        match self.best.get_mut(&key) {
            Some(b) => {
                b.0 = b.0.min(hops);
                b.1 = b.1.min(time);
            }
            None => {
                self.best.insert(key, (hops, time));
                self.order.push_back((now, key));
            }
        }
    }

    fn evict(&mut self, now: SimTime, memory: SimTime) {
        while let Some(&(t, key)) = self.order.front() {
            if now.saturating_sub(t) <= memory {
                break;
            }
            self.order.pop_front();
            self.best.remove(&key);
        }
    }
}

pub struct AhnNode {
    me: NodeId,
    cfg: AhnConfig,
    table: PheromoneTable,
    best: GenerationBest,
    buffer: SendBuffer,
    pending: BTreeMap<NodeId, u32>,
    sessions: BTreeSet<NodeId>,
    next_generation: u32,
    reactive_sent: u64,
    proactive_sent: u64,
}

impl AhnNode {
    pub fn new(me: NodeId, cfg: AhnConfig) -> Self {
        AhnNode {
            me,
            table: PheromoneTable::default(),
            best: GenerationBest::default(),
            buffer: SendBuffer::new(cfg.buffer_capacity, cfg.buffer_timeout),
            pending: BTreeMap::new(),
            sessions: BTreeSet::new(),
            next_generation: 0,
            reactive_sent: 0,
            proactive_sent: 0,
            cfg,
        }
    }

    pub fn table(&self) -> &PheromoneTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut PheromoneTable {
        &mut self.table
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Reactive forward-ant generations started here.
    pub fn reactive_generations(&self) -> u64 {
        self.reactive_sent
    }

    pub fn proactive_generations(&self) -> u64 {
        self.proactive_sent
    }

    pub fn discovery_pending(&self, dst: NodeId) -> bool {
        self.pending.contains_key(&dst)
    }

    fn candidates(&self, ctx: &Ctx, dest: NodeId, exclude: &[NodeId]) -> Vec<(NodeId, f64)> {
        self.table
            .entries_for(dest)
            .iter()
            .filter(|(n, _)| ctx.in_range(*n) && !exclude.contains(n))
            .copied()
            .collect()
    }

    fn new_generation(&mut self, dest: NodeId) -> GenKey {
        let g = self.next_generation;
        self.next_generation += 1;
        (self.me, dest, g)
    }

    pub fn ahn_reactive_setup(&mut self, ctx: &mut Ctx, dest: NodeId, attempt: u32) {
        let key = self.new_generation(dest);
        let ant = Packet::new(
            PacketKind::AhnFantReactive,
            ctx.next_gen(),
            dest,
            self.cfg.ant_ttl,
            Body::Ant(AntState::new(key, self.me)),
            ctx.now,
        );
        ctx.broadcast(ant);
        self.reactive_sent += 1;
        self.pending.insert(dest, attempt);
        ctx.timer(self.cfg.discovery_retry, Timer::DiscoveryRetry { dst: dest, attempt });
    }

    fn buffer_packet(&mut self, ctx: &mut Ctx, packet: Packet) {
        let (gen, copy) = (packet.gen_id, packet.copy);
        if let Some(old) = self.buffer.push(packet, ctx.now) {
            ctx.drop(old, DropReason::BufferOverflow);
        }
        ctx.timer(self.buffer.timeout(), Timer::BufferExpiry { gen, copy });
    }

    /// Routes an application packet one hop further, or delivers it here.
    fn forward_app(&mut self, ctx: &mut Ctx, mut packet: Packet) {
        let dest = packet.final_dst;
        if dest == self.me {
            ctx.deliver_app(packet);
            return;
        }
        // Entries through neighbours now out of range count as failed links.
        let stale: Vec<NodeId> =
            self.table.entries_for(dest).iter().map(|e| e.0).filter(|n| !ctx.in_range(*n)).collect();
        for n in stale {
            self.ahn_handle_link_failure(ctx, n);
        }
        let cands = self.candidates(ctx, dest, &[]);
        match stochastic_next_hop(&cands, self.cfg.beta_data, ctx.rng) {
            Some(_) if packet.ttl == 0 => ctx.drop(packet, DropReason::Ttl),
            Some(next) => {
                packet.ttl -= 1;
                ctx.unicast(packet, next);
            }
            None if packet.origin == self.me => {
                self.buffer_packet(ctx, packet);
                if !self.pending.contains_key(&dest) {
                    self.ahn_reactive_setup(ctx, dest, 1);
                }
            }
            None => ctx.drop(packet, DropReason::NoRoute),
        }
    }

    /// Sends a forward ant on from this node (which is already on its path).
    fn dispatch_fant(&mut self, ctx: &mut Ctx, mut packet: Packet) {
        let Body::Ant(ant) = &mut packet.body else { return };
        let dest = ant.generation.1;
        let proactive = packet.kind == PacketKind::AhnFantProactive;
        let cands = self.candidates(ctx, dest, &ant.path);
        if cands.is_empty() {
            if proactive {
                if ant.off_pheromone >= self.cfg.proactive_off_ttl {
                    return;
                }
                ant.off_pheromone += 1;
            }
            ctx.broadcast(packet);
            return;
        }
        ant.off_pheromone = 0;
        if proactive && ctx.rng.uniform() < self.cfg.p_bcast {
            ctx.broadcast(packet);
            return;
        }
        let next = stochastic_next_hop(&cands, self.cfg.beta_ant, ctx.rng).expect("non-empty");
        ctx.unicast(packet, next);
    }

    pub fn ahn_handle_fant(&mut self, ctx: &mut Ctx, mut packet: Packet) {
        let last_hop = packet.meta.last_hop.as_secs_f64();
        let Body::Ant(ant) = &mut packet.body else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        if ant.path.contains(&self.me) {
            return;
        }
        let hops = ant.hops() + 1;
        let time = ant.travel_time() + last_hop;
        let key = ant.generation;
        self.best.evict(ctx.now, self.cfg.generation_memory);
        if !ahn_accept_ant(hops, time, self.best.get(key), self.cfg.acceptance) {
            return;
        }
        self.best.update(key, hops, time, ctx.now);
        ant.path.push(self.me);
        ant.times.push(time);
        if key.1 == self.me {
            let ant = ant.clone();
            let back = ant.path[ant.path.len() - 2];
            ctx.arrived(packet);
            let bant = Packet::new(PacketKind::AhnBant, ctx.next_gen(), key.0, DATA_TTL, Body::Ant(ant), ctx.now);
            ctx.unicast(bant, back);
            return;
        }
        if packet.ttl == 0 {
            return;
        }
        packet.ttl -= 1;
        self.dispatch_fant(ctx, packet);
    }

    pub fn ahn_handle_bant(&mut self, ctx: &mut Ctx, packet: Packet) {
        let Body::Ant(ant) = &packet.body else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        let Some(idx) = ant.path.iter().position(|&n| n == self.me) else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        let last = ant.path.len() - 1;
        if idx == last {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        }
        let dest = ant.path[last];
        let next = ant.path[idx + 1];
        let t_rem = (ant.times[last] - ant.times[idx]).max(0.0);
        let c = path_cost(t_rem, (last - idx) as u32, self.cfg.t_hop);
        self.table.deposit(next, dest, 1.0 / c, self.cfg.gamma);
        if idx > 0 {
            let back = ant.path[idx - 1];
            ctx.unicast(packet, back);
            return;
        }
        ctx.arrived(packet);
        self.pending.remove(&dest);
        for p in self.buffer.take_for(dest) {
            self.forward_app(ctx, p);
        }
    }

    pub fn ahn_proactive_tick(&mut self, ctx: &mut Ctx, dest: NodeId) {
        if !self.sessions.contains(&dest) {
            return;
        }
        ctx.timer(self.cfg.proactive_interval, Timer::Proactive { dst: dest });
        if self.candidates(ctx, dest, &[]).is_empty() {
            return;
        }
        let key = self.new_generation(dest);
        let ant = Packet::new(
            PacketKind::AhnFantProactive,
            ctx.next_gen(),
            dest,
            self.cfg.ant_ttl,
            Body::Ant(AntState::new(key, self.me)),
            ctx.now,
        );
        self.proactive_sent += 1;
        self.dispatch_fant(ctx, ant);
    }

    pub fn ahn_handle_link_failure(&mut self, ctx: &mut Ctx, lost: NodeId) {
        let orphaned = self.table.remove_neighbor(lost);
        self.notify(ctx, orphaned);
    }

    fn notify(&mut self, ctx: &mut Ctx, orphaned: Vec<NodeId>) {
        if orphaned.is_empty() {
            return;
        }
        let p = Packet::new(PacketKind::AhnLinkNotify, ctx.next_gen(), self.me, 1, Body::LinkNotify(orphaned), ctx.now);
        ctx.broadcast(p);
    }

    fn handle_notify(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        let Body::LinkNotify(dests) = &packet.body else {
            ctx.drop(packet, DropReason::ProtocolError);
            return;
        };
        let orphaned: Vec<NodeId> = dests.iter().copied().filter(|&d| self.table.remove(from, d)).collect();
        ctx.arrived(packet);
        self.notify(ctx, orphaned);
    }
}

impl Routing for AhnNode {
    fn originate(&mut self, ctx: &mut Ctx, packet: Packet) {
        self.forward_app(ctx, packet);
    }

    fn receive(&mut self, ctx: &mut Ctx, from: NodeId, packet: Packet) {
        match packet.kind {
            PacketKind::Data | PacketKind::Ack => self.forward_app(ctx, packet),
            PacketKind::AhnFantReactive | PacketKind::AhnFantProactive => self.ahn_handle_fant(ctx, packet),
            PacketKind::AhnBant => self.ahn_handle_bant(ctx, packet),
            PacketKind::AhnLinkNotify => self.handle_notify(ctx, from, packet),
            _ => ctx.drop(packet, DropReason::ProtocolError),
        }
    }

    fn link_break(&mut self, ctx: &mut Ctx, next_hop: NodeId, packet: Packet) {
        self.ahn_handle_link_failure(ctx, next_hop);
        if packet.is_application() {
            self.forward_app(ctx, packet);
        } else {
            ctx.drop(packet, DropReason::LinkBreak);
        }
    }

    fn timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::DiscoveryRetry { dst, attempt } => {
                if self.pending.get(&dst) != Some(&attempt) {
                    return;
                }
                let routed = !self.candidates(ctx, dst, &[]).is_empty();
                if routed || !self.buffer.has_for(dst) || attempt >= self.cfg.discovery_tries {
                    self.pending.remove(&dst);
                    if routed {
                        for p in self.buffer.take_for(dst) {
                            self.forward_app(ctx, p);
                        }
                    }
                } else {
                    self.ahn_reactive_setup(ctx, dst, attempt + 1);
                }
            }
            Timer::BufferExpiry { gen, copy } => {
                if let Some(p) = self.buffer.expire(gen, copy, ctx.now) {
                    ctx.drop(p, DropReason::BufferExpired);
                }
            }
            Timer::Proactive { dst } => self.ahn_proactive_tick(ctx, dst),
            Timer::Evaporate => {}
        }
    }

    fn session_started(&mut self, ctx: &mut Ctx, dst: NodeId) {
        if self.sessions.insert(dst) {
            ctx.timer(self.cfg.proactive_interval, Timer::Proactive { dst });
        }
    }

    fn session_stopped(&mut self, _ctx: &mut Ctx, dst: NodeId) {
        self.sessions.remove(&dst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStream;
    use crate::packet::{Dst, GenId};
    use crate::routing::testing::{nid, Links, MiniNet};
    use crate::routing::Command;

    fn ahn_net(links: Links, n: u32, cfg: AhnConfig) -> MiniNet<AhnNode> {
        MiniNet::new((0..n).map(|i| AhnNode::new(nid(i), cfg.clone())).collect(), links)
    }

    fn data(origin: u32, seq: u64, dst: u32) -> Packet {
        Packet::data(GenId { origin: nid(origin), seq }, nid(dst), 4096, DATA_TTL, SimTime::ZERO)
    }

    #[test]
    fn acceptance_truth_table() {
        assert!(ahn_accept_ant(4, 0.040, Some((3, 0.030)), 1.5));
        assert!(ahn_accept_ant(3, 0.030, Some((3, 0.030)), 1.5));
        assert!(!ahn_accept_ant(6, 0.040, Some((3, 0.030)), 1.5));
        assert!(ahn_accept_ant(60, 9.0, None, 1.5));
        // Double the best hops.
        assert!(!ahn_accept_ant(6, 0.030, Some((3, 0.030)), 1.5));
    }

    #[test]
    fn pheromone_update_arithmetic() {
        let mut t = PheromoneTable::default();
        let c = path_cost(0.004, 1, 0.003);
        assert!((c - 0.0035).abs() < 1e-15);
        let tau = t.deposit(nid(1), nid(9), 1.0 / c, 0.7);
        assert!((tau - 285.714_285_714_285_7).abs() < 1e-9);
        let mut t = PheromoneTable::default();
        t.deposit(nid(1), nid(9), 100.0, 0.7);
        assert!((t.deposit(nid(1), nid(9), 200.0, 0.7) - 130.0).abs() < 1e-9);
    }

    #[test]
    fn distribution_examples() {
        let one = next_hop_distribution(&[(nid(4), 7.0)], 2.0);
        assert_eq!(one, [(nid(4), 1.0)]);
        let eq = next_hop_distribution(&[(nid(1), 3.0), (nid(2), 3.0)], 1.0);
        assert_eq!(eq[0].1, 0.5);
        let d = next_hop_distribution(&[(nid(1), 2.0), (nid(2), 1.0)], 1.0);
        assert!((d[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
        let mut rng = RngStream::new(3, "t", None);
        assert_eq!(stochastic_next_hop(&[], 1.0, &mut rng), None);
    }

    #[test]
    fn generation_best_is_monotone() {
        let mut g = GenerationBest::default();
        let k = (nid(0), nid(1), 0);
        g.update(k, 4, 0.02, SimTime::ZERO);
        g.update(k, 3, 0.05, SimTime::ZERO);
        assert_eq!(g.get(k), Some((3, 0.02)));
    }

    #[test]
    fn cold_start_line_discovery() {
        let mut net = ahn_net(Links::line(4), 4, AhnConfig::default());
        net.originate(0, data(0, 1, 3));
        assert_eq!(net.nodes[0].reactive_generations(), 1);
        net.originate(0, data(0, 2, 3));
        assert_eq!(net.nodes[0].reactive_generations(), 1);
        net.run();
        // BANT on a 3-hop path: one deposit per upstream node.
        for i in 0..3u32 {
            let e = net.nodes[i as usize].table().entries_for(nid(3));
            assert_eq!(e.len(), 1);
            assert_eq!(e[0].0, nid(i + 1));
        }
        let got: Vec<u64> = net
            .log
            .iter()
            .filter_map(|(n, c)| match c {
                Command::DeliverApp(p) if *n == nid(3) => Some(p.gen_id.seq),
                _ => None,
            })
            .collect();
        assert_eq!(got, [1, 2]);
        // Per-hop delay is 1 ms: at node i, T = (3-i) ms over h = 3-i hops.
        for i in 0..3u32 {
            let h = 3 - i;
            let c = path_cost(h as f64 * 0.001, h, 0.003);
            let tau = net.nodes[i as usize].table().get(nid(i + 1), nid(3)).unwrap();
            assert!((tau - 1.0 / c).abs() < 1e-9, "node {i}: {tau}");
        }
    }

    #[test]
    fn pheromone_present_means_no_setup() {
        let mut net = ahn_net(Links::line(2), 2, AhnConfig::default());
        net.nodes[0].table_mut().deposit(nid(1), nid(1), 10.0, 0.7);
        net.originate(0, data(0, 1, 1));
        assert_eq!(net.nodes[0].reactive_generations(), 0);
        assert_eq!(net.sent[0].1.dst, Dst::Node(nid(1)));
    }

    #[test]
    fn fant_loop_and_acceptance_drop() {
        let mut net = ahn_net(Links::line(3), 3, AhnConfig::default());
        let key = (nid(0), nid(2), 5);
        let mut ant = AntState::new(key, nid(0));
        ant.path.push(nid(1));
        ant.times.push(0.001);
        let p = Packet::new(PacketKind::AhnFantReactive, GenId { origin: nid(0), seq: 1 }, nid(2), 16, Body::Ant(ant), SimTime::ZERO);
        net.receive(1, 0, p.clone());
        assert!(net.sent.is_empty(), "node already on the path");

        let mut short = Packet::new(
            PacketKind::AhnFantReactive,
            GenId { origin: nid(0), seq: 1 },
            nid(2),
            16,
            Body::Ant(AntState::new(key, nid(0))),
            SimTime::ZERO,
        );
        short.meta.last_hop = SimTime::from_millis(1);
        net.receive(1, 0, short);
        assert_eq!(net.sent.len(), 1, "first of its generation is forwarded");
        let mut long_ant = AntState::new(key, nid(0));
        long_ant.path.push(nid(5));
        long_ant.times.push(0.0);
        let mut long = Packet::new(PacketKind::AhnFantReactive, GenId { origin: nid(0), seq: 1 }, nid(2), 16, Body::Ant(long_ant), SimTime::ZERO);
        long.meta.last_hop = SimTime::from_millis(1);
        net.receive(1, 5, long);
        assert_eq!(net.sent.len(), 1, "2 hops against best 1 with a = 1.5");
    }

    #[test]
    fn retry_uses_new_generation() {
        let mut net = ahn_net(Links::from_edges(&[]), 2, AhnConfig::default());
        net.originate(0, data(0, 1, 1));
        net.fire_timer(0, Timer::DiscoveryRetry { dst: nid(1), attempt: 1 });
        let gens: Vec<u32> = net
            .sent
            .iter()
            .filter_map(|(_, p)| match &p.body {
                Body::Ant(a) => Some(a.generation.2),
                _ => None,
            })
            .collect();
        assert_eq!(gens, [0, 1]);
        assert_eq!(net.timers.iter().filter(|t| matches!(t.3, Timer::DiscoveryRetry { .. })).count(), 2);
        assert!(net.timers.iter().all(|t| !matches!(t.3, Timer::DiscoveryRetry { .. }) || t.2 == SimTime::from_secs(1)));
    }

    #[test]
    fn proactive_ticks_count_and_stop() {
        let mut net = ahn_net(Links::line(2), 2, AhnConfig::default());
        net.nodes[0].table_mut().deposit(nid(1), nid(1), 10.0, 0.7);
        net.with(0, |n, c| n.session_started(c, nid(1)));
        // 10 s of session at 0.5 s intervals.
        let mut fired = 0;
        while fired < 20 {
            let (_, _, _, t) = *net.timers.last().unwrap();
            net.fire_timer(0, t);
            fired += 1;
        }
        assert_eq!(net.nodes[0].proactive_generations(), 20);
        net.with(0, |n, c| n.session_stopped(c, nid(1)));
        let armed = net.timers.len();
        net.fire_timer(0, Timer::Proactive { dst: nid(1) });
        assert_eq!(net.nodes[0].proactive_generations(), 20);
        assert_eq!(net.timers.len(), armed);
    }

    #[test]
    fn proactive_without_broadcast_is_unicast() {
        let cfg = AhnConfig { p_bcast: 0.0, ..AhnConfig::default() };
        let mut net = ahn_net(Links::from_edges(&[(0, 1), (0, 2)]), 3, cfg);
        net.nodes[0].table_mut().deposit(nid(1), nid(2), 10.0, 0.7);
        net.nodes[0].table_mut().deposit(nid(2), nid(2), 10.0, 0.7);
        net.with(0, |n, c| n.session_started(c, nid(2)));
        for _ in 0..50 {
            net.fire_timer(0, Timer::Proactive { dst: nid(2) });
        }
        assert!(net.sent.iter().all(|(_, p)| matches!(p.dst, Dst::Node(_))));
    }

    #[test]
    fn alternate_entry_survives_loss() {
        let mut net = ahn_net(Links::from_edges(&[(0, 2)]), 3, AhnConfig::default());
        net.nodes[0].table_mut().deposit(nid(1), nid(2), 10.0, 0.7);
        net.nodes[0].table_mut().deposit(nid(2), nid(2), 10.0, 0.7);
        net.with(0, |n, c| n.ahn_handle_link_failure(c, nid(1)));
        assert!(net.sent.is_empty());
        assert_eq!(net.nodes[0].table().entries_for(nid(2)).len(), 1);
    }

    #[test]
    fn notify_cascades_along_line() {
        // 0-1-2-3 with pheromone toward 3 everywhere; 2 loses 3.
        let mut net = ahn_net(Links::line(3), 4, AhnConfig::default());
        for i in 0..3u32 {
            net.nodes[i as usize].table_mut().deposit(nid(i + 1), nid(3), 10.0, 0.7);
        }
        net.with(2, |n, c| n.ahn_handle_link_failure(c, nid(3)));
        net.run();
        for i in 0..3 {
            assert!(!net.nodes[i].table().has(nid(3)));
        }
        let notifies: Vec<NodeId> = net.sent.iter().filter(|(_, p)| p.kind == PacketKind::AhnLinkNotify).map(|(f, _)| *f).collect();
        assert_eq!(notifies, [nid(2), nid(1), nid(0)]);
    }

    #[test]
    fn intermediate_without_route_drops() {
        let mut net = ahn_net(Links::line(3), 3, AhnConfig::default());
        net.receive(1, 0, data(0, 1, 2));
        assert!(matches!(net.log.last(), Some((_, Command::Drop { reason: DropReason::NoRoute, .. }))));
    }

    #[test]
    fn two_path_convergence_prefers_short() {
        // Short 0-1-5, long 0-2-3-4-5.
        let links = Links::from_edges(&[(0, 1), (1, 5), (0, 2), (2, 3), (3, 4), (4, 5)]);
        let mut net = ahn_net(links, 6, AhnConfig::default());
        net.originate(0, data(0, 1, 5));
        net.run();
        net.with(0, |n, c| n.session_started(c, nid(5)));
        for _ in 0..200 {
            net.fire_timer(0, Timer::Proactive { dst: nid(5) });
            net.run();
        }
        let t = net.nodes[0].table();
        let short = t.get(nid(1), nid(5)).unwrap();
        let long = t.get(nid(2), nid(5)).unwrap_or(0.0);
        assert!(short > long, "short {short} long {long}");
    }
}
