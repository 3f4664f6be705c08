//! One simulation run: wires world, radio, protocol instances and traffic
//! to the scheduler and turns protocol commands into events and trace
//! records.

use std::collections::BTreeMap;
use std::convert::Infallible;

use thiserror::Error;

use crate::engine::{EngineError, Event, RngStream, Scheduler, SimTime, Target};
use crate::metrics::{energy_utilization, write_trace, DropReason, MetricsReport, Recorder, TraceRecord};
use crate::net::{Enqueued, Net, TxStart};
use crate::packet::{GenId, Packet, PacketKind};
use crate::routing::{AhnNode, AraNode, Command, Ctx, DsrNode, LinkOracle, Router, Routing, Timer, DATA_TTL};
use crate::scenario::{ConfigError, Protocol, Scenario};
use crate::traffic::{random_pairs, validate_sessions, Session};
use crate::world::{World, WorldError};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario: {0}")]
    World(#[from] WorldError),
    #[error("traffic: {0}")]
    Traffic(#[from] crate::traffic::TrafficError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    TxDone(NodeId),
    Timer(NodeId, Timer),
    Waypoint(NodeId),
    SessionStart(usize),
    SessionStop(usize),
    Emit { session: usize, first: SimTime, k: u64 },
    RtxTimeout(GenId),
}

struct WorldLinks<'a> {
    world: &'a World,
    net: &'a Net,
    now: SimTime,
}

impl LinkOracle for WorldLinks<'_> {
    fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.net.is_alive(b) && self.world.in_range(a, b, self.now).unwrap_or(false)
    }
}

struct Outstanding {
    packet: Packet,
    copies: u32,
}

/// Mutable state of a run. Handlers get `&mut Scheduler` alongside.
pub struct Simulation {
    scenario: Scenario,
    world: World,
    net: Net,
    routers: Vec<Router>,
    routing_rng: Vec<RngStream>,
    channel_rng: Vec<RngStream>,
    traffic_rng: RngStream,
    seqs: Vec<u64>,
    sessions: Vec<Session>,
    outstanding: BTreeMap<GenId, Outstanding>,
    recorder: Recorder,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub records: Vec<TraceRecord>,
    /// Tab-separated trace file contents.
    pub trace: Vec<u8>,
    /// Energy debited by the radio over the run, in picojoules.
    pub ledger_pj: u128,
    pub events: u64,
    /// Final protocol state of every node.
    pub routers: Vec<Router>,
    pub sessions: Vec<Session>,
}

fn make_router(p: Protocol, s: &Scenario, me: NodeId) -> Router {
    match p {
        Protocol::Dsr => Router::Dsr(DsrNode::new(me, s.dsr.clone())),
        Protocol::AntHocNet => Router::Ahn(AhnNode::new(me, s.ahn.clone())),
        Protocol::Ara => Router::Ara(AraNode::new(me, s.ara.clone())),
    }
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Simulation, SimError> {
        scenario.validate()?;
        let s = scenario.clone();
        let n = s.node_count as usize;
        let world = match &s.positions {
            Some(ps) => World::fixed(ps, s.arena, s.radius_m)?,
            None => World::random(n, s.arena, s.radius_m, s.mobility, s.seed),
        };
        let mut traffic_rng = RngStream::new(s.seed, "traffic", None);
        let pairs: Vec<(NodeId, NodeId)> = match &s.traffic.flows {
            Some(fs) => fs.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect(),
            None => random_pairs(s.node_count, s.traffic.sessions, &mut traffic_rng)?,
        };
        let sessions: Vec<Session> = pairs
            .into_iter()
            .map(|(source, destination)| Session {
                source,
                destination,
                start: SimTime::ZERO,
                stop: s.duration,
                packet_bits: s.traffic.packet_bits,
                rate: s.traffic.rate_pps,
            })
            .collect();
        validate_sessions(&sessions, s.node_count, s.duration)?;
        let ids = (0..s.node_count).map(NodeId);
        Ok(Simulation {
            world,
            net: Net::new(n, &s.net),
            routers: ids.clone().map(|i| make_router(s.protocol, &s, i)).collect(),
            routing_rng: ids.clone().map(|i| RngStream::new(s.seed, "routing", Some(i))).collect(),
            channel_rng: ids.map(|i| RngStream::new(s.seed, "channel", Some(i))).collect(),
            traffic_rng,
            seqs: vec![0; n],
            sessions,
            outstanding: BTreeMap::new(),
            recorder: Recorder::new(),
            scenario: s,
        })
    }

    fn invoke(&mut self, sched: &mut Scheduler<Action>, node: NodeId, f: impl FnOnce(&mut Router, &mut Ctx)) {
        let now = sched.now();
        let out = {
            let links = WorldLinks { world: &self.world, net: &self.net, now };
            let i = node.index();
            let mut ctx = Ctx::new(node, now, &mut self.routing_rng[i], &links, &mut self.seqs[i]);
            f(&mut self.routers[i], &mut ctx);
            ctx.out
        };
        for c in out {
            self.apply(sched, node, c);
        }
    }

    fn apply(&mut self, sched: &mut Scheduler<Action>, node: NodeId, cmd: Command) {
        match cmd {
            Command::Send { packet, .. } => match self.net.enqueue(node, packet, sched.now()) {
                Enqueued::Accepted { start } => {
                    if start {
                        self.start_tx(sched, node);
                    }
                }
                Enqueued::Rejected(p, reason) => self.recorder.dropped(&p, reason),
            },
            Command::Arrived(p) => {
                self.recorder.arrived(&p, sched.now());
                if p.kind == PacketKind::Ack {
                    if let Some(id) = p.payload_id {
                        self.outstanding.remove(&id);
                    }
                }
            }
            Command::DeliverApp(p) => {
                self.recorder.arrived(&p, sched.now());
                match p.kind {
                    PacketKind::Data if self.scenario.traffic.retransmission.enabled => {
                        let gen = GenId { origin: node, seq: self.next_seq(node) };
                        let mut ack = Packet::new(PacketKind::Ack, gen, p.origin, DATA_TTL, crate::packet::Body::Empty, sched.now());
                        ack.payload_id = p.payload_id;
                        self.invoke(sched, node, |r, c| r.originate(c, ack));
                    }
                    PacketKind::Ack => {
                        if let Some(id) = p.payload_id {
                            self.outstanding.remove(&id);
                        }
                    }
                    _ => {}
                }
            }
            Command::Drop { packet, reason } => self.recorder.dropped(&packet, reason),
            Command::Timer { after, timer } => {
                sched.schedule_in(Action::Timer(node, timer), Target::Node(node), after);
            }
        }
    }

    fn next_seq(&mut self, node: NodeId) -> u64 {
        let s = self.seqs[node.index()];
        self.seqs[node.index()] += 1;
        s
    }

    fn drop_all(&mut self, packets: Vec<Packet>, reason: DropReason) {
        for p in &packets {
            self.recorder.dropped(p, reason);
        }
    }

    fn start_tx(&mut self, sched: &mut Scheduler<Action>, node: NodeId) {
        match self.net.transmit_next(node) {
            Some(TxStart::OnAir { airtime }) => {
                sched.schedule_in(Action::TxDone(node), Target::Node(node), airtime);
            }
            Some(TxStart::Died { frame, flushed }) => {
                self.recorder.dropped(&frame, DropReason::NodeDead);
                self.drop_all(flushed, DropReason::NodeDead);
            }
            None => {}
        }
    }

    fn tx_done(&mut self, sched: &mut Scheduler<Action>, node: NodeId) {
        let Some(frame) = self.net.finish_transmission(node) else { return };
        let now = sched.now();
        let neighbors = self.world.neighbors_of(node, now);
        let delivery = self.net.deliver_frame(node, &frame, &neighbors, &mut self.channel_rng[node.index()]);
        let hop_time = now.saturating_sub(frame.meta.enqueued_at);
        for (dead, flushed) in delivery.died {
            if frame.dst == crate::packet::Dst::Node(dead) {
                self.recorder.dropped(&frame, DropReason::NodeDead);
            }
            self.drop_all(flushed, DropReason::NodeDead);
        }
        for r in delivery.receivers {
            let mut p = frame.clone();
            p.meta.trail.push(r);
            p.meta.last_hop = hop_time;
            self.invoke(sched, r, |router, c| router.receive(c, node, p));
        }
        if delivery.lost {
            self.recorder.dropped(&frame, DropReason::Loss);
        }
        if delivery.link_break {
            if let crate::packet::Dst::Node(next) = frame.dst {
                self.invoke(sched, node, |router, c| router.link_break(c, next, frame));
            }
        }
        if self.net.is_alive(node) {
            self.start_tx(sched, node);
        }
    }

    fn emit(&mut self, sched: &mut Scheduler<Action>, session: usize, first: SimTime, k: u64) {
        let s = &self.sessions[session];
        let (src, dst, bits) = (s.source, s.destination, s.packet_bits);
        if let Some(next) = s.emission_time(first, k + 1) {
            let _ = sched.schedule(Action::Emit { session, first, k: k + 1 }, Target::Harness, next);
        }
        let gen = GenId { origin: src, seq: self.next_seq(src) };
        let p = Packet::data(gen, dst, bits, DATA_TTL, sched.now());
        self.recorder.generated(&p);
        if !self.net.is_alive(src) {
            self.recorder.dropped(&p, DropReason::NodeDead);
            return;
        }
        let rtx = self.scenario.traffic.retransmission;
        if rtx.enabled && rtx.max > 0 {
            self.outstanding.insert(gen, Outstanding { packet: p.clone(), copies: 0 });
            sched.schedule_in(Action::RtxTimeout(gen), Target::Harness, rtx.timeout);
        }
        self.invoke(sched, src, |r, c| r.originate(c, p));
    }

    fn retransmit(&mut self, sched: &mut Scheduler<Action>, gen: GenId) {
        let rtx = self.scenario.traffic.retransmission;
        let Some(o) = self.outstanding.get_mut(&gen) else { return };
        o.copies += 1;
        let mut p = o.packet.clone();
        p.copy = o.copies as u8;
        if o.copies >= rtx.max {
            self.outstanding.remove(&gen);
        } else {
            sched.schedule_in(Action::RtxTimeout(gen), Target::Harness, rtx.timeout);
        }
        if self.net.is_alive(gen.origin) {
            self.invoke(sched, gen.origin, |r, c| r.originate(c, p));
        } else {
            self.recorder.dropped(&p, DropReason::NodeDead);
        }
    }

    fn handle(&mut self, sched: &mut Scheduler<Action>, ev: Event<Action>) -> Result<(), Infallible> {
        match ev.action {
            Action::TxDone(n) => self.tx_done(sched, n),
            Action::Timer(n, t) => {
                if self.net.is_alive(n) {
                    self.invoke(sched, n, |r, c| r.timer(c, t));
                }
            }
            Action::Waypoint(n) => {
                self.world.advance_waypoint(n, sched.now());
                if let Some(t) = self.world.next_waypoint_event(n) {
                    if t != SimTime::MAX {
                        let _ = sched.schedule(Action::Waypoint(n), Target::Node(n), t);
                    }
                }
            }
            Action::SessionStart(i) => {
                let (src, dst) = (self.sessions[i].source, self.sessions[i].destination);
                if self.net.is_alive(src) {
                    self.invoke(sched, src, |r, c| r.session_started(c, dst));
                }
            }
            Action::SessionStop(i) => {
                let (src, dst) = (self.sessions[i].source, self.sessions[i].destination);
                self.invoke(sched, src, |r, c| r.session_stopped(c, dst));
            }
            Action::Emit { session, first, k } => self.emit(sched, session, first, k),
            Action::RtxTimeout(gen) => self.retransmit(sched, gen),
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let mut sched: Scheduler<Action> = Scheduler::new();
        let t_end = self.scenario.duration;
        for i in 0..self.scenario.node_count {
            let n = NodeId(i);
            self.invoke(&mut sched, n, |r, c| r.start(c));
            if self.scenario.positions.is_none() && self.scenario.mobility.enabled {
                if let Some(t) = self.world.next_waypoint_event(n) {
                    if t != SimTime::MAX {
                        sched.schedule(Action::Waypoint(n), Target::Node(n), t)?;
                    }
                }
            }
        }
        for i in 0..self.sessions.len() {
            let s = self.sessions[i].clone();
            sched.schedule(Action::SessionStart(i), Target::Harness, s.start)?;
            if s.stop < t_end {
                sched.schedule(Action::SessionStop(i), Target::Harness, s.stop)?;
            }
            if let Some(first) = s.first_emission(&mut self.traffic_rng) {
                sched.schedule(Action::Emit { session: i, first, k: 0 }, Target::Harness, first)?;
            }
        }
        let events = sched.run_until(t_end, |sch, ev| self.handle(sch, ev))?;
        let energy = energy_utilization(&self.net.energy_states());
        let ledger_pj = self.net.ledger_pj();
        let records = self.recorder.into_records();
        let report = MetricsReport::from_records(&records, t_end, &energy);
        let mut trace = Vec::new();
        write_trace(&mut trace, t_end, &records).expect("writing to memory");
        Ok(RunOutput { report, records, trace, ledger_pj, events, routers: self.routers, sessions: self.sessions })
    }
}

/// Builds and runs the scenario to its configured duration.
pub fn run_simulation(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Simulation::new(scenario)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Position;

    fn pair(distance: f64, protocol: Protocol) -> Scenario {
        Scenario {
            duration: SimTime::from_secs(20),
            node_count: 2,
            protocol,
            positions: Some(vec![Position::new(100.0, 100.0), Position::new(100.0 + distance, 100.0)]),
            traffic: crate::scenario::TrafficConfig { flows: Some(vec![(0, 1)]), ..Default::default() },
            ..Scenario::default()
        }
    }

    #[test]
    fn connected_pair_delivers_everything() {
        for p in Protocol::ALL {
            let out = run_simulation(&pair(200.0, p)).unwrap();
            assert_eq!(out.report.pdr, Some(1.0), "{p}");
            assert!(out.report.generated >= 79, "{p}: {}", out.report.generated);
        }
    }

    #[test]
    fn disconnected_pair_delivers_nothing() {
        for p in Protocol::ALL {
            let out = run_simulation(&pair(400.0, p)).unwrap();
            assert_eq!(out.report.pdr, Some(0.0), "{p}");
            assert_eq!(out.report.avg_delay_ms, None);
        }
    }

    #[test]
    fn single_hop_delay_is_airtime() {
        let out = run_simulation(&pair(200.0, Protocol::Ara)).unwrap();
        // Discovery delays the first packet; later ones take one data airtime.
        let last = out.records.iter().rev().find(|r| r.kind == PacketKind::Data && r.delay.is_some()).unwrap();
        assert_eq!(last.delay, Some(SimTime::from_micros(2128)));
    }

    #[test]
    fn ledger_balances() {
        let s = Scenario { duration: SimTime::from_secs(10), ..Scenario::default() };
        let out = run_simulation(&s).unwrap();
        let per_node: u128 = out.report.energy_per_node_j.iter().map(|j| (j * 1e12).round() as u128).sum();
        assert_eq!(per_node, out.ledger_pj);
    }
}
