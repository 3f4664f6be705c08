//! Per-node network stack: a two-class interface queue, half-duplex
//! transmission, unit-disk frame delivery and the energy model.
//!
//! Energy is kept in integer picojoules so the consumption ledger balances
//! exactly.

use std::collections::VecDeque;

use crate::engine::{RngStream, SimTime};
use crate::metrics::DropReason;
use crate::packet::{Dst, Packet};
use crate::NodeId;

pub const PICOJOULES_PER_JOULE: f64 = 1e12;

fn to_pj(j: f64) -> u64 {
    (j * PICOJOULES_PER_JOULE).round() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub bandwidth_bps: u64,
    pub queue_capacity: usize,
    pub initial_energy_j: f64,
    pub tx_j_per_bit: f64,
    pub rx_j_per_bit: f64,
    pub p_err: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            bandwidth_bps: 2_000_000,
            queue_capacity: 50,
            initial_energy_j: 100.0,
            tx_j_per_bit: 1e-6,
            rx_j_per_bit: 0.5e-6,
            p_err: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyState {
    initial_pj: u64,
    remaining_pj: u64,
    tx_pj_per_bit: u64,
    rx_pj_per_bit: u64,
}

impl EnergyState {
    pub fn new(initial_j: f64, tx_j_per_bit: f64, rx_j_per_bit: f64) -> Self {
        let initial_pj = to_pj(initial_j);
        EnergyState {
            initial_pj,
            remaining_pj: initial_pj,
            tx_pj_per_bit: to_pj(tx_j_per_bit),
            rx_pj_per_bit: to_pj(rx_j_per_bit),
        }
    }

    pub fn remaining_j(&self) -> f64 {
        self.remaining_pj as f64 / PICOJOULES_PER_JOULE
    }

    pub fn used_pj(&self) -> u64 {
        self.initial_pj - self.remaining_pj
    }

    pub fn used_j(&self) -> f64 {
        self.used_pj() as f64 / PICOJOULES_PER_JOULE
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_pj as f64 / PICOJOULES_PER_JOULE
    }

    pub fn is_dead(&self) -> bool {
        self.remaining_pj == 0
    }

    /// Debits `bits` worth of energy, clamped at zero. Returns picojoules
    /// actually taken.
    pub fn debit(&mut self, dir: Direction, bits: u64) -> u64 {
        let per_bit = match dir {
            Direction::Tx => self.tx_pj_per_bit,
            Direction::Rx => self.rx_pj_per_bit,
        };
        let want = per_bit.saturating_mul(bits);
        let taken = want.min(self.remaining_pj);
        self.remaining_pj -= taken;
        taken
    }
}

/// Drop-tail queue with strict priority of control over data. Capacity
/// counts both classes together.
#[derive(Clone, Debug)]
pub struct InterfaceQueue {
    capacity: usize,
    control: VecDeque<Packet>,
    data: VecDeque<Packet>,
}

impl InterfaceQueue {
    pub fn new(capacity: usize) -> Self {
        InterfaceQueue { capacity, control: VecDeque::new(), data: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.control.len() + self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hands the packet back when the queue is full.
    pub fn push(&mut self, packet: Packet) -> Result<(), Packet> {
        if self.len() >= self.capacity {
            return Err(packet);
        }
        if packet.kind.is_control() {
            self.control.push_back(packet);
        } else {
            self.data.push_back(packet);
        }
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Packet> {
        self.control.pop_front().or_else(|| self.data.pop_front())
    }

    pub fn drain(&mut self) -> Vec<Packet> {
        let mut out: Vec<Packet> = self.control.drain(..).collect();
        out.extend(self.data.drain(..));
        out
    }
}

/// Air time of a frame, rounded up to the next microsecond.
pub fn airtime(bits: u32, bandwidth_bps: u64) -> SimTime {
    let num = bits as u64 * 1_000_000;
    SimTime::from_micros(num.div_ceil(bandwidth_bps))
}

#[derive(Clone, Debug)]
pub struct NodeStack {
    pub queue: InterfaceQueue,
    pub energy: EnergyState,
    in_flight: Option<Packet>,
}

#[derive(Debug)]
pub enum Enqueued {
    /// `start` is true when the transceiver was idle and the caller should
    /// call [`Net::transmit_next`].
    Accepted { start: bool },
    Rejected(Packet, DropReason),
}

#[derive(Debug)]
pub enum TxStart {
    /// Frame is on the air; deliver it after `airtime`.
    OnAir { airtime: SimTime },
    /// The transmit debit exhausted the node. The frame and the rest of its
    /// queue are lost.
    Died { frame: Packet, flushed: Vec<Packet> },
}

/// Outcome of handing a finished frame to the radio neighbourhood.
#[derive(Debug, Default)]
pub struct Delivery {
    pub receivers: Vec<NodeId>,
    /// Unicast destination was not reachable at delivery time.
    pub link_break: bool,
    /// Unicast frame reached the destination's range but was lost to channel error.
    pub lost: bool,
    /// Receivers whose receive debit exhausted them, with their flushed queues.
    pub died: Vec<(NodeId, Vec<Packet>)>,
}

pub struct Net {
    nodes: Vec<NodeStack>,
    bandwidth_bps: u64,
    p_err: f64,
    ledger_pj: u128,
}

impl Net {
    pub fn new(node_count: usize, cfg: &NetConfig) -> Self {
        let nodes = (0..node_count)
            .map(|_| NodeStack {
                queue: InterfaceQueue::new(cfg.queue_capacity),
                energy: EnergyState::new(cfg.initial_energy_j, cfg.tx_j_per_bit, cfg.rx_j_per_bit),
                in_flight: None,
            })
            .collect();
        Net { nodes, bandwidth_bps: cfg.bandwidth_bps, p_err: cfg.p_err, ledger_pj: 0 }
    }

    pub fn node(&self, node: NodeId) -> &NodeStack {
        &self.nodes[node.index()]
    }

    pub fn energy_states(&self) -> Vec<EnergyState> {
        self.nodes.iter().map(|n| n.energy.clone()).collect()
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        !self.nodes[node.index()].energy.is_dead()
    }

    pub fn is_busy(&self, node: NodeId) -> bool {
        self.nodes[node.index()].in_flight.is_some()
    }

    /// Total energy debited so far, in picojoules.
    pub fn ledger_pj(&self) -> u128 {
        self.ledger_pj
    }

    pub fn enqueue(&mut self, node: NodeId, mut packet: Packet, now: SimTime) -> Enqueued {
        let idle = !self.is_busy(node);
        let stack = &mut self.nodes[node.index()];
        if stack.energy.is_dead() {
            return Enqueued::Rejected(packet, DropReason::NodeDead);
        }
        packet.meta.enqueued_at = now;
        match stack.queue.push(packet) {
            Ok(()) => Enqueued::Accepted { start: idle },
            Err(p) => Enqueued::Rejected(p, DropReason::QueueFull),
        }
    }

    /// Starts the next frame if the transceiver is idle and the queue is not
    /// empty.
    pub fn transmit_next(&mut self, node: NodeId) -> Option<TxStart> {
        if self.is_busy(node) {
            return None;
        }
        let frame = self.nodes[node.index()].queue.pop()?;
        let bits = frame.size_bits();
        let (_, flushed) = self.debit_energy(node, Direction::Tx, bits as u64);
        if self.nodes[node.index()].energy.is_dead() {
            return Some(TxStart::Died { frame, flushed });
        }
        self.nodes[node.index()].in_flight = Some(frame);
        Some(TxStart::OnAir { airtime: airtime(bits, self.bandwidth_bps) })
    }

    /// Takes the frame that just finished its air time; the transceiver is idle afterwards.
    pub fn finish_transmission(&mut self, node: NodeId) -> Option<Packet> {
        self.nodes[node.index()].in_flight.take()
    }

    /// Unit-disk delivery of `frame` from `sender` to whichever of the
    /// sender's current `neighbors` it is addressed to. Each potential
    /// receiver independently loses the frame with probability `p_err`;
    /// survivors pay the receive cost.
    pub fn deliver_frame(&mut self, _sender: NodeId, frame: &Packet, neighbors: &[NodeId], rng: &mut RngStream) -> Delivery {
        let bits = frame.size_bits() as u64;
        let mut out = Delivery::default();
        let candidates: Vec<NodeId> = match frame.dst {
            Dst::Broadcast => neighbors.iter().copied().filter(|&n| self.is_alive(n)).collect(),
            Dst::Node(d) => {
                if neighbors.contains(&d) && self.is_alive(d) {
                    vec![d]
                } else {
                    out.link_break = true;
                    return out;
                }
            }
        };
        for r in candidates {
            if rng.bernoulli(self.p_err).expect("p_err validated at configuration") {
                if frame.dst != Dst::Broadcast {
                    out.lost = true;
                }
                continue;
            }
            let (_, flushed) = self.debit_energy(r, Direction::Rx, bits);
            if self.nodes[r.index()].energy.is_dead() {
                out.died.push((r, flushed));
            } else {
                out.receivers.push(r);
            }
        }
        out
    }

    /// Debits energy; on the debit that exhausts the node its queue is
    /// flushed and returned for drop accounting.
    pub fn debit_energy(&mut self, node: NodeId, dir: Direction, bits: u64) -> (f64, Vec<Packet>) {
        let stack = &mut self.nodes[node.index()];
        let was_dead = stack.energy.is_dead();
        let taken = stack.energy.debit(dir, bits);
        self.ledger_pj += taken as u128;
        let flushed = if !was_dead && stack.energy.is_dead() { stack.queue.drain() } else { Vec::new() };
        (stack.energy.remaining_j(), flushed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Body, GenId, PacketKind};

    fn data(seq: u64) -> Packet {
        Packet::data(GenId { origin: NodeId(0), seq }, NodeId(1), 4096, 32, SimTime::ZERO)
    }

    fn control(seq: u64) -> Packet {
        Packet::new(
            PacketKind::DsrRreq,
            GenId { origin: NodeId(0), seq },
            NodeId(1),
            16,
            Body::RouteRequest { request_id: 0, record: vec![NodeId(0)] },
            SimTime::ZERO,
        )
    }

    #[test]
    fn queue_capacity_is_total() {
        let mut q = InterfaceQueue::new(50);
        for i in 0..50 {
            q.push(data(i)).unwrap();
        }
        assert!(q.push(data(50)).is_err());
        assert!(q.push(control(51)).is_err());
        assert_eq!(q.len(), 50);
    }

    #[test]
    fn control_before_data_fifo_within_class() {
        let mut q = InterfaceQueue::new(50);
        q.push(data(1)).unwrap();
        q.push(data(2)).unwrap();
        q.push(control(3)).unwrap();
        q.push(control(4)).unwrap();
        let order: Vec<u64> = std::iter::from_fn(|| q.pop()).map(|p| p.gen_id.seq).collect();
        assert_eq!(order, [3, 4, 1, 2]);
    }

    #[test]
    fn airtime_arithmetic() {
        assert_eq!(airtime(8000, 2_000_000), SimTime::from_micros(4000));
        assert_eq!(airtime(200, 2_000_000), SimTime::from_micros(100));
        assert_eq!(airtime(1, 2_000_000), SimTime::from_micros(1));
    }

    #[test]
    fn energy_debits() {
        let mut e = EnergyState::new(100.0, 1e-6, 0.5e-6);
        assert_eq!(e.debit(Direction::Tx, 0), 0);
        assert_eq!(e.remaining_j(), 100.0);
        e.debit(Direction::Tx, 8000);
        assert_eq!(e.remaining_j(), 99.992);
        assert_eq!(e.used_j(), 0.008);
        for _ in 0..20 {
            e.debit(Direction::Tx, 10_000_000);
        }
        assert_eq!(e.remaining_j(), 0.0);
        assert!(e.is_dead());
    }

    #[test]
    fn half_duplex_serialization() {
        let mut net = Net::new(2, &NetConfig::default());
        let n0 = NodeId(0);
        assert!(matches!(net.enqueue(n0, data(1), SimTime::ZERO), Enqueued::Accepted { start: true }));
        let Some(TxStart::OnAir { airtime: a1 }) = net.transmit_next(n0) else { panic!() };
        assert!(matches!(net.enqueue(n0, data(2), SimTime::ZERO), Enqueued::Accepted { start: false }));
        assert!(net.transmit_next(n0).is_none(), "busy transceiver must not start a second frame");
        assert_eq!(net.finish_transmission(n0).unwrap().gen_id.seq, 1);
        let Some(TxStart::OnAir { airtime: a2 }) = net.transmit_next(n0) else { panic!() };
        assert_eq!(a1, a2);
        assert_eq!(a1, SimTime::from_micros(2128));
    }

    #[test]
    fn dead_node_rejects_and_flushes() {
        let cfg = NetConfig { initial_energy_j: 0.004, ..NetConfig::default() };
        let mut net = Net::new(2, &cfg);
        let n0 = NodeId(0);
        net.enqueue(n0, data(1), SimTime::ZERO);
        net.enqueue(n0, data(2), SimTime::ZERO);
        match net.transmit_next(n0) {
            Some(TxStart::Died { frame, flushed }) => {
                assert_eq!(frame.gen_id.seq, 1);
                assert_eq!(flushed.len(), 1);
            }
            other => panic!("expected death, got {other:?}"),
        }
        assert!(!net.is_alive(n0));
        assert!(matches!(net.enqueue(n0, data(3), SimTime::ZERO), Enqueued::Rejected(_, DropReason::NodeDead)));
        assert_eq!(net.ledger_pj(), 4_000_000_000);
    }

    #[test]
    fn broadcast_and_unicast_delivery() {
        let mut net = Net::new(5, &NetConfig::default());
        let mut rng = RngStream::new(1, "channel", Some(NodeId(0)));
        let mut b = control(1);
        b.dst = Dst::Broadcast;
        let d = net.deliver_frame(NodeId(0), &b, &[NodeId(1), NodeId(2), NodeId(3)], &mut rng);
        assert_eq!(d.receivers, vec![NodeId(1), NodeId(2), NodeId(3)]);

        let mut u = data(2);
        u.dst = Dst::Node(NodeId(4));
        let d = net.deliver_frame(NodeId(0), &u, &[NodeId(1)], &mut rng);
        assert!(d.link_break);
        assert!(d.receivers.is_empty());
        u.dst = Dst::Node(NodeId(1));
        let d = net.deliver_frame(NodeId(0), &u, &[NodeId(1)], &mut rng);
        assert_eq!(d.receivers, vec![NodeId(1)]);
    }

    #[test]
    fn total_loss() {
        let cfg = NetConfig { p_err: 1.0, ..NetConfig::default() };
        let mut net = Net::new(4, &cfg);
        let mut rng = RngStream::new(1, "channel", Some(NodeId(0)));
        let mut b = control(1);
        b.dst = Dst::Broadcast;
        assert!(net.deliver_frame(NodeId(0), &b, &[NodeId(1), NodeId(2), NodeId(3)], &mut rng).receivers.is_empty());
        let mut u = data(1);
        u.dst = Dst::Node(NodeId(1));
        let d = net.deliver_frame(NodeId(0), &u, &[NodeId(1)], &mut rng);
        assert!(d.lost && !d.link_break && d.receivers.is_empty());
        assert_eq!(net.ledger_pj(), 0);
    }

    #[test]
    fn ledger_matches_node_usage() {
        let mut net = Net::new(3, &NetConfig::default());
        let mut rng = RngStream::new(2, "channel", Some(NodeId(0)));
        for i in 0..10 {
            net.enqueue(NodeId(0), data(i), SimTime::ZERO);
            let _ = net.transmit_next(NodeId(0));
            let f = net.finish_transmission(NodeId(0)).unwrap();
            let mut f = f;
            f.dst = Dst::Broadcast;
            net.deliver_frame(NodeId(0), &f, &[NodeId(1), NodeId(2)], &mut rng);
        }
        let used: u128 = (0..3).map(|i| net.node(NodeId(i)).energy.used_pj() as u128).sum();
        assert_eq!(used, net.ledger_pj());
    }
}
