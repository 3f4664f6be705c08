//! Frames exchanged between nodes and their on-air size accounting.
//!
//! Every kind has a fixed base header; kinds that carry node lists (DSR
//! source routes and route records, ant paths) grow with the list length.

use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::NodeId;

/// Fixed network-layer header carried by every frame.
pub const BASE_HEADER_BITS: u32 = 160;
/// One node address in a route record, source route or ant path.
pub const ADDR_BITS: u32 = 32;
/// One ant path entry: node address plus the cumulative travel time stamp.
pub const ANT_HOP_BITS: u32 = 64;
/// Sequence / request identifier fields.
pub const SEQ_BITS: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Data,
    DsrRreq,
    DsrRrep,
    DsrRerr,
    AhnFantReactive,
    AhnFantProactive,
    AhnBant,
    AhnLinkNotify,
    AraFant,
    AraBant,
    AraRerr,
    Ack,
}

impl PacketKind {
    pub const ALL: [PacketKind; 12] = [
        PacketKind::Data,
        PacketKind::DsrRreq,
        PacketKind::DsrRrep,
        PacketKind::DsrRerr,
        PacketKind::AhnFantReactive,
        PacketKind::AhnFantProactive,
        PacketKind::AhnBant,
        PacketKind::AhnLinkNotify,
        PacketKind::AraFant,
        PacketKind::AraBant,
        PacketKind::AraRerr,
        PacketKind::Ack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::DsrRreq => "DSR_RREQ",
            PacketKind::DsrRrep => "DSR_RREP",
            PacketKind::DsrRerr => "DSR_RERR",
            PacketKind::AhnFantReactive => "AHN_FANT_REACTIVE",
            PacketKind::AhnFantProactive => "AHN_FANT_PROACTIVE",
            PacketKind::AhnBant => "AHN_BANT",
            PacketKind::AhnLinkNotify => "AHN_LINK_NOTIFY",
            PacketKind::AraFant => "ARA_FANT",
            PacketKind::AraBant => "ARA_BANT",
            PacketKind::AraRerr => "ARA_RERR",
            PacketKind::Ack => "ACK",
        }
    }

    /// Everything except DATA goes to the control class of the interface queue.
    pub fn is_control(self) -> bool {
        self != PacketKind::Data
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PacketKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PacketKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown packet kind {s:?}"))
    }
}

/// Link-layer destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dst {
    Broadcast,
    Node(NodeId),
}

/// Identity of an originated packet: `(origin, per-origin sequence)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenId {
    pub origin: NodeId,
    pub seq: u64,
}

impl fmt::Display for GenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.seq)
    }
}

impl FromStr for GenId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (o, q) = s.split_once(':').ok_or_else(|| format!("bad packet id {s:?}"))?;
        let origin = o.parse::<u32>().map_err(|e| format!("bad packet id {s:?}: {e}"))?;
        let seq = q.parse::<u64>().map_err(|e| format!("bad packet id {s:?}: {e}"))?;
        Ok(GenId { origin: NodeId(origin), seq })
    }
}

/// State carried by AntHocNet forward and backward ants.
#[derive(Clone, Debug, PartialEq)]
pub struct AntState {
    /// `(source, destination, sequence)` of the generation this ant belongs to.
    pub generation: (NodeId, NodeId, u32),
    /// Visited nodes, source first. Never contains repeats.
    pub path: Vec<NodeId>,
    /// Cumulative travel time in seconds on arrival at each `path` entry.
    pub times: Vec<f64>,
    /// Consecutive hops taken by broadcast where no pheromone was known.
    pub off_pheromone: u8,
}

impl AntState {
    pub fn new(generation: (NodeId, NodeId, u32), source: NodeId) -> Self {
        AntState { generation, path: vec![source], times: vec![0.0], off_pheromone: 0 }
    }

    pub fn hops(&self) -> u32 {
        self.path.len() as u32 - 1
    }

    pub fn travel_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Empty,
    /// DSR: full source route, origin first.
    SourceRoute(Vec<NodeId>),
    /// DSR route request with the accumulated route record.
    RouteRequest { request_id: u32, record: Vec<NodeId> },
    /// DSR route reply; `route` runs from the requester to the target.
    RouteReply { route: Vec<NodeId> },
    /// DSR route error for link `from -> to`, travelling back along `path`
    /// (origin first, detecting node last).
    RouteError { from: NodeId, to: NodeId, path: Vec<NodeId> },
    Ant(AntState),
    /// Destinations the sender no longer has any pheromone for.
    LinkNotify(Vec<NodeId>),
    AraAnt { seq: u32, hops: u32 },
    AraError { dest: NodeId },
}

/// Simulation-side bookkeeping that does not occupy air time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Meta {
    /// Nodes the frame has been at, origin first.
    pub trail: Vec<NodeId>,
    pub enqueued_at: SimTime,
    /// Queueing plus air time of the most recent hop.
    pub last_hop: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    /// Last transmitter.
    pub src: NodeId,
    pub dst: Dst,
    pub origin: NodeId,
    /// Target of the packet. Link-local packets name their own origin.
    pub final_dst: NodeId,
    pub gen_id: GenId,
    /// Retransmission index; 0 for the original.
    pub copy: u8,
    pub ttl: u8,
    pub payload_bits: u32,
    pub body: Body,
    /// Application packet this frame carries or acknowledges.
    pub payload_id: Option<GenId>,
    /// Departure time at the origin.
    pub created_at: SimTime,
    pub meta: Meta,
}

impl Packet {
    /// A packet originated by `origin` at `now`; `src`/`dst` are filled in on send.
    pub fn new(kind: PacketKind, gen_id: GenId, final_dst: NodeId, ttl: u8, body: Body, now: SimTime) -> Self {
        Packet {
            kind,
            src: gen_id.origin,
            dst: Dst::Broadcast,
            origin: gen_id.origin,
            final_dst,
            gen_id,
            copy: 0,
            ttl,
            payload_bits: 0,
            body,
            payload_id: None,
            created_at: now,
            meta: Meta { trail: vec![gen_id.origin], ..Meta::default() },
        }
    }

    pub fn data(gen_id: GenId, final_dst: NodeId, payload_bits: u32, ttl: u8, now: SimTime) -> Self {
        let mut p = Packet::new(PacketKind::Data, gen_id, final_dst, ttl, Body::Empty, now);
        p.payload_bits = payload_bits;
        p.payload_id = Some(gen_id);
        p
    }

    pub fn header_bits(&self) -> u32 {
        let list = |n: usize| n as u32 * ADDR_BITS;
        BASE_HEADER_BITS
            + match &self.body {
                Body::Empty => 0,
                Body::SourceRoute(r) => list(r.len()),
                Body::RouteRequest { record, .. } => SEQ_BITS + list(record.len()),
                Body::RouteReply { route } => list(route.len()),
                Body::RouteError { path, .. } => 2 * ADDR_BITS + list(path.len()),
                Body::Ant(a) => SEQ_BITS + a.path.len() as u32 * ANT_HOP_BITS,
                Body::LinkNotify(d) => list(d.len()),
                Body::AraAnt { .. } => 2 * SEQ_BITS,
                Body::AraError { .. } => ADDR_BITS,
            }
    }

    pub fn size_bits(&self) -> u32 {
        self.header_bits() + self.payload_bits
    }

    /// Hops traversed so far.
    pub fn hops(&self) -> u32 {
        self.meta.trail.len().saturating_sub(1) as u32
    }

    /// The node this packet was received from, if it has moved at all.
    pub fn previous_hop(&self) -> Option<NodeId> {
        let t = &self.meta.trail;
        (t.len() >= 2).then(|| t[t.len() - 2])
    }

    pub fn is_application(&self) -> bool {
        matches!(self.kind, PacketKind::Data | PacketKind::Ack)
    }
}
