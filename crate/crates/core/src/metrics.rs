//! Per-packet trace records and the run metrics computed from them.
//!
//! The trace is the single source for every traffic metric: the in-memory
//! report and a report recomputed from a trace file go through the same
//! functions and agree bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimTime;
use crate::net::EnergyState;
use crate::packet::{GenId, Packet, PacketKind};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    QueueFull,
    NodeDead,
    LinkBreak,
    Loss,
    Ttl,
    NoRoute,
    BufferExpired,
    BufferOverflow,
    Duplicate,
    Undeliverable,
    ProtocolError,
}

impl DropReason {
    pub const ALL: [DropReason; 11] = [
        DropReason::QueueFull,
        DropReason::NodeDead,
        DropReason::LinkBreak,
        DropReason::Loss,
        DropReason::Ttl,
        DropReason::NoRoute,
        DropReason::BufferExpired,
        DropReason::BufferOverflow,
        DropReason::Duplicate,
        DropReason::Undeliverable,
        DropReason::ProtocolError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::QueueFull => "queue-full",
            DropReason::NodeDead => "node-dead",
            DropReason::LinkBreak => "link-break",
            DropReason::Loss => "loss",
            DropReason::Ttl => "ttl",
            DropReason::NoRoute => "no-route",
            DropReason::BufferExpired => "buffer-expired",
            DropReason::BufferOverflow => "buffer-overflow",
            DropReason::Duplicate => "duplicate",
            DropReason::Undeliverable => "undeliverable",
            DropReason::ProtocolError => "protocol-error",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// A data packet was originated by its application.
    Generated,
    /// First copy of a packet to reach its target.
    Delivered,
    /// A further copy of an already delivered data packet.
    Duplicate,
    Dropped(DropReason),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Generated => f.write_str("generated"),
            Outcome::Delivered => f.write_str("delivered"),
            Outcome::Duplicate => f.write_str("duplicate"),
            Outcome::Dropped(r) => write!(f, "dropped:{r}"),
        }
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generated" => Ok(Outcome::Generated),
            "delivered" => Ok(Outcome::Delivered),
            "duplicate" => Ok(Outcome::Duplicate),
            _ => {
                let reason = s.strip_prefix("dropped:").ok_or_else(|| format!("unknown outcome {s:?}"))?;
                DropReason::ALL
                    .into_iter()
                    .find(|r| r.name() == reason)
                    .map(Outcome::Dropped)
                    .ok_or_else(|| format!("unknown drop reason {reason:?}"))
            }
        }
    }
}

/// One line of the plot file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub departure: SimTime,
    pub packet_id: GenId,
    pub kind: PacketKind,
    pub origin: NodeId,
    pub final_dst: NodeId,
    pub bits: u32,
    pub payload_bits: u32,
    pub outcome: Outcome,
    pub delay: Option<SimTime>,
    pub hops: Option<u32>,
}

impl TraceRecord {
    fn from_packet(p: &Packet, outcome: Outcome) -> Self {
        TraceRecord {
            departure: p.created_at,
            packet_id: p.gen_id,
            kind: p.kind,
            origin: p.origin,
            final_dst: p.final_dst,
            bits: p.size_bits(),
            payload_bits: p.payload_bits,
            outcome,
            delay: None,
            hops: None,
        }
    }

    fn reached_target(&self) -> bool {
        matches!(self.outcome, Outcome::Delivered | Outcome::Duplicate)
    }
}

/// Append-only observer for packet outcomes within one run.
#[derive(Debug, Default)]
pub struct Recorder {
    records: Vec<TraceRecord>,
    delivered_data: HashSet<GenId>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }

    pub fn generated(&mut self, p: &Packet) {
        self.records.push(TraceRecord::from_packet(p, Outcome::Generated));
    }

    /// Records arrival at the packet's target. Returns whether this was the
    /// first arrival of that data packet (always true for other kinds).
    pub fn arrived(&mut self, p: &Packet, now: SimTime) -> bool {
        let first = p.kind != PacketKind::Data || self.delivered_data.insert(p.gen_id);
        let outcome = if first { Outcome::Delivered } else { Outcome::Duplicate };
        let mut r = TraceRecord::from_packet(p, outcome);
        r.delay = Some(now.saturating_sub(p.created_at));
        r.hops = Some(p.hops());
        self.records.push(r);
        first
    }

    pub fn dropped(&mut self, p: &Packet, reason: DropReason) {
        self.records.push(TraceRecord::from_packet(p, Outcome::Dropped(reason)));
    }
}

fn unique_data(records: &[TraceRecord]) -> impl Iterator<Item = &TraceRecord> {
    records.iter().filter(|r| r.kind == PacketKind::Data && r.outcome == Outcome::Delivered)
}

fn kbps(bits: u64, duration: SimTime) -> f64 {
    if duration == SimTime::ZERO {
        return 0.0;
    }
    bits as f64 * 1e3 / duration.as_micros() as f64
}

/// Mean delay of unique delivered data packets in milliseconds; `None`
/// when nothing was delivered.
pub fn average_delay(records: &[TraceRecord]) -> Option<f64> {
    let (sum, n) = unique_data(records)
        .fold((0u64, 0u64), |(s, n), r| (s + r.delay.map_or(0, SimTime::as_micros), n + 1));
    (n > 0).then(|| sum as f64 / n as f64 / 1e3)
}

/// Every bit that reached its target (headers, duplicates and control
/// packets included) per unit time, in kbit/s.
pub fn throughput(records: &[TraceRecord], duration: SimTime) -> f64 {
    let bits: u64 = records.iter().filter(|r| r.reached_target()).map(|r| r.bits as u64).sum();
    kbps(bits, duration)
}

/// Payload bits of unique delivered data packets per unit time, in kbit/s.
pub fn goodput(records: &[TraceRecord], duration: SimTime) -> f64 {
    let bits: u64 = unique_data(records).map(|r| r.payload_bits as u64).sum();
    kbps(bits, duration)
}

/// `(throughput - goodput, that difference as a fraction of throughput)`.
pub fn overhead(throughput_kbps: f64, goodput_kbps: f64) -> (f64, f64) {
    let kbps = throughput_kbps - goodput_kbps;
    let fraction = if throughput_kbps > 0.0 { kbps / throughput_kbps } else { 0.0 };
    (kbps, fraction)
}

/// Unique delivered data packets over originated data packets.
pub fn pdr(records: &[TraceRecord]) -> Option<f64> {
    let generated = records.iter().filter(|r| r.kind == PacketKind::Data && r.outcome == Outcome::Generated).count();
    let delivered = unique_data(records).count();
    (generated > 0).then(|| delivered as f64 / generated as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub per_node_j: Vec<f64>,
    pub total_j: f64,
    pub total_pj: u128,
    pub dead_nodes: usize,
}

impl EnergyReport {
    pub fn mean_j(&self) -> f64 {
        if self.per_node_j.is_empty() {
            0.0
        } else {
            self.total_j / self.per_node_j.len() as f64
        }
    }
}

pub fn energy_utilization(states: &[EnergyState]) -> EnergyReport {
    let total_pj: u128 = states.iter().map(|s| s.used_pj() as u128).sum();
    EnergyReport {
        per_node_j: states.iter().map(EnergyState::used_j).collect(),
        total_j: total_pj as f64 / crate::net::PICOJOULES_PER_JOULE,
        total_pj,
        dead_nodes: states.iter().filter(|s| s.is_dead()).count(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub duration_s: f64,
    pub avg_delay_ms: Option<f64>,
    pub throughput_kbps: f64,
    pub goodput_kbps: f64,
    pub overhead_kbps: f64,
    pub overhead_fraction: f64,
    pub pdr: Option<f64>,
    pub energy_total_j: f64,
    pub energy_mean_j: f64,
    pub energy_per_node_j: Vec<f64>,
    pub dead_nodes: usize,
    pub generated: u64,
    pub delivered: u64,
    pub duplicates: u64,
    pub control_delivered: u64,
    pub dropped: BTreeMap<DropReason, u64>,
}

impl MetricsReport {
    pub fn from_records(records: &[TraceRecord], duration: SimTime, energy: &EnergyReport) -> Self {
        let tp = throughput(records, duration);
        let gp = goodput(records, duration);
        let (oh, frac) = overhead(tp, gp);
        let mut dropped = BTreeMap::new();
        let (mut generated, mut delivered, mut duplicates, mut control_delivered) = (0, 0, 0, 0);
        for r in records {
            match (r.kind, r.outcome) {
                (PacketKind::Data, Outcome::Generated) => generated += 1,
                (PacketKind::Data, Outcome::Delivered) => delivered += 1,
                (PacketKind::Data, Outcome::Duplicate) => duplicates += 1,
                (_, Outcome::Delivered) => control_delivered += 1,
                (PacketKind::Data, Outcome::Dropped(reason)) => *dropped.entry(reason).or_insert(0) += 1,
                _ => {}
            }
        }
        MetricsReport {
            duration_s: duration.as_secs_f64(),
            avg_delay_ms: average_delay(records),
            throughput_kbps: tp,
            goodput_kbps: gp,
            overhead_kbps: oh,
            overhead_fraction: frac,
            pdr: pdr(records),
            energy_total_j: energy.total_j,
            energy_mean_j: energy.mean_j(),
            energy_per_node_j: energy.per_node_j.clone(),
            dead_nodes: energy.dead_nodes,
            generated,
            delivered,
            duplicates,
            control_delivered,
            dropped,
        }
    }

    /// Flat scalar fields in a fixed order; shared by the key=value report
    /// and the CSV schema. Absent values are empty strings.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = vec![
            ("avg_delay_ms", opt(self.avg_delay_ms)),
            ("throughput_kbps", self.throughput_kbps.to_string()),
            ("goodput_kbps", self.goodput_kbps.to_string()),
            ("overhead_kbps", self.overhead_kbps.to_string()),
            ("overhead_fraction", self.overhead_fraction.to_string()),
            ("pdr", opt(self.pdr)),
            ("energy_total_j", self.energy_total_j.to_string()),
            ("energy_mean_j", self.energy_mean_j.to_string()),
            ("dead_nodes", self.dead_nodes.to_string()),
            ("generated", self.generated.to_string()),
            ("delivered", self.delivered.to_string()),
            ("duplicates", self.duplicates.to_string()),
            ("control_delivered", self.control_delivered.to_string()),
        ];
        for r in DropReason::ALL {
            let name = match r {
                DropReason::QueueFull => "dropped_queue_full",
                DropReason::NodeDead => "dropped_node_dead",
                DropReason::LinkBreak => "dropped_link_break",
                DropReason::Loss => "dropped_loss",
                DropReason::Ttl => "dropped_ttl",
                DropReason::NoRoute => "dropped_no_route",
                DropReason::BufferExpired => "dropped_buffer_expired",
                DropReason::BufferOverflow => "dropped_buffer_overflow",
                DropReason::Duplicate => "dropped_duplicate",
                DropReason::Undeliverable => "dropped_undeliverable",
                DropReason::ProtocolError => "dropped_protocol_error",
            };
            out.push((name, self.dropped.get(&r).copied().unwrap_or(0).to_string()));
        }
        out
    }

    pub fn field_names() -> Vec<&'static str> {
        let empty = MetricsReport::from_records(&[], SimTime::from_secs(1), &energy_utilization(&[]));
        empty.fields().into_iter().map(|(k, _)| k).collect()
    }

    /// `key=value` lines, followed by per-node energy.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "duration_s={}", self.duration_s).unwrap();
        for (k, v) in self.fields() {
            writeln!(s, "{k}={v}").unwrap();
        }
        for (i, e) in self.energy_per_node_j.iter().enumerate() {
            writeln!(s, "energy_node_{i}_j={e}").unwrap();
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace has no duration_us header")]
    MissingDuration,
}

pub const TRACE_COLUMNS: [&str; 10] =
    ["departure_us", "packet_id", "kind", "origin", "final_dst", "bits", "outcome", "delay_us", "hops", "payload_bits"];

/// Writes the plot file: a `#duration_us=` line, a `#`-prefixed column
/// header, then one tab-separated record per line.
pub fn write_trace<W: Write>(mut w: W, duration: SimTime, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(w, "#duration_us={}", duration.as_micros())?;
    writeln!(w, "#{}", TRACE_COLUMNS.join("\t"))?;
    for r in records {
        let delay = r.delay.map_or_else(|| "-".to_string(), |d| d.as_micros().to_string());
        let hops = r.hops.map_or_else(|| "-".to_string(), |h| h.to_string());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.departure.as_micros(),
            r.packet_id,
            r.kind,
            r.origin,
            r.final_dst,
            r.bits,
            r.outcome,
            delay,
            hops,
            r.payload_bits
        )?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<(SimTime, Vec<TraceRecord>), TraceError> {
    let mut duration = None;
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let err = |msg: String| TraceError::Parse { line: lineno, msg };
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(v) = meta.strip_prefix("duration_us=") {
                duration = Some(SimTime::from_micros(v.trim().parse().map_err(|e| err(format!("{e}")))?));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != TRACE_COLUMNS.len() {
            return Err(err(format!("expected {} columns, found {}", TRACE_COLUMNS.len(), cols.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| err(format!("{s:?}: {e}")));
        let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
        records.push(TraceRecord {
            departure: SimTime::from_micros(num(cols[0])?),
            packet_id: cols[1].parse().map_err(err)?,
            kind: cols[2].parse().map_err(err)?,
            origin: NodeId(num(cols[3])? as u32),
            final_dst: NodeId(num(cols[4])? as u32),
            bits: num(cols[5])? as u32,
            outcome: cols[6].parse().map_err(err)?,
            delay: opt(cols[7])?.map(SimTime::from_micros),
            hops: opt(cols[8])?.map(|h| h as u32),
            payload_bits: num(cols[9])? as u32,
        });
    }
    Ok((duration.ok_or(TraceError::MissingDuration)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: PacketKind, seq: u64, outcome: Outcome, bits: u32, payload: u32, delay_ms: Option<u64>) -> TraceRecord {
        TraceRecord {
            departure: SimTime::ZERO,
            packet_id: GenId { origin: NodeId(0), seq },
            kind,
            origin: NodeId(0),
            final_dst: NodeId(1),
            bits,
            payload_bits: payload,
            outcome,
            delay: delay_ms.map(SimTime::from_millis),
            hops: delay_ms.map(|_| 1),
        }
    }

    fn delivered(seq: u64, delay_ms: u64) -> TraceRecord {
        rec(PacketKind::Data, seq, Outcome::Delivered, 8000, 7840, Some(delay_ms))
    }

    fn generated(seq: u64) -> TraceRecord {
        rec(PacketKind::Data, seq, Outcome::Generated, 8000, 7840, None)
    }

    #[test]
    fn delay_average() {
        assert_eq!(average_delay(&[delivered(0, 2), delivered(1, 4)]), Some(3.0));
        assert_eq!(average_delay(&[delivered(0, 5)]), Some(5.0));
        assert_eq!(average_delay(&[generated(0)]), None);
    }

    #[test]
    fn throughput_and_goodput() {
        let one_s = SimTime::from_secs(1);
        assert_eq!(throughput(&[delivered(0, 1)], one_s), 8.0);
        assert_eq!(goodput(&[delivered(0, 1)], one_s), 7.84);
        let dup = rec(PacketKind::Data, 0, Outcome::Duplicate, 8000, 7840, Some(3));
        assert_eq!(throughput(&[delivered(0, 1), dup.clone()], one_s), 16.0);
        assert_eq!(goodput(&[delivered(0, 1), dup], one_s), 7.84);
        assert_eq!(throughput(&[], one_s), 0.0);
        let ctl = rec(PacketKind::DsrRrep, 5, Outcome::Delivered, 300, 0, Some(1));
        assert_eq!(goodput(std::slice::from_ref(&ctl), one_s), 0.0);
        assert_eq!(throughput(&[ctl], one_s), 0.3);
    }

    #[test]
    fn overhead_arithmetic() {
        let (kbps, _) = overhead(710.24, 658.78);
        assert!((kbps - 51.46).abs() < 1e-9);
        let (kbps, _) = overhead(523.24, 485.33);
        assert!((kbps - 37.91).abs() < 1e-9);
        assert_eq!(overhead(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn pdr_ratio() {
        let mut recs: Vec<_> = (0..100).map(generated).collect();
        recs.extend((0..87).map(|i| delivered(i, 1)));
        assert_eq!(pdr(&recs), Some(0.87));
        assert_eq!(pdr(&[]), None);
        assert_eq!(pdr(&[generated(0)]), Some(0.0));
    }

    #[test]
    fn energy_report() {
        let mut a = EnergyState::new(100.0, 1e-6, 0.5e-6);
        let b = EnergyState::new(100.0, 1e-6, 0.5e-6);
        assert_eq!(energy_utilization(&[a.clone(), b.clone()]).total_j, 0.0);
        a.debit(crate::net::Direction::Tx, 8000);
        let r = energy_utilization(&[a, b]);
        assert_eq!(r.per_node_j, vec![0.008, 0.0]);
        assert_eq!(r.total_j, 0.008);
        assert_eq!(r.dead_nodes, 0);
    }

    #[test]
    fn outcome_text() {
        for o in [Outcome::Generated, Outcome::Delivered, Outcome::Duplicate, Outcome::Dropped(DropReason::NoRoute)] {
            assert_eq!(o.to_string().parse::<Outcome>().unwrap(), o);
        }
        assert!("dropped:nonsense".parse::<Outcome>().is_err());
    }

    #[test]
    fn trace_roundtrip_and_recompute() {
        let recs = vec![generated(0), generated(1), delivered(0, 7), rec(PacketKind::Data, 1, Outcome::Dropped(DropReason::LinkBreak), 8000, 7840, None)];
        let mut buf = Vec::new();
        let d = SimTime::from_secs(3);
        write_trace(&mut buf, d, &recs).unwrap();
        let (d2, back) = read_trace(&buf[..]).unwrap();
        assert_eq!(d2, d);
        assert_eq!(back, recs);
        let e = energy_utilization(&[]);
        assert_eq!(MetricsReport::from_records(&recs, d, &e), MetricsReport::from_records(&back, d2, &e));
    }

    #[test]
    fn trace_parse_errors_carry_line() {
        let bad = "#duration_us=5\n1\t0:1\tDATA\n";
        match read_trace(bad.as_bytes()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_trace("".as_bytes()), Err(TraceError::MissingDuration)));
    }
}
