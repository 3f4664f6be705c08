//! Constant-rate application sessions.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::engine::{RngStream, SimTime};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub source: NodeId,
    pub destination: NodeId,
    pub start: SimTime,
    pub stop: SimTime,
    pub packet_bits: u32,
    /// Packets per second.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retransmission {
    pub enabled: bool,
    pub timeout: SimTime,
    /// Extra copies allowed per packet.
    pub max: u32,
}

impl Default for Retransmission {
    fn default() -> Self {
        Retransmission { enabled: false, timeout: SimTime::from_secs(2), max: 3 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("session {0}: source equals destination")]
    SelfSession(usize),
    #[error("session {0}: start must be before stop, and stop no later than the run end")]
    Window(usize),
    #[error("session {0}: rate must be positive and finite")]
    Rate(usize),
    #[error("session {0}: node outside 0..{1}")]
    UnknownNode(usize, u32),
    #[error("{wanted} distinct pairs requested but only {available} exist")]
    TooManyPairs { wanted: usize, available: usize },
}

impl Session {
    pub fn interval_us(&self) -> f64 {
        1e6 / self.rate
    }

    /// Time of the `k`-th emission given the jittered first one; `None` once
    /// past the stop time.
    pub fn emission_time(&self, first: SimTime, k: u64) -> Option<SimTime> {
        let t = first + SimTime::from_micros((k as f64 * self.interval_us()).round() as u64);
        (t < self.stop).then_some(t)
    }

    /// First emission: start plus a uniform offset in `[0, 1/rate)`.
    pub fn first_emission(&self, rng: &mut RngStream) -> Option<SimTime> {
        let jitter = (rng.uniform() * self.interval_us()).floor() as u64;
        let t = self.start + SimTime::from_micros(jitter);
        (t < self.stop).then_some(t)
    }

    /// All emission times, in order.
    pub fn emissions(&self, rng: &mut RngStream) -> Vec<SimTime> {
        let Some(first) = self.first_emission(rng) else { return Vec::new() };
        (0..).map_while(|k| self.emission_time(first, k)).collect()
    }
}

pub fn validate_sessions(sessions: &[Session], node_count: u32, t_end: SimTime) -> Result<(), TrafficError> {
    for (i, s) in sessions.iter().enumerate() {
        if s.source.0 >= node_count || s.destination.0 >= node_count {
            return Err(TrafficError::UnknownNode(i, node_count));
        }
        if s.source == s.destination {
            return Err(TrafficError::SelfSession(i));
        }
        if s.start > s.stop || s.stop > t_end {
            return Err(TrafficError::Window(i));
        }
        if !(s.rate.is_finite() && s.rate > 0.0) {
            return Err(TrafficError::Rate(i));
        }
    }
    Ok(())
}

/// `count` distinct ordered `(source, destination)` pairs with source ≠ destination.
pub fn random_pairs(node_count: u32, count: usize, rng: &mut RngStream) -> Result<Vec<(NodeId, NodeId)>, TrafficError> {
    let n = node_count as u64;
    let available = (n * n.saturating_sub(1)) as usize;
    if count > available {
        return Err(TrafficError::TooManyPairs { wanted: count, available });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = rng.uniform_int(0, n) as u32;
        let d = rng.uniform_int(0, n) as u32;
        if s != d && seen.insert((s, d)) {
            out.push((NodeId(s), NodeId(d)));
        }
    }
    Ok(out)
}
