//! Scenario description and its `key = value` file format.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and
//! unset keys keep their defaults. Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimTime;
use crate::net::NetConfig;
use crate::routing::{AhnConfig, AraConfig, DsrConfig};
use crate::traffic::Retransmission;
use crate::world::{Arena, MobilityParams, Position};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    AntHocNet,
    Dsr,
    Ara,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::AntHocNet, Protocol::Dsr, Protocol::Ara];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::AntHocNet => "anthocnet",
            Protocol::Dsr => "dsr",
            Protocol::Ara => "ara",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anthocnet" | "ahn" => Ok(Protocol::AntHocNet),
            "dsr" => Ok(Protocol::Dsr),
            "ara" => Ok(Protocol::Ara),
            other => Err(format!("unknown protocol {other:?} (expected anthocnet, dsr or ara)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficConfig {
    /// Number of random sessions when `flows` is not given.
    pub sessions: usize,
    /// Explicit `(source, destination)` pairs.
    pub flows: Option<Vec<(u32, u32)>>,
    pub rate_pps: f64,
    pub packet_bits: u32,
    pub retransmission: Retransmission,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { sessions: 10, flows: None, rate_pps: 4.0, packet_bits: 4096, retransmission: Retransmission::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub duration: SimTime,
    pub arena: Arena,
    pub radius_m: f64,
    pub node_count: u32,
    pub protocol: Protocol,
    pub seed: u64,
    pub mobility: MobilityParams,
    /// Fixed initial positions; random placement when absent.
    pub positions: Option<Vec<Position>>,
    pub traffic: TrafficConfig,
    pub net: NetConfig,
    pub dsr: DsrConfig,
    pub ahn: AhnConfig,
    pub ara: AraConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            duration: SimTime::from_secs(180),
            arena: Arena::default(),
            radius_m: 250.0,
            node_count: 16,
            protocol: Protocol::AntHocNet,
            seed: 1,
            mobility: MobilityParams::default(),
            positions: None,
            traffic: TrafficConfig::default(),
            net: NetConfig::default(),
            dsr: DsrConfig::default(),
            ahn: AhnConfig::default(),
            ara: AraConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

mod conv {
    pub mod num {
        use std::fmt::Display;
        use std::str::FromStr;

        pub fn parse<T: FromStr>(s: &str) -> Result<T, String>
        where
            T::Err: Display,
        {
            s.parse::<T>().map_err(|e| e.to_string())
        }

        pub fn show<T: Display>(v: &T) -> String {
            v.to_string()
        }
    }

    pub mod secs {
        use crate::engine::SimTime;

        pub fn parse(s: &str) -> Result<SimTime, String> {
            let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{s} is not a non-negative number of seconds"));
            }
            Ok(SimTime::from_secs_f64(v))
        }

        pub fn show(v: &SimTime) -> String {
            v.as_secs_f64().to_string()
        }
    }

    pub mod flag {
        pub fn parse(s: &str) -> Result<bool, String> {
            match s.to_ascii_lowercase().as_str() {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                _ => Err(format!("{s:?} is not on/off")),
            }
        }

        pub fn show(v: &bool) -> String {
            if *v { "on" } else { "off" }.to_string()
        }
    }

    /// `x,y;x,y;...`, or `random`.
    pub mod positions {
        use crate::world::Position;

        pub fn parse(s: &str) -> Result<Option<Vec<Position>>, String> {
            if s.eq_ignore_ascii_case("random") {
                return Ok(None);
            }
            s.split(';')
                .map(|pair| {
                    let (x, y) = pair.split_once(',').ok_or_else(|| format!("{pair:?} is not x,y"))?;
                    let x: f64 = x.trim().parse().map_err(|_| format!("bad x in {pair:?}"))?;
                    let y: f64 = y.trim().parse().map_err(|_| format!("bad y in {pair:?}"))?;
                    Ok(Position::new(x, y))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        }

        pub fn show(v: &Option<Vec<Position>>) -> String {
            match v {
                None => "random".to_string(),
                Some(ps) => ps.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join(";"),
            }
        }
    }

    /// `src>dst,src>dst,...`, or `random`.
    pub mod flows {
        pub fn parse(s: &str) -> Result<Option<Vec<(u32, u32)>>, String> {
            if s.eq_ignore_ascii_case("random") {
                return Ok(None);
            }
            s.split(',')
                .map(|f| {
                    let (a, b) = f.split_once('>').ok_or_else(|| format!("{f:?} is not src>dst"))?;
                    let a: u32 = a.trim().parse().map_err(|_| format!("bad source in {f:?}"))?;
                    let b: u32 = b.trim().parse().map_err(|_| format!("bad destination in {f:?}"))?;
                    Ok((a, b))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        }

        pub fn show(v: &Option<Vec<(u32, u32)>>) -> String {
            match v {
                None => "random".to_string(),
                Some(fs) => fs.iter().map(|(a, b)| format!("{a}>{b}")).collect::<Vec<_>>().join(","),
            }
        }
    }
}

macro_rules! scenario_keys {
    ($( $key:literal => $($field:ident).+ : $conv:ident ),* $(,)?) => {
        /// Every recognised key, in serialization order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl Scenario {
            /// Applies one setting.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
                let raw = raw.trim();
                match key {
                    $( $key => { self.$($field).+ = conv::$conv::parse(raw).map_err(|m| invalid(key, m))?; } )*
                    _ => return Err(invalid(key, "unknown key")),
                }
                Ok(())
            }

            /// `(key, value)` for every key, in [`KEYS`] order.
            pub fn key_values(&self) -> Vec<(&'static str, String)> {
                vec![$( ($key, conv::$conv::show(&self.$($field).+)) ),*]
            }
        }
    };
}

scenario_keys! {
    "duration_s" => duration: secs,
    "arena_width_m" => arena.width: num,
    "arena_height_m" => arena.height: num,
    "radius_m" => radius_m: num,
    "node_count" => node_count: num,
    "protocol" => protocol: num,
    "seed" => seed: num,
    "mobility" => mobility.enabled: flag,
    "v_min_mps" => mobility.v_min: num,
    "v_max_mps" => mobility.v_max: num,
    "pause_s" => mobility.pause: secs,
    "positions" => positions: positions,
    "sessions" => traffic.sessions: num,
    "flows" => traffic.flows: flows,
    "rate_pps" => traffic.rate_pps: num,
    "packet_bits" => traffic.packet_bits: num,
    "retransmission" => traffic.retransmission.enabled: flag,
    "rtx_timeout_s" => traffic.retransmission.timeout: secs,
    "rtx_max" => traffic.retransmission.max: num,
    "bandwidth_bps" => net.bandwidth_bps: num,
    "queue_capacity" => net.queue_capacity: num,
    "initial_energy_j" => net.initial_energy_j: num,
    "tx_j_per_bit" => net.tx_j_per_bit: num,
    "rx_j_per_bit" => net.rx_j_per_bit: num,
    "p_err" => net.p_err: num,
    "dsr.rreq_ttl" => dsr.rreq_ttl: num,
    "dsr.buffer_timeout_s" => dsr.buffer_timeout: secs,
    "dsr.buffer_capacity" => dsr.buffer_capacity: num,
    "dsr.discovery_base_s" => dsr.discovery_base: secs,
    "dsr.discovery_tries" => dsr.discovery_tries: num,
    "dsr.seen_expiry_s" => dsr.seen_expiry: secs,
    "dsr.max_routes" => dsr.max_routes_per_dst: num,
    "ahn.acceptance" => ahn.acceptance: num,
    "ahn.beta_ant" => ahn.beta_ant: num,
    "ahn.beta_data" => ahn.beta_data: num,
    "ahn.gamma" => ahn.gamma: num,
    "ahn.t_hop_s" => ahn.t_hop: num,
    "ahn.proactive_interval_s" => ahn.proactive_interval: secs,
    "ahn.p_bcast" => ahn.p_bcast: num,
    "ahn.proactive_off_ttl" => ahn.proactive_off_ttl: num,
    "ahn.ant_ttl" => ahn.ant_ttl: num,
    "ahn.buffer_timeout_s" => ahn.buffer_timeout: secs,
    "ahn.buffer_capacity" => ahn.buffer_capacity: num,
    "ahn.discovery_retry_s" => ahn.discovery_retry: secs,
    "ahn.discovery_tries" => ahn.discovery_tries: num,
    "ara.phi0" => ara.phi0: num,
    "ara.reinforce" => ara.reinforce: num,
    "ara.decay" => ara.decay: num,
    "ara.floor" => ara.floor: num,
    "ara.t_stale_s" => ara.t_stale: secs,
    "ara.evaporate_every_s" => ara.evaporate_every: secs,
    "ara.ant_ttl" => ara.ant_ttl: num,
    "ara.discovery_retry_s" => ara.discovery_retry: secs,
    "ara.discovery_tries" => ara.discovery_tries: num,
    "ara.buffer_timeout_s" => ara.buffer_timeout: secs,
    "ara.buffer_capacity" => ara.buffer_capacity: num,
}

fn check(ok: bool, key: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(key, msg))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let mut s = Scenario::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::Parse { line: i + 1, msg: format!("unknown key {key:?}") });
            }
            s.set(key, value).map_err(|e| ConfigError::Parse { line: i + 1, msg: e.to_string() })?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Scenario::parse(&text)
    }

    /// Serializes every key, one per line; [`Scenario::parse`] reads it back.
    pub fn to_config_string(&self) -> String {
        self.key_values().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Range checks on every setting. The error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.duration > SimTime::ZERO, "duration_s", "must be positive")?;
        check(positive(self.arena.width), "arena_width_m", "must be positive")?;
        check(positive(self.arena.height), "arena_height_m", "must be positive")?;
        check(positive(self.radius_m), "radius_m", "must be positive")?;
        check(self.node_count >= 2, "node_count", "at least 2 nodes are required")?;
        let m = &self.mobility;
        check(positive(m.v_min), "v_min_mps", "must be positive")?;
        check(m.v_max.is_finite() && m.v_max >= m.v_min, "v_max_mps", "must be at least v_min_mps")?;
        if let Some(ps) = &self.positions {
            check(ps.len() == self.node_count as usize, "positions", "need exactly node_count positions")?;
            check(ps.iter().all(|p| self.arena.contains(*p)), "positions", "every position must lie inside the arena")?;
        }
        let t = &self.traffic;
        match &t.flows {
            Some(fs) => {
                check(!fs.is_empty(), "flows", "at least one flow")?;
                check(fs.iter().all(|(a, b)| a != b), "flows", "source equals destination")?;
                check(fs.iter().all(|(a, b)| *a < self.node_count && *b < self.node_count), "flows", "node outside 0..node_count")?;
            }
            None => {
                let n = self.node_count as u64;
                check((t.sessions as u64) <= n * (n - 1), "sessions", "more sessions than distinct node pairs")?;
            }
        }
        check(positive(t.rate_pps), "rate_pps", "must be positive")?;
        check(t.packet_bits > 0, "packet_bits", "must be positive")?;
        check(t.retransmission.timeout > SimTime::ZERO, "rtx_timeout_s", "must be positive")?;
        check(t.retransmission.max <= 255, "rtx_max", "at most 255")?;
        let n = &self.net;
        check(n.bandwidth_bps > 0, "bandwidth_bps", "must be positive")?;
        check(n.queue_capacity >= 1, "queue_capacity", "must be at least 1")?;
        check(positive(n.initial_energy_j), "initial_energy_j", "must be positive")?;
        check(non_negative(n.tx_j_per_bit), "tx_j_per_bit", "must be non-negative")?;
        check(non_negative(n.rx_j_per_bit), "rx_j_per_bit", "must be non-negative")?;
        check(unit(n.p_err), "p_err", "must lie in [0, 1]")?;
        let d = &self.dsr;
        check(d.rreq_ttl >= 1, "dsr.rreq_ttl", "must be at least 1")?;
        check(d.buffer_capacity >= 1, "dsr.buffer_capacity", "must be at least 1")?;
        check(d.discovery_base > SimTime::ZERO, "dsr.discovery_base_s", "must be positive")?;
        check(d.discovery_tries >= 1, "dsr.discovery_tries", "must be at least 1")?;
        check(d.max_routes_per_dst >= 1, "dsr.max_routes", "must be at least 1")?;
        let a = &self.ahn;
        check(a.acceptance.is_finite() && a.acceptance >= 1.0, "ahn.acceptance", "must be at least 1")?;
        check(non_negative(a.beta_ant), "ahn.beta_ant", "must be non-negative")?;
        check(non_negative(a.beta_data), "ahn.beta_data", "must be non-negative")?;
        check((0.0..1.0).contains(&a.gamma), "ahn.gamma", "must lie in [0, 1)")?;
        check(positive(a.t_hop), "ahn.t_hop_s", "must be positive")?;
        check(a.proactive_interval > SimTime::ZERO, "ahn.proactive_interval_s", "must be positive")?;
        check(unit(a.p_bcast), "ahn.p_bcast", "must lie in [0, 1]")?;
        check(a.ant_ttl >= 1, "ahn.ant_ttl", "must be at least 1")?;
        check(a.buffer_capacity >= 1, "ahn.buffer_capacity", "must be at least 1")?;
        check(a.discovery_retry > SimTime::ZERO, "ahn.discovery_retry_s", "must be positive")?;
        check(a.discovery_tries >= 1, "ahn.discovery_tries", "must be at least 1")?;
        let r = &self.ara;
        check(positive(r.phi0), "ara.phi0", "must be positive")?;
        check(non_negative(r.reinforce), "ara.reinforce", "must be non-negative")?;
        check(r.decay > 0.0 && r.decay <= 1.0, "ara.decay", "must lie in (0, 1]")?;
        check(positive(r.floor) && r.floor < r.phi0, "ara.floor", "must be positive and below ara.phi0")?;
        check(r.evaporate_every > SimTime::ZERO, "ara.evaporate_every_s", "must be positive")?;
        check(r.ant_ttl >= 1, "ara.ant_ttl", "must be at least 1")?;
        check(r.discovery_retry > SimTime::ZERO, "ara.discovery_retry_s", "must be positive")?;
        check(r.discovery_tries >= 1, "ara.discovery_tries", "must be at least 1")?;
        check(r.buffer_capacity >= 1, "ara.buffer_capacity", "must be at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let s = Scenario::parse("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.duration, SimTime::from_secs(180));
        assert_eq!((s.arena.width, s.arena.height), (2500.0, 1500.0));
        assert_eq!(s.radius_m, 250.0);
        assert_eq!(s.net.bandwidth_bps, 2_000_000);
    }

    #[test]
    fn overrides_and_comments() {
        let s = Scenario::parse("# header\nnode_count = 128\n\nprotocol = dsr # inline\nmobility = off\n").unwrap();
        assert_eq!(s.node_count, 128);
        assert_eq!(s.protocol, Protocol::Dsr);
        assert!(!s.mobility.enabled);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = Scenario::parse("radius_m = -1").unwrap_err();
        assert!(e.to_string().contains("radius_m"), "{e}");
        let e = Scenario::parse("seed = 1\nbogus = 3").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }), "{e}");
        let e = Scenario::parse("seed 1").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 1, .. }));
        let e = Scenario::parse("node_count = x").unwrap_err();
        assert!(e.to_string().contains("node_count"), "{e}");
        let e = Scenario::parse("ahn.acceptance = 0.5").unwrap_err();
        assert!(e.to_string().contains("ahn.acceptance"), "{e}");
    }

    #[test]
    fn positions_and_flows() {
        let s = Scenario::parse("node_count = 2\nmobility = off\npositions = 0,0; 200,0\nflows = 0>1").unwrap();
        assert_eq!(s.positions.as_ref().unwrap()[1], Position::new(200.0, 0.0));
        assert_eq!(s.traffic.flows, Some(vec![(0, 1)]));
        assert!(Scenario::parse("node_count = 3\npositions = 0,0;1,1").is_err());
        assert!(Scenario::parse("flows = 1>1").is_err());
    }

    #[test]
    fn round_trip() {
        let mut s = Scenario { node_count: 3, ..Scenario::default() };
        s.positions = Some(vec![Position::new(1.5, 2.0), Position::new(3.0, 4.0), Position::new(0.0, 0.0)]);
        s.traffic.flows = Some(vec![(0, 2), (2, 1)]);
        s.ahn.p_bcast = 0.25;
        assert_eq!(Scenario::parse(&s.to_config_string()).unwrap(), s);
    }

    #[test]
    fn protocol_names() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert_eq!("AHN".parse::<Protocol>().unwrap(), Protocol::AntHocNet);
        assert!("aodv".parse::<Protocol>().is_err());
    }
}
