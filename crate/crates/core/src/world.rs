//! Node placement, random-waypoint mobility and unit-disk range queries.

use thiserror::Error;

use crate::engine::{RngStream, SimTime};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn sample(&self, rng: &mut RngStream) -> Position {
        Position::new(rng.uniform() * self.width, rng.uniform() * self.height)
    }
}

impl Default for Arena {
    fn default() -> Self {
        Arena { width: 2500.0, height: 1500.0 }
    }
}

/// Random-waypoint parameters. With `enabled == false` nodes never move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityParams {
    pub enabled: bool,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: SimTime,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams { enabled: true, v_min: 1.0, v_max: 20.0, pause: SimTime::ZERO }
    }
}

/// The current leg of one node's trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointState {
    pub node: NodeId,
    pub origin: Position,
    pub waypoint: Position,
    pub speed: f64,
    pub depart_at: SimTime,
    pub arrive_at: SimTime,
    pub pause_until: SimTime,
}

impl WaypointState {
    fn stationary(node: NodeId, at: Position, speed: f64) -> Self {
        WaypointState {
            node,
            origin: at,
            waypoint: at,
            speed,
            depart_at: SimTime::ZERO,
            arrive_at: SimTime::ZERO,
            pause_until: SimTime::MAX,
        }
    }

    fn position_at(&self, t: SimTime) -> Position {
        if t <= self.depart_at {
            return self.origin;
        }
        let dist = self.origin.distance(self.waypoint);
        let travelled = self.speed * (t - self.depart_at).as_secs_f64();
        if dist == 0.0 || travelled >= dist {
            return self.waypoint;
        }
        let f = travelled / dist;
        Position::new(
            self.origin.x + (self.waypoint.x - self.origin.x) * f,
            self.origin.y + (self.waypoint.y - self.origin.y) * f,
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("range query between a node and itself ({0})")]
    SelfQuery(NodeId),
    #[error("position ({x}, {y}) of node {node} lies outside the arena")]
    OutOfArena { node: NodeId, x: f64, y: f64 },
}

pub struct World {
    arena: Arena,
    radius: f64,
    params: MobilityParams,
    legs: Vec<WaypointState>,
    rngs: Vec<RngStream>,
}

impl World {
    /// Uniform initial placement from each node's mobility stream; with
    /// mobility enabled every node starts its first leg at t = 0.
    pub fn random(node_count: usize, arena: Arena, radius: f64, params: MobilityParams, seed: u64) -> Self {
        let mut rngs: Vec<RngStream> =
            (0..node_count).map(|i| RngStream::new(seed, "mobility", Some(NodeId(i as u32)))).collect();
        let legs = rngs
            .iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let at = arena.sample(rng);
                WaypointState::stationary(NodeId(i as u32), at, params.v_min)
            })
            .collect();
        let mut world = World { arena, radius, params, legs, rngs };
        if params.enabled {
            for i in 0..node_count {
                world.advance_waypoint(NodeId(i as u32), SimTime::ZERO);
            }
        }
        world
    }

    /// Static placement at the given coordinates.
    pub fn fixed(positions: &[Position], arena: Arena, radius: f64) -> Result<Self, WorldError> {
        let params = MobilityParams { enabled: false, ..MobilityParams::default() };
        let mut legs = Vec::with_capacity(positions.len());
        for (i, &p) in positions.iter().enumerate() {
            let node = NodeId(i as u32);
            if !arena.contains(p) {
                return Err(WorldError::OutOfArena { node, x: p.x, y: p.y });
            }
            legs.push(WaypointState::stationary(node, p, params.v_min));
        }
        let rngs = Vec::new();
        Ok(World { arena, radius, params, legs, rngs })
    }

    pub fn node_count(&self) -> usize {
        self.legs.len()
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn leg(&self, node: NodeId) -> Result<&WaypointState, WorldError> {
        self.legs.get(node.index()).ok_or(WorldError::UnknownNode(node))
    }

    /// When the node next needs [`World::advance_waypoint`], if ever.
    pub fn next_waypoint_event(&self, node: NodeId) -> Option<SimTime> {
        let leg = self.legs.get(node.index())?;
        (self.params.enabled && leg.pause_until != SimTime::MAX).then_some(leg.pause_until)
    }

    pub fn position_at(&self, node: NodeId, t: SimTime) -> Result<Position, WorldError> {
        Ok(self.leg(node)?.position_at(t))
    }

    fn pos(&self, node: NodeId, t: SimTime) -> Position {
        self.legs[node.index()].position_at(t)
    }

    /// Inclusive unit-disk test.
    pub fn in_range(&self, a: NodeId, b: NodeId, t: SimTime) -> Result<bool, WorldError> {
        if a == b {
            return Err(WorldError::SelfQuery(a));
        }
        let pa = self.position_at(a, t)?;
        let pb = self.position_at(b, t)?;
        Ok(pa.distance(pb) <= self.radius)
    }

    /// All other nodes within range, ascending by id.
    pub fn neighbors_of(&self, node: NodeId, t: SimTime) -> Vec<NodeId> {
        if node.index() >= self.legs.len() {
            return Vec::new();
        }
        let here = self.pos(node, t);
        (0..self.legs.len() as u32)
            .map(NodeId)
            .filter(|&o| o != node && here.distance(self.pos(o, t)) <= self.radius)
            .collect()
    }

    /// Starts a new leg from the current waypoint: fresh waypoint uniform in
    /// the arena and speed uniform in `[v_min, v_max]`.
    pub fn advance_waypoint(&mut self, node: NodeId, now: SimTime) -> &WaypointState {
        let i = node.index();
        let rng = &mut self.rngs[i];
        let origin = self.legs[i].waypoint;
        let waypoint = self.arena.sample(rng);
        let speed = self.params.v_min + rng.uniform() * (self.params.v_max - self.params.v_min);
        let travel = SimTime::from_micros((origin.distance(waypoint) / speed * 1e6).ceil() as u64);
        let arrive_at = now + travel;
        self.legs[i] = WaypointState {
            node,
            origin,
            waypoint,
            speed,
            depart_at: now,
            arrive_at,
            pause_until: arrive_at + self.params.pause,
        };
        &self.legs[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(spacing: f64, n: usize) -> World {
        let pts: Vec<Position> = (0..n).map(|i| Position::new(i as f64 * spacing, 0.0)).collect();
        World::fixed(&pts, Arena::default(), 250.0).unwrap()
    }

    #[test]
    fn linear_interpolation() {
        let leg = WaypointState {
            node: NodeId(0),
            origin: Position::new(0.0, 0.0),
            waypoint: Position::new(100.0, 0.0),
            speed: 10.0,
            depart_at: SimTime::from_secs(2),
            arrive_at: SimTime::from_secs(12),
            pause_until: SimTime::from_secs(12),
        };
        assert_eq!(leg.position_at(SimTime::from_secs(7)), Position::new(50.0, 0.0));
        assert_eq!(leg.position_at(SimTime::from_secs(2)), leg.origin);
        assert_eq!(leg.position_at(SimTime::from_secs(30)), leg.waypoint);
    }

    #[test]
    fn stationary_never_moves() {
        let params = MobilityParams { enabled: false, ..Default::default() };
        let w = World::random(5, Arena::default(), 250.0, params, 3);
        for i in 0..5 {
            let p0 = w.position_at(NodeId(i), SimTime::ZERO).unwrap();
            assert_eq!(w.position_at(NodeId(i), SimTime::from_secs(100)).unwrap(), p0);
            assert_eq!(w.next_waypoint_event(NodeId(i)), None);
        }
    }

    #[test]
    fn range_boundary_inclusive() {
        let pts = [Position::new(0.0, 0.0), Position::new(0.0, 250.0), Position::new(0.0, 500.001)];
        let w = World::fixed(&pts, Arena::default(), 250.0).unwrap();
        assert!(w.in_range(NodeId(0), NodeId(1), SimTime::ZERO).unwrap());
        assert!(!w.in_range(NodeId(1), NodeId(2), SimTime::ZERO).unwrap());
        let pts = [Position::new(0.0, 0.0), Position::new(0.0, 250.001)];
        let w = World::fixed(&pts, Arena::default(), 250.0).unwrap();
        assert!(!w.in_range(NodeId(0), NodeId(1), SimTime::ZERO).unwrap());
        let pts = [Position::new(10.0, 10.0), Position::new(10.0, 10.0)];
        let w = World::fixed(&pts, Arena::default(), 250.0).unwrap();
        assert!(w.in_range(NodeId(0), NodeId(1), SimTime::ZERO).unwrap());
    }

    #[test]
    fn range_errors() {
        let w = line(100.0, 2);
        assert_eq!(w.in_range(NodeId(0), NodeId(0), SimTime::ZERO), Err(WorldError::SelfQuery(NodeId(0))));
        assert_eq!(w.position_at(NodeId(9), SimTime::ZERO), Err(WorldError::UnknownNode(NodeId(9))));
    }

    #[test]
    fn neighbors_on_a_line() {
        let w = line(200.0, 3);
        assert_eq!(w.neighbors_of(NodeId(1), SimTime::ZERO), vec![NodeId(0), NodeId(2)]);
        assert_eq!(w.neighbors_of(NodeId(0), SimTime::ZERO), vec![NodeId(1)]);
        assert_eq!(w.neighbors_of(NodeId(2), SimTime::ZERO), vec![NodeId(1)]);
        let lone = World::fixed(&[Position::new(0.0, 0.0), Position::new(1000.0, 0.0)], Arena::default(), 250.0)
            .unwrap();
        assert!(lone.neighbors_of(NodeId(0), SimTime::ZERO).is_empty());
    }

    #[test]
    fn fixed_rejects_outside() {
        assert!(World::fixed(&[Position::new(2600.0, 0.0)], Arena::default(), 250.0).is_err());
    }

    #[test]
    fn degenerate_speed_interval() {
        let params = MobilityParams { enabled: true, v_min: 10.0, v_max: 10.0, pause: SimTime::ZERO };
        let mut w = World::random(3, Arena::default(), 250.0, params, 11);
        for _ in 0..100 {
            for i in 0..3 {
                let t = w.next_waypoint_event(NodeId(i)).unwrap();
                assert_eq!(w.advance_waypoint(NodeId(i), t).speed, 10.0);
            }
        }
    }

    #[test]
    fn waypoints_stay_inside_arena() {
        let mut w = World::random(1, Arena::default(), 250.0, MobilityParams::default(), 5);
        let arena = w.arena();
        for _ in 0..10_000 {
            let t = w.next_waypoint_event(NodeId(0)).unwrap();
            let leg = *w.advance_waypoint(NodeId(0), t);
            assert!(arena.contains(leg.waypoint));
            assert!((1.0..=20.0).contains(&leg.speed));
            let mid = leg.depart_at + SimTime::from_micros((leg.arrive_at - leg.depart_at).as_micros() / 2);
            assert!(arena.contains(w.position_at(NodeId(0), mid).unwrap()));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed| {
            let mut w = World::random(4, Arena::default(), 250.0, MobilityParams::default(), seed);
            let mut out = Vec::new();
            for _ in 0..50 {
                for i in 0..4 {
                    let t = w.next_waypoint_event(NodeId(i)).unwrap();
                    let leg = w.advance_waypoint(NodeId(i), t);
                    out.push((leg.waypoint.x.to_bits(), leg.waypoint.y.to_bits(), leg.speed.to_bits()));
                }
            }
            out
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
