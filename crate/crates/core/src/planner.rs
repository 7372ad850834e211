//! Minimum-time search over the roadmap.
//!
//! The search state is `(vertex, body heading)`. Forward edges must stay
//! within +-45 degrees of the current heading. Reverse edges cover the other
//! motion directions, run at a fixed slow speed, and are only searched when
//! the caller allows reversing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::EdgeStatus;
use crate::world::{Direction, Edge, EdgeId, Heading, Roadmap, SegmentId, VertexId};

pub const MIN_SPEED: f64 = 1.0;
pub const MAX_SPEED: f64 = 10.0;
pub const REVERSE_SPEED: f64 = 1.0;
/// Speed the full-information oracle drives at.
pub const ORACLE_SPEED: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("speed {0} m/s is outside [1, 10]")]
    SpeedOutOfRange(f64),
    #[error("goal {goal} is unreachable from vertex {start} on the true world")]
    UnreachableGoal { start: VertexId, goal: VertexId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    /// Speed on edges whose whole footprint has been sensed.
    pub observed_speed: f64,
    pub unobserved_speed: f64,
    /// Replaces the observed/unobserved speed on the first edge of a plan.
    pub first_edge_speed: Option<f64>,
    pub reverse_speed: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self::fixed()
    }
}

impl SpeedProfile {
    /// 5 m/s in sensed terrain, 10 m/s elsewhere.
    pub fn fixed() -> Self {
        Self {
            observed_speed: 5.0,
            unobserved_speed: 10.0,
            first_edge_speed: None,
            reverse_speed: REVERSE_SPEED,
        }
    }

    pub fn with_first_edge_speed(self, v: f64) -> Result<Self, PlanError> {
        Self {
            first_edge_speed: Some(v),
            ..self
        }
        .validated()
    }

    /// The five first-edge variants of the fixed profile.
    pub fn adaptive_set() -> Vec<Self> {
        [1.0, 3.0, 5.0, 7.0, 10.0]
            .into_iter()
            .map(|v| Self::fixed().with_first_edge_speed(v).expect("speeds in range"))
            .collect()
    }

    pub fn validated(self) -> Result<Self, PlanError> {
        let speeds = [self.observed_speed, self.unobserved_speed, self.reverse_speed]
            .into_iter()
            .chain(self.first_edge_speed);
        for v in speeds {
            if !(MIN_SPEED..=MAX_SPEED).contains(&v) {
                return Err(PlanError::SpeedOutOfRange(v));
            }
        }
        if self.reverse_speed != REVERSE_SPEED {
            return Err(PlanError::SpeedOutOfRange(self.reverse_speed));
        }
        Ok(self)
    }

    /// Speed on `edge` given whether its segment lies in sensed terrain and
    /// whether it is the first edge of the plan.
    #[inline]
    pub fn speed(&self, edge: &Edge, observed: bool, first: bool) -> f64 {
        match (edge.direction, first, self.first_edge_speed) {
            (Direction::Reverse, ..) => self.reverse_speed,
            (_, true, Some(v)) => v,
            _ if observed => self.observed_speed,
            _ => self.unobserved_speed,
        }
    }

    /// Label used for the chosen first-edge speed in logs.
    pub fn nominal_first_speed(&self) -> f64 {
        self.first_edge_speed.unwrap_or(self.observed_speed)
    }
}

/// Which segments count as sensed terrain for speed selection.
#[derive(Debug, Clone, Copy)]
pub enum Observed<'a> {
    Nothing,
    Everything,
    Segments(&'a [bool]),
}

impl Observed<'_> {
    #[inline]
    pub fn contains(&self, s: SegmentId) -> bool {
        match self {
            Observed::Nothing => false,
            Observed::Everything => true,
            Observed::Segments(v) => v[s as usize],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanState {
    pub vertex: VertexId,
    pub heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    /// Planned on the sampled world with this seed.
    World(u64),
    Direct,
    Oracle,
    Search,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attempt {
    ForwardOnly,
    WithReverse,
    /// No collision-free path existed; blocked edges were priced at their
    /// collision cost instead.
    ThroughBlocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub edges: Vec<EdgeId>,
    /// m/s for each edge.
    pub speeds: Vec<f64>,
    pub source: PlanSource,
    pub attempt: Attempt,
}

impl Plan {
    pub fn empty(source: PlanSource) -> Self {
        Self {
            edges: Vec::new(),
            speeds: Vec::new(),
            source,
            attempt: Attempt::ForwardOnly,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    /// `w(e) = length / speed` per edge.
    pub fn durations<'a>(&'a self, roadmap: &'a Roadmap) -> impl Iterator<Item = f64> + 'a {
        self.edges
            .iter()
            .zip(&self.speeds)
            .map(|(&e, &v)| roadmap.edge(e).length / v)
    }

    pub fn traversal_time(&self, roadmap: &Roadmap) -> f64 {
        self.durations(roadmap).sum()
    }

    pub fn uses_reverse(&self, roadmap: &Roadmap) -> bool {
        self.edges
            .iter()
            .any(|&e| roadmap.edge(e).direction == Direction::Reverse)
    }

    /// Same edges, speeds recomputed under another profile.
    pub fn retimed(&self, roadmap: &Roadmap, profile: &SpeedProfile, observed: Observed<'_>) -> Plan {
        let speeds = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let edge = roadmap.edge(e);
                profile.speed(edge, observed.contains(edge.segment), i == 0)
            })
            .collect();
        Plan { speeds, ..self.clone() }
    }

    /// Checks head-to-tail connectivity from `start` to `goal`.
    pub fn is_connected(&self, roadmap: &Roadmap, start: VertexId, goal: VertexId) -> bool {
        let mut at = start;
        for &e in &self.edges {
            let edge = roadmap.edge(e);
            if edge.from != at {
                return false;
            }
            at = edge.to;
        }
        at == goal
    }
}

#[inline]
fn state_index(v: VertexId, h: Heading) -> usize {
    v as usize * 8 + h.index() as usize
}

/// Best-first search from `start` to any state at `goal`.
///
/// `cost(edge_id, edge, from_root)` returns the edge cost or `None` when the
/// edge is unusable. Costs must be nonnegative and bounded below by
/// `length / MAX_SPEED` for the heuristic to stay admissible. Ties in `f`
/// go to the lower vertex id; equal-cost parents keep the lower edge id.
pub(crate) fn search(
    roadmap: &Roadmap,
    start: PlanState,
    goal: VertexId,
    allow_reverse: bool,
    mut cost: impl FnMut(EdgeId, &Edge, bool) -> Option<f64>,
) -> Option<Vec<EdgeId>> {
    if start.vertex == goal {
        return Some(Vec::new());
    }
    let n = roadmap.vertices().len() * 8;
    let mut g = vec![f64::INFINITY; n];
    let mut parent_edge = vec![u32::MAX; n];
    let mut parent_state = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let goal_pos = roadmap.vertex(goal);
    let h = |v: VertexId| {
        let p = roadmap.vertex(v);
        (goal_pos.x - p.x).hypot(goal_pos.y - p.y) / MAX_SPEED
    };

    let root = state_index(start.vertex, start.heading);
    g[root] = 0.0;
    let mut open = BinaryHeap::new();
    open.push(Reverse((h(start.vertex).to_bits(), root as u32)));
    let mut reached = None;
    while let Some(Reverse((_, s))) = open.pop() {
        let s = s as usize;
        if closed[s] {
            continue;
        }
        closed[s] = true;
        let v = (s / 8) as VertexId;
        if v == goal {
            reached = Some(s);
            break;
        }
        let heading = Heading::new((s % 8) as u8);
        let is_root = s == root;
        for &eid in roadmap.out_edges(v) {
            let edge = roadmap.edge(eid);
            if !edge.admissible_from(heading, allow_reverse) {
                continue;
            }
            let t = state_index(edge.to, edge.heading);
            if closed[t] {
                continue;
            }
            let Some(c) = cost(eid, edge, is_root) else {
                continue;
            };
            let ng = g[s] + c;
            if ng < g[t] || (ng == g[t] && eid < parent_edge[t]) {
                g[t] = ng;
                parent_edge[t] = eid;
                parent_state[t] = s as u32;
                open.push(Reverse(((ng + h(edge.to)).to_bits(), t as u32)));
            }
        }
    }
    let mut s = reached?;
    let mut edges = Vec::new();
    while s != root {
        edges.push(parent_edge[s]);
        s = parent_state[s] as usize;
    }
    edges.reverse();
    Some(edges)
}

/// Minimum-time path on the free edges of `world` to the roadmap goal.
pub fn plan_astar(
    world: &impl EdgeStatus,
    roadmap: &Roadmap,
    start: PlanState,
    profile: &SpeedProfile,
    observed: Observed<'_>,
    allow_reverse: bool,
) -> Option<Plan> {
    plan_to(world, roadmap, start, roadmap.goal(), profile, observed, allow_reverse)
}

pub fn plan_to(
    world: &impl EdgeStatus,
    roadmap: &Roadmap,
    start: PlanState,
    goal: VertexId,
    profile: &SpeedProfile,
    observed: Observed<'_>,
    allow_reverse: bool,
) -> Option<Plan> {
    let edges = search(roadmap, start, goal, allow_reverse, |_, edge, root| {
        if !world.segment_free(edge.segment) {
            return None;
        }
        Some(edge.length / profile.speed(edge, observed.contains(edge.segment), root))
    })?;
    let plan = Plan {
        edges,
        speeds: Vec::new(),
        source: PlanSource::Search,
        attempt: if allow_reverse {
            Attempt::WithReverse
        } else {
            Attempt::ForwardOnly
        },
    };
    Some(plan.retimed(roadmap, profile, observed))
}

/// Forward-only first; reversing is searched only if that fails.
pub fn plan_with_reverse_retry(
    world: &impl EdgeStatus,
    roadmap: &Roadmap,
    start: PlanState,
    profile: &SpeedProfile,
    observed: Observed<'_>,
) -> Option<Plan> {
    plan_astar(world, roadmap, start, profile, observed, false)
        .or_else(|| plan_astar(world, roadmap, start, profile, observed, true))
}

/// Cheapest path when blocked edges may be driven through: each blocked edge
/// adds `speed * tau` to its traversal time, with `tau = alpha` on the first
/// edge. Reversing is allowed.
pub fn plan_through_blocked(
    world: &impl EdgeStatus,
    roadmap: &Roadmap,
    start: PlanState,
    profile: &SpeedProfile,
    observed: Observed<'_>,
    alpha: f64,
) -> Option<Plan> {
    let edges = search(roadmap, start, roadmap.goal(), true, |_, edge, root| {
        let v = profile.speed(edge, observed.contains(edge.segment), root);
        let penalty = if world.segment_free(edge.segment) {
            0.0
        } else {
            v * if root { alpha } else { 1.0 }
        };
        Some(edge.length / v + penalty)
    })?;
    let plan = Plan {
        edges,
        speeds: Vec::new(),
        source: PlanSource::Search,
        attempt: Attempt::ThroughBlocked,
    };
    Some(plan.retimed(roadmap, profile, observed))
}

/// Full-information plan at a uniform 10 m/s, ignoring heading constraints.
pub fn oracle_plan(
    truth: &impl EdgeStatus,
    roadmap: &Roadmap,
    start: VertexId,
    goal: VertexId,
) -> Result<Plan, PlanError> {
    if start == goal {
        return Ok(Plan::empty(PlanSource::Oracle));
    }
    let n = roadmap.vertices().len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut open = BinaryHeap::new();
    dist[start as usize] = 0.0;
    open.push(Reverse((0u64, start)));
    while let Some(Reverse((d, v))) = open.pop() {
        let d = f64::from_bits(d);
        if d > dist[v as usize] {
            continue;
        }
        if v == goal {
            break;
        }
        for &eid in roadmap.out_edges(v) {
            let edge = roadmap.edge(eid);
            if edge.direction != Direction::Forward || !truth.segment_free(edge.segment) {
                continue;
            }
            let nd = d + edge.length / ORACLE_SPEED;
            if nd < dist[edge.to as usize] {
                dist[edge.to as usize] = nd;
                parent[edge.to as usize] = eid;
                open.push(Reverse((nd.to_bits(), edge.to)));
            }
        }
    }
    if !dist[goal as usize].is_finite() {
        return Err(PlanError::UnreachableGoal { start, goal });
    }
    let mut edges = Vec::new();
    let mut v = goal;
    while v != start {
        let e = parent[v as usize];
        edges.push(e);
        v = roadmap.edge(e).from;
    }
    edges.reverse();
    let speeds = vec![ORACLE_SPEED; edges.len()];
    Ok(Plan {
        edges,
        speeds,
        source: PlanSource::Oracle,
        attempt: Attempt::ForwardOnly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_roadmap, truth_edge_status, OccupancyGrid, Vertex};

    fn open_lattice(cols: usize) -> Roadmap {
        let px = ((cols - 1) as f64 * 2.0 / 0.4).round() as usize;
        let grid = OccupancyGrid::free(px, px, 0.4).unwrap();
        build_roadmap(&grid, 2.0).unwrap()
    }

    #[test]
    fn profile_validation() {
        assert!(SpeedProfile::fixed().validated().is_ok());
        assert!(SpeedProfile::fixed().with_first_edge_speed(11.0).is_err());
        assert!(SpeedProfile::fixed().with_first_edge_speed(0.5).is_err());
        let set = SpeedProfile::adaptive_set();
        let firsts: Vec<_> = set.iter().map(|p| p.first_edge_speed.unwrap()).collect();
        assert_eq!(firsts, vec![1.0, 3.0, 5.0, 7.0, 10.0]);
    }

    #[test]
    fn straight_corridor_at_unobserved_speed() {
        // a 1-row corridor of vertices along x
        let grid = OccupancyGrid::free(60, 20, 0.4).unwrap();
        let vertices: Vec<_> = (0..11)
            .map(|i| Vertex {
                x: 2.0 + 2.0 * i as f64,
                y: 4.0,
            })
            .collect();
        let segs: Vec<_> = (0..10).map(|i| (i, i + 1)).collect();
        let rm = Roadmap::from_graph(&grid, vertices, &segs, 0, 10).unwrap();
        let free = vec![true; rm.segments().len()];
        let start = PlanState {
            vertex: 0,
            heading: Heading::new(0),
        };
        let plan = plan_astar(&free, &rm, start, &SpeedProfile::fixed(), Observed::Nothing, false).unwrap();
        assert_eq!(plan.len(), 10);
        assert!((plan.traversal_time(&rm) - 20.0 / 10.0).abs() < 1e-12);
        assert!(plan.is_connected(&rm, 0, 10));
        let seen = plan_astar(&free, &rm, start, &SpeedProfile::fixed(), Observed::Everything, false).unwrap();
        assert!((seen.traversal_time(&rm) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn start_equals_goal_is_empty() {
        let rm = open_lattice(5);
        let free = vec![true; rm.segments().len()];
        let st = PlanState {
            vertex: rm.goal(),
            heading: Heading::new(0),
        };
        let p = plan_astar(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing, true).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.traversal_time(&rm), 0.0);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let rm = open_lattice(6);
        let goal = rm.goal();
        let free: Vec<bool> = rm.segments().iter().map(|s| s.a != goal && s.b != goal).collect();
        let st = PlanState {
            vertex: rm.start(),
            heading: Heading::new(1),
        };
        for rev in [false, true] {
            assert!(plan_astar(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing, rev).is_none());
        }
        assert!(plan_with_reverse_retry(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing).is_none());
        assert_eq!(
            oracle_plan(&free, &rm, rm.start(), goal),
            Err(PlanError::UnreachableGoal {
                start: rm.start(),
                goal
            })
        );
    }

    #[test]
    fn cul_de_sac_forces_reverse() {
        // corridor 0-1-2 with the robot at 2 facing +x into a dead end,
        // goal back at 0
        let grid = OccupancyGrid::free(40, 20, 0.4).unwrap();
        let vertices = vec![
            Vertex { x: 2.0, y: 4.0 },
            Vertex { x: 4.0, y: 4.0 },
            Vertex { x: 6.0, y: 4.0 },
        ];
        let rm = Roadmap::from_graph(&grid, vertices, &[(0, 1), (1, 2)], 2, 0).unwrap();
        let free = vec![true; 2];
        let st = PlanState {
            vertex: 2,
            heading: Heading::new(0),
        };
        assert!(plan_astar(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing, false).is_none());
        let p = plan_with_reverse_retry(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing).unwrap();
        assert_eq!(p.attempt, Attempt::WithReverse);
        assert_eq!(rm.edge(p.edges[0]).direction, Direction::Reverse);
        assert!(p.speeds.iter().all(|&v| v == 1.0));
        assert!((p.traversal_time(&rm) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn open_world_retry_stays_forward() {
        let rm = open_lattice(8);
        let free = vec![true; rm.segments().len()];
        let st = PlanState {
            vertex: rm.start(),
            heading: Heading::new(4),
        };
        let a = plan_astar(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing, false).unwrap();
        let b = plan_with_reverse_retry(&free, &rm, st, &SpeedProfile::fixed(), Observed::Nothing).unwrap();
        assert_eq!(a, b);
        assert!(!b.uses_reverse(&rm));
    }

    #[test]
    fn first_edge_speed_applies_once() {
        let rm = open_lattice(6);
        let free = vec![true; rm.segments().len()];
        let st = PlanState {
            vertex: rm.start(),
            heading: rm.heading_towards(rm.start(), rm.goal()),
        };
        let prof = SpeedProfile::fixed().with_first_edge_speed(1.0).unwrap();
        let p = plan_astar(&free, &rm, st, &prof, Observed::Everything, false).unwrap();
        assert_eq!(p.speeds[0], 1.0);
        assert!(p.speeds[1..].iter().all(|&v| v == 5.0));
    }

    #[test]
    fn oracle_on_straight_corridor() {
        let grid = OccupancyGrid::free(260, 20, 0.4).unwrap();
        let vertices: Vec<_> = (0..51)
            .map(|i| Vertex {
                x: 2.0 + 2.0 * i as f64,
                y: 4.0,
            })
            .collect();
        let segs: Vec<_> = (0..50).map(|i| (i, i + 1)).collect();
        let rm = Roadmap::from_graph(&grid, vertices, &segs, 0, 50).unwrap();
        let truth = truth_edge_status(&grid, &rm);
        let p = oracle_plan(&truth, &rm, 0, 50).unwrap();
        assert!((p.traversal_time(&rm) - 10.0).abs() < 1e-12);
        assert!(oracle_plan(&truth, &rm, 3, 3).unwrap().is_empty());
    }
}
