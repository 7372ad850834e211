use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::{OccupancyGrid, WorldError};

pub type VertexId = u32;
pub type EdgeId = u32;
pub type SegmentId = u32;

/// Robot body length swept along an edge, meters.
pub const ROBOT_LENGTH_M: f64 = 3.5;
/// Robot body width swept along an edge, meters.
pub const ROBOT_WIDTH_M: f64 = 1.5;
pub const DEFAULT_VERTEX_SPACING_M: f64 = 2.0;
/// Start and goal sit this fraction of the world extent in from opposite corners.
const ENDPOINT_INSET: f64 = 0.08;

/// One of the eight lattice directions; 0 points along +x, counting
/// counter-clockwise in 45 degree steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Heading(u8);

impl Heading {
    pub fn new(h: u8) -> Self {
        Self(h % 8)
    }

    /// Nearest lattice direction of a displacement.
    pub fn from_vector(dx: f64, dy: f64) -> Self {
        let a = dy.atan2(dx) / FRAC_PI_4;
        Self::new(a.round().rem_euclid(8.0) as u8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn opposite(self) -> Self {
        Self::new(self.0 + 4)
    }

    /// True when `other` lies within +-45 degrees of `self`.
    pub fn within_cone(self, other: Heading) -> bool {
        let d = (other.0 + 8 - self.0) % 8;
        d == 0 || d == 1 || d == 7
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

/// The physical strip of ground between two vertices. All directed edges
/// joining the same pair of vertices share one segment and its footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: VertexId,
    pub b: VertexId,
    pub length: f64,
    /// Sorted pixel indices touched by the swept robot rectangle.
    pub footprint: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub segment: SegmentId,
    pub direction: Direction,
    /// Body heading on arrival. For reverse edges this is opposite to the
    /// direction of motion.
    pub heading: Heading,
    pub length: f64,
}

impl Edge {
    /// Direction the robot actually moves in.
    pub fn motion_heading(&self) -> Heading {
        match self.direction {
            Direction::Forward => self.heading,
            Direction::Reverse => self.heading.opposite(),
        }
    }

    /// Whether this edge may be taken from a vertex while the body points
    /// along `heading`. Forward edges must lie inside the +-45 degree cone;
    /// reverse edges cover every motion direction outside it.
    pub fn admissible_from(&self, heading: Heading, allow_reverse: bool) -> bool {
        let inside = heading.within_cone(self.motion_heading());
        match self.direction {
            Direction::Forward => inside,
            Direction::Reverse => allow_reverse && !inside,
        }
    }
}

/// Directed graph the robot plans on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Roadmap {
    vertices: Vec<Vertex>,
    segments: Vec<Segment>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<EdgeId>>,
    start: VertexId,
    goal: VertexId,
    lattice: Option<(usize, usize, f64)>,
}

impl Roadmap {
    /// Builds a roadmap over arbitrary vertices and undirected segments.
    /// Each segment produces four directed edges: forward and reverse in
    /// both orientations.
    pub fn from_graph(
        grid: &OccupancyGrid,
        vertices: Vec<Vertex>,
        segments: &[(VertexId, VertexId)],
        start: VertexId,
        goal: VertexId,
    ) -> Result<Self, WorldError> {
        let n = vertices.len() as u32;
        if start >= n || goal >= n {
            return Err(WorldError::UnknownVertex(start.max(goal)));
        }
        if start == goal {
            return Err(WorldError::StartIsGoal(start));
        }
        let mut segs = Vec::with_capacity(segments.len());
        for &(a, b) in segments {
            if a >= n || b >= n {
                return Err(WorldError::UnknownVertex(a.max(b)));
            }
            let (va, vb) = (vertices[a as usize], vertices[b as usize]);
            let length = (vb.x - va.x).hypot(vb.y - va.y);
            if length <= 0.0 {
                return Err(WorldError::DegenerateSegment(a, b));
            }
            let footprint = swept_footprint(grid, (va.x, va.y), (vb.x, vb.y));
            if footprint.is_empty() {
                return Err(WorldError::FootprintOutOfBounds(a, b));
            }
            segs.push(Segment {
                a,
                b,
                length,
                footprint,
            });
        }
        Ok(Self::assemble(vertices, segs, start, goal, None))
    }

    fn assemble(
        vertices: Vec<Vertex>,
        segments: Vec<Segment>,
        start: VertexId,
        goal: VertexId,
        lattice: Option<(usize, usize, f64)>,
    ) -> Self {
        let mut edges = Vec::with_capacity(segments.len() * 4);
        for (sid, s) in segments.iter().enumerate() {
            let (va, vb) = (vertices[s.a as usize], vertices[s.b as usize]);
            let ab = Heading::from_vector(vb.x - va.x, vb.y - va.y);
            let ba = ab.opposite();
            let mk = |from, to, direction, heading| Edge {
                from,
                to,
                segment: sid as SegmentId,
                direction,
                heading,
                length: s.length,
            };
            edges.push(mk(s.a, s.b, Direction::Forward, ab));
            edges.push(mk(s.b, s.a, Direction::Forward, ba));
            edges.push(mk(s.a, s.b, Direction::Reverse, ba));
            edges.push(mk(s.b, s.a, Direction::Reverse, ab));
        }
        let mut out_edges = vec![Vec::new(); vertices.len()];
        for (eid, e) in edges.iter().enumerate() {
            out_edges[e.from as usize].push(eid as EdgeId);
        }
        Self {
            vertices,
            segments,
            edges,
            out_edges,
            start,
            goal,
            lattice,
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> Vertex {
        self.vertices[v as usize]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, s: SegmentId) -> &Segment {
        &self.segments[s as usize]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e as usize]
    }

    /// Outgoing edge ids of `v`, ascending.
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v as usize]
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    /// `(columns, rows, spacing)` when built as a regular lattice.
    pub fn lattice(&self) -> Option<(usize, usize, f64)> {
        self.lattice
    }

    pub fn with_endpoints(mut self, start: VertexId, goal: VertexId) -> Result<Self, WorldError> {
        let n = self.vertices.len() as u32;
        if start >= n || goal >= n {
            return Err(WorldError::UnknownVertex(start.max(goal)));
        }
        if start == goal {
            return Err(WorldError::StartIsGoal(start));
        }
        self.start = start;
        self.goal = goal;
        Ok(self)
    }

    pub fn distance(&self, a: VertexId, b: VertexId) -> f64 {
        let (p, q) = (self.vertex(a), self.vertex(b));
        (q.x - p.x).hypot(q.y - p.y)
    }

    pub fn nearest_vertex(&self, x: f64, y: f64) -> VertexId {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v.x - x).hypot(v.y - y);
            if d < best.0 {
                best = (d, i as VertexId);
            }
        }
        best.1
    }

    /// Directed edge from `from` to `to` with the given direction, if any.
    pub fn find_edge(&self, from: VertexId, to: VertexId, direction: Direction) -> Option<EdgeId> {
        self.out_edges(from)
            .iter()
            .copied()
            .find(|&e| self.edges[e as usize].to == to && self.edges[e as usize].direction == direction)
    }

    /// Heading pointing from `from` roughly toward `to`.
    pub fn heading_towards(&self, from: VertexId, to: VertexId) -> Heading {
        let (p, q) = (self.vertex(from), self.vertex(to));
        Heading::from_vector(q.x - p.x, q.y - p.y)
    }

    /// Undirected reachability over segments accepted by `free`.
    pub fn connected(&self, from: VertexId, to: VertexId, free: impl Fn(SegmentId) -> bool) -> bool {
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([from]);
        seen[from as usize] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for &e in self.out_edges(v) {
                let edge = &self.edges[e as usize];
                if !seen[edge.to as usize] && free(edge.segment) {
                    seen[edge.to as usize] = true;
                    queue.push_back(edge.to);
                }
            }
        }
        false
    }
}

/// Default start and goal positions for a world of the given extent.
pub fn default_endpoints(width_m: f64, height_m: f64) -> ((f64, f64), (f64, f64)) {
    (
        (ENDPOINT_INSET * width_m, ENDPOINT_INSET * height_m),
        ((1.0 - ENDPOINT_INSET) * width_m, (1.0 - ENDPOINT_INSET) * height_m),
    )
}

/// Regular 8-connected lattice covering `grid` at `vertex_spacing` meters.
pub fn build_roadmap(grid: &OccupancyGrid, vertex_spacing: f64) -> Result<Roadmap, WorldError> {
    if vertex_spacing.is_nan() || vertex_spacing < grid.resolution() {
        return Err(WorldError::SpacingBelowResolution {
            spacing: vertex_spacing,
            resolution: grid.resolution(),
        });
    }
    let cols = (grid.width_m() / vertex_spacing + 1e-9).floor() as usize + 1;
    let rows = (grid.height_m() / vertex_spacing + 1e-9).floor() as usize + 1;
    if cols < 2 || rows < 2 {
        return Err(WorldError::SpacingBelowResolution {
            spacing: vertex_spacing,
            resolution: grid.resolution(),
        });
    }
    let mut vertices = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            vertices.push(Vertex {
                x: i as f64 * vertex_spacing,
                y: j as f64 * vertex_spacing,
            });
        }
    }
    let id = |i: usize, j: usize| (j * cols + i) as VertexId;
    let mut segments = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            // E, NE, N, NW: each undirected lattice segment exactly once
            for (di, dj) in [(1i64, 0i64), (1, 1), (0, 1), (-1, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || ni >= cols as i64 || nj >= rows as i64 {
                    continue;
                }
                let (a, b) = (id(i, j), id(ni as usize, nj as usize));
                let (va, vb) = (vertices[a as usize], vertices[b as usize]);
                let footprint = swept_footprint(grid, (va.x, va.y), (vb.x, vb.y));
                debug_assert!(!footprint.is_empty());
                segments.push(Segment {
                    a,
                    b,
                    length: (vb.x - va.x).hypot(vb.y - va.y),
                    footprint,
                });
            }
        }
    }
    let ((sx, sy), (gx, gy)) = default_endpoints(grid.width_m(), grid.height_m());
    let snap = |x: f64, y: f64| {
        let i = ((x / vertex_spacing).round() as usize).min(cols - 1);
        let j = ((y / vertex_spacing).round() as usize).min(rows - 1);
        id(i, j)
    };
    let start = snap(sx, sy);
    let mut goal = snap(gx, gy);
    if goal == start {
        goal = id(cols - 1, rows - 1);
    }
    Ok(Roadmap::assemble(
        vertices,
        segments,
        start,
        goal,
        Some((cols, rows, vertex_spacing)),
    ))
}

/// Pixels touched by the robot rectangle swept from `a` to `b`, clipped to
/// the grid. A pixel counts when its square overlaps the swept rectangle
/// with nonzero area.
pub fn swept_footprint(grid: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> Vec<u32> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (1.0, 0.0) };
    let (nx, ny) = (-uy, ux);
    let (mx, my) = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    let half_len = len / 2.0 + ROBOT_LENGTH_M / 2.0;
    let half_w = ROBOT_WIDTH_M / 2.0;
    let ex = half_len * ux.abs() + half_w * nx.abs();
    let ey = half_len * uy.abs() + half_w * ny.abs();

    let r = grid.resolution();
    let half_px = r / 2.0;
    let clamp_col = |v: f64| (v.max(0.0) as usize).min(grid.width());
    let clamp_row = |v: f64| (v.max(0.0) as usize).min(grid.height());
    let c0 = clamp_col(((mx - ex) / r).floor());
    let c1 = clamp_col(((mx + ex) / r).ceil());
    let r0 = clamp_row(((my - ey) / r).floor());
    let r1 = clamp_row(((my + ey) / r).ceil());

    const TOL: f64 = 1e-9;
    let proj_u = half_px * (ux.abs() + uy.abs());
    let proj_n = half_px * (nx.abs() + ny.abs());
    let mut out = Vec::new();
    for row in r0..r1 {
        let cy = (row as f64 + 0.5) * r;
        if (cy - my).abs() >= ey + half_px - TOL {
            continue;
        }
        for col in c0..c1 {
            let cx = (col as f64 + 0.5) * r;
            if (cx - mx).abs() >= ex + half_px - TOL {
                continue;
            }
            let (px, py) = (cx - mx, cy - my);
            if (px * ux + py * uy).abs() >= half_len + proj_u - TOL {
                continue;
            }
            if (px * nx + py * ny).abs() >= half_w + proj_n - TOL {
                continue;
            }
            out.push(grid.index(col, row) as u32);
        }
    }
    out
}
