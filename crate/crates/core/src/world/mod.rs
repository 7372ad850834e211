//! Ground-truth worlds and the lattice roadmap the robot plans on.

mod generate;
mod grid;
mod pgm;
mod roadmap;
mod truth;

use thiserror::Error;

pub use generate::{generate_world, WorldKind, ENDPOINT_CLEARANCE_M};
pub use grid::OccupancyGrid;
pub use pgm::{read_world, sidecar_path, write_world, Pgm, WorldMeta};
pub use roadmap::{
    build_roadmap, default_endpoints, swept_footprint, Direction, Edge, EdgeId, Heading, Roadmap, Segment, SegmentId,
    Vertex, VertexId, DEFAULT_VERTEX_SPACING_M, ROBOT_LENGTH_M, ROBOT_WIDTH_M,
};
pub use truth::{truth_edge_status, WorldTruth};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("world extent must be positive, got {0} x {1} m")]
    InvalidExtent(f64, f64),
    #[error("{width}x{height} grid cannot hold {cells} cells")]
    DimensionMismatch { width: usize, height: usize, cells: usize },
    #[error("vertex spacing {spacing} m is below grid resolution {resolution} m")]
    SpacingBelowResolution { spacing: f64, resolution: f64 },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("start and goal are both vertex {0}")]
    StartIsGoal(VertexId),
    #[error("segment {0}-{1} has zero length")]
    DegenerateSegment(VertexId, VertexId),
    #[error("segment {0}-{1} footprint lies outside the grid")]
    FootprintOutOfBounds(VertexId, VertexId),
    #[error("unknown world kind {0:?}")]
    UnknownKind(String),
    #[error("no traversable {kind} world for seed {seed} after {attempts} attempts")]
    Unsatisfiable { kind: WorldKind, seed: u64, attempts: u64 },
    #[error("malformed world file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
