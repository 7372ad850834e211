use super::{EdgeId, OccupancyGrid, Roadmap, SegmentId};

/// Ground truth: the grid plus per-segment traversability derived from it.
#[derive(Debug, Clone)]
pub struct WorldTruth {
    grid: OccupancyGrid,
    segment_free: Vec<bool>,
}

impl WorldTruth {
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn segment_free(&self, s: SegmentId) -> bool {
        self.segment_free[s as usize]
    }

    /// `phi(e)`: true when the edge is collision-free.
    pub fn edge_free(&self, roadmap: &Roadmap, e: EdgeId) -> bool {
        self.segment_free(roadmap.edge(e).segment)
    }

    pub fn blocked_segments(&self) -> usize {
        self.segment_free.iter().filter(|f| !**f).count()
    }
}

/// An edge is blocked exactly when any pixel of its footprint is occupied.
pub fn truth_edge_status(grid: &OccupancyGrid, roadmap: &Roadmap) -> WorldTruth {
    let segment_free = roadmap
        .segments()
        .iter()
        .map(|s| s.footprint.iter().all(|&p| !grid.is_occupied(p as usize)))
        .collect();
    WorldTruth {
        grid: grid.clone(),
        segment_free,
    }
}
