//! Procedural stand-ins for real off-road maps.
//!
//! Forest worlds scatter dense clumps of tree discs around Poisson-disk
//! cluster centers. Desert worlds drop a few large blobs on open ground.
//! Both clear a disc around the default start and goal and reject worlds
//! whose induced lattice roadmap cannot connect them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_roadmap, default_endpoints, truth_edge_status, OccupancyGrid, WorldError, DEFAULT_VERTEX_SPACING_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    Forest,
    Desert,
}

impl WorldKind {
    /// Accepted occupied-pixel fraction range.
    pub fn occupancy_range(self) -> (f64, f64) {
        match self {
            WorldKind::Forest => (0.20, 0.35),
            WorldKind::Desert => (0.03, 0.10),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WorldKind::Forest => "forest",
            WorldKind::Desert => "desert",
        }
    }
}

impl std::fmt::Display for WorldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WorldKind {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "forest" => Ok(WorldKind::Forest),
            "desert" => Ok(WorldKind::Desert),
            _ => Err(WorldError::UnknownKind(s.to_string())),
        }
    }
}

/// Radius kept free around start and goal, meters.
pub const ENDPOINT_CLEARANCE_M: f64 = 6.0;
const MAX_ATTEMPTS: u64 = 64;

pub fn generate_world(
    kind: WorldKind,
    width_m: f64,
    height_m: f64,
    resolution: f64,
    rng_seed: u64,
) -> Result<OccupancyGrid, WorldError> {
    if !(width_m > 0.0 && height_m > 0.0) {
        return Err(WorldError::InvalidExtent(width_m, height_m));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(WorldError::InvalidResolution(resolution));
    }
    let w = (width_m / resolution).round().max(1.0) as usize;
    let h = (height_m / resolution).round().max(1.0) as usize;
    let (lo, hi) = kind.occupancy_range();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = rng_seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = OccupancyGrid::free(w, h, resolution)?;
        match kind {
            WorldKind::Forest => scatter_forest(&mut grid, &mut rng),
            WorldKind::Desert => scatter_desert(&mut grid, &mut rng),
        }
        let (s, g) = default_endpoints(grid.width_m(), grid.height_m());
        grid.fill_disc(s.0, s.1, ENDPOINT_CLEARANCE_M, false);
        grid.fill_disc(g.0, g.1, ENDPOINT_CLEARANCE_M, false);
        let frac = grid.occupancy_fraction();
        if frac < lo || frac > hi {
            continue;
        }
        let spacing = DEFAULT_VERTEX_SPACING_M.max(resolution);
        let roadmap = build_roadmap(&grid, spacing)?;
        let truth = truth_edge_status(&grid, &roadmap);
        if roadmap.connected(roadmap.start(), roadmap.goal(), |s| truth.segment_free(s)) {
            return Ok(grid);
        }
    }
    Err(WorldError::Unsatisfiable {
        kind,
        seed: rng_seed,
        attempts: MAX_ATTEMPTS,
    })
}

fn uniform_in_disc(rng: &mut impl Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    (r * a.cos(), r * a.sin())
}

/// Dart-throwing Poisson-disk sample of cluster centers.
fn poisson_centers(rng: &mut impl Rng, w: f64, h: f64, min_dist: f64, tries: usize) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for _ in 0..tries {
        let p = (rng.gen::<f64>() * w, rng.gen::<f64>() * h);
        if pts.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= min_dist) {
            pts.push(p);
        }
    }
    pts
}

fn scatter_forest(grid: &mut OccupancyGrid, rng: &mut impl Rng) {
    let (w, h) = (grid.width_m(), grid.height_m());
    let target = rng.gen_range(0.22..0.30);
    // tight clumps of overlapping crowns, so the open ground between them
    // stays connected
    let centers = poisson_centers(rng, w, h, 18.0, 4000);
    for (cx, cy) in centers {
        let trees = rng.gen_range(30..50);
        for _ in 0..trees {
            let (dx, dy) = uniform_in_disc(rng, 5.5);
            let r = rng.gen_range(1.5..3.0);
            grid.fill_disc(cx + dx, cy + dy, r, true);
        }
        if grid.occupancy_fraction() >= target {
            break;
        }
    }
    // a few isolated trees in the gaps
    let singles = (w * h / 1000.0) as usize;
    for _ in 0..singles {
        let r = rng.gen_range(0.4..0.9);
        grid.fill_disc(rng.gen::<f64>() * w, rng.gen::<f64>() * h, r, true);
    }
}

fn scatter_desert(grid: &mut OccupancyGrid, rng: &mut impl Rng) {
    let (w, h) = (grid.width_m(), grid.height_m());
    let target = rng.gen_range(0.045..0.075);
    for _ in 0..200 {
        let (cx, cy) = (rng.gen::<f64>() * w, rng.gen::<f64>() * h);
        let lobes = rng.gen_range(3..7);
        for _ in 0..lobes {
            let (dx, dy) = uniform_in_disc(rng, 3.0);
            let r = rng.gen_range(1.5..4.0);
            grid.fill_disc(cx + dx, cy + dy, r, true);
        }
        if grid.occupancy_fraction() >= target {
            break;
        }
    }
}
