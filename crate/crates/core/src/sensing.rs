//! Limited-range noisy occupancy observations and the per-pixel Bayes filter.
//!
//! Each observation reports every pixel whose center lies in a square window
//! around the robot. A pixel at distance `d` is reported correctly with
//! probability `max(exp(-eta d^2), p_min)` and flipped otherwise. Draws are
//! i.i.d. across pixels and across observations.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{EdgeId, OccupancyGrid, Pgm, Roadmap, SegmentId, WorldError};

/// Occupancy assumed for pixels the robot has never sensed.
pub const UNOBSERVED_PRIOR: f64 = 0.01;
/// Posterior entries are kept inside `[EPSILON, 1 - EPSILON]`.
pub const EPSILON: f64 = 1e-6;
/// Side of the square observation window, meters.
pub const OBSERVATION_EXTENT_M: f64 = 50.0;

pub const ETA_LOW: f64 = 1e-4;
pub const ETA_MED: f64 = 1e-3;
pub const ETA_HIGH: f64 = 1e-2;
pub const DEFAULT_P_MIN: f64 = 0.6;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("noise model needs eta >= 0 and 0.5 < p_min <= 1 (eta={eta}, p_min={p_min})")]
    InvalidNoise { eta: f64, p_min: f64 },
    #[error("robot position ({0}, {1}) is outside the grid")]
    OutOfBounds(f64, f64),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub eta: f64,
    pub p_min: f64,
}

impl NoiseModel {
    pub fn new(eta: f64, p_min: f64) -> Result<Self, SensingError> {
        if !(eta >= 0.0 && eta.is_finite() && p_min > 0.5 && p_min <= 1.0) {
            return Err(SensingError::InvalidNoise { eta, p_min });
        }
        Ok(Self { eta, p_min })
    }

    pub fn low() -> Self {
        Self {
            eta: ETA_LOW,
            p_min: DEFAULT_P_MIN,
        }
    }

    pub fn med() -> Self {
        Self {
            eta: ETA_MED,
            p_min: DEFAULT_P_MIN,
        }
    }

    pub fn high() -> Self {
        Self {
            eta: ETA_HIGH,
            p_min: DEFAULT_P_MIN,
        }
    }

    /// Noise-free sensing.
    pub fn perfect() -> Self {
        Self { eta: 0.0, p_min: 1.0 }
    }

    /// Probability that a pixel `d` meters away is reported correctly.
    #[inline]
    pub fn correctness_probability(&self, d: f64) -> f64 {
        (-self.eta * d * d).exp().max(self.p_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelReading {
    pub index: u32,
    pub occupied: bool,
    /// Correctness probability used to draw this reading.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub center: (f64, f64),
    pub extent: f64,
    pub samples: Vec<PixelReading>,
}

impl Observation {
    /// Fraction of readings that agree with `truth`.
    pub fn correct_fraction(&self, truth: &OccupancyGrid) -> f64 {
        let ok = self
            .samples
            .iter()
            .filter(|s| s.occupied == truth.is_occupied(s.index as usize))
            .count();
        ok as f64 / self.samples.len().max(1) as f64
    }
}

/// Pixel indices whose centers fall inside the observation window.
pub fn window_pixels(grid: &OccupancyGrid, center: (f64, f64), extent: f64) -> impl Iterator<Item = usize> + '_ {
    let r = grid.resolution();
    let half = extent / 2.0;
    // pixel center (c + 0.5) r within [x - half, x + half)
    let lo = |v: f64| ((v - half) / r - 0.5).ceil().max(0.0) as usize;
    let hi = |v: f64, n: usize| (((v + half) / r - 0.5).ceil().max(0.0) as usize).min(n);
    let (c0, c1) = (lo(center.0), hi(center.0, grid.width()));
    let (r0, r1) = (lo(center.1), hi(center.1, grid.height()));
    (r0..r1).flat_map(move |row| (c0..c1).map(move |col| row * grid.width() + col))
}

pub fn sense(
    truth: &OccupancyGrid,
    robot_pos: (f64, f64),
    model: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<Observation, SensingError> {
    if !truth.contains_point(robot_pos.0, robot_pos.1) {
        return Err(SensingError::OutOfBounds(robot_pos.0, robot_pos.1));
    }
    let samples = window_pixels(truth, robot_pos, OBSERVATION_EXTENT_M)
        .map(|i| {
            let (cx, cy) = truth.pixel_center(i);
            let p = model.correctness_probability((cx - robot_pos.0).hypot(cy - robot_pos.1));
            let correct = p >= 1.0 || rng.gen::<f64>() < p;
            PixelReading {
                index: i as u32,
                occupied: truth.is_occupied(i) == correct,
                p,
            }
        })
        .collect();
    Ok(Observation {
        center: robot_pos,
        extent: OBSERVATION_EXTENT_M,
        samples,
    })
}

/// One Bayes step for a binary cell: prior `q`, reading `occupied`,
/// reading correct with probability `p`. Result is clamped to
/// `[EPSILON, 1 - EPSILON]`.
#[inline]
pub fn bayes_posterior(q: f64, p: f64, occupied: bool) -> f64 {
    let (l_occ, l_free) = if occupied { (p, 1.0 - p) } else { (1.0 - p, p) };
    let num = l_occ * q;
    let den = num + l_free * (1.0 - q);
    let post = if den > 0.0 { num / den } else { q };
    post.clamp(EPSILON, 1.0 - EPSILON)
}

/// Per-pixel posterior probability of occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    width: usize,
    height: usize,
    resolution: f64,
    probs: Vec<f64>,
    /// Pixels whose truth was revealed by traversal; readings no longer move them.
    known: Vec<bool>,
}

impl PosteriorGrid {
    /// Every pixel at the optimistic unobserved prior.
    pub fn prior_for(grid: &OccupancyGrid) -> Self {
        Self::uniform(grid.width(), grid.height(), grid.resolution(), UNOBSERVED_PRIOR)
    }

    pub fn uniform(width: usize, height: usize, resolution: f64, q: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            probs: vec![q.clamp(0.0, 1.0); width * height],
            known: vec![false; width * height],
        }
    }

    pub fn from_probs(width: usize, height: usize, resolution: f64, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), width * height);
        Self {
            width,
            height,
            resolution,
            probs: probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            known: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.known[index]
    }

    pub fn bayes_update(&mut self, obs: &Observation) {
        for s in &obs.samples {
            let i = s.index as usize;
            if !self.known[i] {
                self.probs[i] = bayes_posterior(self.probs[i], s.p, s.occupied);
            }
        }
    }

    /// Sets the footprint pixels of a traversed segment to their true state.
    pub fn reveal_segment(&mut self, truth: &OccupancyGrid, roadmap: &Roadmap, segment: SegmentId) {
        for &p in &roadmap.segment(segment).footprint {
            let i = p as usize;
            self.probs[i] = if truth.is_occupied(i) { 1.0 - EPSILON } else { EPSILON };
            self.known[i] = true;
        }
    }

    pub fn reveal_traversed(&mut self, truth: &OccupancyGrid, edge: EdgeId, roadmap: &Roadmap) {
        self.reveal_segment(truth, roadmap, roadmap.edge(edge).segment);
    }

    /// 16-bit quantized raster of the probabilities.
    pub fn to_pgm(&self) -> Pgm {
        Pgm {
            width: self.width,
            height: self.height,
            maxval: u16::MAX,
            samples: self
                .probs
                .iter()
                .map(|&p| (p * u16::MAX as f64).round() as u16)
                .collect(),
        }
    }

    pub fn from_pgm(pgm: &Pgm, resolution: f64) -> Self {
        let m = pgm.maxval as f64;
        Self::from_probs(
            pgm.width,
            pgm.height,
            resolution,
            pgm.samples.iter().map(|&s| s as f64 / m).collect(),
        )
    }

    /// Writes `<path>` (P5, maxval 65535) and a `.json` sidecar with the resolution.
    pub fn write(&self, path: &Path) -> Result<(), SensingError> {
        fs::write(path, self.to_pgm().encode()).map_err(WorldError::from)?;
        let meta = serde_json::json!({ "resolution_m": self.resolution });
        fs::write(crate::world::sidecar_path(path), meta.to_string()).map_err(WorldError::from)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, SensingError> {
        let pgm = Pgm::decode(&fs::read(path).map_err(WorldError::from)?)?;
        let meta: serde_json::Value =
            serde_json::from_slice(&fs::read(crate::world::sidecar_path(path)).map_err(WorldError::from)?)
                .map_err(|e| WorldError::Format(e.to_string()))?;
        let resolution = meta["resolution_m"]
            .as_f64()
            .ok_or_else(|| WorldError::Format("sidecar lacks resolution_m".into()))?;
        Ok(Self::from_pgm(&pgm, resolution))
    }
}
