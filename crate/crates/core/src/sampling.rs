//! Edge posteriors and determinized worlds drawn from them.
//!
//! A sampled world is the pair `(edge posterior, seed)`. Segment `s` is
//! blocked in world `seed` iff `u(seed, s) < P(blocked)`, where `u` is a
//! SplitMix64 stream keyed by the seed and indexed by the segment. That makes
//! every world a pure function of its seed, lets callers query only the
//! segments they touch, and keeps segments independent of each other. All
//! directed edges over one segment share a single draw.

use crate::sensing::PosteriorGrid;
use crate::world::{EdgeId, Roadmap, SegmentId, WorldTruth};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derivation from a sequence of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(GOLDEN)))
    })
}

#[inline]
fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Anything that says whether a segment is passable.
pub trait EdgeStatus {
    fn segment_free(&self, s: SegmentId) -> bool;

    fn edge_free(&self, roadmap: &Roadmap, e: EdgeId) -> bool {
        self.segment_free(roadmap.edge(e).segment)
    }
}

impl EdgeStatus for WorldTruth {
    fn segment_free(&self, s: SegmentId) -> bool {
        WorldTruth::segment_free(self, s)
    }
}

/// Explicit per-segment status, mostly for fixtures.
impl EdgeStatus for Vec<bool> {
    fn segment_free(&self, s: SegmentId) -> bool {
        self[s as usize]
    }
}

/// Per-segment blocking probability `P(phi(e) = 0 | history)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePosterior {
    probs: Vec<f64>,
}

impl EdgePosterior {
    pub fn from_segment_probs(probs: Vec<f64>) -> Self {
        Self {
            probs: probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn uniform(segments: usize, p: f64) -> Self {
        Self::from_segment_probs(vec![p; segments])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn segment(&self, s: SegmentId) -> f64 {
        self.probs[s as usize]
    }

    #[inline]
    pub fn edge(&self, roadmap: &Roadmap, e: EdgeId) -> f64 {
        self.segment(roadmap.edge(e).segment)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Blocking probability of each segment is the largest pixel posterior
/// under its footprint.
pub fn edge_posterior(posterior: &PosteriorGrid, roadmap: &Roadmap) -> EdgePosterior {
    let probs = roadmap
        .segments()
        .iter()
        .map(|s| {
            s.footprint
                .iter()
                .map(|&p| posterior.get(p as usize))
                .fold(0.0, f64::max)
        })
        .collect();
    EdgePosterior { probs }
}

#[derive(Debug, Clone, Copy)]
pub struct SampledWorld<'a> {
    posterior: &'a EdgePosterior,
    seed: u64,
    key: u64,
}

impl<'a> SampledWorld<'a> {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` attached to segment `s` in this world.
    #[inline]
    pub fn draw(&self, s: SegmentId) -> f64 {
        unit(mix64(self.key.wrapping_add((s as u64 + 1).wrapping_mul(GOLDEN))))
    }

    #[inline]
    pub fn segment_blocked(&self, s: SegmentId) -> bool {
        self.draw(s) < self.posterior.segment(s)
    }

    /// Full per-segment free/blocked bitmap.
    pub fn materialize(&self) -> Vec<bool> {
        (0..self.posterior.len() as SegmentId)
            .map(|s| !self.segment_blocked(s))
            .collect()
    }
}

impl EdgeStatus for SampledWorld<'_> {
    #[inline]
    fn segment_free(&self, s: SegmentId) -> bool {
        !self.segment_blocked(s)
    }
}

pub fn sample_world(ep: &EdgePosterior, seed: u64) -> SampledWorld<'_> {
    SampledWorld {
        posterior: ep,
        seed,
        key: mix64(seed ^ 0x6A09_E667_F3BC_C908),
    }
}

/// `n` worlds with seeds `base_seed, base_seed + 1, ...`.
pub fn sample_worlds(ep: &EdgePosterior, n: usize, base_seed: u64) -> Vec<SampledWorld<'_>> {
    (0..n as u64)
        .map(|i| sample_world(ep, base_seed.wrapping_add(i)))
        .collect()
}
