//! Proposer/acceptor replanning policies.
//!
//! Every policy proposes one or more plans from the current posterior and
//! accepts one of them:
//!
//! * DREAMS samples `n_plans` worlds and plans on each. It scores every
//!   (plan, speed profile) candidate against `n_eval_worlds` fresh worlds and
//!   keeps the candidate with the lowest inverse CVaR (mean of the best
//!   fraction of costs).
//! * DRPS plans on a single sampled world and accepts that plan.
//! * Sampled A* plans on many worlds and accepts the plan whose edges appear
//!   in the most proposals on average.
//! * Direct runs one search on expected cost, with the blocking probability
//!   standing in for the collision indicator.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{
    plan_through_blocked, plan_with_reverse_retry, search, Attempt, Observed, Plan, PlanSource, PlanState, SpeedProfile,
};
use crate::sampling::{derive_seed, sample_world, EdgePosterior, EdgeStatus};
use crate::world::{EdgeId, Roadmap, SegmentId};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no sampled world admits a path to the goal ({attempts} worlds tried)")]
    NoPlanFound { attempts: usize },
    #[error("cannot aggregate an empty cost list")]
    EmptyInput,
    #[error("invalid evaluation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    /// Collision factor applied to the immediate edge.
    pub alpha: f64,
    /// Fraction of lowest costs averaged by the inverse CVaR.
    pub cvar_fraction: f64,
    pub n_eval_worlds: usize,
    pub n_plans: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            cvar_fraction: 0.75,
            n_eval_worlds: 10_000,
            n_plans: 100,
        }
    }
}

impl EvalParams {
    pub fn validated(self) -> Result<Self, PolicyError> {
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(PolicyError::InvalidParams(format!(
                "alpha must be >= 1, got {}",
                self.alpha
            )));
        }
        if !(self.cvar_fraction > 0.0 && self.cvar_fraction <= 1.0) {
            return Err(PolicyError::InvalidParams(format!(
                "cvar_fraction must be in (0, 1], got {}",
                self.cvar_fraction
            )));
        }
        if self.n_eval_worlds == 0 || self.n_plans == 0 {
            return Err(PolicyError::InvalidParams("sample counts must be >= 1".into()));
        }
        Ok(self)
    }
}

/// Episode cost split. `total = traversal_time + collision_cost`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub traversal_time: f64,
    pub collision_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(traversal_time: f64, collision_cost: f64) -> Self {
        Self {
            traversal_time,
            collision_cost,
            total: traversal_time + collision_cost,
        }
    }
}

/// Receding-horizon plan cost on one world: traversal time plus, for every
/// blocked edge, its speed scaled by `alpha` on the first edge and by 1
/// afterwards.
pub fn evaluate_plan(plan: &Plan, roadmap: &Roadmap, world: &impl EdgeStatus, alpha: f64) -> f64 {
    let mut cost = plan.traversal_time(roadmap);
    for (i, (&e, &v)) in plan.edges.iter().zip(&plan.speeds).enumerate() {
        if !world.edge_free(roadmap, e) {
            cost += v * if i == 0 { alpha } else { 1.0 };
        }
    }
    cost
}

/// Number of entries kept by the inverse CVaR.
fn kept(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Mean of the lowest `ceil(fraction * n)` costs.
pub fn inverse_cvar(costs: &[f64], fraction: f64) -> Result<f64, PolicyError> {
    if costs.is_empty() {
        return Err(PolicyError::EmptyInput);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PolicyError::InvalidParams(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let mut sorted = costs.to_vec();
    Ok(inverse_cvar_in_place(&mut sorted, fraction))
}

fn inverse_cvar_in_place(costs: &mut [f64], fraction: f64) -> f64 {
    costs.sort_unstable_by(f64::total_cmp);
    let k = kept(costs.len(), fraction);
    costs[..k].iter().sum::<f64>() / k as f64
}

/// Everything a policy sees when asked for the next plan.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub roadmap: &'a Roadmap,
    pub edge_posterior: &'a EdgePosterior,
    pub state: PlanState,
    pub observed: Observed<'a>,
    /// Per-step seed; planning and evaluation worlds derive from it.
    pub seed: u64,
    /// Run proposals and evaluations on the rayon pool.
    pub parallel: bool,
}

/// Seeds of the `i`-th planning world and the first evaluation world.
/// Planning seeds have the top bit clear and evaluation seeds have it set,
/// so the two families never overlap.
pub fn planning_seed(step_seed: u64, i: usize) -> u64 {
    (derive_seed(&[step_seed, 0x504C_414E]) >> 2) + i as u64
}

pub fn evaluation_seed(step_seed: u64, j: usize) -> u64 {
    ((derive_seed(&[step_seed, 0x4556_414C]) >> 2) | (1 << 63)) + j as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub plan: Plan,
    /// First-edge speed of the accepted candidate, m/s.
    pub first_edge_speed: f64,
    pub profile: SpeedProfile,
    /// Plans proposed (before deduplication).
    pub proposals: usize,
    /// Aggregate cost of the accepted candidate, when the acceptor scores.
    pub score: Option<f64>,
    pub proposer_secs: f64,
    pub acceptor_secs: f64,
}

/// Plans on `n` sampled worlds in seed order. A world with no
/// collision-free path gets the cheapest path through its blocked edges
/// instead; worlds where even that fails are skipped, giving up after
/// `4 n + 16` worlds.
fn propose(ctx: &StepContext<'_>, profile: &SpeedProfile, n: usize, alpha: f64) -> Result<Vec<Plan>, PolicyError> {
    let plan_one = |i: usize| {
        let seed = planning_seed(ctx.seed, i);
        let world = sample_world(ctx.edge_posterior, seed);
        plan_with_reverse_retry(&world, ctx.roadmap, ctx.state, profile, ctx.observed)
            .or_else(|| plan_through_blocked(&world, ctx.roadmap, ctx.state, profile, ctx.observed, alpha))
            .map(|mut p| {
                p.source = PlanSource::World(seed);
                p
            })
    };
    let cap = 4 * n + 16;
    let mut plans = Vec::with_capacity(n);
    let mut next = 0;
    while plans.len() < n && next < cap {
        let batch = (n - plans.len()).min(cap - next);
        let range = next..next + batch;
        let found: Vec<Option<Plan>> = if ctx.parallel {
            range.into_par_iter().map(plan_one).collect()
        } else {
            range.map(plan_one).collect()
        };
        plans.extend(found.into_iter().flatten());
        next += batch;
    }
    if plans.is_empty() {
        return Err(PolicyError::NoPlanFound { attempts: next });
    }
    Ok(plans)
}

/// Traversal time plus per-edge collision penalties of one timed candidate.
struct Candidate {
    base: f64,
    penalties: Vec<(usize, f64)>,
}

/// Scores each candidate against the same `n_eval_worlds` worlds and
/// returns the inverse CVaR of each.
fn aggregate_costs(ctx: &StepContext<'_>, candidates: &[Plan], params: &EvalParams) -> Vec<f64> {
    // shared segment table so every world draws each segment once
    let mut local: HashMap<SegmentId, usize> = HashMap::new();
    let mut segs = Vec::new();
    let scored: Vec<Candidate> = candidates
        .iter()
        .map(|plan| {
            let penalties = plan
                .edges
                .iter()
                .zip(&plan.speeds)
                .enumerate()
                .map(|(i, (&e, &v))| {
                    let s = ctx.roadmap.edge(e).segment;
                    let idx = *local.entry(s).or_insert_with(|| {
                        segs.push(s);
                        segs.len() - 1
                    });
                    (idx, v * if i == 0 { params.alpha } else { 1.0 })
                })
                .collect();
            Candidate {
                base: plan.traversal_time(ctx.roadmap),
                penalties,
            }
        })
        .collect();

    let words = segs.len().div_ceil(64).max(1);
    let fill = |j: usize, row: &mut [u64]| {
        let world = sample_world(ctx.edge_posterior, evaluation_seed(ctx.seed, j));
        for (k, &s) in segs.iter().enumerate() {
            if world.segment_blocked(s) {
                row[k / 64] |= 1 << (k % 64);
            }
        }
    };
    let mut blocked = vec![0u64; words * params.n_eval_worlds];
    if ctx.parallel {
        blocked
            .par_chunks_mut(words)
            .enumerate()
            .for_each(|(j, row)| fill(j, row));
    } else {
        blocked.chunks_mut(words).enumerate().for_each(|(j, row)| fill(j, row));
    }

    let score = |c: &Candidate| {
        let mut costs: Vec<f64> = blocked
            .chunks(words)
            .map(|row| {
                let mut cost = c.base;
                for &(k, pen) in &c.penalties {
                    if row[k / 64] >> (k % 64) & 1 == 1 {
                        cost += pen;
                    }
                }
                cost
            })
            .collect();
        inverse_cvar_in_place(&mut costs, params.cvar_fraction)
    };
    if ctx.parallel {
        scored.par_iter().map(score).collect()
    } else {
        scored.iter().map(score).collect()
    }
}

/// Drops repeated edge sequences, keeping the first occurrence.
fn dedup_plans(plans: Vec<Plan>) -> Vec<Plan> {
    let mut seen = std::collections::HashSet::new();
    plans.into_iter().filter(|p| seen.insert(p.edges.clone())).collect()
}

/// DREAMS: sample, plan, evaluate, aggregate, select.
///
/// `speed_candidates` holds one profile for DREAMS-Fixed or several
/// first-edge variants for DREAMS-Adaptive. Plans are searched under the
/// first profile with its first-edge override removed and then retimed under
/// every candidate profile.
pub fn dreams_step(
    ctx: &StepContext<'_>,
    params: &EvalParams,
    speed_candidates: &[SpeedProfile],
) -> Result<StepOutcome, PolicyError> {
    let params = params.validated()?;
    let first = speed_candidates
        .first()
        .ok_or_else(|| PolicyError::InvalidParams("no speed profiles".into()))?;
    let base = SpeedProfile {
        first_edge_speed: None,
        ..*first
    };
    let mut profiles = speed_candidates.to_vec();
    profiles.sort_by(|a, b| a.nominal_first_speed().total_cmp(&b.nominal_first_speed()));

    let t0 = Instant::now();
    let proposed = propose(ctx, &base, params.n_plans, params.alpha)?;
    let proposals = proposed.len();
    let proposer_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let plans = dedup_plans(proposed);
    let mut candidates = Vec::with_capacity(plans.len() * profiles.len());
    for plan in &plans {
        for prof in &profiles {
            candidates.push(if speed_candidates.len() == 1 && prof.first_edge_speed.is_none() {
                plan.clone()
            } else {
                plan.retimed(ctx.roadmap, prof, ctx.observed)
            });
        }
    }
    let scores = aggregate_costs(ctx, &candidates, &params);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    let acceptor_secs = t1.elapsed().as_secs_f64();
    let profile = profiles[best % profiles.len()];
    let plan = candidates.swap_remove(best);
    Ok(StepOutcome {
        first_edge_speed: plan.speeds.first().copied().unwrap_or(profile.nominal_first_speed()),
        plan,
        profile,
        proposals,
        score: Some(scores[best]),
        proposer_secs,
        acceptor_secs,
    })
}

/// DRPS: one sampled world, one plan. Only `params.alpha` is used, to price
/// blocked edges when the world has no free path.
pub fn drps_step(
    ctx: &StepContext<'_>,
    profile: &SpeedProfile,
    params: &EvalParams,
) -> Result<StepOutcome, PolicyError> {
    let params = params.validated()?;
    let t0 = Instant::now();
    let mut plans = propose(ctx, profile, 1, params.alpha)?;
    let proposer_secs = t0.elapsed().as_secs_f64();
    let plan = plans.swap_remove(0);
    Ok(StepOutcome {
        first_edge_speed: plan.speeds.first().copied().unwrap_or(profile.nominal_first_speed()),
        plan,
        profile: *profile,
        proposals: 1,
        score: None,
        proposer_secs,
        acceptor_secs: 0.0,
    })
}

/// Fraction of `plans` containing each edge.
pub fn edge_centrality(plans: &[Plan]) -> HashMap<EdgeId, f64> {
    let mut counts: HashMap<EdgeId, usize> = HashMap::new();
    for p in plans {
        let mut edges = p.edges.clone();
        edges.sort_unstable();
        edges.dedup();
        for e in edges {
            *counts.entry(e).or_default() += 1;
        }
    }
    let n = plans.len() as f64;
    counts.into_iter().map(|(e, c)| (e, c as f64 / n)).collect()
}

/// Mean centrality over a plan's edges. Empty plans score 0.
pub fn mean_centrality(plan: &Plan, centrality: &HashMap<EdgeId, f64>) -> f64 {
    if plan.is_empty() {
        return 0.0;
    }
    plan.edges
        .iter()
        .map(|e| centrality.get(e).copied().unwrap_or(0.0))
        .sum::<f64>()
        / plan.len() as f64
}

/// Index of the plan with the highest mean edge centrality; ties go to the
/// lowest index.
pub fn most_central(plans: &[Plan]) -> Option<(usize, f64)> {
    let centrality = edge_centrality(plans);
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in plans.iter().enumerate() {
        let s = mean_centrality(p, &centrality);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

pub fn sampled_astar_step(
    ctx: &StepContext<'_>,
    profile: &SpeedProfile,
    params: &EvalParams,
) -> Result<StepOutcome, PolicyError> {
    let params = params.validated()?;
    let t0 = Instant::now();
    let plans = propose(ctx, profile, params.n_plans, params.alpha)?;
    let proposer_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (best, score) = most_central(&plans).expect("propose returns at least one plan");
    let acceptor_secs = t1.elapsed().as_secs_f64();
    let proposals = plans.len();
    let plan = plans.into_iter().nth(best).expect("index in range");
    Ok(StepOutcome {
        first_edge_speed: plan.speeds.first().copied().unwrap_or(profile.nominal_first_speed()),
        plan,
        profile: *profile,
        proposals,
        score: Some(score),
        proposer_secs,
        acceptor_secs,
    })
}

/// One search on expected cost: `w(e) + P(blocked) * speed * tau(e)`, with
/// `tau = alpha` on edges leaving the robot's vertex.
pub fn direct_step(
    ctx: &StepContext<'_>,
    profile: &SpeedProfile,
    params: &EvalParams,
) -> Result<StepOutcome, PolicyError> {
    let params = params.validated()?;
    let t0 = Instant::now();
    let here = ctx.state.vertex;
    let run = |allow_reverse: bool| {
        search(
            ctx.roadmap,
            ctx.state,
            ctx.roadmap.goal(),
            allow_reverse,
            |_, edge, root| {
                let v = profile.speed(edge, ctx.observed.contains(edge.segment), root);
                let tau = if edge.from == here { params.alpha } else { 1.0 };
                Some(edge.length / v + ctx.edge_posterior.segment(edge.segment) * v * tau)
            },
        )
        .map(|edges| (edges, allow_reverse))
    };
    let (edges, reversed) = run(false)
        .or_else(|| run(true))
        .ok_or(PolicyError::NoPlanFound { attempts: 1 })?;
    let plan = Plan {
        edges,
        speeds: Vec::new(),
        source: PlanSource::Direct,
        attempt: if reversed {
            Attempt::WithReverse
        } else {
            Attempt::ForwardOnly
        },
    }
    .retimed(ctx.roadmap, profile, ctx.observed);
    let proposer_secs = t0.elapsed().as_secs_f64();
    Ok(StepOutcome {
        first_edge_speed: plan.speeds.first().copied().unwrap_or(profile.nominal_first_speed()),
        plan,
        profile: *profile,
        proposals: 1,
        score: None,
        proposer_secs,
        acceptor_secs: 0.0,
    })
}

/// Expected cost of a plan under an edge posterior, as minimized by Direct.
pub fn expected_cost(plan: &Plan, roadmap: &Roadmap, ep: &EdgePosterior, alpha: f64, here: u32) -> f64 {
    plan.edges
        .iter()
        .zip(&plan.speeds)
        .map(|(&e, &v)| {
            let edge = roadmap.edge(e);
            let tau = if edge.from == here { alpha } else { 1.0 };
            edge.length / v + ep.segment(edge.segment) * v * tau
        })
        .sum()
}
