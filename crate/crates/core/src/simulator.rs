//! Closed-loop episodes: sense, update the posterior, plan, move, pay.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{oracle_plan, Observed, Plan, PlanError, PlanState, SpeedProfile};
use crate::policies::{
    direct_step, dreams_step, drps_step, sampled_astar_step, CostBreakdown, EvalParams, PolicyError, StepContext,
    StepOutcome,
};
use crate::sampling::{derive_seed, edge_posterior};
use crate::sensing::{sense, window_pixels, NoiseModel, PosteriorGrid, SensingError, OBSERVATION_EXTENT_M};
use crate::world::{EdgeId, Heading, Roadmap, VertexId, WorldTruth};

/// Sensor period, seconds.
pub const OBSERVATION_PERIOD_S: f64 = 1.0;
/// Motion per DREAMS-Adaptive step before the next replan, seconds.
pub const ADAPTIVE_STEP_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DreamsFixed,
    DreamsAdaptive,
    Drps,
    SampledAstar,
    Direct,
    /// Full-information reference driven at top speed.
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::DreamsFixed,
        Algorithm::DreamsAdaptive,
        Algorithm::Drps,
        Algorithm::SampledAstar,
        Algorithm::Direct,
        Algorithm::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DreamsFixed => "dreams-fixed",
            Algorithm::DreamsAdaptive => "dreams-adaptive",
            Algorithm::Drps => "drps",
            Algorithm::SampledAstar => "sampled-astar",
            Algorithm::Direct => "direct",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown algorithm {0:?}")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step {step}: {source}")]
    Policy {
        step: usize,
        source: PolicyError,
        /// Everything executed before the failing step.
        partial: Box<EpisodeLog>,
    },
    #[error(transparent)]
    Oracle(#[from] PlanError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("oracle time is zero; start equals goal")]
    ZeroOracleTime,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where the robot is between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub vertex: VertexId,
    pub heading: Heading,
    pub sim_time: f64,
    /// Pixels inside any past observation window.
    pub ever_observed: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutedEdge {
    pub edge: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub speed: f64,
    pub duration: f64,
    pub collision: bool,
    /// Collision cost charged for this traversal.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub vertex: VertexId,
    pub heading: u8,
    /// Accepted plan at this step.
    pub plan: Vec<EdgeId>,
    pub plan_speeds: Vec<f64>,
    pub executed: Vec<ExecutedEdge>,
    /// Observations taken so far, including this step's.
    pub observations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ReachedGoal,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub eta: f64,
    pub p_min: f64,
    pub alpha: f64,
    pub outcome: Outcome,
    pub steps: usize,
    pub observations: usize,
    pub collisions: usize,
    pub cost: CostBreakdown,
    pub oracle_time: f64,
    pub suboptimality: f64,
}

/// Everything that happened in one episode. Contains no wall-clock data,
/// so replays compare bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine {
    Step(StepRecord),
    Summary(EpisodeSummary),
}

impl EpisodeLog {
    pub fn executed(&self) -> impl Iterator<Item = &ExecutedEdge> {
        self.records.iter().flat_map(|r| &r.executed)
    }

    /// One JSON object per step, then the summary.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), SimError> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &LogLine::Step(r.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &LogLine::Summary(self.summary.clone()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self, SimError> {
        let mut records = Vec::new();
        let mut summary = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                LogLine::Step(r) => records.push(r),
                LogLine::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or_else(|| {
            serde_json::Error::io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "missing summary record",
            ))
        })?;
        Ok(Self { records, summary })
    }
}

/// Wall-clock spent inside the policy, summed over steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub proposer_secs: f64,
    pub acceptor_secs: f64,
    pub policy_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub log: EpisodeLog,
    pub timing: Timing,
}

/// `J / T_opt`.
pub fn suboptimality(cost: &CostBreakdown, oracle_time: f64) -> Result<f64, SimError> {
    if oracle_time <= 0.0 {
        return Err(SimError::ZeroOracleTime);
    }
    Ok((cost.traversal_time + cost.collision_cost) / oracle_time)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Policy invocations before giving up; `None` means `10 |V|`.
    pub max_steps: Option<usize>,
    /// Spread proposals and evaluations over the rayon pool.
    pub parallel: bool,
}

pub fn run_episode(
    truth: &WorldTruth,
    roadmap: &Roadmap,
    algorithm: Algorithm,
    noise: NoiseModel,
    params: EvalParams,
    seed: u64,
) -> Result<EpisodeResult, SimError> {
    run_episode_with(truth, roadmap, algorithm, noise, params, seed, RunOptions::default())
}

struct Episode<'a> {
    truth: &'a WorldTruth,
    roadmap: &'a Roadmap,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    posterior: PosteriorGrid,
    robot: RobotState,
    next_observation: f64,
    observations: usize,
    cost: (f64, f64),
    collisions: usize,
    alpha: f64,
}

impl Episode<'_> {
    fn observe(&mut self, pos: (f64, f64)) -> Result<(), SimError> {
        let obs = sense(self.truth.grid(), pos, &self.noise, &mut self.rng)?;
        self.posterior.bayes_update(&obs);
        for i in window_pixels(self.truth.grid(), pos, OBSERVATION_EXTENT_M) {
            self.robot.ever_observed[i] = true;
        }
        self.observations += 1;
        Ok(())
    }

    fn observed_segments(&self) -> Vec<bool> {
        self.roadmap
            .segments()
            .iter()
            .map(|s| s.footprint.iter().all(|&p| self.robot.ever_observed[p as usize]))
            .collect()
    }

    /// Drives one edge, sensing on the 1 Hz clock along the way.
    fn traverse(&mut self, eid: EdgeId, speed: f64) -> Result<ExecutedEdge, SimError> {
        let edge = self.roadmap.edge(eid);
        let (a, b) = (self.roadmap.vertex(edge.from), self.roadmap.vertex(edge.to));
        let duration = edge.length / speed;
        let t0 = self.robot.sim_time;
        while self.next_observation <= t0 + duration {
            let f = ((self.next_observation - t0) / duration).clamp(0.0, 1.0);
            self.observe((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))?;
            self.next_observation += OBSERVATION_PERIOD_S;
        }
        let collision = !self.truth.segment_free(edge.segment);
        let penalty = if collision { self.alpha * speed } else { 0.0 };
        self.robot.sim_time = t0 + duration;
        self.robot.vertex = edge.to;
        self.robot.heading = edge.heading;
        self.posterior
            .reveal_segment(self.truth.grid(), self.roadmap, edge.segment);
        self.cost.0 += duration;
        self.cost.1 += penalty;
        self.collisions += collision as usize;
        Ok(ExecutedEdge {
            edge: eid,
            from: edge.from,
            to: edge.to,
            speed,
            duration,
            collision,
            penalty,
        })
    }
}

pub fn run_episode_with(
    truth: &WorldTruth,
    roadmap: &Roadmap,
    algorithm: Algorithm,
    noise: NoiseModel,
    params: EvalParams,
    seed: u64,
    options: RunOptions,
) -> Result<EpisodeResult, SimError> {
    let params = params.validated().map_err(|source| SimError::Policy {
        step: 0,
        source,
        partial: Box::default(),
    })?;
    let (start, goal) = (roadmap.start(), roadmap.goal());
    let oracle = oracle_plan(truth, roadmap, start, goal)?;
    let oracle_time = oracle.traversal_time(roadmap);
    let grid = truth.grid();
    let mut ep = Episode {
        truth,
        roadmap,
        noise,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x53454E53])),
        posterior: PosteriorGrid::prior_for(grid),
        robot: RobotState {
            vertex: start,
            heading: roadmap.heading_towards(start, goal),
            sim_time: 0.0,
            ever_observed: vec![false; grid.len()],
        },
        next_observation: OBSERVATION_PERIOD_S,
        observations: 0,
        cost: (0.0, 0.0),
        collisions: 0,
        alpha: params.alpha,
    };
    let v0 = roadmap.vertex(start);
    ep.observe((v0.x, v0.y))?;

    let max_steps = options.max_steps.unwrap_or(10 * roadmap.vertices().len());
    let fixed = [SpeedProfile::fixed()];
    let adaptive = SpeedProfile::adaptive_set();
    let mut records = Vec::new();
    let mut timing = Timing::default();

    let summarize = |ep: &Episode<'_>, records: &[StepRecord], outcome| {
        let cost = CostBreakdown::new(ep.cost.0, ep.cost.1);
        EpisodeSummary {
            algorithm,
            seed,
            eta: noise.eta,
            p_min: noise.p_min,
            alpha: params.alpha,
            outcome,
            steps: records.len(),
            observations: ep.observations,
            collisions: ep.collisions,
            cost,
            oracle_time,
            suboptimality: if oracle_time > 0.0 {
                cost.total / oracle_time
            } else {
                f64::NAN
            },
        }
    };

    let mut outcome = Outcome::ReachedGoal;
    while ep.robot.vertex != goal {
        let step = records.len();
        if step >= max_steps {
            outcome = Outcome::Timeout;
            break;
        }
        let state = PlanState {
            vertex: ep.robot.vertex,
            heading: ep.robot.heading,
        };
        let plan = if algorithm == Algorithm::Oracle {
            let plan = oracle_plan(truth, roadmap, state.vertex, goal)?;
            StepOutcome {
                first_edge_speed: plan.speeds[0],
                plan,
                profile: SpeedProfile::fixed(),
                proposals: 1,
                score: None,
                proposer_secs: 0.0,
                acceptor_secs: 0.0,
            }
        } else {
            let ep_probs = edge_posterior(&ep.posterior, roadmap);
            let observed = ep.observed_segments();
            let ctx = StepContext {
                roadmap,
                edge_posterior: &ep_probs,
                state,
                observed: Observed::Segments(&observed),
                seed: derive_seed(&[seed, step as u64]),
                parallel: options.parallel,
            };
            let out = match algorithm {
                Algorithm::DreamsFixed => dreams_step(&ctx, &params, &fixed),
                Algorithm::DreamsAdaptive => dreams_step(&ctx, &params, &adaptive),
                Algorithm::Drps => drps_step(&ctx, &fixed[0], &params),
                Algorithm::SampledAstar => sampled_astar_step(&ctx, &fixed[0], &params),
                Algorithm::Direct => direct_step(&ctx, &fixed[0], &params),
                Algorithm::Oracle => unreachable!(),
            };
            match out {
                Ok(o) => o,
                Err(source) => {
                    let partial = EpisodeLog {
                        summary: summarize(&ep, &records, Outcome::Timeout),
                        records,
                    };
                    return Err(SimError::Policy {
                        step,
                        source,
                        partial: Box::new(partial),
                    });
                }
            }
        };
        timing.proposer_secs += plan.proposer_secs;
        timing.acceptor_secs += plan.acceptor_secs;
        timing.policy_calls += 1;

        let executed = execute(&mut ep, algorithm, &plan.plan)?;
        records.push(StepRecord {
            step,
            vertex: state.vertex,
            heading: state.heading.index(),
            plan: plan.plan.edges,
            plan_speeds: plan.plan.speeds,
            executed,
            observations: ep.observations,
        });
    }

    let summary = summarize(&ep, &records, outcome);
    Ok(EpisodeResult {
        log: EpisodeLog { records, summary },
        timing,
    })
}

/// One edge for most policies; DREAMS-Adaptive keeps following its plan
/// until a second of motion has elapsed and then stops at the next vertex.
/// The oracle runs its whole plan.
fn execute(ep: &mut Episode<'_>, algorithm: Algorithm, plan: &Plan) -> Result<Vec<ExecutedEdge>, SimError> {
    let mut done = Vec::new();
    let t0 = ep.robot.sim_time;
    for (&e, &v) in plan.edges.iter().zip(&plan.speeds) {
        done.push(ep.traverse(e, v)?);
        let more = match algorithm {
            Algorithm::Oracle => true,
            Algorithm::DreamsAdaptive => ep.robot.sim_time - t0 < ADAPTIVE_STEP_S,
            _ => false,
        };
        if !more {
            break;
        }
    }
    Ok(done)
}

impl Default for EpisodeLog {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            summary: EpisodeSummary {
                algorithm: Algorithm::Oracle,
                seed: 0,
                eta: 0.0,
                p_min: 1.0,
                alpha: 1.0,
                outcome: Outcome::Timeout,
                steps: 0,
                observations: 0,
                collisions: 0,
                cost: CostBreakdown::default(),
                oracle_time: 0.0,
                suboptimality: f64::NAN,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{truth_edge_status, OccupancyGrid, Vertex};

    fn params(alpha: f64) -> EvalParams {
        EvalParams {
            alpha,
            n_plans: 5,
            n_eval_worlds: 100,
            ..Default::default()
        }
    }

    /// 100 m straight corridor of 2 m edges along y = 10.
    fn corridor() -> (WorldTruth, Roadmap) {
        let grid = OccupancyGrid::free(270, 50, 0.4).unwrap();
        let v: Vec<Vertex> = (0..=50)
            .map(|i| Vertex {
                x: 4.0 + 2.0 * i as f64,
                y: 10.0,
            })
            .collect();
        let pairs: Vec<(u32, u32)> = (0..50).map(|i| (i, i + 1)).collect();
        let rm = Roadmap::from_graph(&grid, v, &pairs, 0, 50).unwrap();
        (truth_edge_status(&grid, &rm), rm)
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("dreams".parse::<Algorithm>().is_err());
    }

    #[test]
    fn suboptimality_examples() {
        assert_eq!(suboptimality(&CostBreakdown::new(20.0, 0.0), 10.0).unwrap(), 2.0);
        assert_eq!(suboptimality(&CostBreakdown::new(10.0, 0.0), 10.0).unwrap(), 1.0);
        assert_eq!(suboptimality(&CostBreakdown::new(15.0, 5.0), 10.0).unwrap(), 2.0);
        assert!(matches!(
            suboptimality(&CostBreakdown::new(1.0, 0.0), 0.0),
            Err(SimError::ZeroOracleTime)
        ));
    }

    #[test]
    fn noise_free_corridor_is_within_profile_bound() {
        let (truth, rm) = corridor();
        let r = run_episode(
            &truth,
            &rm,
            Algorithm::DreamsFixed,
            NoiseModel::perfect(),
            params(10.0),
            1,
        )
        .unwrap();
        let s = &r.log.summary;
        assert_eq!(s.outcome, Outcome::ReachedGoal);
        assert_eq!(s.collisions, 0);
        assert!((s.oracle_time - 10.0).abs() < 1e-9);
        assert!(s.suboptimality <= 2.0 + 1e-12, "{}", s.suboptimality);
        assert!(s.suboptimality >= 1.0);
    }

    #[test]
    fn oracle_policy_scores_one() {
        let (truth, rm) = corridor();
        let r = run_episode(&truth, &rm, Algorithm::Oracle, NoiseModel::high(), params(10.0), 4).unwrap();
        assert_eq!(r.log.summary.suboptimality, 1.0);
        assert_eq!(r.log.summary.cost.collision_cost, 0.0);
    }

    /// Route 0-1-2-4 whose edge 1-2 is blocked; the detour 1-3-5-2 is free.
    fn bridge() -> (WorldTruth, Roadmap, u32) {
        let mut grid = OccupancyGrid::free(100, 100, 0.4).unwrap();
        let v = vec![
            Vertex { x: 4.0, y: 20.0 },
            Vertex { x: 14.0, y: 20.0 },
            Vertex { x: 24.0, y: 20.0 },
            Vertex { x: 16.5, y: 25.0 },
            Vertex { x: 34.0, y: 20.0 },
            Vertex { x: 21.5, y: 25.0 },
        ];
        let pairs = [(0, 1), (1, 2), (1, 3), (3, 5), (5, 2), (2, 4)];
        // obstacle in the middle of 1-2, clear of the detour
        grid.fill_disc(19.0, 20.0, 0.5, true);
        let rm = Roadmap::from_graph(&grid, v, &pairs, 0, 4).unwrap();
        let truth = truth_edge_status(&grid, &rm);
        let blocked = rm.find_edge(1, 2, crate::world::Direction::Forward).unwrap();
        assert!(!truth.edge_free(&rm, blocked));
        (truth, rm, blocked)
    }

    #[test]
    fn converged_posterior_routes_around_bridge() {
        let (truth, rm, blocked) = bridge();
        let r = run_episode(
            &truth,
            &rm,
            Algorithm::DreamsFixed,
            NoiseModel::perfect(),
            params(10.0),
            2,
        )
        .unwrap();
        assert_eq!(r.log.summary.cost.collision_cost, 0.0);
        assert!(r.log.executed().all(|x| x.edge != blocked));
        assert_eq!(r.log.executed().map(|x| x.to).collect::<Vec<_>>(), vec![1, 3, 5, 2, 4]);
    }

    #[test]
    fn costs_add_up_and_collisions_match_truth() {
        let (truth, rm, _) = bridge();
        for alg in [
            Algorithm::Drps,
            Algorithm::SampledAstar,
            Algorithm::DreamsAdaptive,
            Algorithm::Direct,
        ] {
            for seed in 0..4 {
                let r = run_episode(&truth, &rm, alg, NoiseModel::high(), params(10.0), seed).unwrap();
                let log = &r.log;
                let t: f64 = log.executed().map(|x| x.duration).sum();
                let c: f64 = log.executed().map(|x| x.penalty).sum();
                assert_eq!(log.summary.cost.traversal_time, t);
                assert_eq!(log.summary.cost.collision_cost, c);
                assert_eq!(log.summary.cost.total, t + c);
                for x in log.executed() {
                    assert_eq!(x.collision, !truth.edge_free(&rm, x.edge));
                    assert_eq!(x.penalty, if x.collision { 10.0 * x.speed } else { 0.0 });
                }
                // one reading at t = 0 plus one per elapsed second
                let expect = 1 + t.floor() as i64;
                assert!((log.summary.observations as i64 - expect).abs() <= 1);
            }
        }
    }

    #[test]
    fn adaptive_moves_at_least_a_second_per_step() {
        let (truth, rm) = corridor();
        let r = run_episode(
            &truth,
            &rm,
            Algorithm::DreamsAdaptive,
            NoiseModel::perfect(),
            params(10.0),
            3,
        )
        .unwrap();
        let recs = &r.log.records;
        for rec in &recs[..recs.len() - 1] {
            let d: f64 = rec.executed.iter().map(|x| x.duration).sum();
            assert!(d >= ADAPTIVE_STEP_S - 1e-12);
            // first edge at the chosen speed, the rest at profile speeds
            assert_eq!(rec.executed[0].speed, rec.plan_speeds[0]);
            assert!([1.0, 3.0, 5.0, 7.0, 10.0].contains(&rec.executed[0].speed));
        }
    }

    #[test]
    fn episodes_replay_bit_exactly() {
        let (truth, rm, _) = bridge();
        for alg in Algorithm::ALL {
            let a = run_episode(&truth, &rm, alg, NoiseModel::med(), params(10.0), 11).unwrap();
            let b = run_episode(&truth, &rm, alg, NoiseModel::med(), params(10.0), 11).unwrap();
            let (mut x, mut y) = (Vec::new(), Vec::new());
            a.log.write_jsonl(&mut x).unwrap();
            b.log.write_jsonl(&mut y).unwrap();
            assert_eq!(x, y);
            let back = EpisodeLog::read_jsonl(std::str::from_utf8(&x).unwrap()).unwrap();
            assert_eq!(back, a.log);
        }
    }

    #[test]
    fn timeout_reports_accumulated_costs() {
        let (truth, rm) = corridor();
        let opts = RunOptions {
            max_steps: Some(3),
            parallel: false,
        };
        let r = run_episode_with(
            &truth,
            &rm,
            Algorithm::Drps,
            NoiseModel::perfect(),
            params(1.0),
            0,
            opts,
        )
        .unwrap();
        assert_eq!(r.log.summary.outcome, Outcome::Timeout);
        assert_eq!(r.log.summary.steps, 3);
        assert!(r.log.summary.cost.traversal_time > 0.0);
    }
}
