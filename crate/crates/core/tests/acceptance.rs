//! End-to-end acceptance checks. Each test writes one PASS/FAIL line to
//! stderr (bypassing the harness capture) before asserting.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;
use std::path::Path;

use dreams_core::bench::{
    ablate, read_results, read_timing, run_sweep, summarize_rows, timing_path, AblationAxis, NamedNoise, NoiseLevel,
    ResultRow, SummaryRow, SweepConfig,
};
use dreams_core::planner::{plan_astar, plan_with_reverse_retry, Attempt, Observed, PlanState, SpeedProfile};
use dreams_core::policies::{evaluate_plan, expected_cost, CostBreakdown, EvalParams};
use dreams_core::sampling::{derive_seed, sample_worlds, EdgePosterior};
use dreams_core::sensing::{bayes_posterior, sense, NoiseModel, EPSILON};
use dreams_core::simulator::{run_episode, suboptimality, Algorithm, EpisodeLog};
use dreams_core::world::{
    build_roadmap, generate_world, truth_edge_status, Direction, Heading, OccupancyGrid, Roadmap, Vertex, WorldKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SENSOR_RATE_TOL: f64 = 0.02;
const BAYES_REL_TOL: f64 = 1e-12;
const CALIBRATION_TOL: f64 = 0.02;
const PROPOSER_RATIO: f64 = 10.0;

fn report(n: u32, what: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[criterion {n}] {verdict} {what}: {detail}");
}

fn group(s: &[SummaryRow], alg: Algorithm) -> &SummaryRow {
    s.iter()
        .find(|r| r.algorithm == alg)
        .expect("algorithm present in summary")
}

fn high_noise_forest(dir: &Path, name: &str) -> SweepConfig {
    SweepConfig {
        kinds: vec![WorldKind::Forest],
        worlds_per_kind: 20,
        noise: vec![NoiseLevel::Named(NamedNoise::High)],
        alphas: vec![10.0],
        seeds: 10,
        n_plans: 20,
        n_eval_worlds: 1000,
        out: dir.join(name),
        ..Default::default()
    }
}

fn summary_of(path: &Path) -> (Vec<ResultRow>, Vec<SummaryRow>) {
    let rows = read_results(path).unwrap();
    let timing = read_timing(&timing_path(path)).unwrap();
    let s = summarize_rows(&rows, &timing);
    (rows, s)
}

#[test]
fn sensor_correct_rate_per_noise_level() {
    let truth = generate_world(WorldKind::Forest, 100.0, 100.0, 0.4, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut all = true;
    let mut detail = Vec::new();
    for (model, want) in [
        (NoiseModel::low(), 0.96),
        (NoiseModel::med(), 0.72),
        (NoiseModel::high(), 0.61),
    ] {
        let mut sum = 0.0;
        for _ in 0..100 {
            // window fully inside the map
            let pos = (rng.gen_range(25.0..75.0), rng.gen_range(25.0..75.0));
            sum += sense(&truth, pos, &model, &mut rng).unwrap().correct_fraction(&truth);
        }
        let mean = sum / 100.0;
        all &= (mean - want).abs() <= SENSOR_RATE_TOL;
        detail.push(format!("eta={} rate={mean:.4} want={want}", model.eta));
    }
    report(1, "sensor correct-pixel rate", all, &detail.join(", "));
    assert!(all);
}

#[test]
fn bayes_update_matches_likelihood_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q: f64 = rng.gen_range(1e-3..1.0 - 1e-3);
        let p: f64 = rng.gen_range(0.5..1.0);
        let bit: bool = rng.gen();
        let lr = if bit { p / (1.0 - p) } else { (1.0 - p) / p };
        let odds = q / (1.0 - q) * lr;
        let want = (odds / (1.0 + odds)).clamp(EPSILON, 1.0 - EPSILON);
        let got = bayes_posterior(q, p, bit);
        worst = worst.max(((got - want) / want).abs());
    }
    let pass = worst <= BAYES_REL_TOL;
    report(
        2,
        "Bayes update vs likelihood ratio",
        pass,
        &format!("max rel err {worst:.3e} over 1000 triples"),
    );
    assert!(pass);
}

/// Independent speed rule: reverse 1 m/s, first edge override, 5 m/s in
/// sensed terrain and 10 m/s elsewhere.
fn oracle_speed(dir: Direction, first: bool, first_speed: Option<f64>, observed: bool) -> f64 {
    match (dir, first, first_speed) {
        (Direction::Reverse, ..) => 1.0,
        (_, true, Some(v)) => v,
        _ if observed => 5.0,
        _ => 10.0,
    }
}

fn oracle_admissible(state_heading: u8, edge_heading: u8, dir: Direction, reverse: bool) -> bool {
    let motion = match dir {
        Direction::Forward => edge_heading,
        Direction::Reverse => (edge_heading + 4) % 8,
    };
    let d = (motion + 8 - state_heading) % 8;
    let inside = d == 0 || d == 1 || d == 7;
    match dir {
        Direction::Forward => inside,
        Direction::Reverse => reverse && !inside,
    }
}

#[allow(clippy::too_many_arguments)]
fn dijkstra(
    rm: &Roadmap,
    free: &[bool],
    observed: &[bool],
    start: PlanState,
    first_speed: Option<f64>,
    reverse: bool,
) -> f64 {
    let n = rm.vertices().len() * 8;
    let mut dist = vec![f64::INFINITY; n];
    let root = start.vertex as usize * 8 + start.heading.index() as usize;
    dist[root] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, root)));
    while let Some(Reverse((d, s))) = heap.pop() {
        let d = f64::from_bits(d);
        if d > dist[s] {
            continue;
        }
        let v = (s / 8) as u32;
        if v == rm.goal() {
            return d;
        }
        for e in rm.edges().iter().filter(|e| e.from == v) {
            if !free[e.segment as usize] || !oracle_admissible((s % 8) as u8, e.heading.index(), e.direction, reverse) {
                continue;
            }
            let speed = oracle_speed(e.direction, s == root, first_speed, observed[e.segment as usize]);
            let nd = d + e.length / speed;
            let t = e.to as usize * 8 + e.heading.index() as usize;
            if nd < dist[t] {
                dist[t] = nd;
                heap.push(Reverse((nd.to_bits(), t)));
            }
        }
    }
    f64::INFINITY
}

fn forward_reachable(rm: &Roadmap, free: &[bool], start: PlanState) -> bool {
    let mut seen = vec![false; rm.vertices().len() * 8];
    let root = start.vertex as usize * 8 + start.heading.index() as usize;
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        if (s / 8) as u32 == rm.goal() {
            return true;
        }
        for e in rm.edges().iter().filter(|e| e.from == (s / 8) as u32) {
            if free[e.segment as usize] && oracle_admissible((s % 8) as u8, e.heading.index(), e.direction, false) {
                let t = e.to as usize * 8 + e.heading.index() as usize;
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    false
}

#[test]
fn astar_matches_dijkstra_on_random_lattices() {
    // 28 m at 2 m spacing gives a 15 x 15 lattice
    let grid = OccupancyGrid::free(70, 70, 0.4).unwrap();
    let rm = build_roadmap(&grid, 2.0).unwrap();
    assert_eq!(rm.vertices().len(), 225);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mismatches, mut forward_cases, mut reverse_cases, mut unreachable) = (0, 0, 0, 0);
    for _ in 0..200 {
        let block = rng.gen_range(0.05..0.45);
        let free: Vec<bool> = (0..rm.segments().len()).map(|_| !rng.gen_bool(block)).collect();
        let observed: Vec<bool> = (0..rm.segments().len()).map(|_| rng.gen_bool(0.5)).collect();
        let start = PlanState {
            vertex: loop {
                let v = rng.gen_range(0..rm.vertices().len() as u32);
                if v != rm.goal() {
                    break v;
                }
            },
            heading: Heading::new(rng.gen_range(0..8)),
        };
        let first_speed = rng
            .gen_bool(0.5)
            .then(|| [1.0, 3.0, 5.0, 7.0, 10.0][rng.gen_range(0..5)]);
        let profile = match first_speed {
            Some(v) => SpeedProfile::fixed().with_first_edge_speed(v).unwrap(),
            None => SpeedProfile::fixed(),
        };
        let obs = Observed::Segments(&observed);
        for reverse in [false, true] {
            let want = dijkstra(&rm, &free, &observed, start, first_speed, reverse);
            let got =
                plan_astar(&free, &rm, start, &profile, obs, reverse).map_or(f64::INFINITY, |p| p.traversal_time(&rm));
            if got != want {
                mismatches += 1;
            }
        }
        let retry = plan_with_reverse_retry(&free, &rm, start, &profile, obs);
        if forward_reachable(&rm, &free, start) {
            forward_cases += 1;
            let p = retry.as_ref().expect("forward path exists");
            if p.attempt != Attempt::ForwardOnly || p.uses_reverse(&rm) {
                mismatches += 1;
            }
        } else if let Some(p) = &retry {
            reverse_cases += 1;
            if p.attempt != Attempt::WithReverse {
                mismatches += 1;
            }
        } else {
            unreachable += 1;
        }
    }
    let pass = mismatches == 0;
    report(
        3,
        "A* optimality and forward-first retry",
        pass,
        &format!(
            "{mismatches} mismatches; {forward_cases} forward, {reverse_cases} reverse-only, {unreachable} unreachable"
        ),
    );
    assert!(pass);
}

#[test]
fn hand_computed_cost_fixtures() {
    let grid = OccupancyGrid::free(140, 20, 0.4).unwrap();
    let v = vec![
        Vertex { x: 2.0, y: 4.0 },
        Vertex { x: 27.0, y: 4.0 },
        Vertex { x: 52.0, y: 4.0 },
    ];
    let rm = Roadmap::from_graph(&grid, v, &[(0, 1), (1, 2), (0, 2)], 0, 2).unwrap();
    let fwd = |a, b| rm.find_edge(a, b, Direction::Forward).unwrap();
    let risky = dreams_core::planner::Plan {
        edges: vec![fwd(0, 1), fwd(1, 2)],
        speeds: vec![5.0, 5.0],
        source: dreams_core::planner::PlanSource::Search,
        attempt: Attempt::ForwardOnly,
    };
    let first_blocked = evaluate_plan(&risky, &rm, &vec![false, true, true], 10.0);
    let second_blocked = evaluate_plan(&risky, &rm, &vec![true, false, true], 10.0);
    let ep = EdgePosterior::from_segment_probs(vec![0.2, 0.5, 0.0]);
    let expected = expected_cost(&risky, &rm, &ep, 10.0, 0);
    let ratio_a = suboptimality(&CostBreakdown::new(20.0, 0.0), 10.0).unwrap();
    let ratio_b = suboptimality(&CostBreakdown::new(15.0, 5.0), 10.0).unwrap();
    let got = [first_blocked, second_blocked, expected, ratio_a, ratio_b];
    let pass = got == [60.0, 15.0, 22.5, 2.0, 2.0];
    report(
        4,
        "hand-computed fixtures",
        pass,
        &format!("{got:?} want [60, 15, 22.5, 2, 2]"),
    );
    assert!(pass);
}

#[test]
fn sampled_worlds_are_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let probs: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ep = EdgePosterior::from_segment_probs(probs.clone());
        let worlds = sample_worlds(&ep, 10_000, derive_seed(&[k]));
        for (s, &p) in probs.iter().enumerate() {
            let blocked = worlds.iter().filter(|w| w.segment_blocked(s as u32)).count();
            worst = worst.max((blocked as f64 / 1e4 - p).abs());
        }
    }
    let pass = worst <= CALIBRATION_TOL;
    report(
        5,
        "sampling calibration",
        pass,
        &format!("max |freq - P| = {worst:.4} over 50 x 20 edges"),
    );
    assert!(pass);
}

#[test]
fn dreams_beats_single_sample_baselines_in_forest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        algorithms: vec![Algorithm::DreamsFixed, Algorithm::SampledAstar, Algorithm::Drps],
        ..high_noise_forest(dir.path(), "h1.csv")
    };
    let rep = run_sweep(&cfg).unwrap();
    let (_, s) = summary_of(&rep.out);
    let (df, sa, drps) = (
        group(&s, Algorithm::DreamsFixed),
        group(&s, Algorithm::SampledAstar),
        group(&s, Algorithm::Drps),
    );
    let pass = df.mean_suboptimality < sa.mean_suboptimality
        && df.mean_suboptimality < drps.mean_suboptimality
        && df.mean_collision_cost < sa.mean_collision_cost;
    let line = |r: &SummaryRow| {
        format!(
            "{} sub {:.2}±{:.2} C {:.1} (n={}, no plan {})",
            r.algorithm, r.mean_suboptimality, r.ci95, r.mean_collision_cost, r.episodes, r.no_plan
        )
    };
    report(
        6,
        "forest ordering at high noise",
        pass,
        &format!(
            "{}; {}; {}; {} failed cells",
            line(df),
            line(sa),
            line(drps),
            rep.failures.len()
        ),
    );
    assert!(pass);
}

#[test]
fn plan_count_plateau_and_direct_collisions() {
    let dir = tempfile::tempdir().unwrap();
    let base = SweepConfig {
        algorithms: vec![Algorithm::DreamsFixed],
        worlds_per_kind: 10,
        seeds: 5,
        ..high_noise_forest(dir.path(), "plans.csv")
    };
    let values = [1, 5, 20, 100];
    let rep = ablate(AblationAxis::Plans, &values, &base).unwrap();
    let (_, s) = summary_of(&rep.out);
    let by_n: Vec<&SummaryRow> = values
        .iter()
        .map(|&n| s.iter().find(|r| r.n_plans == n).unwrap())
        .collect();
    let nonincreasing = by_n
        .windows(2)
        .all(|w| w[1].mean_total_cost <= w[0].mean_total_cost + w[0].ci95_total_cost + w[1].ci95_total_cost);
    let (j20, j100) = (by_n[2], by_n[3]);
    let plateau = (j100.mean_total_cost - j20.mean_total_cost).abs() <= j20.ci95_total_cost + j100.ci95_total_cost;
    let ablation = by_n
        .iter()
        .map(|r| format!("n={} J {:.1}±{:.1}", r.n_plans, r.mean_total_cost, r.ci95_total_cost))
        .collect::<Vec<_>>()
        .join(", ");

    let cfg = SweepConfig {
        algorithms: vec![Algorithm::Direct, Algorithm::DreamsAdaptive],
        ..high_noise_forest(dir.path(), "h5.csv")
    };
    let rep = run_sweep(&cfg).unwrap();
    let (_, s) = summary_of(&rep.out);
    let (direct, adaptive) = (group(&s, Algorithm::Direct), group(&s, Algorithm::DreamsAdaptive));
    let collisions = direct.mean_collision_cost > adaptive.mean_collision_cost;

    let pass = nonincreasing && plateau && collisions;
    report(
        7,
        "plan-count plateau and Direct collisions",
        pass,
        &format!(
            "{ablation}; non-increasing {nonincreasing}, plateau {plateau}; C direct {:.1} vs adaptive {:.1}",
            direct.mean_collision_cost, adaptive.mean_collision_cost
        ),
    );
    assert!(pass);
}

#[test]
fn episodes_and_sweeps_replay_bit_identically() {
    let grid = generate_world(WorldKind::Forest, 100.0, 100.0, 0.4, 8).unwrap();
    let rm = build_roadmap(&grid, 2.0).unwrap();
    let truth = truth_edge_status(&grid, &rm);
    let params = EvalParams {
        n_plans: 10,
        n_eval_worlds: 200,
        ..Default::default()
    };
    let mut same = true;
    for alg in Algorithm::ALL {
        let run = || -> Vec<u8> {
            let log: EpisodeLog = match run_episode(&truth, &rm, alg, NoiseModel::high(), params, 42) {
                Ok(r) => r.log,
                Err(dreams_core::simulator::SimError::Policy { partial, .. }) => *partial,
                Err(e) => panic!("{e}"),
            };
            let mut buf = Vec::new();
            log.write_jsonl(&mut buf).unwrap();
            buf
        };
        same &= run() == run();
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        kinds: vec![WorldKind::Forest, WorldKind::Desert],
        worlds_per_kind: 2,
        noise: vec![NoiseLevel::Named(NamedNoise::High)],
        alphas: vec![10.0],
        seeds: 2,
        n_plans: 5,
        n_eval_worlds: 100,
        out: dir.path().join("a.csv"),
        ..Default::default()
    };
    run_sweep(&cfg).unwrap();
    let first = std::fs::read(&cfg.out).unwrap();
    run_sweep(&cfg).unwrap();
    let sweep_same = std::fs::read(&cfg.out).unwrap() == first;

    let pass = same && sweep_same;
    report(
        8,
        "determinism",
        pass,
        &format!("episode replays identical {same}; sweep rerun identical {sweep_same}"),
    );
    assert!(pass);
}

#[test]
fn multi_sample_proposer_dominates_drps_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        algorithms: vec![Algorithm::DreamsFixed, Algorithm::Drps],
        worlds_per_kind: 5,
        seeds: 2,
        n_plans: 100,
        ..high_noise_forest(dir.path(), "timing.csv")
    };
    let rep = run_sweep(&cfg).unwrap();
    let timing = read_timing(&rep.timing).unwrap();
    let per_call = |alg: Algorithm| {
        let (secs, calls) = timing
            .iter()
            .filter(|t| t.algorithm == alg)
            .fold((0.0, 0), |(s, c), t| (s + t.proposer_secs, c + t.policy_calls));
        secs / calls as f64
    };
    let (dreams, drps) = (per_call(Algorithm::DreamsFixed), per_call(Algorithm::Drps));
    let ratio = dreams / drps;
    let pass = ratio >= PROPOSER_RATIO;
    report(
        9,
        "proposer timing ratio",
        pass,
        &format!(
            "DREAMS {:.2} ms/call vs DRPS {:.3} ms/call, ratio {ratio:.1}",
            dreams * 1e3,
            drps * 1e3
        ),
    );
    assert!(pass);
}
