use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{NoiseLevel, SweepConfig};
use super::BenchError;
use crate::sampling::derive_seed;
use crate::sensing::NoiseModel;
use crate::simulator::{run_episode_with, Algorithm, EpisodeLog, Outcome, RunOptions, SimError, Timing};
use crate::world::{
    build_roadmap, generate_world, truth_edge_status, write_world, Roadmap, WorldKind, WorldMeta, WorldTruth,
};

/// One episode of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: WorldKind,
    pub world_index: usize,
    pub noise: NoiseLevel,
    pub alpha: f64,
    pub algorithm: Algorithm,
    pub seed: usize,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub world_id: String,
    pub algorithm: Algorithm,
    pub eta_bits: u64,
    pub alpha_bits: u64,
    pub seed: usize,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
}

pub fn world_id(kind: WorldKind, index: usize) -> String {
    format!("{kind}-{index:03}")
}

/// Generator seed of the `index`-th world of a kind.
pub fn world_seed(base: u64, kind: WorldKind, index: usize) -> u64 {
    let tag = match kind {
        WorldKind::Forest => 0x464F_5245_5354,
        WorldKind::Desert => 0x4445_5345_5254,
    };
    derive_seed(&[base, tag, index as u64])
}

/// Episode seed. The algorithm is deliberately left out so every algorithm
/// in a cell faces the same sensor noise stream.
pub fn episode_seed(world_seed: u64, eta: f64, alpha: f64, seed_index: usize) -> u64 {
    derive_seed(&[world_seed, eta.to_bits(), alpha.to_bits(), seed_index as u64])
}

impl Cell {
    pub fn key(&self) -> CellKey {
        CellKey {
            world_id: world_id(self.kind, self.world_index),
            algorithm: self.algorithm,
            eta_bits: self.noise.eta().to_bits(),
            alpha_bits: self.alpha.to_bits(),
            seed: self.seed,
            n_plans: self.n_plans,
            n_eval_worlds: self.n_eval_worlds,
        }
    }

    /// Stable hash naming the episode log file.
    pub fn hash(&self, config: &SweepConfig) -> u64 {
        let k = self.key();
        derive_seed(&[
            world_seed(config.world_seed, self.kind, self.world_index),
            self.algorithm as u64,
            k.eta_bits,
            k.alpha_bits,
            k.seed as u64,
            k.n_plans as u64,
            k.n_eval_worlds as u64,
        ])
    }
}

impl CellKey {
    pub fn of_row(row: &ResultRow) -> Self {
        Self {
            world_id: row.world_id.clone(),
            algorithm: row.algorithm,
            eta_bits: row.eta.to_bits(),
            alpha_bits: row.alpha.to_bits(),
            seed: row.seed,
            n_plans: row.n_plans,
            n_eval_worlds: row.n_eval_worlds,
        }
    }
}

/// Cells of the configured grid in canonical order.
pub fn enumerate_cells(config: &SweepConfig) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(config.cell_count());
    for &kind in &config.kinds {
        for world_index in 0..config.worlds_per_kind {
            for &noise in &config.noise {
                for &alpha in &config.alphas {
                    for &algorithm in &config.algorithms {
                        for seed in 0..config.seeds {
                            cells.push(Cell {
                                kind,
                                world_index,
                                noise,
                                alpha,
                                algorithm,
                                seed,
                                n_plans: config.n_plans,
                                n_eval_worlds: config.n_eval_worlds,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    ReachedGoal,
    Timeout,
    NoPlan,
}

/// One episode in the result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub world_id: String,
    pub kind: WorldKind,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub alpha: f64,
    pub seed: usize,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
    pub outcome: RowOutcome,
    pub traversal_time: f64,
    pub collision_cost: f64,
    pub total_cost: f64,
    pub oracle_time: f64,
    pub suboptimality: f64,
    pub collisions: usize,
    pub steps: usize,
    pub observations: usize,
}

/// Wall-clock policy time for one episode, kept out of the result file so
/// that reruns reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub world_id: String,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub alpha: f64,
    pub seed: usize,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
    pub proposer_secs: f64,
    pub acceptor_secs: f64,
    pub policy_calls: usize,
}

impl TimingRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            world_id: self.world_id.clone(),
            algorithm: self.algorithm,
            eta_bits: self.eta.to_bits(),
            alpha_bits: self.alpha.to_bits(),
            seed: self.seed,
            n_plans: self.n_plans,
            n_eval_worlds: self.n_eval_worlds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Completed {
    row: ResultRow,
    timing: TimingRow,
    /// Failure description, if the cell failed.
    error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: usize,
    /// Cells already present in the partial file from an earlier run.
    pub resumed: usize,
    /// `(world, algorithm, seed, message)` for every cell that timed out or
    /// found no plan.
    pub failures: Vec<String>,
    pub out: PathBuf,
    pub timing: PathBuf,
}

pub fn timing_path(out: &Path) -> PathBuf {
    sibling(out, "timing.csv")
}

pub fn partial_path(out: &Path) -> PathBuf {
    sibling(out, "partial.jsonl")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    out.with_file_name(format!("{stem}.{suffix}"))
}

struct World {
    truth: WorldTruth,
    roadmap: Roadmap,
}

fn build_world(config: &SweepConfig, kind: WorldKind, index: usize) -> Result<World, BenchError> {
    let seed = world_seed(config.world_seed, kind, index);
    let grid = generate_world(kind, config.width_m, config.height_m, config.resolution_m, seed)?;
    let roadmap = build_roadmap(&grid, config.vertex_spacing_m)?;
    let truth = truth_edge_status(&grid, &roadmap);
    Ok(World { truth, roadmap })
}

fn row_from(cell: &Cell, log: &EpisodeLog, outcome: RowOutcome) -> ResultRow {
    let s = &log.summary;
    ResultRow {
        world_id: world_id(cell.kind, cell.world_index),
        kind: cell.kind,
        algorithm: cell.algorithm,
        eta: cell.noise.eta(),
        alpha: cell.alpha,
        seed: cell.seed,
        n_plans: cell.n_plans,
        n_eval_worlds: cell.n_eval_worlds,
        outcome,
        traversal_time: s.cost.traversal_time,
        collision_cost: s.cost.collision_cost,
        total_cost: s.cost.total,
        oracle_time: s.oracle_time,
        suboptimality: s.suboptimality,
        collisions: s.collisions,
        steps: s.steps,
        observations: s.observations,
    }
}

fn run_cell(config: &SweepConfig, world: &World, cell: &Cell) -> Result<Completed, BenchError> {
    let noise =
        NoiseModel::new(cell.noise.eta(), config.p_min).map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
    let params = crate::policies::EvalParams {
        n_plans: cell.n_plans,
        n_eval_worlds: cell.n_eval_worlds,
        ..config.eval_params(cell.alpha)
    };
    let seed = episode_seed(
        world_seed(config.world_seed, cell.kind, cell.world_index),
        cell.noise.eta(),
        cell.alpha,
        cell.seed,
    );
    let options = RunOptions {
        max_steps: config.max_steps,
        parallel: false,
    };
    let (log, timing, outcome, error) = match run_episode_with(
        &world.truth,
        &world.roadmap,
        cell.algorithm,
        noise,
        params,
        seed,
        options,
    ) {
        Ok(r) if r.log.summary.outcome == Outcome::Timeout => {
            let msg = format!("timed out after {} steps", r.log.summary.steps);
            (r.log, r.timing, RowOutcome::Timeout, Some(msg))
        }
        Ok(r) => (r.log, r.timing, RowOutcome::ReachedGoal, None),
        Err(SimError::Policy { step, source, partial }) => (
            *partial,
            Timing::default(),
            RowOutcome::NoPlan,
            Some(format!("step {step}: {source}")),
        ),
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = &config.episode_logs {
        let path = dir.join(format!("{:016x}.jsonl", cell.hash(config)));
        log.write_jsonl(BufWriter::new(File::create(path)?))?;
    }
    let row = row_from(cell, &log, outcome);
    let timing = TimingRow {
        world_id: row.world_id.clone(),
        algorithm: row.algorithm,
        eta: row.eta,
        alpha: row.alpha,
        seed: row.seed,
        n_plans: row.n_plans,
        n_eval_worlds: row.n_eval_worlds,
        proposer_secs: timing.proposer_secs,
        acceptor_secs: timing.acceptor_secs,
        policy_calls: timing.policy_calls,
    };
    Ok(Completed { row, timing, error })
}

fn read_partial(path: &Path) -> Result<Vec<Completed>, BenchError> {
    let Ok(file) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut done = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        // a torn final line from an interrupted run is simply redone
        if let Ok(c) = serde_json::from_str::<Completed>(&line) {
            done.push(c);
        }
    }
    Ok(done)
}

/// Runs the configured grid.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport, BenchError> {
    let config = config.clone().validated()?;
    run_cells(&config, enumerate_cells(&config))
}

/// Runs `cells` and writes the canonical result and timing files. Cells
/// already recorded in the partial file are skipped, so an interrupted run
/// picks up where it stopped.
pub fn run_cells(config: &SweepConfig, cells: Vec<Cell>) -> Result<SweepReport, BenchError> {
    let mut seen = HashSet::new();
    if let Some(dup) = cells.iter().find(|c| !seen.insert(c.key())) {
        return Err(BenchError::InvalidConfig(format!("duplicate cell {:?}", dup.key())));
    }
    if let Some(dir) = &config.episode_logs {
        fs::create_dir_all(dir)?;
    }
    if let Some(parent) = config.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let partial = partial_path(&config.out);
    let previous = read_partial(&partial)?;
    let done: HashSet<CellKey> = previous.iter().map(|c| CellKey::of_row(&c.row)).collect();
    let todo: Vec<&Cell> = cells.iter().filter(|c| !done.contains(&c.key())).collect();
    let resumed = cells.len() - todo.len();

    let mut needed: Vec<(WorldKind, usize)> = todo.iter().map(|c| (c.kind, c.world_index)).collect();
    needed.sort_by_key(|&(k, i)| (k.name(), i));
    needed.dedup();

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = config.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| BenchError::InvalidConfig(e.to_string()))?
    };

    let writer = Mutex::new(OpenOptions::new().create(true).append(true).open(&partial)?);
    let fresh: Vec<Completed> = pool.install(|| -> Result<Vec<Completed>, BenchError> {
        let worlds: Vec<World> = needed
            .par_iter()
            .map(|&(k, i)| build_world(config, k, i))
            .collect::<Result<_, _>>()?;
        todo.par_iter()
            .map(|cell| {
                let w = needed
                    .iter()
                    .position(|&(k, i)| k == cell.kind && i == cell.world_index)
                    .expect("world built for every cell");
                let done = run_cell(config, &worlds[w], cell)?;
                let mut line = serde_json::to_string(&done)?;
                line.push('\n');
                let mut f = writer.lock().expect("writer lock");
                f.write_all(line.as_bytes())?;
                f.flush()?;
                Ok(done)
            })
            .collect()
    })?;

    // canonical order follows the cell list, whatever order cells finished in
    let mut by_key: std::collections::HashMap<CellKey, Completed> = previous
        .into_iter()
        .chain(fresh)
        .map(|c| (CellKey::of_row(&c.row), c))
        .collect();
    let mut out = csv::Writer::from_path(&config.out)?;
    let timing_file = timing_path(&config.out);
    let mut timing = csv::Writer::from_path(&timing_file)?;
    let mut failures = Vec::new();
    for cell in &cells {
        let c = by_key.remove(&cell.key()).expect("every cell completed");
        if let Some(e) = &c.error {
            failures.push(format!(
                "{} {} seed {}: {e}",
                c.row.world_id, c.row.algorithm, c.row.seed
            ));
        }
        out.serialize(&c.row)?;
        timing.serialize(&c.timing)?;
    }
    out.flush()?;
    timing.flush()?;
    fs::remove_file(&partial)?;
    Ok(SweepReport {
        rows: cells.len(),
        resumed,
        failures,
        out: config.out.clone(),
        timing: timing_file,
    })
}

/// Writes every configured world as `<id>.pgm` plus its JSON sidecar.
pub fn gen_worlds(config: &SweepConfig, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let config = config.clone().validated()?;
    fs::create_dir_all(dir)?;
    let ids: Vec<(WorldKind, usize)> = config
        .kinds
        .iter()
        .flat_map(|&k| (0..config.worlds_per_kind).map(move |i| (k, i)))
        .collect();
    ids.par_iter()
        .map(|&(kind, i)| {
            let seed = world_seed(config.world_seed, kind, i);
            let grid = generate_world(kind, config.width_m, config.height_m, config.resolution_m, seed)?;
            let roadmap = build_roadmap(&grid, config.vertex_spacing_m)?;
            let meta = WorldMeta {
                resolution_m: config.resolution_m,
                start_vertex: roadmap.start(),
                goal_vertex: roadmap.goal(),
                generator: kind.name().to_string(),
                seed,
            };
            let path = dir.join(format!("{}.pgm", world_id(kind, i)));
            write_world(&path, &grid, &meta)?;
            Ok(path)
        })
        .collect()
}

/// Which evaluation parameter an ablation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Plans,
    EvalWorlds,
}

impl std::str::FromStr for AblationAxis {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plans" => Ok(AblationAxis::Plans),
            "eval_worlds" | "eval-worlds" => Ok(AblationAxis::EvalWorlds),
            other => Err(BenchError::InvalidConfig(format!("unknown ablation axis {other:?}"))),
        }
    }
}

/// The base grid repeated once per value of `axis`, written to one file.
/// Rows carry `n_plans` and `n_eval_worlds`, which identify the value.
pub fn ablate(axis: AblationAxis, values: &[usize], base: &SweepConfig) -> Result<SweepReport, BenchError> {
    if values.is_empty() {
        return Err(BenchError::InvalidConfig("ablation needs at least one value".into()));
    }
    let base = base.clone().validated()?;
    let mut cells = Vec::new();
    for &v in values {
        let mut c = base.clone();
        match axis {
            AblationAxis::Plans => c.n_plans = v,
            AblationAxis::EvalWorlds => c.n_eval_worlds = v,
        }
        let c = c.validated()?;
        cells.extend(enumerate_cells(&c));
    }
    run_cells(&base, cells)
}

/// Reads a result file, reporting the line of any malformed row.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, BenchError> {
    read_csv(path)
}

pub fn read_timing(path: &Path) -> Result<Vec<TimingRow>, BenchError> {
    read_csv(path)
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        match rec {
            Ok(row) => rows.push(row),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(BenchError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(rows)
}
