use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{read_results, read_timing, timing_path, CellKey, ResultRow, RowOutcome, TimingRow};
use super::BenchError;
use crate::simulator::Algorithm;
use crate::world::WorldKind;

/// Aggregate over all seeds and worlds of one (kind, algorithm, eta, alpha)
/// group. Ablation files also split groups by plan and eval-world counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: WorldKind,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub alpha: f64,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
    /// Episodes included in the means.
    pub episodes: usize,
    /// Episodes that ended without a plan; excluded from the means.
    pub no_plan: usize,
    pub mean_suboptimality: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci95: f64,
    pub mean_traversal_time: f64,
    pub mean_collision_cost: f64,
    pub mean_total_cost: f64,
    pub ci95_total_cost: f64,
    pub mean_proposer_secs: Option<f64>,
    pub mean_acceptor_secs: Option<f64>,
}

/// Sample mean and 95% half-width.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Summarizes a result file, folding in its timing sidecar when present.
pub fn summarize(path: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    let rows = read_results(path)?;
    let tp = timing_path(path);
    let timing = if tp.exists() { read_timing(&tp)? } else { Vec::new() };
    Ok(summarize_rows(&rows, &timing))
}

/// Groups appear in order of first occurrence.
pub fn summarize_rows(rows: &[ResultRow], timing: &[TimingRow]) -> Vec<SummaryRow> {
    type Group = (WorldKind, Algorithm, u64, u64, usize, usize);
    let times: HashMap<CellKey, &TimingRow> = timing.iter().map(|t| (t.key(), t)).collect();
    let mut order: Vec<Group> = Vec::new();
    let mut groups: HashMap<Group, Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let g = (
            r.kind,
            r.algorithm,
            r.eta.to_bits(),
            r.alpha.to_bits(),
            r.n_plans,
            r.n_eval_worlds,
        );
        groups
            .entry(g)
            .or_insert_with(|| {
                order.push(g);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|g| {
            let all = &groups[&g];
            let ok: Vec<&ResultRow> = all
                .iter()
                .copied()
                .filter(|r| r.outcome != RowOutcome::NoPlan)
                .collect();
            let subs: Vec<f64> = ok.iter().map(|r| r.suboptimality).collect();
            let (mean_suboptimality, ci95) = mean_ci(&subs);
            let totals: Vec<f64> = ok.iter().map(|r| r.total_cost).collect();
            let (mean_total_cost, ci95_total_cost) = mean_ci(&totals);
            let timed: Vec<&TimingRow> = ok
                .iter()
                .filter_map(|r| times.get(&CellKey::of_row(r)).copied())
                .collect();
            let has_timing = !timed.is_empty() && timed.len() == ok.len();
            SummaryRow {
                kind: g.0,
                algorithm: g.1,
                eta: f64::from_bits(g.2),
                alpha: f64::from_bits(g.3),
                n_plans: g.4,
                n_eval_worlds: g.5,
                episodes: ok.len(),
                no_plan: all.len() - ok.len(),
                mean_suboptimality,
                ci95,
                mean_traversal_time: mean(ok.iter().map(|r| r.traversal_time)),
                mean_collision_cost: mean(ok.iter().map(|r| r.collision_cost)),
                mean_total_cost,
                ci95_total_cost,
                mean_proposer_secs: has_timing.then(|| mean(timed.iter().map(|t| t.proposer_secs))),
                mean_acceptor_secs: has_timing.then(|| mean(timed.iter().map(|t| t.acceptor_secs))),
            }
        })
        .collect()
}
