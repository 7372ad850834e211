use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::policies::EvalParams;
use crate::sensing::{NoiseModel, DEFAULT_P_MIN, ETA_HIGH, ETA_LOW, ETA_MED};
use crate::simulator::Algorithm;
use crate::world::{WorldKind, DEFAULT_VERTEX_SPACING_M};

/// Sensor noise level, by name or by explicit decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Named(NamedNoise),
    Eta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedNoise {
    Low,
    Med,
    High,
}

impl NoiseLevel {
    pub fn eta(self) -> f64 {
        match self {
            NoiseLevel::Named(NamedNoise::Low) => ETA_LOW,
            NoiseLevel::Named(NamedNoise::Med) => ETA_MED,
            NoiseLevel::Named(NamedNoise::High) => ETA_HIGH,
            NoiseLevel::Eta(e) => e,
        }
    }
}

impl FromStr for NoiseLevel {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(NoiseLevel::Named(NamedNoise::Low)),
            "med" | "medium" => Ok(NoiseLevel::Named(NamedNoise::Med)),
            "high" => Ok(NoiseLevel::Named(NamedNoise::High)),
            other => other
                .parse::<f64>()
                .map(NoiseLevel::Eta)
                .map_err(|_| BenchError::InvalidConfig(format!("unknown noise level {other:?}"))),
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseLevel::Named(NamedNoise::Low) => f.write_str("low"),
            NoiseLevel::Named(NamedNoise::Med) => f.write_str("med"),
            NoiseLevel::Named(NamedNoise::High) => f.write_str("high"),
            NoiseLevel::Eta(e) => write!(f, "{e}"),
        }
    }
}

/// Full experimental grid. Every field has a default, so a config file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kinds: Vec<WorldKind>,
    pub worlds_per_kind: usize,
    /// Offsets the world generator seeds.
    pub world_seed: u64,
    pub width_m: f64,
    pub height_m: f64,
    pub resolution_m: f64,
    pub vertex_spacing_m: f64,
    pub noise: Vec<NoiseLevel>,
    pub p_min: f64,
    pub alphas: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: usize,
    pub n_plans: usize,
    pub n_eval_worlds: usize,
    pub cvar_fraction: f64,
    pub out: PathBuf,
    /// Directory for per-episode JSON-lines logs.
    pub episode_logs: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Policy invocations per episode before a timeout; `None` means 10 |V|.
    pub max_steps: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kinds: vec![WorldKind::Forest, WorldKind::Desert],
            worlds_per_kind: 20,
            world_seed: 0,
            width_m: 100.0,
            height_m: 100.0,
            resolution_m: 0.4,
            vertex_spacing_m: DEFAULT_VERTEX_SPACING_M,
            noise: vec![
                NoiseLevel::Named(NamedNoise::Low),
                NoiseLevel::Named(NamedNoise::Med),
                NoiseLevel::Named(NamedNoise::High),
            ],
            p_min: DEFAULT_P_MIN,
            alphas: vec![1.0, 10.0, 20.0],
            algorithms: vec![
                Algorithm::DreamsFixed,
                Algorithm::DreamsAdaptive,
                Algorithm::Drps,
                Algorithm::SampledAstar,
                Algorithm::Direct,
            ],
            seeds: 10,
            n_plans: 100,
            n_eval_worlds: 10_000,
            cvar_fraction: 0.75,
            out: PathBuf::from("results.csv"),
            episode_logs: None,
            jobs: None,
            max_steps: None,
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str::<Self>(text)
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?
            .validated()
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validated(self) -> Result<Self, BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        if self.kinds.is_empty() || self.worlds_per_kind == 0 {
            return bad("at least one world is required".into());
        }
        if self.noise.is_empty() || self.alphas.is_empty() || self.algorithms.is_empty() || self.seeds == 0 {
            return bad("noise, alphas, algorithms and seeds must be non-empty".into());
        }
        for n in &self.noise {
            NoiseModel::new(n.eta(), self.p_min).map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        }
        for &alpha in &self.alphas {
            self.eval_params(alpha).validated()?;
        }
        if self.jobs == Some(0) {
            return bad("jobs must be >= 1".into());
        }
        Ok(self)
    }

    pub fn eval_params(&self, alpha: f64) -> EvalParams {
        EvalParams {
            alpha,
            cvar_fraction: self.cvar_fraction,
            n_eval_worlds: self.n_eval_worlds,
            n_plans: self.n_plans,
        }
    }

    /// Number of episodes the sweep runs.
    pub fn cell_count(&self) -> usize {
        self.kinds.len()
            * self.worlds_per_kind
            * self.noise.len()
            * self.alphas.len()
            * self.algorithms.len()
            * self.seeds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_levels_map_to_fixed_rates() {
        assert_eq!("low".parse::<NoiseLevel>().unwrap().eta(), 1e-4);
        assert_eq!("med".parse::<NoiseLevel>().unwrap().eta(), 1e-3);
        assert_eq!("high".parse::<NoiseLevel>().unwrap().eta(), 1e-2);
        assert_eq!("0.005".parse::<NoiseLevel>().unwrap().eta(), 0.005);
        assert!("loud".parse::<NoiseLevel>().is_err());
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c = SweepConfig::from_json(r#"{"worlds_per_kind": 2, "noise": ["high", 0.002], "algorithms": ["drps"]}"#)
            .unwrap();
        assert_eq!(c.worlds_per_kind, 2);
        assert_eq!(c.noise[1].eta(), 0.002);
        assert_eq!(c.alphas, vec![1.0, 10.0, 20.0]);
        assert_eq!(c.cell_count(), 2 * 2 * 2 * 3 * 10);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SweepConfig::from_json(r#"{"seeds": 0}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"alphas": [0.5]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"noise": [-1.0]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"algorithms": ["nope"]}"#).is_err());
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(SweepConfig::default().cell_count(), 2 * 20 * 3 * 3 * 5 * 10);
    }
}
