//! Experiment configuration files.
//!
//! ```json
//! {
//!   "source": {"kind": "gaussian_iid", "d": 2},
//!   "k": [1, 2, 3],
//!   "objective": "mse_min",
//!   "init": {"kind": "random"},
//!   "optimizer": {"T_max": 120},
//!   "estimation": {"min_points_per_region": 200, "max_total_points": 100000, "mse_points": 20000},
//!   "lbg": {"restarts": 10},
//!   "restarts": 10,
//!   "seed": 7,
//!   "outputs": "out"
//! }
//! ```
//!
//! Everything except `source`, `k` and `seed` has a default. The top-level
//! `objective` and `estimation` override the corresponding optimizer fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clvq::baselines::LbgParams;
use clvq::estimation::{EstimationParams, Objective};
use clvq::optimizer::{InitStrategy, OptimizerParams};
use clvq::SourceModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    One(usize),
    Many(Vec<usize>),
}

impl KSpec {
    pub fn values(&self) -> Vec<usize> {
        match self {
            KSpec::One(k) => vec![*k],
            KSpec::Many(ks) => ks.clone(),
        }
    }
}

fn default_restarts() -> usize {
    10
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceModel,
    pub k: KSpec,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default)]
    pub optimizer: OptimizerParams,
    #[serde(default)]
    pub estimation: Option<EstimationParams>,
    #[serde(default)]
    pub lbg: LbgParams,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Optimizer parameters with the top-level overrides applied.
    pub fn optimizer_params(&self) -> OptimizerParams {
        let mut p = self.optimizer;
        p.objective = self.objective;
        if let Some(e) = self.estimation {
            p.estimation = e;
        }
        p
    }

    pub fn ks(&self) -> Vec<usize> {
        self.k.values()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let ks = self.ks();
        if ks.is_empty() {
            bail!("invalid config: field `k` must list at least one value");
        }
        if let Some(bad) = ks.iter().find(|&&k| k == 0 || k > clvq::arrangement::MAX_COMPARATORS) {
            bail!(
                "invalid config: field `k` value {bad} outside 1..={}",
                clvq::arrangement::MAX_COMPARATORS
            );
        }
        if self.restarts == 0 {
            bail!("invalid config: field `restarts` must be at least 1");
        }
        SourceModel::new(self.source.kind, self.source.dimension).context("invalid config: field `source`")?;
        self.optimizer_params().validate().context("invalid config: field `optimizer`")?;
        if let Some(e) = &self.estimation {
            e.validate().context("invalid config: field `estimation`")?;
        }
        self.lbg.validate().context("invalid config: field `lbg`")?;
        if let InitStrategy::Genetic { params, estimation } = &self.init {
            params.validate().context("invalid config: field `init`")?;
            estimation.validate().context("invalid config: field `init.estimation`")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"source": {"kind": "gaussian_iid", "d": 2}, "k": 1, "seed": 3}"#;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.ks(), vec![1]);
        assert_eq!(c.restarts, 10);
        assert_eq!(c.optimizer_params(), OptimizerParams::default());
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ExperimentConfig::from_json(r#"{"source": {"kind": "gaussian_iid", "d": 2}, "k": 1}"#)
            .unwrap_err();
        assert!(format!("{err:#}").contains("seed"));
    }

    #[test]
    fn bad_fields_are_named() {
        let cases = [
            (r#""k": 0"#, "k"),
            (r#""k": [1, 2], "restarts": 0"#, "restarts"),
            (r#""k": 2, "optimizer": {"grid_points": 2}"#, "grid_points"),
            (r#""k": 2, "optimizer": {"T_max": 0}"#, "T_max"),
            (r#""k": 2, "estimation": {"min_points_per_region": 0, "max_total_points": 10, "mse_points": 10}"#, "min_points_per_region"),
            (r#""k": 2, "init": {"kind": "genetic", "pool_size": 1}"#, "pool_size"),
            (r#""k": 2, "bogus": 1"#, "bogus"),
        ];
        for (body, field) in cases {
            let text = format!(r#"{{"source": {{"kind": "uniform_iid", "d": 2}}, "seed": 1, {body}}}"#);
            let err = ExperimentConfig::from_json(&text).unwrap_err();
            assert!(format!("{err:#}").contains(field), "{field}: {err:#}");
        }
    }

    #[test]
    fn overrides_apply() {
        let text = r#"{"source": {"kind": "uniform_iid", "d": 2}, "k": [1, 2], "seed": 1,
            "objective": "entropy_max",
            "estimation": {"min_points_per_region": 10, "max_total_points": 1000, "mse_points": 100},
            "init": {"kind": "genetic", "generations": 5}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let p = c.optimizer_params();
        assert_eq!(p.objective, Objective::EntropyMax);
        assert_eq!(p.estimation.max_total_points, 1000);
        match c.init {
            InitStrategy::Genetic { params, .. } => assert_eq!(params.generations, 5),
            InitStrategy::Random => panic!("expected genetic init"),
        }
    }
}
