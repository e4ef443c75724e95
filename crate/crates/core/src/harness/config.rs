use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{BcConfig, ChopTreeConfig, ExplorationSchedule, FlatBcConfig, LarmiConfig};
use crate::demos::DemoConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::scheduler::SchedulerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionsConfig {
    /// Clusters over actions that leave the inventory unchanged.
    pub k_movement: usize,
    /// Clusters over inventory-changing actions.
    pub k_change: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Penalty of the critical-action clustering; data-driven when absent.
    pub dp_lambda: Option<f64>,
}

impl Default for ActionsConfig {
    fn default() -> Self {
        Self {
            k_movement: 30,
            k_change: 30,
            max_iters: 100,
            seed: 3,
            dp_lambda: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub choptree: ChopTreeConfig,
    pub craft_wooden: BcConfig,
    pub digstone: LarmiConfig,
    pub random_search: ExplorationSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed_base: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed_base: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Training frames across all online trainers. Evaluation is not counted.
    pub cap: u64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { cap: 200_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub codec: CodecConfig,
    pub demos: DemoConfig,
    pub actions: ActionsConfig,
    pub agent: AgentsConfig,
    pub scheduler: SchedulerConfig,
    pub eval: EvalConfig,
    pub budget: BudgetConfig,
    pub baseline: FlatBcConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The fully defaulted configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.demos.validate()?;
        self.agent.choptree.validate()?;
        self.agent.craft_wooden.validate()?;
        self.agent.digstone.validate()?;
        self.agent.random_search.validate()?;
        self.scheduler.classifier.validate()?;
        self.baseline.classifier.validate()?;
        if self.actions.k_movement == 0 || self.actions.k_change == 0 || self.actions.max_iters == 0
        {
            return Err(Error::Config(
                "actions.k_movement, k_change and max_iters must be positive".into(),
            ));
        }
        if matches!(self.actions.dp_lambda, Some(l) if !(l > 0.0)) {
            return Err(Error::Config("actions.dp_lambda must be positive".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the canonical serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = RunConfig::from_toml("[eval]\nepisodes = 5\n").unwrap();
        assert_eq!(c.eval.episodes, 5);
        assert_eq!(c.demos.count, 211);
        assert_eq!(c.budget.cap, 200_000);
        assert_eq!(c.agent.digstone.margin, 0.8);
    }

    #[test]
    fn round_trip_and_digest() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let mut d = c.clone();
        d.eval.seed_base += 1;
        assert_ne!(d.digest(), c.digest());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_toml("[env]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[eval]\nepisodes = 0\n").is_err());
        assert!(RunConfig::from_toml("[agent.digstone]\nmargin = -1.0\n").is_err());
        assert!(RunConfig::from_toml("not toml [").is_err());
    }
}
