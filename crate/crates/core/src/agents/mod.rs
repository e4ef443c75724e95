//! The five subtask agents and their trainers.

mod bc;
mod larmi;
mod random;
mod sqil;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bc::{
    train_bc_classifier, train_craft_wooden, BcClassifier, BcConfig, BcReport, CraftWoodenPolicy,
    FlatBcConfig, FlatBcPolicy,
};
pub use larmi::{
    larmi_loss, larmi_loss_grad, train_digstone, train_larmi, DigStonePolicy, LarmiConfig,
    LarmiReport,
};
pub use random::{CraftStonePolicy, ExplorationSchedule, RandomSearchPolicy};
pub use sqil::{
    batch_targets, demo_transitions, evaluate_treechop, soft_target, sqil_relabel, sqil_step,
    sqil_update, train_choptree, Acting, ChopTreeConfig, ChopTreeNet, ChopTreePolicy,
    ChopTreeReport, ReplayBuffer, Source, SqilBatch, SqilLoss, SqilParams, SqilProbe,
    SqilTransition,
};

use crate::discretize::DiscreteActionTable;
use crate::env::{Observation, Pov};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    ChopTree,
    CraftWoodenPickaxe,
    DigStone,
    CraftStonePickaxe,
    RandomSearch,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::ChopTree,
        AgentKind::CraftWoodenPickaxe,
        AgentKind::DigStone,
        AgentKind::CraftStonePickaxe,
        AgentKind::RandomSearch,
    ];

    /// Phase label `1..=5`.
    pub fn phase(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_phase(p: u8) -> Option<AgentKind> {
        (1..=5).contains(&p).then(|| Self::ALL[p as usize - 1])
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::ChopTree => "choptree",
            AgentKind::CraftWoodenPickaxe => "craft-wooden",
            AgentKind::DigStone => "digstone",
            AgentKind::CraftStonePickaxe => "craft-stone",
            AgentKind::RandomSearch => "random-search",
        }
    }

    /// Display name used in reports.
    pub fn title(self) -> &'static str {
        match self {
            AgentKind::ChopTree => "ChopTree",
            AgentKind::CraftWoodenPickaxe => "CraftWoodenPickaxe",
            AgentKind::DigStone => "DigStone",
            AgentKind::CraftStonePickaxe => "CraftStonePickaxe",
            AgentKind::RandomSearch => "RandomSearch",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s || k.title().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown agent kind `{s}` (expected one of choptree, craft-wooden, digstone, craft-stone, random-search)"
                ))
            })
    }
}

/// Maps observations to one of a fixed set of permitted action vectors.
pub trait Policy: Send {
    /// The permitted vectors.
    fn table(&self) -> &DiscreteActionTable;
    fn act_index(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> usize;
    fn act(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let i = self.act_index(obs, rng);
        self.table().entries[i].clone()
    }
    /// Clears per-episode state.
    fn reset(&mut self) {}
}

/// Average-pools the image into a `cells x cells x 3` grid.
pub fn pooled_pov(pov: &Pov, cells: usize) -> Vec<f64> {
    let p = pov.size();
    let cell = p / cells;
    let mut out = vec![0.0; cells * cells * 3];
    for r in 0..cells * cell {
        for c in 0..cells * cell {
            let o = ((r / cell) * cells + c / cell) * 3;
            for ch in 0..3 {
                out[o + ch] += pov.value(r, c, ch);
            }
        }
    }
    let area = (cell * cell) as f64;
    out.iter_mut().for_each(|v| *v /= area);
    out
}

/// Obfuscated inventory, optionally followed by pooled image features.
pub fn state_features(obs: &Observation, pov_cells: usize) -> Vec<f64> {
    let mut f = obs.inv_obf.clone();
    if pov_cells > 0 {
        f.extend(pooled_pov(&obs.pov, pov_cells));
    }
    f
}

pub fn feature_width(pov_cells: usize) -> usize {
    crate::codec::OBF_DIM + pov_cells * pov_cells * 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_follow_the_chain() {
        for (i, k) in AgentKind::ALL.iter().enumerate() {
            assert_eq!(k.phase() as usize, i + 1);
            assert_eq!(AgentKind::from_phase(k.phase()), Some(*k));
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), *k);
        }
        assert!(AgentKind::ChopTree < AgentKind::RandomSearch);
        assert!("miner".parse::<AgentKind>().is_err());
        assert_eq!(AgentKind::from_phase(0), None);
    }

    #[test]
    fn pooling_averages_cells() {
        let mut data = vec![0u8; 32 * 32 * 3];
        for r in 0..8 {
            for c in 0..8 {
                data[(r * 32 + c) * 3] = 255;
            }
        }
        let pov = Pov::from_raw(32, data).unwrap();
        let f = pooled_pov(&pov, 4);
        assert_eq!(f.len(), 48);
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|v| *v == 0.0));
    }
}
