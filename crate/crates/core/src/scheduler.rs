//! Episode division points, phase labels and the phase classifier that
//! picks the active agent.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    state_features, train_bc_classifier, AgentKind, BcClassifier, BcConfig, BcReport,
    ChopTreePolicy, CraftStonePolicy, CraftWoodenPolicy, DigStonePolicy, Policy,
    RandomSearchPolicy,
};
use crate::demos::{Dataset, Trajectory};
use crate::env::{Item, Observation};
use crate::error::{Error, Result};
use crate::nn::{argmax, Checkpoint};

pub const N_PHASES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivisionThresholds {
    pub log_threshold: u32,
    pub stone_threshold: u32,
}

fn collected(t: &crate::demos::Transition) -> u32 {
    (t.reward_dense - t.reward_sparse).round().max(0.0) as u32
}

/// Minimum logs gathered before the wooden pickaxe, and minimum stones
/// gathered from then until both the stone pickaxe and the furnace exist,
/// over trajectories that obtained both. Collection events are read from the
/// gap between dense and sparse rewards; before the wooden pickaxe only logs
/// can be collected.
pub fn compute_thresholds(ds: &Dataset) -> Result<DivisionThresholds> {
    let mut best: Option<(u32, u32)> = None;
    for traj in &ds.trajectories {
        let (Some(wp), Some(sp), Some(fu)) = (
            traj.milestone_step(Item::WoodenPickaxe),
            traj.milestone_step(Item::StonePickaxe),
            traj.milestone_step(Item::Furnace),
        ) else {
            continue;
        };
        let logs: u32 = traj.transitions[..wp].iter().map(collected).sum();
        let stones: u32 = traj.transitions[wp..=sp.max(fu)]
            .iter()
            .map(collected)
            .sum();
        best = Some(match best {
            None => (logs, stones),
            Some((l, s)) => (l.min(logs), s.min(stones)),
        });
    }
    let (l, s) = best.ok_or_else(|| {
        Error::Degenerate("no demonstration obtains both the stone pickaxe and the furnace".into())
    })?;
    if l == 0 || s == 0 {
        return Err(Error::Degenerate(format!(
            "degenerate division thresholds (logs {l}, stones {s}); demonstrations must be dense"
        )));
    }
    Ok(DivisionThresholds {
        log_threshold: l,
        stone_threshold: s,
    })
}

/// Phase of the state before each transition.
pub fn label_episode(traj: &Trajectory, th: &DivisionThresholds) -> Vec<u8> {
    let (mut logs, mut stones) = (0u32, 0u32);
    let (mut wp, mut sp, mut fu) = (false, false, false);
    let mut phase = 1u8;
    let mut out = Vec::with_capacity(traj.len());
    for t in &traj.transitions {
        let now = if sp && fu {
            5
        } else if wp && stones >= th.stone_threshold {
            4
        } else if wp {
            3
        } else if logs >= th.log_threshold {
            2
        } else {
            1
        };
        phase = phase.max(now);
        out.push(phase);
        let c = collected(t);
        if wp {
            stones += c;
        } else {
            logs += c;
        }
        for m in &t.milestones {
            match m {
                Item::WoodenPickaxe => wp = true,
                Item::StonePickaxe => sp = true,
                Item::Furnace => fu = true,
                _ => {}
            }
        }
    }
    out
}

pub fn label_dataset(ds: &Dataset, th: &DivisionThresholds) -> Vec<Vec<u8>> {
    ds.trajectories
        .iter()
        .map(|t| label_episode(t, th))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Append pooled image features to the inventory.
    pub use_pov: bool,
    pub pov_cells: usize,
    /// Every n-th trajectory is held out for validation.
    pub holdout_every: usize,
    pub classifier: BcConfig,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            use_pov: false,
            pov_cells: 4,
            holdout_every: 5,
            classifier: BcConfig {
                hidden: vec![64, 64],
                epochs: 30,
                batch_size: 64,
                lr: 2e-3,
                seed: 13,
            },
        }
    }
}

impl SchedulerConfig {
    fn cells(&self) -> usize {
        if self.use_pov {
            self.pov_cells
        } else {
            0
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchedulerModel {
    classifier: BcClassifier,
    pub thresholds: DivisionThresholds,
    pov_cells: usize,
}

impl SchedulerModel {
    pub fn new(
        classifier: BcClassifier,
        thresholds: DivisionThresholds,
        pov_cells: usize,
    ) -> Result<Self> {
        if classifier.n_classes() != N_PHASES
            || classifier.input_width() != crate::agents::feature_width(pov_cells)
        {
            return Err(Error::Shape(
                "scheduler classifier does not fit its features or phases".into(),
            ));
        }
        Ok(Self {
            classifier,
            thresholds,
            pov_cells,
        })
    }

    pub fn pov_cells(&self) -> usize {
        self.pov_cells
    }

    pub fn classifier(&self) -> &BcClassifier {
        &self.classifier
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        state_features(obs, self.pov_cells)
    }

    pub fn probabilities(&self, obs: &Observation) -> Vec<f64> {
        self.classifier
            .probabilities(&self.features(obs))
            .expect("feature width matches")
    }

    /// Most probable phase; ties go to the earlier one.
    pub fn select_agent(&self, obs: &Observation) -> AgentKind {
        let p = self.probabilities(obs);
        AgentKind::from_phase(argmax(&p) as u8 + 1).expect("five phases")
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        self.classifier.write_to(ck, name);
    }

    pub fn read_from(
        ck: &Checkpoint,
        name: &str,
        thresholds: DivisionThresholds,
        pov_cells: usize,
    ) -> Result<Self> {
        Self::new(BcClassifier::read_from(ck, name)?, thresholds, pov_cells)
    }
}

/// Per-step classification of phase labels, with whole trajectories held out.
pub fn train_scheduler(
    ds: &Dataset,
    th: &DivisionThresholds,
    cfg: &SchedulerConfig,
) -> Result<(SchedulerModel, BcReport)> {
    let labels = label_dataset(ds, th);
    let cells = cfg.cells();
    let (mut xs, mut ys, mut hx, mut hy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut counts = [0usize; N_PHASES];
    for (i, (traj, lab)) in ds.trajectories.iter().zip(&labels).enumerate() {
        let held = cfg.holdout_every > 1 && i % cfg.holdout_every == cfg.holdout_every - 1;
        for (t, &l) in traj.transitions.iter().zip(lab) {
            let (x, y) = if held {
                (&mut hx, &mut hy)
            } else {
                (&mut xs, &mut ys)
            };
            x.push(state_features(&t.obs, cells));
            y.push(l as usize - 1);
            if !held {
                counts[l as usize - 1] += 1;
            }
        }
    }
    if let Some(p) = counts.iter().position(|&c| c == 0) {
        let kind = AgentKind::ALL[p];
        return Err(Error::Degenerate(format!(
            "no training samples for phase {} ({})",
            kind.phase(),
            kind.title()
        )));
    }
    let (clf, report) = train_bc_classifier(&xs, &ys, N_PHASES, Some((&hx, &hy)), &cfg.classifier)?;
    Ok((SchedulerModel::new(clf, *th, cells)?, report))
}

/// The scheduler and the five agents, switching on observations only.
#[derive(Clone, Debug)]
pub struct HierarchicalPolicy {
    pub scheduler: SchedulerModel,
    pub choptree: ChopTreePolicy,
    pub craft_wooden: CraftWoodenPolicy,
    pub digstone: DigStonePolicy,
    pub craft_stone: CraftStonePolicy,
    pub random_search: RandomSearchPolicy,
}

impl HierarchicalPolicy {
    pub fn agent(&mut self, kind: AgentKind) -> &mut dyn Policy {
        match kind {
            AgentKind::ChopTree => &mut self.choptree,
            AgentKind::CraftWoodenPickaxe => &mut self.craft_wooden,
            AgentKind::DigStone => &mut self.digstone,
            AgentKind::CraftStonePickaxe => &mut self.craft_stone,
            AgentKind::RandomSearch => &mut self.random_search,
        }
    }

    pub fn act(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> (AgentKind, Vec<f64>) {
        let kind = self.scheduler.select_agent(obs);
        (kind, self.agent(kind).act(obs, rng))
    }

    pub fn reset(&mut self) {
        for k in AgentKind::ALL {
            self.agent(k).reset();
        }
    }
}
