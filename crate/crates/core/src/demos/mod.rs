//! Demonstration data: scripted expert, dataset type, file format and the
//! dataset surgeries used by the learners.

mod expert;
mod io;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use expert::{Expert, ExpertConfig};
pub use io::{load, save, FORMAT_VERSION, MAGIC};

use crate::codec::{Codec, OBF_BOUND, OBF_DIM};
use crate::env::{
    milestone_score, Action, CraftWorld, EnvConfig, EnvVariant, Environment, Item, Observation,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Observation before the action.
    pub obs: Observation,
    pub action: Vec<f64>,
    pub reward_dense: f64,
    pub reward_sparse: f64,
    pub inventory_changed: bool,
    pub milestones: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Observation after the last transition.
    pub final_obs: Observation,
    /// Whether the episode ended in the environment (horizon or diamond).
    pub terminal: bool,
    pub seed: u64,
    pub variant: EnvVariant,
    pub final_score: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn milestone_flags(&self) -> [bool; Item::COUNT] {
        let mut f = [false; Item::COUNT];
        for t in &self.transitions {
            for m in &t.milestones {
                f[m.index()] = true;
            }
        }
        f
    }

    /// Index of the transition that first obtained `item`.
    pub fn milestone_step(&self, item: Item) -> Option<usize> {
        self.transitions
            .iter()
            .position(|t| t.milestones.contains(&item))
    }

    /// Observation following transition `i`.
    pub fn next_obs(&self, i: usize) -> &Observation {
        self.transitions
            .get(i + 1)
            .map_or(&self.final_obs, |t| &t.obs)
    }
}

/// A self-describing collection of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub codec: Codec,
    pub env_digest: [u8; 32],
    pub pov_size: usize,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| &t.transitions)
    }

    /// Copy with every trajectory cut before its first Plank.
    pub fn truncated_before_plank(&self) -> Dataset {
        Dataset {
            codec: self.codec.clone(),
            env_digest: self.env_digest,
            pov_size: self.pov_size,
            trajectories: self
                .trajectories
                .iter()
                .map(truncate_before_plank)
                .collect(),
        }
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// A warning when the dataset was produced under a different world config.
    pub fn env_mismatch(&self, env: &EnvConfig) -> Option<String> {
        (self.env_digest != env.digest()).then(|| {
            format!(
                "demonstrations were generated with environment digest {} but the current config has {}",
                hex::encode(self.env_digest),
                hex::encode(env.digest())
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub count: usize,
    pub seed: u64,
    pub noise_level: f64,
    /// Expected norm of the jitter added to recorded action vectors, as a
    /// fraction of the codebook's minimum pairwise distance.
    pub action_jitter: f64,
    pub full_chain: bool,
    pub variant: EnvVariant,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            count: 211,
            seed: 1000,
            noise_level: 0.1,
            action_jitter: 0.1,
            full_chain: false,
            variant: EnvVariant::ObtainChainDense,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("demos.count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::Config("demos.noise_level must lie in [0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.action_jitter) {
            return Err(Error::Config(
                "demos.action_jitter must lie in [0, 0.5)".into(),
            ));
        }
        if self.variant == EnvVariant::TreeChop {
            return Err(Error::Config(
                "demonstrations are recorded in an obtain-chain variant".into(),
            ));
        }
        Ok(())
    }
}

/// Records `cfg.count` expert trajectories using seeds `cfg.seed + i`.
pub fn generate_demos(env: &EnvConfig, codec: Arc<Codec>, cfg: &DemoConfig) -> Result<Dataset> {
    cfg.validate()?;
    env.validate()?;
    let trajectories = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| record_one(env, codec.clone(), cfg, cfg.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        codec: (*codec).clone(),
        env_digest: env.digest(),
        pov_size: env.pov_size,
        trajectories,
    })
}

fn record_one(
    env: &EnvConfig,
    codec: Arc<Codec>,
    cfg: &DemoConfig,
    seed: u64,
) -> Result<Trajectory> {
    let mut world = CraftWorld::new(env.clone(), codec.clone())?;
    let mut obs = world.reset(seed, cfg.variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0D3E_0D3E_0D3E_0D3E);
    let expert_cfg = if cfg.full_chain {
        ExpertConfig::full_chain()
    } else {
        ExpertConfig::default()
    };
    let mut expert = Expert::new(expert_cfg, cfg.noise_level);
    let sigma =
        cfg.action_jitter * codec.codebook.min_pairwise_distance() / (OBF_DIM as f64).sqrt();
    let mut transitions = Vec::new();
    let mut score = 0.0;
    let mut terminal = false;
    while let Some(action) = expert.next_action(world.state().expect("reset"), &mut rng) {
        let vector = jitter(codec.codebook.encode(action.index())?, sigma, &mut rng);
        let r = world.step(&vector)?;
        score += r.info.sparse_reward;
        transitions.push(Transition {
            obs,
            action: vector,
            reward_dense: r.info.dense_reward,
            reward_sparse: r.info.sparse_reward,
            inventory_changed: r.info.inventory_changed,
            milestones: r.info.milestones,
        });
        obs = r.obs;
        if r.done {
            terminal = true;
            break;
        }
    }
    Ok(Trajectory {
        transitions,
        final_obs: obs,
        terminal,
        seed,
        variant: cfg.variant,
        final_score: score,
    })
}

fn jitter<R: Rng>(entry: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    entry
        .iter()
        .map(|&x| {
            let n: f64 = rng.sample(StandardNormal);
            (x + sigma * n).clamp(-OBF_BOUND, OBF_BOUND)
        })
        .collect()
}

/// The prefix strictly before the transition that first yields a plank.
pub fn truncate_before_plank(traj: &Trajectory) -> Trajectory {
    match traj.milestone_step(Item::Plank) {
        None => traj.clone(),
        Some(cut) => {
            let transitions = traj.transitions[..cut].to_vec();
            let final_score = transitions.iter().map(|t| t.reward_sparse).sum();
            Trajectory {
                final_obs: traj.transitions[cut].obs.clone(),
                transitions,
                terminal: false,
                seed: traj.seed,
                variant: traj.variant,
                final_score,
            }
        }
    }
}

/// An inventory-changing demonstration step with the image dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalStep {
    pub inventory: Vec<f64>,
    pub action: Vec<f64>,
}

/// Per-step phase labels for every trajectory, and the phase to keep.
pub struct PhaseFilter<'a> {
    pub labels: &'a [Vec<u8>],
    pub phase: u8,
}

/// Exactly the transitions that changed the inventory, optionally restricted
/// to one phase.
pub fn extract_critical_steps(
    ds: &Dataset,
    filter: Option<PhaseFilter<'_>>,
) -> Result<Vec<CriticalStep>> {
    if let Some(f) = &filter {
        if f.labels.len() != ds.trajectories.len()
            || f.labels
                .iter()
                .zip(&ds.trajectories)
                .any(|(l, t)| l.len() != t.len())
        {
            return Err(Error::Input("phase labels do not match the dataset".into()));
        }
    }
    let mut out = Vec::new();
    for (ti, traj) in ds.trajectories.iter().enumerate() {
        for (si, t) in traj.transitions.iter().enumerate() {
            if !t.inventory_changed {
                continue;
            }
            if let Some(f) = &filter {
                if f.labels[ti][si] != f.phase {
                    continue;
                }
            }
            out.push(CriticalStep {
                inventory: t.obs.inv_obf.clone(),
                action: t.action.clone(),
            });
        }
    }
    Ok(out)
}

/// Sparse reward sum recomputed from the transitions equals the milestone score.
pub fn score_is_consistent(traj: &Trajectory) -> bool {
    let sum: f64 = traj.transitions.iter().map(|t| t.reward_sparse).sum();
    sum == traj.final_score && sum == milestone_score(&traj.milestone_flags())
}

/// Replays a trajectory through a fresh world and reports the first step whose
/// recorded inventory flag, rewards or milestones disagree.
pub fn replay_mismatch(
    env: &EnvConfig,
    codec: Arc<Codec>,
    traj: &Trajectory,
) -> Result<Option<usize>> {
    let mut world = CraftWorld::new(env.clone(), codec)?;
    let obs = world.reset(traj.seed, traj.variant)?;
    if traj.transitions.first().is_some_and(|t| t.obs != obs) {
        return Ok(Some(0));
    }
    for (i, t) in traj.transitions.iter().enumerate() {
        let r = world.step(&t.action)?;
        if r.info.inventory_changed != t.inventory_changed
            || r.info.dense_reward != t.reward_dense
            || r.info.sparse_reward != t.reward_sparse
            || r.info.milestones != t.milestones
            || traj.next_obs(i) != &r.obs
        {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// The original action a recorded vector decodes to.
pub fn decode(codec: &Codec, v: &[f64]) -> Result<Action> {
    let id = codec.codebook.nearest(v)?;
    Ok(Action::from_index(id).expect("codebook matches the action set"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Pov;

    fn codec() -> Arc<Codec> {
        Arc::new(Codec::for_craftworld(0).unwrap())
    }

    fn demos(count: usize, noise: f64) -> Dataset {
        let cfg = DemoConfig {
            count,
            noise_level: noise,
            ..DemoConfig::default()
        };
        generate_demos(&EnvConfig::default(), codec(), &cfg).unwrap()
    }

    fn blank_obs() -> Observation {
        Observation {
            pov: Pov::from_raw(32, vec![0; 32 * 32 * 3]).unwrap(),
            inv_obf: vec![0.0; OBF_DIM],
        }
    }

    fn synthetic(len: usize, plank_at: Option<usize>, changed_every: usize) -> Trajectory {
        let transitions = (0..len)
            .map(|i| Transition {
                obs: blank_obs(),
                action: vec![i as f64 * 1e-3; OBF_DIM],
                reward_dense: 0.0,
                reward_sparse: if Some(i) == plank_at { 2.0 } else { 0.0 },
                inventory_changed: changed_every > 0 && i % changed_every == 0,
                milestones: if Some(i) == plank_at {
                    vec![Item::Plank]
                } else {
                    vec![]
                },
            })
            .collect();
        Trajectory {
            transitions,
            final_obs: blank_obs(),
            terminal: false,
            seed: 0,
            variant: EnvVariant::ObtainChainDense,
            final_score: if plank_at.is_some() { 2.0 } else { 0.0 },
        }
    }

    #[test]
    fn default_count_is_211() {
        assert_eq!(DemoConfig::default().count, 211);
    }

    #[test]
    fn noiseless_expert_reaches_stone_pickaxe() {
        let ds = demos(100, 0.0);
        let ok = ds
            .trajectories
            .iter()
            .filter(|t| t.milestone_flags()[Item::StonePickaxe.index()])
            .count();
        assert!(ok >= 90, "{ok}/100");
    }

    #[test]
    fn noise_lowers_the_mean_score() {
        let mean = |ds: &Dataset| {
            ds.trajectories.iter().map(|t| t.final_score).sum::<f64>()
                / ds.trajectories.len() as f64
        };
        assert!(mean(&demos(100, 1.0)) < mean(&demos(100, 0.0)));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(demos(8, 0.3), demos(8, 0.3));
    }

    #[test]
    fn recorded_flags_agree_with_replay() {
        let ds = demos(40, 0.5);
        for t in &ds.trajectories {
            assert_eq!(
                replay_mismatch(&EnvConfig::default(), codec(), t).unwrap(),
                None
            );
            assert!(score_is_consistent(t));
            let dense: f64 = t.transitions.iter().map(|x| x.reward_dense).sum();
            let sparse: f64 = t.transitions.iter().map(|x| x.reward_sparse).sum();
            assert!(dense >= sparse);
        }
    }

    #[test]
    fn full_chain_expert_respects_dependencies() {
        let cfg = DemoConfig {
            count: 30,
            noise_level: 0.2,
            full_chain: true,
            ..DemoConfig::default()
        };
        let ds = generate_demos(&EnvConfig::default(), codec(), &cfg).unwrap();
        let mut diamonds = 0;
        for t in &ds.trajectories {
            for item in Item::ALL {
                if let Some(s) = t.milestone_step(item) {
                    for p in item.prerequisites() {
                        assert!(t.milestone_step(*p).is_some_and(|sp| sp < s));
                    }
                }
            }
            if t.milestone_flags()[Item::Diamond.index()] {
                diamonds += 1;
                assert!(t.terminal);
            }
        }
        assert!(diamonds > 0);
    }

    #[test]
    fn truncation_stops_strictly_before_the_plank() {
        let t = synthetic(200, Some(119), 0);
        let cut = truncate_before_plank(&t);
        assert_eq!(cut.len(), 119);
        assert!(cut
            .transitions
            .iter()
            .all(|x| !x.milestones.contains(&Item::Plank)));
        assert_eq!(cut.final_obs, t.transitions[119].obs);
        let none = synthetic(50, None, 0);
        assert_eq!(truncate_before_plank(&none), none);
        for t in &demos(20, 0.1).trajectories {
            let cut = truncate_before_plank(t);
            assert!(cut
                .transitions
                .iter()
                .all(|x| !x.milestones.contains(&Item::Plank)));
            assert_eq!(
                cut.len() + 1,
                t.milestone_step(Item::Plank).map_or(t.len() + 1, |s| s + 1)
            );
        }
    }

    #[test]
    fn critical_steps_are_the_inventory_changes() {
        let ds = Dataset {
            codec: (*codec()).clone(),
            env_digest: [0; 32],
            pov_size: 32,
            trajectories: vec![synthetic(500, None, 12)],
        };
        let mut exact = ds.clone();
        for (i, t) in exact.trajectories[0].transitions.iter_mut().enumerate() {
            t.inventory_changed = i % 25 == 3 && i < 40 * 25;
        }
        assert_eq!(
            exact.transitions().filter(|t| t.inventory_changed).count(),
            20
        );
        exact.trajectories.push(exact.trajectories[0].clone());
        assert_eq!(extract_critical_steps(&exact, None).unwrap().len(), 40);
        let empty = Dataset {
            trajectories: vec![],
            ..ds.clone()
        };
        assert!(extract_critical_steps(&empty, None).unwrap().is_empty());
        let labels = vec![(0..500)
            .map(|i| if i < 250 { 1 } else { 2 })
            .collect::<Vec<u8>>()];
        let phase2 = extract_critical_steps(
            &ds,
            Some(PhaseFilter {
                labels: &labels,
                phase: 2,
            }),
        )
        .unwrap();
        assert_eq!(phase2.len(), (250..500).filter(|i| i % 12 == 0).count());
    }

    #[test]
    fn critical_actions_are_never_moves() {
        let ds = demos(50, 0.0);
        let codec = codec();
        for step in extract_critical_steps(&ds, None).unwrap() {
            let a = decode(&codec, &step.action).unwrap();
            assert!(a.is_inventory_action(), "{a:?}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let ds = demos(5, 0.2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.bin");
        save(&ds, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ds);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(io::to_bytes(&ds).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(io::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(
            io::from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Format(_))
        ));
        let mut version = bytes.clone();
        version[MAGIC.len()] = 9;
        assert!(matches!(io::from_bytes(&version), Err(Error::Format(_))));
        let mut flipped = bytes.clone();
        let mid = bytes.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(io::from_bytes(&flipped), Err(Error::Format(_))));
    }

    #[test]
    fn env_digest_mismatch_is_reported() {
        let ds = demos(1, 0.0);
        assert!(ds.env_mismatch(&EnvConfig::default()).is_none());
        let other = EnvConfig {
            tree_density: 0.2,
            ..EnvConfig::default()
        };
        assert!(ds.env_mismatch(&other).is_some());
    }

    #[test]
    fn jitter_stays_in_bounds_and_decodes() {
        let ds = demos(10, 0.1);
        let codec = codec();
        for t in ds.transitions() {
            assert!(t.action.iter().all(|x| x.abs() <= OBF_BOUND));
            decode(&codec, &t.action).unwrap();
        }
    }
}
