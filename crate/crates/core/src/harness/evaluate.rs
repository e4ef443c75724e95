use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agents::{AgentKind, Policy};
use crate::codec::Codec;
use crate::env::{CraftWorld, EnvConfig, EnvVariant, Environment, Observation};
use crate::error::{Error, Result};
use crate::scheduler::HierarchicalPolicy;

/// Anything evaluable: picks an action from the observation alone.
pub trait Controller: Clone + Send + Sync {
    fn reset(&mut self);
    /// The action and, for composed policies, the agent that produced it.
    fn control(&mut self, obs: &Observation, rng: &mut ChaCha8Rng)
        -> (Option<AgentKind>, Vec<f64>);
}

impl Controller for HierarchicalPolicy {
    fn reset(&mut self) {
        HierarchicalPolicy::reset(self);
    }

    fn control(
        &mut self,
        obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> (Option<AgentKind>, Vec<f64>) {
        let (k, a) = self.act(obs, rng);
        (Some(k), a)
    }
}

/// A single policy run for the whole episode.
#[derive(Clone, Debug)]
pub struct Flat<P>(pub P);

impl<P: Policy + Clone + Sync> Controller for Flat<P> {
    fn reset(&mut self) {
        self.0.reset();
    }

    fn control(
        &mut self,
        obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> (Option<AgentKind>, Vec<f64>) {
        (None, self.0.act(obs, rng))
    }
}

/// Emits one fixed vector forever.
#[derive(Clone, Debug)]
pub struct Constant(pub Vec<f64>);

impl Controller for Constant {
    fn reset(&mut self) {}

    fn control(
        &mut self,
        _obs: &Observation,
        _rng: &mut ChaCha8Rng,
    ) -> (Option<AgentKind>, Vec<f64>) {
        (None, self.0.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub score: f64,
    pub length: usize,
    /// Steps during which each agent was active.
    pub agent_steps: [u64; 5],
}

pub fn run_episode<C: Controller>(
    controller: &mut C,
    env_cfg: &EnvConfig,
    codec: Arc<Codec>,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut env = CraftWorld::new(env_cfg.clone(), codec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE7A1_5EED);
    controller.reset();
    let mut obs = env.reset(seed, EnvVariant::ObtainChainSparse)?;
    let mut res = EpisodeResult {
        seed,
        score: 0.0,
        length: 0,
        agent_steps: [0; 5],
    };
    loop {
        let (kind, a) = controller.control(&obs, &mut rng);
        if let Some(k) = kind {
            res.agent_steps[k.phase() as usize - 1] += 1;
        }
        let r = env.step(&a)?;
        res.score += r.reward;
        res.length += 1;
        obs = r.obs;
        if r.done {
            return Ok(res);
        }
    }
}

/// One sparse-reward episode per seed, in parallel; results in seed order.
pub fn evaluate<C: Controller>(
    controller: &C,
    env_cfg: &EnvConfig,
    codec: Arc<Codec>,
    seeds: &[u64],
) -> Result<Vec<EpisodeResult>> {
    seeds
        .par_iter()
        .map(|&s| run_episode(&mut controller.clone(), env_cfg, codec.clone(), s))
        .collect()
}

pub fn seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

const SCORES_HEADER: &str =
    "seed,score,length,choptree,craft_wooden,digstone,craft_stone,random_search";

pub fn scores_to_csv(results: &[EpisodeResult]) -> String {
    let mut s = format!("{SCORES_HEADER}\n");
    for r in results {
        let _ = write!(s, "{},{},{}", r.seed, r.score, r.length);
        for c in r.agent_steps {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

pub fn scores_from_csv(text: &str) -> Result<Vec<EpisodeResult>> {
    let bad = |m: String| Error::Format(format!("scores csv: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some(SCORES_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
            }
            let num = |j: usize| {
                f[j].parse::<u64>()
                    .map_err(|_| bad(format!("row {} field {}", i + 1, j + 1)))
            };
            let mut agent_steps = [0; 5];
            for (k, a) in agent_steps.iter_mut().enumerate() {
                *a = num(3 + k)?;
            }
            Ok(EpisodeResult {
                seed: num(0)?,
                score: f[1]
                    .parse()
                    .map_err(|_| bad(format!("row {} score", i + 1)))?,
                length: num(2)? as usize,
                agent_steps,
            })
        })
        .collect()
}
