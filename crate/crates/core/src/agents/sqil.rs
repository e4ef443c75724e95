use std::sync::Arc;

use log::info;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::budget::{FrameBudget, MeteredWorld};
use crate::codec::Codec;
use crate::demos::{truncate_before_plank, Dataset};
use crate::discretize::DiscreteActionTable;
use crate::env::{CraftWorld, EnvConfig, EnvVariant, Environment, Observation, Pov};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, choptree_specs, ensure_finite, logsumexp, mse, softmax, Checkpoint, Differentiable,
    Network, Optimizer, Tensor,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqilParams {
    pub gamma: f64,
    /// Soft-max temperature.
    pub alpha: f64,
    /// Weight of the image reconstruction term.
    pub beta: f64,
    pub demo_reward: f64,
    pub online_reward: f64,
}

impl Default for SqilParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1.0,
            beta: 0.1,
            demo_reward: 1.0,
            online_reward: 0.0,
        }
    }
}

/// `r + (1 - done) * gamma * alpha * log sum_a exp(q_next(a) / alpha)`.
pub fn soft_target(reward: f64, done: bool, q_next: &[f64], gamma: f64, alpha: f64) -> f64 {
    if done {
        return reward;
    }
    let scaled: Vec<f64> = q_next.iter().map(|q| q / alpha).collect();
    reward + gamma * alpha * logsumexp(&scaled)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Demo,
    Online,
}

/// An image transition over table indices. Frames are shared between
/// consecutive transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SqilTransition {
    pub obs: Arc<Pov>,
    pub action: usize,
    pub reward: f64,
    pub next: Arc<Pov>,
    pub done: bool,
}

/// Replaces the reward with the constant of its source.
pub fn sqil_relabel(mut t: SqilTransition, source: Source, params: &SqilParams) -> SqilTransition {
    t.reward = match source {
        Source::Demo => params.demo_reward,
        Source::Online => params.online_reward,
    };
    t
}

/// Fixed-capacity ring buffer whose contents all carry one source's reward.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    source: Source,
    capacity: usize,
    items: Vec<SqilTransition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(source: Source, capacity: usize) -> Self {
        Self {
            source,
            capacity: capacity.max(1),
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[SqilTransition] {
        &self.items
    }

    /// Relabels and stores, overwriting the oldest entry when full.
    pub fn push(&mut self, t: SqilTransition, params: &SqilParams) {
        let t = sqil_relabel(t, self.source, params);
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng>(&'a self, n: usize, rng: &mut R) -> Vec<&'a SqilTransition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

fn frames_tensor(frames: &[&Pov]) -> Tensor {
    let p = frames[0].size();
    let per = 3 * p * p;
    let mut data = vec![0.0; frames.len() * per];
    for (f, out) in frames.iter().zip(data.chunks_exact_mut(per)) {
        f.write_chw(out);
    }
    Tensor::new(vec![frames.len(), 3, p, p], data).expect("sized")
}

#[derive(Clone, Debug)]
pub struct SqilBatch {
    pub obs: Tensor,
    pub next: Tensor,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl SqilBatch {
    pub fn from_transitions(ts: &[&SqilTransition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::Degenerate("empty batch".into()));
        }
        let obs: Vec<&Pov> = ts.iter().map(|t| &*t.obs).collect();
        let next: Vec<&Pov> = ts.iter().map(|t| &*t.next).collect();
        Ok(Self {
            obs: frames_tensor(&obs),
            next: frames_tensor(&next),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Convolutional encoder feeding a dueling Q head and an image decoder.
#[derive(Clone, Debug)]
pub struct ChopTreeNet {
    pub encoder: Network,
    pub head: Network,
    pub decoder: Network,
}

impl ChopTreeNet {
    pub fn new(pov: usize, n_actions: usize, seed: u64) -> Result<Self> {
        let (e, h, d) = choptree_specs(pov, n_actions);
        Ok(Self {
            encoder: Network::new(e, seed)?,
            head: Network::new(h, seed.wrapping_add(1))?,
            decoder: Network::new(d, seed.wrapping_add(2))?,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.head.output_shape()[0]
    }

    pub fn pov_size(&self) -> usize {
        self.encoder.input_shape()[1]
    }

    pub fn q_values(&self, obs: &Tensor) -> Result<Tensor> {
        self.head.predict(&self.encoder.predict(obs)?)
    }

    pub fn reconstruct(&self, obs: &Tensor) -> Result<Tensor> {
        self.decoder.predict(&self.encoder.predict(obs)?)
    }

    pub fn copy_from(&mut self, other: &ChopTreeNet) -> Result<()> {
        self.encoder.copy_params_from(&other.encoder)?;
        self.head.copy_params_from(&other.head)?;
        self.decoder.copy_params_from(&other.decoder)
    }

    fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.head.zero_grad();
        self.decoder.zero_grad();
    }

    /// Loss and parameter gradients for fixed Bellman targets.
    fn accumulate(&mut self, batch: &SqilBatch, targets: &[f64], beta: f64) -> Result<SqilLoss> {
        self.zero_grad();
        let feat = self.encoder.forward(&batch.obs)?;
        let q = self.head.forward(&feat)?;
        let rec = self.decoder.forward(&feat)?;
        let (b, n) = (batch.len(), q.shape()[1]);
        let mut gq = Tensor::zeros(q.shape().to_vec());
        let mut bellman = 0.0;
        for i in 0..b {
            let d = q.data()[i * n + batch.actions[i]] - targets[i];
            bellman += d * d / b as f64;
            gq.data_mut()[i * n + batch.actions[i]] = 2.0 * d / b as f64;
        }
        let (recon, mut grec) = mse(&rec, batch.obs.data())?;
        grec.data_mut().iter_mut().for_each(|g| *g *= beta);
        let mut dfeat = self.head.backward(&gq)?;
        let dfeat2 = self.decoder.backward(&grec)?;
        dfeat
            .data_mut()
            .iter_mut()
            .zip(dfeat2.data())
            .for_each(|(a, b)| *a += b);
        self.encoder.backward(&dfeat)?;
        Ok(SqilLoss {
            bellman,
            recon,
            total: bellman + beta * recon,
        })
    }

    fn relu_pattern(&self) -> Vec<bool> {
        let mut p = self.encoder.relu_pattern();
        p.extend(self.head.relu_pattern());
        p.extend(self.decoder.relu_pattern());
        p
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        ck.put_network(&format!("{name}/encoder"), &self.encoder);
        ck.put_network(&format!("{name}/head"), &self.head);
        ck.put_network(&format!("{name}/decoder"), &self.decoder);
    }

    pub fn read_from(ck: &Checkpoint, name: &str, pov: usize, n_actions: usize) -> Result<Self> {
        let (e, h, d) = choptree_specs(pov, n_actions);
        Ok(Self {
            encoder: ck.get_network(&format!("{name}/encoder"), &e)?,
            head: ck.get_network(&format!("{name}/head"), &h)?,
            decoder: ck.get_network(&format!("{name}/decoder"), &d)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqilLoss {
    pub bellman: f64,
    pub recon: f64,
    pub total: f64,
}

/// Soft Bellman targets from the target network.
pub fn batch_targets(
    target: &ChopTreeNet,
    batch: &SqilBatch,
    params: &SqilParams,
) -> Result<Vec<f64>> {
    let qn = target.q_values(&batch.next)?;
    Ok((0..batch.len())
        .map(|i| {
            soft_target(
                batch.rewards[i],
                batch.dones[i],
                qn.row(i),
                params.gamma,
                params.alpha,
            )
        })
        .collect())
}

/// One optimizer step on a prepared batch.
pub fn sqil_step(
    net: &mut ChopTreeNet,
    target: &ChopTreeNet,
    batch: &SqilBatch,
    params: &SqilParams,
    opt: &mut Optimizer,
) -> Result<SqilLoss> {
    let y = batch_targets(target, batch, params)?;
    let loss = net.accumulate(batch, &y, params.beta)?;
    ensure_finite(
        loss.total,
        opt.steps(),
        &[&net.encoder, &net.head, &net.decoder],
    )?;
    opt.step(&mut [&mut net.encoder, &mut net.head, &mut net.decoder])?;
    Ok(loss)
}

/// Samples a mixed batch from both buffers and takes one step.
#[allow(clippy::too_many_arguments)]
pub fn sqil_update<R: Rng>(
    net: &mut ChopTreeNet,
    target: &ChopTreeNet,
    demo: &ReplayBuffer,
    online: &ReplayBuffer,
    batch_size: usize,
    demo_fraction: f64,
    params: &SqilParams,
    opt: &mut Optimizer,
    rng: &mut R,
) -> Result<SqilLoss> {
    if demo.is_empty() || online.is_empty() {
        return Err(Error::Degenerate(format!(
            "soft Q update needs both buffers non-empty (demo {}, online {})",
            demo.len(),
            online.len()
        )));
    }
    let n_demo = ((batch_size as f64 * demo_fraction).round() as usize).min(batch_size);
    let mut ts = demo.sample(n_demo, rng);
    ts.extend(online.sample(batch_size - n_demo, rng));
    sqil_step(net, target, &SqilBatch::from_transitions(&ts)?, params, opt)
}

/// The combined objective at fixed targets, exposed for gradient checking.
pub struct SqilProbe {
    pub net: ChopTreeNet,
    pub batch: SqilBatch,
    pub targets: Vec<f64>,
    pub beta: f64,
}

impl SqilProbe {
    /// Targets within one unit of the current Q values, so residuals stay
    /// O(1) and finite differences are not drowned by cancellation.
    pub fn near_current<R: Rng>(
        net: ChopTreeNet,
        batch: SqilBatch,
        beta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let q = net.q_values(&batch.obs)?;
        let targets = (0..batch.len())
            .map(|i| q.row(i)[batch.actions[i]] + rng.random_range(-1.0..1.0))
            .collect();
        Ok(Self {
            net,
            batch,
            targets,
            beta,
        })
    }

    fn blob(&self, mut i: usize) -> (usize, usize, usize) {
        for (n, net) in [&self.net.encoder, &self.net.head, &self.net.decoder]
            .iter()
            .enumerate()
        {
            for (b, p) in net.params().iter().enumerate() {
                if i < p.len() {
                    return (n, b, i);
                }
                i -= p.len();
            }
        }
        panic!("parameter index out of range");
    }

    fn sub(&mut self, n: usize) -> &mut Network {
        match n {
            0 => &mut self.net.encoder,
            1 => &mut self.net.head,
            _ => &mut self.net.decoder,
        }
    }
}

impl Differentiable for SqilProbe {
    fn param_count(&self) -> usize {
        self.net.encoder.num_params() + self.net.head.num_params() + self.net.decoder.num_params()
    }

    fn get_param(&self, i: usize) -> f64 {
        let (n, b, j) = self.blob(i);
        [&self.net.encoder, &self.net.head, &self.net.decoder][n].params()[b][j]
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (n, b, j) = self.blob(i);
        self.sub(n).params_and_grads()[b].0[j] = v;
    }

    fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)> {
        let l = self.net.accumulate(&self.batch, &self.targets, self.beta)?;
        let mut g = self.net.encoder.grads().concat();
        g.extend(self.net.head.grads().concat());
        g.extend(self.net.decoder.grads().concat());
        Ok((l.total, g))
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self
            .net
            .accumulate(&self.batch, &self.targets, self.beta)?
            .total)
    }

    fn kink_pattern(&self) -> Vec<bool> {
        self.net.relu_pattern()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChopTreeConfig {
    pub sqil: SqilParams,
    pub batch_size: usize,
    pub demo_fraction: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    /// Updates between target-network syncs.
    pub target_sync: u64,
    /// Environment frames per gradient update.
    pub update_every: u64,
    /// Frames collected before the first update.
    pub learning_starts: u64,
    pub stage1_frames: u64,
    pub stage2_frames: u64,
    pub online_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_frames: u64,
    /// Action selection of the trained policy.
    pub acting: Acting,
    pub seed: u64,
}

impl Default for ChopTreeConfig {
    fn default() -> Self {
        Self {
            sqil: SqilParams::default(),
            batch_size: 32,
            demo_fraction: 0.5,
            lr: 5e-4,
            max_grad_norm: 10.0,
            target_sync: 500,
            update_every: 4,
            learning_starts: 500,
            stage1_frames: 60_000,
            stage2_frames: 40_000,
            online_capacity: 50_000,
            eps_start: 0.5,
            eps_end: 0.05,
            eps_decay_frames: 30_000,
            acting: Acting::default(),
            seed: 41,
        }
    }
}

impl ChopTreeConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if self.batch_size == 0
            || self.update_every == 0
            || self.target_sync == 0
            || !(self.lr > 0.0)
        {
            return Err(Error::Config(
                "choptree needs batch_size, update_every, target_sync and lr > 0".into(),
            ));
        }
        if !unit.contains(&self.demo_fraction)
            || !unit.contains(&self.eps_start)
            || !unit.contains(&self.eps_end)
        {
            return Err(Error::Config(
                "choptree probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.sqil.alpha > 0.0)
            || !(0.0..1.0).contains(&self.sqil.gamma)
            || self.sqil.beta < 0.0
        {
            return Err(Error::Config(
                "soft Q needs alpha > 0, 0 <= gamma < 1, beta >= 0".into(),
            ));
        }
        self.acting.validate()
    }

    fn epsilon(&self, frame: u64) -> f64 {
        if frame >= self.eps_decay_frames {
            return self.eps_end;
        }
        self.eps_start
            + (self.eps_end - self.eps_start) * frame as f64 / self.eps_decay_frames as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChopTreeReport {
    pub demo_transitions: usize,
    pub stage1_frames: u64,
    pub stage2_frames: u64,
    pub updates: u64,
    pub stopped_by_budget: bool,
    /// Logs per finished stage-1 episode.
    pub stage1_logs: Vec<f64>,
    /// Stage-2 segments that reached the log target.
    pub stage2_segments: usize,
    pub stage2_successes: usize,
    /// Mean losses over consecutive windows of updates.
    pub loss_history: Vec<SqilLoss>,
}

/// Action selection of the trained ChopTree agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Acting {
    /// Sample from `softmax(Q / temperature)`, the soft-Q policy itself.
    Boltzmann {
        temperature: f64,
    },
    EpsilonGreedy {
        epsilon: f64,
    },
}

impl Default for Acting {
    fn default() -> Self {
        Acting::Boltzmann { temperature: 1.0 }
    }
}

impl Acting {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Acting::Boltzmann { temperature } if !(temperature > 0.0) => Err(Error::Config(
                "boltzmann temperature must be positive".into(),
            )),
            Acting::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(Error::Config("epsilon must lie in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Trained ChopTree agent over its own action table.
#[derive(Clone, Debug)]
pub struct ChopTreePolicy {
    net: ChopTreeNet,
    table: DiscreteActionTable,
    pub acting: Acting,
}

impl ChopTreePolicy {
    pub fn new(net: ChopTreeNet, table: DiscreteActionTable, acting: Acting) -> Result<Self> {
        acting.validate()?;
        if net.n_actions() != table.len() {
            return Err(Error::Shape(
                "Q head does not match the action table".into(),
            ));
        }
        Ok(Self { net, table, acting })
    }

    pub fn net(&self) -> &ChopTreeNet {
        &self.net
    }

    pub fn q_values(&self, pov: &Pov) -> Vec<f64> {
        self.net
            .q_values(&frames_tensor(&[pov]))
            .expect("frame size matches")
            .into_data()
    }

    pub fn write_to(&self, ck: &mut Checkpoint, name: &str) {
        self.net.write_to(ck, &format!("{name}/net"));
        self.table.write_to(ck, &format!("{name}/table"));
    }

    pub fn read_from(ck: &Checkpoint, name: &str, pov: usize, acting: Acting) -> Result<Self> {
        let table = DiscreteActionTable::read_from(ck, &format!("{name}/table"))?;
        let net = ChopTreeNet::read_from(ck, &format!("{name}/net"), pov, table.len())?;
        Self::new(net, table, acting)
    }
}

impl Policy for ChopTreePolicy {
    fn table(&self) -> &DiscreteActionTable {
        &self.table
    }

    fn act_index(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> usize {
        match self.acting {
            Acting::Boltzmann { temperature } => {
                let q: Vec<f64> = self
                    .q_values(&obs.pov)
                    .iter()
                    .map(|v| v / temperature)
                    .collect();
                WeightedIndex::new(softmax(&q))
                    .expect("softmax weights are positive")
                    .sample(rng)
            }
            Acting::EpsilonGreedy { epsilon } => {
                if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                    return rng.random_range(0..self.table.len());
                }
                argmax(&self.q_values(&obs.pov))
            }
        }
    }
}

/// Demonstration transitions up to the first plank, actions snapped to the table.
pub fn demo_transitions(ds: &Dataset, table: &DiscreteActionTable) -> Vec<SqilTransition> {
    let mut out = Vec::new();
    for traj in &ds.trajectories {
        let cut = truncate_before_plank(traj);
        if cut.is_empty() {
            continue;
        }
        let mut frames: Vec<Arc<Pov>> = cut
            .transitions
            .iter()
            .map(|t| Arc::new(t.obs.pov.clone()))
            .collect();
        frames.push(Arc::new(cut.final_obs.pov.clone()));
        let last = cut.len() - 1;
        for (i, t) in cut.transitions.iter().enumerate() {
            out.push(SqilTransition {
                obs: frames[i].clone(),
                action: table.nearest(&t.action),
                reward: 0.0,
                next: frames[i + 1].clone(),
                done: cut.terminal && i == last,
            });
        }
    }
    out
}

struct Trainer<'a> {
    cfg: &'a ChopTreeConfig,
    table: &'a DiscreteActionTable,
    net: ChopTreeNet,
    target: ChopTreeNet,
    opt: Optimizer,
    demo: ReplayBuffer,
    online: ReplayBuffer,
    rng: ChaCha8Rng,
    frames: u64,
    window: Vec<SqilLoss>,
    report: ChopTreeReport,
}

enum Stage {
    TreeChop,
    /// Segments end once this many logs are collected.
    Chain {
        log_target: u32,
    },
}

impl Trainer<'_> {
    fn act(&mut self, pov: &Pov) -> usize {
        if self.rng.random::<f64>() < self.cfg.epsilon(self.frames) {
            self.rng.random_range(0..self.table.len())
        } else {
            argmax(
                self.net
                    .q_values(&frames_tensor(&[pov]))
                    .expect("frame size matches")
                    .data(),
            )
        }
    }

    fn maybe_update(&mut self) -> Result<()> {
        if self.frames < self.cfg.learning_starts
            || !self.frames.is_multiple_of(self.cfg.update_every)
        {
            return Ok(());
        }
        let loss = sqil_update(
            &mut self.net,
            &self.target,
            &self.demo,
            &self.online,
            self.cfg.batch_size,
            self.cfg.demo_fraction,
            &self.cfg.sqil,
            &mut self.opt,
            &mut self.rng,
        )?;
        self.report.updates += 1;
        self.window.push(loss);
        if self.window.len() == 250 {
            self.flush_window();
        }
        if self.report.updates.is_multiple_of(self.cfg.target_sync) {
            self.target.copy_from(&self.net)?;
        }
        Ok(())
    }

    fn flush_window(&mut self) {
        if self.window.is_empty() {
            return;
        }
        let n = self.window.len() as f64;
        let mean = |f: fn(&SqilLoss) -> f64| self.window.iter().map(f).sum::<f64>() / n;
        let l = SqilLoss {
            bellman: mean(|l| l.bellman),
            recon: mean(|l| l.recon),
            total: mean(|l| l.total),
        };
        info!(
            "choptree update {}: bellman {:.4} recon {:.4}",
            self.report.updates, l.bellman, l.recon
        );
        self.report.loss_history.push(l);
        self.window.clear();
    }

    /// Runs episodes until `frames` have been spent or the budget runs out.
    /// Returns false when the budget was exhausted.
    fn run(
        &mut self,
        env: &mut MeteredWorld,
        stage: Stage,
        frames: u64,
        seed0: u64,
    ) -> Result<bool> {
        let variant = match stage {
            Stage::TreeChop => EnvVariant::TreeChop,
            Stage::Chain { .. } => EnvVariant::ObtainChainSparse,
        };
        let mut spent = 0u64;
        let mut episode = 0u64;
        while spent < frames {
            let mut obs = Arc::new(env.reset(seed0.wrapping_add(episode), variant)?.pov);
            episode += 1;
            let (mut logs, mut done, mut cut) = (0u32, false, false);
            while !done && !cut && spent < frames {
                let a = self.act(&obs);
                let res = match env.step(&self.table.entries[a]) {
                    Ok(r) => r,
                    Err(Error::BudgetExhausted { .. }) => return Ok(false),
                    Err(e) => return Err(e),
                };
                spent += 1;
                self.frames += 1;
                logs += (res.info.dense_reward - res.info.sparse_reward).round() as u32;
                done = res.done;
                if let Stage::Chain { log_target } = stage {
                    cut = logs >= log_target;
                }
                let next = Arc::new(res.obs.pov);
                self.online.push(
                    SqilTransition {
                        obs,
                        action: a,
                        reward: 0.0,
                        next: next.clone(),
                        done,
                    },
                    &self.cfg.sqil,
                );
                obs = next;
                self.maybe_update()?;
            }
            match stage {
                Stage::TreeChop if done => self.report.stage1_logs.push(f64::from(logs)),
                Stage::Chain { .. } => {
                    self.report.stage2_segments += 1;
                    self.report.stage2_successes += usize::from(cut);
                }
                _ => {}
            }
        }
        Ok(true)
    }
}

/// Two-stage soft Q imitation: tree chopping first, then the chain task up to
/// the log target. Every step is charged to `budget`; on exhaustion training
/// stops and the current network is returned.
pub fn train_choptree(
    env_cfg: &EnvConfig,
    codec: Arc<Codec>,
    demos: &Dataset,
    table: &DiscreteActionTable,
    log_target: u32,
    budget: Arc<FrameBudget>,
    cfg: &ChopTreeConfig,
) -> Result<(ChopTreePolicy, ChopTreeReport)> {
    cfg.validate()?;
    if demos.pov_size != env_cfg.pov_size {
        return Err(Error::Config(format!(
            "demonstrations were rendered at {} px but the environment renders {} px",
            demos.pov_size, env_cfg.pov_size
        )));
    }
    let demo_ts = demo_transitions(demos, table);
    if demo_ts.is_empty() {
        return Err(Error::Degenerate(
            "no demonstration steps before the first plank".into(),
        ));
    }
    let mut demo = ReplayBuffer::new(Source::Demo, demo_ts.len());
    let n_demo = demo_ts.len();
    for t in demo_ts {
        demo.push(t, &cfg.sqil);
    }
    let net = ChopTreeNet::new(env_cfg.pov_size, table.len(), cfg.seed)?;
    let mut opt = Optimizer::adam(cfg.lr);
    opt.max_grad_norm = Some(cfg.max_grad_norm);
    let mut tr = Trainer {
        cfg,
        table,
        target: net.clone(),
        net,
        opt,
        demo,
        online: ReplayBuffer::new(Source::Online, cfg.online_capacity),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        frames: 0,
        window: Vec::new(),
        report: ChopTreeReport {
            demo_transitions: n_demo,
            ..ChopTreeReport::default()
        },
    };
    let mut env = MeteredWorld::new(CraftWorld::new(env_cfg.clone(), codec)?, budget);
    let seed0 = env_cfg
        .seed
        .wrapping_mul(1_000_003)
        .wrapping_add(cfg.seed << 20);
    let mut alive = tr.run(&mut env, Stage::TreeChop, cfg.stage1_frames, seed0)?;
    tr.report.stage1_frames = tr.frames;
    if alive {
        alive = tr.run(
            &mut env,
            Stage::Chain {
                log_target: log_target.max(1),
            },
            cfg.stage2_frames,
            seed0.wrapping_add(1 << 32),
        )?;
    }
    tr.report.stage2_frames = tr.frames - tr.report.stage1_frames;
    tr.report.stopped_by_budget = !alive;
    tr.flush_window();
    if !alive {
        info!(
            "choptree stopped: frame budget exhausted after {} frames",
            tr.frames
        );
    }
    let policy = ChopTreePolicy::new(tr.net, table.clone(), cfg.acting)?;
    Ok((policy, tr.report))
}

/// Logs collected per tree-chop episode, one episode per seed.
pub fn evaluate_treechop(
    policy: &ChopTreePolicy,
    env_cfg: &EnvConfig,
    codec: Arc<Codec>,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut env = CraftWorld::new(env_cfg.clone(), codec.clone())?;
            let mut p = policy.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7EE5);
            let mut obs = env.reset(seed, EnvVariant::TreeChop)?;
            let mut logs = 0.0;
            loop {
                let a = p.act(&obs, &mut rng);
                let r = env.step(&a)?;
                logs += r.reward;
                obs = r.obs;
                if r.done {
                    return Ok(logs);
                }
            }
        })
        .collect()
}
