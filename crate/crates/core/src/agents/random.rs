use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::larmi::DigStonePolicy;
use super::Policy;
use crate::discretize::DiscreteActionTable;
use crate::env::Observation;
use crate::error::{Error, Result};

/// Uniform choice among the critical-action clusters of the stone-crafting phase.
#[derive(Clone, Debug)]
pub struct CraftStonePolicy {
    table: DiscreteActionTable,
}

impl CraftStonePolicy {
    pub fn new(table: DiscreteActionTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Degenerate(
                "craft-stone policy needs at least one cluster".into(),
            ));
        }
        Ok(Self { table })
    }
}

impl Policy for CraftStonePolicy {
    fn table(&self) -> &DiscreteActionTable {
        &self.table
    }

    fn act_index(&mut self, _obs: &Observation, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(0..self.table.len())
    }
}

/// Linear ramp of the random-action probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub eps0: f64,
    pub eps_final: f64,
    pub ramp_steps: u64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            eps0: 0.2,
            eps_final: 1.0,
            ramp_steps: 500,
        }
    }
}

impl ExplorationSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            eps0: eps,
            eps_final: eps,
            ramp_steps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.eps0)
            || !unit.contains(&self.eps_final)
            || self.eps_final < self.eps0
        {
            return Err(Error::Config(
                "exploration schedule needs 0 <= eps0 <= eps_final <= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn epsilon(&self, t: u64) -> f64 {
        if self.ramp_steps == 0 || t >= self.ramp_steps {
            return self.eps_final;
        }
        self.eps0 + (self.eps_final - self.eps0) * t as f64 / self.ramp_steps as f64
    }
}

/// Delegates to DigStone or, with probability `eps(t)`, takes a uniformly
/// random table action; `t` counts the steps this policy has acted.
#[derive(Clone, Debug)]
pub struct RandomSearchPolicy {
    digstone: DigStonePolicy,
    schedule: ExplorationSchedule,
    t: u64,
    consulted: u64,
}

impl RandomSearchPolicy {
    pub fn new(digstone: DigStonePolicy, schedule: ExplorationSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            digstone,
            schedule,
            t: 0,
            consulted: 0,
        })
    }

    pub fn schedule(&self) -> &ExplorationSchedule {
        &self.schedule
    }

    /// How often the wrapped DigStone agent was asked since the last reset.
    pub fn delegations(&self) -> u64 {
        self.consulted
    }
}

impl Policy for RandomSearchPolicy {
    fn table(&self) -> &DiscreteActionTable {
        self.digstone.table()
    }

    fn act_index(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> usize {
        let eps = self.schedule.epsilon(self.t);
        self.t += 1;
        if eps >= 1.0 || rng.random::<f64>() < eps {
            rng.random_range(0..self.table().len())
        } else {
            self.consulted += 1;
            self.digstone.act_index(obs, rng)
        }
    }

    fn reset(&mut self) {
        self.t = 0;
        self.consulted = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::bc::mlp_spec;
    use crate::codec::OBF_DIM;
    use crate::discretize::Provenance;
    use crate::env::Pov;
    use crate::nn::Network;
    use rand::SeedableRng;

    fn table(n: usize) -> DiscreteActionTable {
        DiscreteActionTable {
            entries: (0..n).map(|i| vec![i as f64 * 0.01; OBF_DIM]).collect(),
            provenance: vec![Provenance::Critical; n],
        }
    }

    fn digstone() -> DigStonePolicy {
        let net = Network::new(mlp_spec(OBF_DIM, &[8], 6), 3).unwrap();
        DigStonePolicy::new(net, table(6), 0).unwrap()
    }

    fn obs(i: usize) -> Observation {
        Observation {
            pov: Pov::from_raw(8, vec![0; 8 * 8 * 3]).unwrap(),
            inv_obf: (0..OBF_DIM)
                .map(|d| ((i * 7 + d) % 5) as f64 * 0.2 - 0.4)
                .collect(),
        }
    }

    #[test]
    fn craft_stone_is_uniform() {
        let mut p = CraftStonePolicy::new(table(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 5];
        let o = obs(0);
        for _ in 0..10_000 {
            counts[p.act_index(&o, &mut rng)] += 1;
        }
        let sigma = (10_000.0 * 0.2 * 0.8f64).sqrt();
        assert!(
            counts
                .iter()
                .all(|&c| (c as f64 - 2000.0).abs() < 3.0 * sigma),
            "{counts:?}"
        );
        assert!(CraftStonePolicy::new(table(0)).is_err());
    }

    #[test]
    fn degenerate_schedules() {
        let mut d = digstone();
        let mut zero =
            RandomSearchPolicy::new(d.clone(), ExplorationSchedule::constant(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..50 {
            assert_eq!(
                zero.act_index(&obs(i), &mut rng),
                d.act_index(&obs(i), &mut rng)
            );
        }
        let mut one = RandomSearchPolicy::new(d, ExplorationSchedule::constant(1.0)).unwrap();
        for i in 0..50 {
            one.act_index(&obs(i), &mut rng);
        }
        assert_eq!(one.delegations(), 0);
    }

    #[test]
    fn schedule_is_linear_and_validated() {
        let s = ExplorationSchedule {
            eps0: 0.0,
            eps_final: 1.0,
            ramp_steps: 1000,
        };
        assert_eq!(s.epsilon(0), 0.0);
        assert!((s.epsilon(500) - 0.5).abs() < 1e-12);
        assert_eq!(s.epsilon(5000), 1.0);
        assert!(ExplorationSchedule::default().validate().is_ok());
        assert!(ExplorationSchedule {
            eps0: 0.9,
            eps_final: 0.1,
            ramp_steps: 1
        }
        .validate()
        .is_err());
    }
}
