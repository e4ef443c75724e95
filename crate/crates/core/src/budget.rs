//! Training-time environment frame accounting.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::env::{CraftWorld, EnvVariant, Environment, Observation, StepResult};
use crate::error::{Error, Result};

/// Hard cap on training interactions. `used <= cap` always holds.
#[derive(Debug)]
pub struct FrameBudget {
    cap: u64,
    used: AtomicU64,
}

impl FrameBudget {
    pub fn new(cap: u64) -> Self {
        Self::with_used(cap, 0)
    }

    /// Resumes a budget persisted by an earlier stage.
    pub fn with_used(cap: u64, used: u64) -> Self {
        Self {
            cap,
            used: AtomicU64::new(used.min(cap)),
        }
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.cap - self.used()
    }

    pub fn exhausted(&self) -> bool {
        self.used() >= self.cap
    }

    /// Records one frame; fails without recording once the cap is reached.
    pub fn charge(&self) -> Result<()> {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| {
                (u < self.cap).then_some(u + 1)
            })
            .map(|_| ())
            .map_err(|used| Error::BudgetExhausted {
                used,
                cap: self.cap,
            })
    }
}

/// A world whose every step is charged to a shared budget.
pub struct MeteredWorld {
    world: CraftWorld,
    budget: Arc<FrameBudget>,
}

impl MeteredWorld {
    pub fn new(world: CraftWorld, budget: Arc<FrameBudget>) -> Self {
        Self { world, budget }
    }

    pub fn world(&self) -> &CraftWorld {
        &self.world
    }

    pub fn budget(&self) -> &FrameBudget {
        &self.budget
    }
}

impl Environment for MeteredWorld {
    fn reset(&mut self, seed: u64, variant: EnvVariant) -> Result<Observation> {
        self.world.reset(seed, variant)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.budget.charge()?;
        self.world.step(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Codec;
    use crate::env::EnvConfig;

    #[test]
    fn cap_is_exact() {
        let b = FrameBudget::new(1000);
        let mut taken = 0;
        for _ in 0..1200 {
            if b.exhausted() {
                break;
            }
            b.charge().unwrap();
            taken += 1;
        }
        assert_eq!(taken, 1000);
        assert_eq!(b.used(), 1000);
        assert!(matches!(
            b.charge(),
            Err(Error::BudgetExhausted {
                used: 1000,
                cap: 1000
            })
        ));
        assert_eq!(b.used(), 1000);
    }

    #[test]
    fn metered_steps_are_counted() {
        let codec = Arc::new(Codec::for_craftworld(1).unwrap());
        let budget = Arc::new(FrameBudget::new(10));
        let world = CraftWorld::new(EnvConfig::default(), codec.clone()).unwrap();
        let mut env = MeteredWorld::new(world, budget.clone());
        env.reset(3, EnvVariant::TreeChop).unwrap();
        let noop = codec.codebook.encode(19).unwrap().to_vec();
        for _ in 0..10 {
            env.step(&noop).unwrap();
        }
        assert_eq!(budget.used(), 10);
        assert!(env.step(&noop).is_err());
        // Resets are free.
        env.reset(4, EnvVariant::TreeChop).unwrap();
        assert_eq!(budget.used(), 10);
    }
}
