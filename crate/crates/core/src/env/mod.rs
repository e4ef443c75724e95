//! Deterministic crafting gridworld with a first-time milestone reward
//! structure and long horizons.

mod items;
mod render;
mod world;

use std::sync::Arc;

pub use items::{
    milestone_score, recipe_for_action, recipe_for_item, Action, Dir, Item, Placeable, Recipe,
    RecipeKind, Tool, RECIPES,
};
pub use render::{
    background, forward_half, palette, render_pov, Pov, Rgb, AGENT_COL, AGENT_ROW, VIEW_COLS,
    VIEW_ROWS,
};
pub use world::{
    AgentPose, Block, EnvConfig, EnvVariant, Outcome, PlacedObject, Surface, WorldState,
    INVENTORY_FEATURES, NEAR_RADIUS,
};

use crate::codec::Codec;
use crate::error::{Error, Result};

/// What the agent sees.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pov: Pov,
    /// Obfuscated inventory.
    pub inv_obf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    /// The original action the input vector decoded to.
    pub action: Action,
    pub milestones: Vec<Item>,
    pub inventory_changed: bool,
    pub sparse_reward: f64,
    /// Milestones plus one per log or cobblestone collected.
    pub dense_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Anything that can run episodes: the plain world or a budget-metered wrapper.
pub trait Environment {
    fn reset(&mut self, seed: u64, variant: EnvVariant) -> Result<Observation>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

/// The crafting world. Owns its state; cheap to move between threads.
#[derive(Clone, Debug)]
pub struct CraftWorld {
    config: EnvConfig,
    codec: Arc<Codec>,
    state: Option<WorldState>,
    done: bool,
}

impl CraftWorld {
    pub fn new(config: EnvConfig, codec: Arc<Codec>) -> Result<Self> {
        config.validate()?;
        if codec.codebook.len() != Action::COUNT {
            return Err(Error::Config(format!(
                "codebook has {} entries but the world has {} actions",
                codec.codebook.len(),
                Action::COUNT
            )));
        }
        if codec.inventory.n_features() != INVENTORY_FEATURES {
            return Err(Error::Config(
                "inventory encoder does not match the world's inventory layout".into(),
            ));
        }
        Ok(Self {
            config,
            codec,
            state: None,
            done: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn codec(&self) -> &Arc<Codec> {
        &self.codec
    }

    /// Privileged world state (scripted experts and tests only).
    pub fn state(&self) -> Option<&WorldState> {
        self.state.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: WorldState) -> Observation {
        self.done = false;
        self.state = Some(state);
        self.observe()
    }

    pub fn observe(&self) -> Observation {
        let s = self.state.as_ref().expect("environment has been reset");
        observe(s, &self.codec, self.config.pov_size)
    }

    /// Steps with an original action, bypassing the codec.
    pub fn step_original(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage(
                "step called after the episode finished; call reset".into(),
            ));
        }
        let hits = self.config.tree_hits;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        let out = state.apply(action, hits);
        state.step_count += 1;
        let sparse: f64 = out.milestones.iter().map(|m| m.milestone_reward()).sum();
        let dense = sparse + f64::from(out.collected);
        let reward = match state.variant {
            EnvVariant::ObtainChainSparse => sparse,
            EnvVariant::ObtainChainDense => dense,
            EnvVariant::TreeChop => f64::from(out.logs),
        };
        self.done = state.step_count >= state.horizon || out.milestones.contains(&Item::Diamond);
        let info = StepInfo {
            action,
            milestones: out.milestones,
            inventory_changed: out.inventory_changed,
            sparse_reward: sparse,
            dense_reward: dense,
        };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }
}

impl Environment for CraftWorld {
    fn reset(&mut self, seed: u64, variant: EnvVariant) -> Result<Observation> {
        let state = WorldState::generate(&self.config, seed, variant)?;
        Ok(self.reset_to(state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.state.is_none() {
            return Err(Error::Usage("step called before reset".into()));
        }
        if self.done {
            return Err(Error::Usage(
                "step called after the episode finished; call reset".into(),
            ));
        }
        let id = self.codec.codebook.nearest(action)?;
        self.step_original(Action::from_index(id).expect("codebook sized to the action set"))
    }
}

pub fn observe(state: &WorldState, codec: &Codec, pov_size: usize) -> Observation {
    Observation {
        pov: render_pov(state, pov_size),
        inv_obf: codec
            .inventory
            .encode(&state.inventory_features())
            .expect("inventory layout validated at construction"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn world() -> CraftWorld {
        CraftWorld::new(
            EnvConfig::default(),
            Arc::new(Codec::for_craftworld(3).unwrap()),
        )
        .unwrap()
    }

    fn fixture(world: &mut CraftWorld) -> WorldState {
        let cfg = world.config().clone();
        WorldState::empty(
            cfg.grid_size,
            cfg.depth,
            EnvVariant::ObtainChainSparse,
            cfg.horizon,
        )
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = world();
        let mut b = world();
        let oa = a.reset(7, EnvVariant::ObtainChainSparse).unwrap();
        let ob = b.reset(7, EnvVariant::ObtainChainSparse).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a.state(), b.state());
        let oc = a.reset(8, EnvVariant::ObtainChainSparse).unwrap();
        assert_ne!(oa, oc);
    }

    #[test]
    fn reset_starts_empty() {
        let mut w = world();
        w.reset(1, EnvVariant::ObtainChainDense).unwrap();
        let s = w.state().unwrap();
        assert!(s.inventory.iter().all(|&c| c == 0));
        assert!(s.first_time.iter().all(|&f| !f));
        assert_eq!(s.surface_at(s.agent.x, s.agent.y), Some(Surface::Empty));
    }

    #[test]
    fn treechop_has_no_ore_and_no_water() {
        let mut w = world();
        w.reset(7, EnvVariant::TreeChop).unwrap();
        let s = w.state().unwrap();
        assert!(s.underground.iter().all(|b| *b == Block::Stone));
        assert!(s.surface.iter().all(|c| *c != Surface::Water));
        assert_eq!(s.horizon, 500);
    }

    #[test]
    fn most_worlds_have_three_trees() {
        let mut w = world();
        let ok = (1..=100u64)
            .filter(|&seed| {
                w.reset(seed, EnvVariant::ObtainChainSparse).unwrap();
                w.state()
                    .unwrap()
                    .surface
                    .iter()
                    .filter(|c| **c == Surface::Tree)
                    .count()
                    >= 3
            })
            .count();
        assert!(ok >= 95, "{ok}/100 worlds with >= 3 trees");
    }

    #[test]
    fn variant_names_parse() {
        assert_eq!(
            "treechop".parse::<EnvVariant>().unwrap(),
            EnvVariant::TreeChop
        );
        assert!(matches!(
            "ocean".parse::<EnvVariant>(),
            Err(Error::Config(_))
        ));
        assert!(EnvVariant::from_code(9).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let codec = Arc::new(Codec::for_craftworld(3).unwrap());
        let cfg = EnvConfig {
            pov_size: 30,
            ..EnvConfig::default()
        };
        assert!(matches!(CraftWorld::new(cfg, codec), Err(Error::Config(_))));
    }

    #[test]
    fn repeated_attacks_break_a_tree() {
        let codec = Arc::new(Codec::for_craftworld(3).unwrap());
        let cfg = EnvConfig {
            tree_hits: 3,
            ..EnvConfig::default()
        };
        let mut w = CraftWorld::new(cfg, codec.clone()).unwrap();
        let mut s = fixture(&mut w);
        s.set_surface(s.agent.x, s.agent.y - 1, Surface::Tree);
        w.reset_to(s);
        let attack = codec
            .codebook
            .encode(Action::Attack.index())
            .unwrap()
            .to_vec();
        for _ in 0..2 {
            let r = w.step(&attack).unwrap();
            assert_eq!(r.reward, 0.0);
            assert!(!r.info.inventory_changed);
        }
        let r = w.step(&attack).unwrap();
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.info.milestones, vec![Item::Log]);
        assert_eq!(w.state().unwrap().count(Item::Log), 1);
    }

    #[test]
    fn unmet_recipe_is_a_noop() {
        let mut w = world();
        let s = fixture(&mut w);
        w.reset_to(s.clone());
        let r = w.step_original(Action::CraftPlank).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.info.inventory_changed);
        let mut after = w.state().unwrap().clone();
        after.step_count = 0;
        assert_eq!(after, s);
    }

    #[test]
    fn second_log_rewards_only_in_dense_variant() {
        for (variant, second) in [
            (EnvVariant::ObtainChainSparse, 0.0),
            (EnvVariant::ObtainChainDense, 1.0),
        ] {
            let mut w = world();
            let mut s = fixture(&mut w);
            s.variant = variant;
            let (x, y) = (s.agent.x, s.agent.y);
            s.set_surface(x, y - 1, Surface::Tree);
            s.set_surface(x + 1, y, Surface::Tree);
            w.reset_to(s);
            assert_eq!(
                w.step_original(Action::Attack).unwrap().reward,
                if variant == EnvVariant::ObtainChainDense {
                    2.0
                } else {
                    1.0
                }
            );
            w.step_original(Action::MoveEast).unwrap();
            assert_eq!(w.step_original(Action::Attack).unwrap().reward, second);
        }
    }

    #[test]
    fn scripted_chain_reaches_cobblestone() {
        let mut w = world();
        let mut s = fixture(&mut w);
        s.inventory[Item::Log.index()] = 3;
        s.first_time[Item::Log.index()] = true;
        w.reset_to(s);
        let mut score = 1.0;
        for a in [
            Action::CraftPlank,
            Action::CraftPlank,
            Action::CraftPlank,
            Action::CraftTable,
            Action::PlaceTable,
            Action::CraftStick,
            Action::CraftWoodenPickaxe,
            Action::DigDown,
        ] {
            let r = w.step_original(a).unwrap();
            assert!(r.info.inventory_changed, "{a:?}");
            score += r.reward;
        }
        let st = w.state().unwrap();
        assert_eq!(score, 35.0);
        assert_eq!(st.agent.depth, 1);
        assert_eq!(st.equipped, Tool::Wooden);
        assert_eq!(st.count(Item::Plank), 3);
        assert_eq!(st.count(Item::Stick), 2);
    }

    #[test]
    fn crafting_needs_a_nearby_table() {
        let mut w = world();
        let mut s = fixture(&mut w);
        s.inventory[Item::Plank.index()] = 3;
        s.inventory[Item::Stick.index()] = 2;
        s.placed.push(PlacedObject {
            kind: Placeable::CraftingTable,
            x: s.agent.x + NEAR_RADIUS + 1,
            y: s.agent.y,
            depth: 0,
        });
        w.reset_to(s);
        assert!(
            !w.step_original(Action::CraftWoodenPickaxe)
                .unwrap()
                .info
                .inventory_changed
        );
        w.step_original(Action::MoveEast).unwrap();
        assert!(
            w.step_original(Action::CraftWoodenPickaxe)
                .unwrap()
                .info
                .inventory_changed
        );
    }

    #[test]
    fn mining_respects_tool_tiers() {
        let mut w = world();
        let mut s = fixture(&mut w);
        let (x, y) = (s.agent.x, s.agent.y);
        s.set_block(x, y, 1, Block::IronOre);
        s.inventory[Item::WoodenPickaxe.index()] = 1;
        s.equipped = Tool::Wooden;
        w.reset_to(s);
        assert!(
            !w.step_original(Action::DigDown)
                .unwrap()
                .info
                .inventory_changed
        );
        assert_eq!(w.state().unwrap().agent.depth, 0);
    }

    #[test]
    fn step_errors() {
        let mut w = world();
        assert!(matches!(w.step(&[0.0; 64]), Err(Error::Usage(_))));
        w.reset(1, EnvVariant::ObtainChainSparse).unwrap();
        let mut v = vec![0.0; 64];
        v[0] = f64::NAN;
        assert!(matches!(w.step(&v), Err(Error::Input(_))));
        let mut s = w.state().unwrap().clone();
        s.horizon = 1;
        w.reset_to(s);
        assert!(w.step_original(Action::Noop).unwrap().done);
        assert!(matches!(
            w.step_original(Action::Noop),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn render_is_pure_and_sized() {
        let mut w = world();
        w.reset(4, EnvVariant::ObtainChainSparse).unwrap();
        let s = w.state().unwrap();
        let a = render_pov(s, 32);
        assert_eq!(a, render_pov(s, 32));
        assert_eq!(a.bytes().len(), 32 * 32 * 3);
        assert_eq!(render_pov(s, 64).size(), 64);
    }

    #[test]
    fn empty_surroundings_render_background_only() {
        let mut w = world();
        let s = fixture(&mut w);
        let pov = render_pov(&s, 32);
        let cell = 2;
        for r in 0..32 {
            for c in 0..32 {
                let in_agent = r / cell == AGENT_ROW as usize && c / cell == AGENT_COL as usize;
                let px = pov.pixel(r, c);
                if in_agent {
                    assert_eq!(px, palette::AGENT[Dir::North.index()]);
                } else {
                    assert_eq!(px, palette::GRASS, "pixel {r},{c}");
                }
            }
        }
    }

    #[test]
    fn tree_ahead_is_in_the_forward_half() {
        let mut w = world();
        for dir in Dir::ALL {
            let mut s = fixture(&mut w);
            s.agent.facing = dir;
            let (dx, dy) = dir.delta();
            s.set_surface(s.agent.x + dx, s.agent.y + dy, Surface::Tree);
            let pov = render_pov(&s, 32);
            let (r0, c0, h, wdt) = forward_half(dir, 32);
            let hits = (r0..r0 + h)
                .flat_map(|r| (c0..c0 + wdt).map(move |c| (r, c)))
                .filter(|&(r, c)| pov.pixel(r, c) == palette::TREE)
                .count();
            assert_eq!(hits, 4, "{dir:?}");
            let total = (0..32 * 32)
                .filter(|i| pov.pixel(i / 32, i % 32) == palette::TREE)
                .count();
            assert_eq!(total, 4);
        }
    }

    #[test]
    fn palette_is_distinct() {
        use palette::*;
        let mut all = vec![
            OUT_OF_BOUNDS,
            GRASS,
            TREE,
            WATER,
            STONE,
            TUNNEL,
            IRON_ORE,
            DIAMOND_ORE,
            TABLE,
            FURNACE,
        ];
        all.extend(AGENT);
        all.extend(TOOL);
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    /// Scripted full-chain play: all 12 milestones in order.
    #[test]
    fn full_chain_is_reachable() {
        let mut w = world();
        let mut s = fixture(&mut w);
        let (x, y) = (s.agent.x, s.agent.y);
        for i in 1..=6 {
            s.set_surface(x, y - i, Surface::Tree);
        }
        for d in 12..=19 {
            s.set_block(x, y, d, Block::IronOre);
        }
        s.set_block(x, y, 20, Block::DiamondOre);
        w.reset_to(s);
        let mut plan = Vec::new();
        for _ in 0..6 {
            plan.extend([Action::Attack, Action::MoveNorth]);
        }
        plan.extend([Action::MoveSouth; 6]);
        plan.extend([Action::CraftPlank; 6]);
        plan.extend([
            Action::CraftTable,
            Action::PlaceTable,
            Action::CraftStick,
            Action::CraftWoodenPickaxe,
        ]);
        plan.extend([Action::DigDown; 11]);
        plan.extend([
            Action::CraftStonePickaxe,
            Action::CraftFurnace,
            Action::PlaceFurnace,
        ]);
        plan.extend([Action::DigDown; 3]);
        plan.extend([Action::SmeltIron; 3]);
        plan.extend([Action::CraftStick, Action::CraftIronPickaxe]);
        plan.extend([Action::DigDown; 6]);
        let mut total = 0.0;
        let mut last = None;
        for a in plan {
            let r = w.step_original(a).unwrap();
            total += r.reward;
            last = Some(r);
            if w.is_done() {
                break;
            }
        }
        let s = w.state().unwrap();
        assert!(
            s.first_time.iter().all(|&f| f),
            "{:?} {:?}",
            s.first_time,
            s.inventory
        );
        assert_eq!(total, 1571.0);
        assert!(last.unwrap().done);
    }

    fn random_actions() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0..Action::COUNT, 1..400)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn episode_invariants(seed in 0u64..1000, actions in random_actions()) {
            let mut w = world();
            let mut replay = world();
            w.reset(seed, EnvVariant::ObtainChainSparse).unwrap();
            replay.reset(seed, EnvVariant::ObtainChainSparse).unwrap();
            let mut first_step = [None; Item::COUNT];
            let mut total = 0.0;
            let mut flags = [false; Item::COUNT];
            for (t, &a) in actions.iter().enumerate() {
                if w.is_done() { break; }
                let v = w.codec().codebook.encode(a).unwrap().to_vec();
                let r = w.step(&v).unwrap();
                let r2 = replay.step(&v).unwrap();
                prop_assert_eq!(&r, &r2);
                total += r.reward;
                for m in &r.info.milestones {
                    first_step[m.index()] = Some(t);
                }
                let s = w.state().unwrap();
                for (i, f) in s.first_time.iter().enumerate() {
                    prop_assert!(!flags[i] || *f, "flag cleared");
                }
                flags = s.first_time;
                prop_assert!(s.step_count <= s.horizon);
            }
            prop_assert_eq!(total, milestone_score(&flags));
            for item in Item::ALL {
                if let Some(t) = first_step[item.index()] {
                    for p in item.prerequisites() {
                        let tp = first_step[p.index()];
                        prop_assert!(tp.is_some_and(|tp| tp < t), "{:?} before {:?}", item, p);
                    }
                }
            }
        }
    }

    #[test]
    fn horizon_bounds_episode_length() {
        let mut w = world();
        w.reset(2, EnvVariant::TreeChop).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = 0;
        while !w.is_done() {
            let a = Action::from_index(rng.random_range(0..Action::COUNT)).unwrap();
            w.step_original(a).unwrap();
            n += 1;
        }
        assert_eq!(n, 500);
    }
}
