use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::items::{recipe_for_action, Action, Dir, Item, Placeable, Tool, RECIPES};
use crate::error::{Error, Result};

/// Number of inventory features: item counts followed by the equipped-tool one-hot.
pub const INVENTORY_FEATURES: usize = Item::COUNT + 4;

/// Horizontal radius within which a placed table or furnace counts as nearby.
pub const NEAR_RADIUS: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_size: usize,
    pub pov_size: usize,
    pub horizon: usize,
    pub treechop_horizon: usize,
    pub depth: usize,
    pub tree_density: f64,
    pub ore_density: f64,
    pub water_density: f64,
    pub iron_min_depth: usize,
    pub diamond_min_depth: usize,
    pub tree_hits: u32,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 32,
            pov_size: 32,
            horizon: 2000,
            treechop_horizon: 500,
            depth: 24,
            tree_density: 0.08,
            ore_density: 0.10,
            water_density: 0.02,
            iron_min_depth: 12,
            diamond_min_depth: 18,
            tree_hits: 1,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid_size < 8 || self.grid_size > 1024 {
            return bad(format!(
                "grid_size must be in 8..=1024, got {}",
                self.grid_size
            ));
        }
        if !self.pov_size.is_multiple_of(16) || !(16..=64).contains(&self.pov_size) {
            return bad(format!(
                "pov_size must be a multiple of 16 in 16..=64, got {}",
                self.pov_size
            ));
        }
        if self.horizon == 0 || self.treechop_horizon == 0 {
            return bad("horizons must be positive".into());
        }
        for (name, v) in [
            ("tree_density", self.tree_density),
            ("ore_density", self.ore_density),
            ("water_density", self.water_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.tree_density + self.water_density > 0.9 {
            return bad("tree and water densities leave no room to spawn".into());
        }
        if self.depth == 0
            || self.iron_min_depth > self.depth
            || self.diamond_min_depth > self.depth
        {
            return bad("ore depths must lie within the underground depth".into());
        }
        if self.tree_hits == 0 {
            return bad("tree_hits must be at least 1".into());
        }
        Ok(())
    }

    /// Horizon for the given variant.
    pub fn horizon_for(&self, variant: EnvVariant) -> usize {
        match variant {
            EnvVariant::TreeChop => self.treechop_horizon,
            _ => self.horizon,
        }
    }

    /// Digest of every parameter that influences world dynamics or rendering.
    pub fn digest(&self) -> [u8; 32] {
        let mut copy = self.clone();
        copy.seed = 0;
        let text = serde_json::to_string(&copy).expect("config serializes");
        Sha256::digest(text.as_bytes()).into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvVariant {
    ObtainChainSparse,
    ObtainChainDense,
    #[serde(rename = "treechop")]
    TreeChop,
}

impl EnvVariant {
    pub fn code(self) -> u8 {
        match self {
            EnvVariant::ObtainChainSparse => 0,
            EnvVariant::ObtainChainDense => 1,
            EnvVariant::TreeChop => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(EnvVariant::ObtainChainSparse),
            1 => Ok(EnvVariant::ObtainChainDense),
            2 => Ok(EnvVariant::TreeChop),
            _ => Err(Error::Config(format!(
                "unknown environment variant code {c}"
            ))),
        }
    }
}

impl fmt::Display for EnvVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvVariant::ObtainChainSparse => "obtain-chain-sparse",
            EnvVariant::ObtainChainDense => "obtain-chain-dense",
            EnvVariant::TreeChop => "treechop",
        })
    }
}

impl FromStr for EnvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obtain-chain-sparse" | "sparse" => Ok(EnvVariant::ObtainChainSparse),
            "obtain-chain-dense" | "dense" => Ok(EnvVariant::ObtainChainDense),
            "treechop" => Ok(EnvVariant::TreeChop),
            other => Err(Error::Config(format!(
                "unknown environment variant `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surface {
    Empty,
    Tree,
    Water,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Stone,
    IronOre,
    DiamondOre,
    Empty,
}

impl Block {
    fn yield_item(self) -> Option<Item> {
        match self {
            Block::Stone => Some(Item::Cobblestone),
            Block::IronOre => Some(Item::IronOre),
            Block::DiamondOre => Some(Item::Diamond),
            Block::Empty => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    pub facing: Dir,
    /// 0 on the surface, `1..=depth` underground.
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedObject {
    pub kind: Placeable,
    pub x: i32,
    pub y: i32,
    pub depth: usize,
}

/// What a single transition did to the inventory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub milestones: Vec<Item>,
    pub inventory_changed: bool,
    /// Logs plus cobblestone collected this step.
    pub collected: u32,
    pub logs: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub variant: EnvVariant,
    pub size: usize,
    pub depth_levels: usize,
    pub surface: Vec<Surface>,
    pub tree_damage: Vec<u32>,
    /// Indexed `(depth - 1) * size * size + y * size + x`.
    pub underground: Vec<Block>,
    pub agent: AgentPose,
    pub inventory: [u32; Item::COUNT],
    pub equipped: Tool,
    pub placed: Vec<PlacedObject>,
    pub first_time: [bool; Item::COUNT],
    pub step_count: usize,
    pub horizon: usize,
}

impl WorldState {
    /// Deterministic world generation.
    pub fn generate(config: &EnvConfig, seed: u64, variant: EnvVariant) -> Result<Self> {
        config.validate()?;
        let n = config.grid_size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(variant.code()) << 56));
        let mut surface = vec![Surface::Empty; n * n];
        for cell in surface.iter_mut() {
            if rng.random::<f64>() < config.tree_density {
                *cell = Surface::Tree;
            }
        }
        if variant != EnvVariant::TreeChop && config.water_density > 0.0 {
            let blobs = ((config.water_density * (n * n) as f64) / 5.0).round() as usize;
            for _ in 0..blobs {
                let cx = rng.random_range(0..n as i32);
                let cy = rng.random_range(0..n as i32);
                for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < n && (y as usize) < n {
                        surface[y as usize * n + x as usize] = Surface::Water;
                    }
                }
            }
        }
        let d = config.depth;
        let mut underground = vec![Block::Stone; d * n * n];
        if variant != EnvVariant::TreeChop {
            for level in 1..=d {
                for i in 0..n * n {
                    let u: f64 = rng.random();
                    let idx = (level - 1) * n * n + i;
                    if level >= config.diamond_min_depth && u < config.ore_density * 0.25 {
                        underground[idx] = Block::DiamondOre;
                    } else if level >= config.iron_min_depth && u < config.ore_density {
                        underground[idx] = Block::IronOre;
                    }
                }
            }
        }
        let mut spawn = None;
        for _ in 0..1000 {
            let x = rng.random_range(0..n);
            let y = rng.random_range(0..n);
            if surface[y * n + x] == Surface::Empty {
                spawn = Some((x, y));
                break;
            }
        }
        let (sx, sy) = match spawn {
            Some(p) => p,
            None => {
                let i = surface
                    .iter()
                    .position(|c| *c == Surface::Empty)
                    .unwrap_or(0);
                surface[i] = Surface::Empty;
                (i % n, i / n)
            }
        };
        let facing = Dir::ALL[rng.random_range(0..4)];
        Ok(Self {
            variant,
            size: n,
            depth_levels: d,
            surface,
            tree_damage: vec![0; n * n],
            underground,
            agent: AgentPose {
                x: sx as i32,
                y: sy as i32,
                facing,
                depth: 0,
            },
            inventory: [0; Item::COUNT],
            equipped: Tool::None,
            placed: Vec::new(),
            first_time: [false; Item::COUNT],
            step_count: 0,
            horizon: config.horizon_for(variant),
        })
    }

    /// An all-empty surface world, handy for fixtures.
    pub fn empty(size: usize, depth_levels: usize, variant: EnvVariant, horizon: usize) -> Self {
        let c = size as i32 / 2;
        Self {
            variant,
            size,
            depth_levels,
            surface: vec![Surface::Empty; size * size],
            tree_damage: vec![0; size * size],
            underground: vec![Block::Stone; depth_levels * size * size],
            agent: AgentPose {
                x: c,
                y: c,
                facing: Dir::North,
                depth: 0,
            },
            inventory: [0; Item::COUNT],
            equipped: Tool::None,
            placed: Vec::new(),
            first_time: [false; Item::COUNT],
            step_count: 0,
            horizon,
        }
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size
    }

    pub fn surface_at(&self, x: i32, y: i32) -> Option<Surface> {
        self.in_bounds(x, y)
            .then(|| self.surface[y as usize * self.size + x as usize])
    }

    pub fn set_surface(&mut self, x: i32, y: i32, s: Surface) {
        if self.in_bounds(x, y) {
            self.surface[y as usize * self.size + x as usize] = s;
        }
    }

    fn block_index(&self, x: i32, y: i32, depth: usize) -> Option<usize> {
        (self.in_bounds(x, y) && depth >= 1 && depth <= self.depth_levels)
            .then(|| (depth - 1) * self.size * self.size + y as usize * self.size + x as usize)
    }

    pub fn block_at(&self, x: i32, y: i32, depth: usize) -> Option<Block> {
        self.block_index(x, y, depth).map(|i| self.underground[i])
    }

    pub fn set_block(&mut self, x: i32, y: i32, depth: usize, b: Block) {
        if let Some(i) = self.block_index(x, y, depth) {
            self.underground[i] = b;
        }
    }

    pub fn placed_at(&self, x: i32, y: i32, depth: usize) -> Option<Placeable> {
        self.placed
            .iter()
            .find(|p| p.x == x && p.y == y && p.depth == depth)
            .map(|p| p.kind)
    }

    /// A placed object of this kind within [`NEAR_RADIUS`] horizontally (any depth).
    pub fn is_near(&self, kind: Placeable) -> bool {
        self.placed.iter().any(|p| {
            p.kind == kind
                && (p.x - self.agent.x).abs() <= NEAR_RADIUS
                && (p.y - self.agent.y).abs() <= NEAR_RADIUS
        })
    }

    pub fn count(&self, item: Item) -> u32 {
        self.inventory[item.index()]
    }

    pub fn facing_cell(&self) -> (i32, i32) {
        let (dx, dy) = self.agent.facing.delta();
        (self.agent.x + dx, self.agent.y + dy)
    }

    /// Whether the agent may stand on `(x, y)` at its current depth.
    pub fn passable(&self, x: i32, y: i32, depth: usize) -> bool {
        if self.placed_at(x, y, depth).is_some() {
            return false;
        }
        if depth == 0 {
            self.surface_at(x, y) == Some(Surface::Empty)
        } else {
            self.block_at(x, y, depth) == Some(Block::Empty)
        }
    }

    /// Item counts then equipped-tool one-hot, the encoder's input layout.
    pub fn inventory_features(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.inventory.iter().map(|&c| f64::from(c)).collect();
        for t in Tool::ALL {
            f.push(if self.equipped == t { 1.0 } else { 0.0 });
        }
        f
    }

    fn tool_tier_ok(&self, required: Option<Item>) -> bool {
        match required.and_then(Tool::for_item) {
            None => true,
            Some(t) => self.equipped >= t,
        }
    }

    fn gain(&mut self, item: Item, n: u32, out: &mut Outcome) {
        self.inventory[item.index()] += n;
        out.inventory_changed = true;
        if matches!(item, Item::Log | Item::Cobblestone) {
            out.collected += n;
        }
        if item == Item::Log {
            out.logs += n;
        }
        if !self.first_time[item.index()] {
            self.first_time[item.index()] = true;
            out.milestones.push(item);
        }
    }

    fn mine_block(&mut self, x: i32, y: i32, depth: usize, out: &mut Outcome) -> bool {
        let Some(block) = self.block_at(x, y, depth) else {
            return false;
        };
        match block.yield_item() {
            None => true,
            Some(item) => {
                let recipe = RECIPES
                    .iter()
                    .find(|r| r.output == item)
                    .expect("mining recipe");
                if !self.tool_tier_ok(recipe.tool_required) {
                    return false;
                }
                self.set_block(x, y, depth, Block::Empty);
                self.gain(item, recipe.output_count, out);
                true
            }
        }
    }

    fn place(&mut self, kind: Placeable, out: &mut Outcome) {
        let item = kind.item();
        if self.count(item) == 0 {
            return;
        }
        let a = self.agent;
        let mut dirs = vec![a.facing];
        dirs.extend(Dir::ALL.iter().copied().filter(|d| *d != a.facing));
        let mut target = None;
        for d in dirs {
            let (dx, dy) = d.delta();
            if self.passable(a.x + dx, a.y + dy, a.depth) {
                target = Some((a.x + dx, a.y + dy, a.depth));
                break;
            }
        }
        if target.is_none() && a.depth >= 1 {
            // The shaft cell directly above the agent.
            let above = a.depth - 1;
            let free = if above == 0 {
                self.surface_at(a.x, a.y) == Some(Surface::Empty)
            } else {
                self.block_at(a.x, a.y, above) == Some(Block::Empty)
            };
            if free && self.placed_at(a.x, a.y, above).is_none() {
                target = Some((a.x, a.y, above));
            }
        }
        if let Some((x, y, depth)) = target {
            self.inventory[item.index()] -= 1;
            out.inventory_changed = true;
            self.placed.push(PlacedObject { kind, x, y, depth });
        }
    }

    fn craft(&mut self, action: Action, out: &mut Outcome) {
        let Some(recipe) = recipe_for_action(action) else {
            return;
        };
        if recipe.inputs.iter().any(|&(item, n)| self.count(item) < n) {
            return;
        }
        if let Some(p) = recipe.requires_placed {
            if !self.is_near(p) {
                return;
            }
        }
        for &(item, n) in recipe.inputs {
            self.inventory[item.index()] -= n;
        }
        self.gain(recipe.output, recipe.output_count, out);
        if let Some(t) = Tool::for_item(recipe.output) {
            if t > self.equipped {
                self.equipped = t;
            }
        }
    }

    /// Applies one original action. Does not advance `step_count`.
    pub fn apply(&mut self, action: Action, tree_hits: u32) -> Outcome {
        let mut out = Outcome::default();
        let a = self.agent;
        match action {
            Action::MoveNorth | Action::MoveSouth | Action::MoveEast | Action::MoveWest => {
                let d = action.move_direction().expect("move action");
                self.agent.facing = d;
                let (dx, dy) = d.delta();
                if self.passable(a.x + dx, a.y + dy, a.depth) {
                    self.agent.x += dx;
                    self.agent.y += dy;
                }
            }
            Action::TurnLeft => self.agent.facing = a.facing.left(),
            Action::TurnRight => self.agent.facing = a.facing.right(),
            Action::Attack => {
                let (fx, fy) = self.facing_cell();
                if a.depth == 0 {
                    if self.surface_at(fx, fy) == Some(Surface::Tree) {
                        let i = fy as usize * self.size + fx as usize;
                        self.tree_damage[i] += 1;
                        if self.tree_damage[i] >= tree_hits {
                            self.tree_damage[i] = 0;
                            self.surface[i] = Surface::Empty;
                            self.gain(Item::Log, 1, &mut out);
                        }
                    }
                } else if self.placed_at(fx, fy, a.depth).is_none() {
                    self.mine_block(fx, fy, a.depth, &mut out);
                }
            }
            Action::DigDown => {
                let below = a.depth + 1;
                if below <= self.depth_levels
                    && self.placed_at(a.x, a.y, below).is_none()
                    && self.mine_block(a.x, a.y, below, &mut out)
                {
                    self.agent.depth = below;
                }
            }
            Action::PlaceTable => self.place(Placeable::CraftingTable, &mut out),
            Action::PlaceFurnace => self.place(Placeable::Furnace, &mut out),
            Action::CraftPlank
            | Action::CraftStick
            | Action::CraftTable
            | Action::CraftWoodenPickaxe
            | Action::CraftStonePickaxe
            | Action::CraftFurnace
            | Action::SmeltIron
            | Action::CraftIronPickaxe => self.craft(action, &mut out),
            Action::EquipBest => {
                if let Some(best) = Tool::ALL
                    .iter()
                    .rev()
                    .find(|t| t.item().is_some_and(|i| self.count(i) > 0))
                {
                    self.equipped = *best;
                }
            }
            Action::Noop => {}
        }
        out
    }
}
