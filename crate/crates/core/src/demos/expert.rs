//! Scripted demonstrator with privileged access to the world state.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::env::{Action, Block, Dir, Item, Placeable, Surface, Tool, WorldState};

/// Knobs of the scripted expert.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertConfig {
    /// Logs gathered before crafting starts.
    pub log_target: u32,
    /// Cobblestone gathered before crafting the stone tier.
    pub stone_target: u32,
    /// Continue past the first iron ingot through iron pickaxe and diamond.
    pub full_chain: bool,
    /// Steps without a new milestone after which the expert gives up.
    pub patience: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            log_target: 3,
            stone_target: 11,
            full_chain: false,
            patience: 300,
        }
    }
}

impl ExpertConfig {
    /// Enough wood for a second crafting table and the iron pickaxe's sticks.
    pub fn full_chain() -> Self {
        Self {
            log_target: 6,
            full_chain: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Wood,
    CraftWood,
    Stone,
    CraftStone,
    Iron,
    IronTools,
    Diamond,
    Finished,
}

/// Stateful scripted policy. `noise` in `[0, 1]` perturbs movement, shuffles
/// crafting orders and makes the expert occasionally abandon the episode.
pub struct Expert {
    cfg: ExpertConfig,
    noise: f64,
    stage: Stage,
    queue: VecDeque<Action>,
    idle: usize,
    last_flags: usize,
}

const CRAFT_WOOD_ORDERS: &[&[Action]] = &[
    &[
        Action::CraftPlank,
        Action::CraftPlank,
        Action::CraftPlank,
        Action::CraftTable,
        Action::PlaceTable,
        Action::CraftStick,
        Action::CraftWoodenPickaxe,
    ],
    &[
        Action::CraftPlank,
        Action::CraftPlank,
        Action::CraftPlank,
        Action::CraftStick,
        Action::CraftTable,
        Action::PlaceTable,
        Action::CraftWoodenPickaxe,
    ],
    &[
        Action::CraftPlank,
        Action::CraftTable,
        Action::PlaceTable,
        Action::CraftPlank,
        Action::CraftPlank,
        Action::CraftStick,
        Action::CraftWoodenPickaxe,
    ],
    &[
        Action::CraftPlank,
        Action::CraftTable,
        Action::CraftPlank,
        Action::CraftStick,
        Action::PlaceTable,
        Action::CraftPlank,
        Action::CraftWoodenPickaxe,
    ],
];

impl Expert {
    pub fn new(cfg: ExpertConfig, noise: f64) -> Self {
        Self {
            cfg,
            noise: noise.clamp(0.0, 1.0),
            stage: Stage::Wood,
            queue: VecDeque::new(),
            idle: 0,
            last_flags: 0,
        }
    }

    /// Next original action, or `None` once the expert stops.
    pub fn next_action<R: Rng>(&mut self, s: &WorldState, rng: &mut R) -> Option<Action> {
        let flags = s.first_time.iter().filter(|f| **f).count();
        if flags > self.last_flags {
            self.last_flags = flags;
            self.idle = 0;
        } else {
            self.idle += 1;
        }
        if self.idle > self.cfg.patience || rng.random::<f64>() < self.noise * 0.002 {
            return None;
        }
        let planned = self.plan(s, rng)?;
        if planned.is_movement() && rng.random::<f64>() < self.noise * 0.5 {
            const WANDER: [Action; 6] = [
                Action::MoveNorth,
                Action::MoveSouth,
                Action::MoveEast,
                Action::MoveWest,
                Action::TurnLeft,
                Action::TurnRight,
            ];
            return WANDER.choose(rng).copied();
        }
        Some(planned)
    }

    fn plan<R: Rng>(&mut self, s: &WorldState, rng: &mut R) -> Option<Action> {
        loop {
            match self.stage {
                Stage::Wood => {
                    if s.count(Item::Log) >= self.cfg.log_target {
                        let orders: &[&[Action]] =
                            if self.cfg.log_target >= 3 && rng.random::<f64>() < self.noise {
                                CRAFT_WOOD_ORDERS
                            } else {
                                &CRAFT_WOOD_ORDERS[..1]
                            };
                        let order = orders.choose(rng).expect("non-empty");
                        self.queue = order.iter().copied().collect();
                        if self.cfg.log_target >= 6 {
                            // Surplus wood becomes planks up front.
                            for _ in 3..self.cfg.log_target {
                                self.queue.push_front(Action::CraftPlank);
                            }
                        }
                        self.stage = Stage::CraftWood;
                        continue;
                    }
                    return chop_tree(s);
                }
                Stage::CraftWood => {
                    if s.count(Item::WoodenPickaxe) > 0 {
                        self.stage = Stage::Stone;
                        continue;
                    }
                    let next = *self.queue.front()?;
                    if next == Action::PlaceTable && !can_place(s) {
                        return step_somewhere(s);
                    }
                    self.queue.pop_front();
                    return Some(next);
                }
                Stage::Stone => {
                    if s.count(Item::Cobblestone) >= self.cfg.stone_target {
                        let mut order = [Action::CraftStonePickaxe, Action::CraftFurnace];
                        order.shuffle(rng);
                        self.queue = order.into_iter().collect();
                        self.stage = Stage::CraftStone;
                        continue;
                    }
                    return dig_stone(s);
                }
                Stage::CraftStone => {
                    if s.count(Item::StonePickaxe) > 0 && s.count(Item::Furnace) > 0 {
                        self.stage = Stage::Iron;
                        continue;
                    }
                    {
                        let a = self.queue.pop_front()?;
                        return Some(a);
                    }
                }
                Stage::Iron => {
                    let ingots = s.count(Item::IronIngot);
                    let want = if self.cfg.full_chain { 3 } else { 1 };
                    if ingots >= want {
                        if !self.cfg.full_chain {
                            self.stage = Stage::Finished;
                            continue;
                        }
                        self.queue = [
                            Action::CraftStick,
                            Action::CraftTable,
                            Action::PlaceTable,
                            Action::CraftIronPickaxe,
                        ]
                        .into_iter()
                        .collect();
                        self.stage = Stage::IronTools;
                        continue;
                    }
                    let ore = s.count(Item::IronOre);
                    if ore > 0 && (ore + ingots >= want || s.is_near(Placeable::Furnace)) {
                        if s.is_near(Placeable::Furnace) {
                            return Some(Action::SmeltIron);
                        }
                        if s.count(Item::Furnace) == 0 {
                            return None;
                        }
                        if can_place(s) {
                            return Some(Action::PlaceFurnace);
                        }
                        return step_somewhere(s);
                    }
                    return seek_block(s, Block::IronOre, Tool::Stone);
                }
                Stage::IronTools => {
                    if s.count(Item::IronPickaxe) > 0 {
                        self.stage = Stage::Diamond;
                        continue;
                    }
                    let next = *self.queue.front()?;
                    if next == Action::PlaceTable && !can_place(s) {
                        return step_somewhere(s);
                    }
                    self.queue.pop_front();
                    return Some(next);
                }
                Stage::Diamond => {
                    if s.count(Item::Diamond) > 0 {
                        self.stage = Stage::Finished;
                        continue;
                    }
                    return seek_block(s, Block::DiamondOre, Tool::Iron);
                }
                Stage::Finished => return None,
            }
        }
    }
}

fn can_place(s: &WorldState) -> bool {
    let a = s.agent;
    Dir::ALL.iter().any(|d| {
        let (dx, dy) = d.delta();
        s.passable(a.x + dx, a.y + dy, a.depth)
    }) || (a.depth >= 1 && {
        let above = a.depth - 1;
        let free = if above == 0 {
            s.surface_at(a.x, a.y) == Some(Surface::Empty)
        } else {
            s.block_at(a.x, a.y, above) == Some(Block::Empty)
        };
        free && s.placed_at(a.x, a.y, above).is_none()
    })
}

/// A move to any passable neighbour.
fn step_somewhere(s: &WorldState) -> Option<Action> {
    let a = s.agent;
    Dir::ALL
        .iter()
        .find(|d| {
            let (dx, dy) = d.delta();
            s.passable(a.x + dx, a.y + dy, a.depth)
        })
        .map(|d| Action::move_towards(*d))
}

/// Breadth-first search over passable surface cells towards a cell next to a
/// tree; returns the first move, or the facing move/attack when adjacent.
fn chop_tree(s: &WorldState) -> Option<Action> {
    let a = s.agent;
    if a.depth != 0 {
        return None;
    }
    let (fx, fy) = s.facing_cell();
    if s.surface_at(fx, fy) == Some(Surface::Tree) {
        return Some(Action::Attack);
    }
    let n = s.size;
    let idx = |x: i32, y: i32| y as usize * n + x as usize;
    let mut first: Vec<Option<Dir>> = vec![None; n * n];
    let mut seen = vec![false; n * n];
    let mut q = VecDeque::new();
    seen[idx(a.x, a.y)] = true;
    q.push_back((a.x, a.y));
    while let Some((x, y)) = q.pop_front() {
        for d in Dir::ALL {
            let (dx, dy) = d.delta();
            let (nx, ny) = (x + dx, y + dy);
            if s.surface_at(nx, ny) == Some(Surface::Tree) && s.placed_at(nx, ny, 0).is_none() {
                // Adjacent to a tree: turn towards it, or walk the path.
                return Some(match first[idx(x, y)] {
                    None => Action::move_towards(d),
                    Some(f) => Action::move_towards(f),
                });
            }
        }
        for d in Dir::ALL {
            let (dx, dy) = d.delta();
            let (nx, ny) = (x + dx, y + dy);
            if s.passable(nx, ny, 0) && !seen[idx(nx, ny)] {
                seen[idx(nx, ny)] = true;
                first[idx(nx, ny)] = first[idx(x, y)].or(Some(d));
                q.push_back((nx, ny));
            }
        }
    }
    None
}

fn minable(b: Block, tool: Tool) -> bool {
    match b {
        Block::Stone => tool >= Tool::Wooden,
        Block::IronOre => tool >= Tool::Stone,
        Block::DiamondOre => tool >= Tool::Iron,
        Block::Empty => true,
    }
}

fn dig_stone(s: &WorldState) -> Option<Action> {
    let a = s.agent;
    if s.block_at(a.x, a.y, a.depth + 1) == Some(Block::Stone)
        && s.placed_at(a.x, a.y, a.depth + 1).is_none()
    {
        return Some(Action::DigDown);
    }
    if a.depth == 0 {
        return step_somewhere(s);
    }
    for d in std::iter::once(a.facing).chain(Dir::ALL) {
        let (dx, dy) = d.delta();
        let (nx, ny) = (a.x + dx, a.y + dy);
        if s.block_at(nx, ny, a.depth) == Some(Block::Stone)
            && s.placed_at(nx, ny, a.depth).is_none()
        {
            return Some(if d == a.facing {
                Action::Attack
            } else {
                Action::move_towards(d)
            });
        }
    }
    step_somewhere(s)
}

/// Tunnels towards the nearest block of `target` at or below the agent.
fn seek_block(s: &WorldState, target: Block, tool: Tool) -> Option<Action> {
    if s.equipped < tool {
        return None;
    }
    let a = s.agent;
    let n = s.size as i32;
    let mut best: Option<(i32, i32, usize, i32)> = None;
    for depth in a.depth.max(1)..=s.depth_levels {
        for y in 0..n {
            for x in 0..n {
                if s.block_at(x, y, depth) == Some(target) {
                    let cost =
                        (x - a.x).abs() + (y - a.y).abs() + 2 * (depth as i32 - a.depth as i32);
                    if best.is_none_or(|b| cost < b.3) {
                        best = Some((x, y, depth, cost));
                    }
                }
            }
        }
    }
    let (tx, ty, td, _) = best?;
    if a.depth < td && (tx != a.x || ty != a.y || td > a.depth + 1) {
        if let Some(below) = s.block_at(a.x, a.y, a.depth + 1) {
            if minable(below, s.equipped) && s.placed_at(a.x, a.y, a.depth + 1).is_none() {
                return Some(Action::DigDown);
            }
        }
    }
    if a.depth == td.saturating_sub(1) && tx == a.x && ty == a.y {
        return Some(Action::DigDown);
    }
    if a.depth == 0 {
        return step_somewhere(s);
    }
    let dir = if tx != a.x {
        if tx > a.x {
            Dir::East
        } else {
            Dir::West
        }
    } else if ty != a.y {
        if ty > a.y {
            Dir::South
        } else {
            Dir::North
        }
    } else {
        return Some(Action::DigDown);
    };
    let (dx, dy) = dir.delta();
    let (nx, ny) = (a.x + dx, a.y + dy);
    if a.facing != dir {
        return Some(Action::move_towards(dir));
    }
    match s.block_at(nx, ny, a.depth) {
        Some(Block::Empty) if s.placed_at(nx, ny, a.depth).is_none() => {
            Some(Action::move_towards(dir))
        }
        Some(b) if minable(b, s.equipped) && s.placed_at(nx, ny, a.depth).is_none() => {
            Some(Action::Attack)
        }
        _ => step_somewhere(s),
    }
}
