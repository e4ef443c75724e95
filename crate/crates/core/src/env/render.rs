//! Egocentric top-down rasterizer.
//!
//! The view is a 16 x 15 cell window around the agent (8 cells west, 7 east,
//! 7 north and south) drawn at `pov_size / 16` pixels per cell; the bottom
//! cell-height strip shows the equipped tool. Underground, the window shows
//! the horizontal slice at the agent's depth.

use super::items::{Dir, Placeable, Tool};
use super::world::{Block, Surface, WorldState};
use crate::error::{Error, Result};

pub const VIEW_COLS: i32 = 16;
pub const VIEW_ROWS: i32 = 15;
/// Column of the agent within the view window.
pub const AGENT_COL: i32 = 8;
/// Row of the agent within the view window.
pub const AGENT_ROW: i32 = 7;

pub type Rgb = [u8; 3];

pub mod palette {
    use super::Rgb;

    pub const OUT_OF_BOUNDS: Rgb = [0, 0, 0];
    pub const GRASS: Rgb = [96, 160, 72];
    pub const TREE: Rgb = [20, 90, 20];
    pub const WATER: Rgb = [40, 80, 200];
    pub const STONE: Rgb = [128, 128, 128];
    pub const TUNNEL: Rgb = [40, 30, 20];
    pub const IRON_ORE: Rgb = [200, 150, 120];
    pub const DIAMOND_ORE: Rgb = [80, 220, 230];
    pub const TABLE: Rgb = [150, 100, 40];
    pub const FURNACE: Rgb = [90, 60, 60];
    pub const AGENT: [Rgb; 4] = [
        [250, 240, 60],
        [250, 160, 40],
        [240, 60, 200],
        [230, 40, 40],
    ];
    pub const TOOL: [Rgb; 3] = [[160, 120, 60], [176, 176, 176], [220, 220, 235]];
}

/// Quantized `(P, P, 3)` image; channel values are `byte / 255`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pov {
    size: usize,
    data: Vec<u8>,
}

impl Pov {
    pub const SCALE: f64 = 1.0 / 255.0;

    pub fn from_raw(size: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != size * size * 3 {
            return Err(Error::Format(format!(
                "pov of size {size} needs {} bytes, got {}",
                size * size * 3,
                data.len()
            )));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.size + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel value in `[0, 1]`.
    pub fn value(&self, row: usize, col: usize, channel: usize) -> f64 {
        f64::from(self.data[(row * self.size + col) * 3 + channel]) * Self::SCALE
    }

    /// Writes the image channel-major (`3 x P x P`) into `out`.
    pub fn write_chw(&self, out: &mut [f64]) {
        let plane = self.size * self.size;
        assert_eq!(out.len(), 3 * plane);
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = f64::from(px[c]) * Self::SCALE;
            }
        }
    }

    pub fn to_chw(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.data.len()];
        self.write_chw(&mut v);
        v
    }
}

fn cell_color(state: &WorldState, x: i32, y: i32) -> Rgb {
    use palette::*;
    let depth = state.agent.depth;
    if !state.in_bounds(x, y) {
        return OUT_OF_BOUNDS;
    }
    if let Some(p) = state.placed_at(x, y, depth) {
        return match p {
            Placeable::CraftingTable => TABLE,
            Placeable::Furnace => FURNACE,
        };
    }
    if depth == 0 {
        match state.surface_at(x, y).expect("in bounds") {
            Surface::Empty => GRASS,
            Surface::Tree => TREE,
            Surface::Water => WATER,
        }
    } else {
        match state.block_at(x, y, depth).expect("in bounds") {
            Block::Stone => STONE,
            Block::IronOre => IRON_ORE,
            Block::DiamondOre => DIAMOND_ORE,
            Block::Empty => TUNNEL,
        }
    }
}

/// Background colour of the layer the agent is on.
pub fn background(state: &WorldState) -> Rgb {
    if state.agent.depth == 0 {
        palette::GRASS
    } else {
        palette::STONE
    }
}

pub fn render_pov(state: &WorldState, pov_size: usize) -> Pov {
    let cell = pov_size / VIEW_COLS as usize;
    let mut data = vec![0u8; pov_size * pov_size * 3];
    let mut fill = |r0: usize, c0: usize, h: usize, w: usize, color: Rgb| {
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                let i = (r * pov_size + c) * 3;
                data[i..i + 3].copy_from_slice(&color);
            }
        }
    };
    let agent = state.agent;
    for row in 0..VIEW_ROWS {
        for col in 0..VIEW_COLS {
            let x = agent.x + col - AGENT_COL;
            let y = agent.y + row - AGENT_ROW;
            let color = if row == AGENT_ROW && col == AGENT_COL {
                palette::AGENT[agent.facing.index()]
            } else {
                cell_color(state, x, y)
            };
            fill(row as usize * cell, col as usize * cell, cell, cell, color);
        }
    }
    let hud_row = VIEW_ROWS as usize * cell;
    let hud_h = pov_size - hud_row;
    let bg = background(state);
    let tool = match state.equipped {
        Tool::None => bg,
        Tool::Wooden => palette::TOOL[0],
        Tool::Stone => palette::TOOL[1],
        Tool::Iron => palette::TOOL[2],
    };
    fill(hud_row, 0, hud_h, pov_size / 2, tool);
    fill(hud_row, pov_size / 2, hud_h, pov_size - pov_size / 2, bg);
    Pov {
        size: pov_size,
        data,
    }
}

/// Pixel-space rectangle `(row0, col0, rows, cols)` of the view half that
/// lies in front of the agent.
pub fn forward_half(dir: Dir, pov_size: usize) -> (usize, usize, usize, usize) {
    let cell = pov_size / VIEW_COLS as usize;
    let map_h = VIEW_ROWS as usize * cell;
    let ar = AGENT_ROW as usize * cell;
    let ac = AGENT_COL as usize * cell;
    match dir {
        Dir::North => (0, 0, ar, pov_size),
        Dir::South => (ar + cell, 0, map_h - ar - cell, pov_size),
        Dir::West => (0, 0, map_h, ac),
        Dir::East => (0, ac + cell, map_h, pov_size - ac - cell),
    }
}
