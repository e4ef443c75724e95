use serde::{Deserialize, Serialize};

/// Items of the crafting chain, in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Item {
    Log,
    Plank,
    Stick,
    CraftingTable,
    WoodenPickaxe,
    Cobblestone,
    StonePickaxe,
    Furnace,
    IronOre,
    IronIngot,
    IronPickaxe,
    Diamond,
}

impl Item {
    pub const COUNT: usize = 12;
    pub const ALL: [Item; Item::COUNT] = [
        Item::Log,
        Item::Plank,
        Item::Stick,
        Item::CraftingTable,
        Item::WoodenPickaxe,
        Item::Cobblestone,
        Item::StonePickaxe,
        Item::Furnace,
        Item::IronOre,
        Item::IronIngot,
        Item::IronPickaxe,
        Item::Diamond,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Item> {
        Item::ALL.get(i).copied()
    }

    /// Reward granted the first time the item is obtained in an episode.
    pub fn milestone_reward(self) -> f64 {
        match self {
            Item::Log => 1.0,
            Item::Plank => 2.0,
            Item::Stick => 4.0,
            Item::CraftingTable => 4.0,
            Item::WoodenPickaxe => 8.0,
            Item::Cobblestone => 16.0,
            Item::StonePickaxe => 32.0,
            Item::Furnace => 32.0,
            Item::IronOre => 64.0,
            Item::IronIngot => 128.0,
            Item::IronPickaxe => 256.0,
            Item::Diamond => 1024.0,
        }
    }

    /// Items that must be held (or placed) before this one can be obtained.
    pub fn prerequisites(self) -> &'static [Item] {
        match self {
            Item::Log => &[],
            Item::Plank => &[Item::Log],
            Item::Stick => &[Item::Plank],
            Item::CraftingTable => &[Item::Plank],
            Item::WoodenPickaxe => &[Item::Plank, Item::Stick, Item::CraftingTable],
            Item::Cobblestone => &[Item::WoodenPickaxe],
            Item::StonePickaxe => &[Item::Cobblestone, Item::Stick, Item::CraftingTable],
            Item::Furnace => &[Item::Cobblestone, Item::CraftingTable],
            Item::IronOre => &[Item::StonePickaxe],
            Item::IronIngot => &[Item::IronOre, Item::Furnace, Item::Plank],
            Item::IronPickaxe => &[Item::IronIngot, Item::Stick, Item::CraftingTable],
            Item::Diamond => &[Item::IronPickaxe],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Item::Log => "Log",
            Item::Plank => "Plank",
            Item::Stick => "Stick",
            Item::CraftingTable => "Crafting_Table",
            Item::WoodenPickaxe => "Wooden_Pickaxe",
            Item::Cobblestone => "Cobblestone",
            Item::StonePickaxe => "Stone_Pickaxe",
            Item::Furnace => "Furnace",
            Item::IronOre => "Iron_Ore",
            Item::IronIngot => "Iron_Ingot",
            Item::IronPickaxe => "Iron_Pickaxe",
            Item::Diamond => "Diamond",
        }
    }
}

/// Sum of milestone rewards over the items whose first-time flag is set.
pub fn milestone_score(flags: &[bool; Item::COUNT]) -> f64 {
    Item::ALL
        .iter()
        .zip(flags)
        .filter(|(_, &f)| f)
        .map(|(i, _)| i.milestone_reward())
        .sum()
}

/// Original (pre-obfuscation) actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveNorth,
    MoveSouth,
    MoveEast,
    MoveWest,
    TurnLeft,
    TurnRight,
    Attack,
    DigDown,
    PlaceTable,
    PlaceFurnace,
    CraftPlank,
    CraftStick,
    CraftTable,
    CraftWoodenPickaxe,
    CraftStonePickaxe,
    CraftFurnace,
    SmeltIron,
    CraftIronPickaxe,
    EquipBest,
    Noop,
}

impl Action {
    pub const COUNT: usize = 20;
    pub const ALL: [Action; Action::COUNT] = [
        Action::MoveNorth,
        Action::MoveSouth,
        Action::MoveEast,
        Action::MoveWest,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Attack,
        Action::DigDown,
        Action::PlaceTable,
        Action::PlaceFurnace,
        Action::CraftPlank,
        Action::CraftStick,
        Action::CraftTable,
        Action::CraftWoodenPickaxe,
        Action::CraftStonePickaxe,
        Action::CraftFurnace,
        Action::SmeltIron,
        Action::CraftIronPickaxe,
        Action::EquipBest,
        Action::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Pure locomotion: moves and turns.
    pub fn is_movement(self) -> bool {
        matches!(
            self,
            Action::MoveNorth
                | Action::MoveSouth
                | Action::MoveEast
                | Action::MoveWest
                | Action::TurnLeft
                | Action::TurnRight
        )
    }

    /// Actions that can alter inventory counts: collecting, crafting,
    /// placing and smelting.
    pub fn is_inventory_action(self) -> bool {
        matches!(
            self,
            Action::Attack
                | Action::DigDown
                | Action::PlaceTable
                | Action::PlaceFurnace
                | Action::CraftPlank
                | Action::CraftStick
                | Action::CraftTable
                | Action::CraftWoodenPickaxe
                | Action::CraftStonePickaxe
                | Action::CraftFurnace
                | Action::SmeltIron
                | Action::CraftIronPickaxe
        )
    }

    pub fn move_direction(self) -> Option<Dir> {
        match self {
            Action::MoveNorth => Some(Dir::North),
            Action::MoveSouth => Some(Dir::South),
            Action::MoveEast => Some(Dir::East),
            Action::MoveWest => Some(Dir::West),
            _ => None,
        }
    }

    pub fn move_towards(d: Dir) -> Action {
        match d {
            Dir::North => Action::MoveNorth,
            Dir::South => Action::MoveSouth,
            Dir::East => Action::MoveEast,
            Dir::West => Action::MoveWest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveNorth => "move_north",
            Action::MoveSouth => "move_south",
            Action::MoveEast => "move_east",
            Action::MoveWest => "move_west",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Attack => "attack",
            Action::DigDown => "dig_down",
            Action::PlaceTable => "place_table",
            Action::PlaceFurnace => "place_furnace",
            Action::CraftPlank => "craft_plank",
            Action::CraftStick => "craft_stick",
            Action::CraftTable => "craft_table",
            Action::CraftWoodenPickaxe => "craft_wooden_pickaxe",
            Action::CraftStonePickaxe => "craft_stone_pickaxe",
            Action::CraftFurnace => "craft_furnace",
            Action::SmeltIron => "smelt_iron",
            Action::CraftIronPickaxe => "craft_iron_pickaxe",
            Action::EquipBest => "equip_best",
            Action::Noop => "noop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (0, -1),
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
        }
    }

    pub fn left(self) -> Dir {
        match self {
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
            Dir::East => Dir::North,
        }
    }

    pub fn right(self) -> Dir {
        self.left().left().left()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Objects that can be placed into the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placeable {
    CraftingTable,
    Furnace,
}

impl Placeable {
    pub fn item(self) -> Item {
        match self {
            Placeable::CraftingTable => Item::CraftingTable,
            Placeable::Furnace => Item::Furnace,
        }
    }
}

/// Pickaxe tiers; mining checks the equipped tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tool {
    None,
    Wooden,
    Stone,
    Iron,
}

impl Tool {
    pub const ALL: [Tool; 4] = [Tool::None, Tool::Wooden, Tool::Stone, Tool::Iron];

    pub fn item(self) -> Option<Item> {
        match self {
            Tool::None => None,
            Tool::Wooden => Some(Item::WoodenPickaxe),
            Tool::Stone => Some(Item::StonePickaxe),
            Tool::Iron => Some(Item::IronPickaxe),
        }
    }

    pub fn for_item(item: Item) -> Option<Tool> {
        match item {
            Item::WoodenPickaxe => Some(Tool::Wooden),
            Item::StonePickaxe => Some(Tool::Stone),
            Item::IronPickaxe => Some(Tool::Iron),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecipeKind {
    /// Produced by a crafting or smelting action.
    Craft(Action),
    /// Collected from a world block.
    Mine,
}

/// How an item is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recipe {
    pub output: Item,
    pub output_count: u32,
    pub inputs: &'static [(Item, u32)],
    pub requires_placed: Option<Placeable>,
    pub tool_required: Option<Item>,
    pub kind: RecipeKind,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        output: Item::Log,
        output_count: 1,
        inputs: &[],
        requires_placed: None,
        tool_required: None,
        kind: RecipeKind::Mine,
    },
    Recipe {
        output: Item::Plank,
        output_count: 4,
        inputs: &[(Item::Log, 1)],
        requires_placed: None,
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftPlank),
    },
    Recipe {
        output: Item::Stick,
        output_count: 4,
        inputs: &[(Item::Plank, 2)],
        requires_placed: None,
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftStick),
    },
    Recipe {
        output: Item::CraftingTable,
        output_count: 1,
        inputs: &[(Item::Plank, 4)],
        requires_placed: None,
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftTable),
    },
    Recipe {
        output: Item::WoodenPickaxe,
        output_count: 1,
        inputs: &[(Item::Plank, 3), (Item::Stick, 2)],
        requires_placed: Some(Placeable::CraftingTable),
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftWoodenPickaxe),
    },
    Recipe {
        output: Item::Cobblestone,
        output_count: 1,
        inputs: &[],
        requires_placed: None,
        tool_required: Some(Item::WoodenPickaxe),
        kind: RecipeKind::Mine,
    },
    Recipe {
        output: Item::StonePickaxe,
        output_count: 1,
        inputs: &[(Item::Cobblestone, 3), (Item::Stick, 2)],
        requires_placed: Some(Placeable::CraftingTable),
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftStonePickaxe),
    },
    Recipe {
        output: Item::Furnace,
        output_count: 1,
        inputs: &[(Item::Cobblestone, 8)],
        requires_placed: Some(Placeable::CraftingTable),
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftFurnace),
    },
    Recipe {
        output: Item::IronOre,
        output_count: 1,
        inputs: &[],
        requires_placed: None,
        tool_required: Some(Item::StonePickaxe),
        kind: RecipeKind::Mine,
    },
    Recipe {
        output: Item::IronIngot,
        output_count: 1,
        inputs: &[(Item::IronOre, 1), (Item::Plank, 1)],
        requires_placed: Some(Placeable::Furnace),
        tool_required: None,
        kind: RecipeKind::Craft(Action::SmeltIron),
    },
    Recipe {
        output: Item::IronPickaxe,
        output_count: 1,
        inputs: &[(Item::IronIngot, 3), (Item::Stick, 2)],
        requires_placed: Some(Placeable::CraftingTable),
        tool_required: None,
        kind: RecipeKind::Craft(Action::CraftIronPickaxe),
    },
    Recipe {
        output: Item::Diamond,
        output_count: 1,
        inputs: &[],
        requires_placed: None,
        tool_required: Some(Item::IronPickaxe),
        kind: RecipeKind::Mine,
    },
];

pub fn recipe_for_item(item: Item) -> &'static Recipe {
    RECIPES
        .iter()
        .find(|r| r.output == item)
        .expect("every item has a recipe")
}

pub fn recipe_for_action(action: Action) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.kind == RecipeKind::Craft(action))
}
