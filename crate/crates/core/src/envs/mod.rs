//! Procedurally generated gridworlds: chained rooms with doors, a 3x3 room
//! grid with a target object, and small mazes.
//!
//! Levels are immutable after generation. [`EnvState`] owns the mutable
//! part of an episode (pose, doors, step counter).

mod generate;
mod level;
mod sim;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use generate::{generate, generate_findobj, generate_minipacman, generate_multiroom};
pub use level::{Level, LevelMeta};
pub use sim::{EnvState, GoalSpec, Observation, StateKey, StepResult, GOAL_WIDTH};

/// Object occupying a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ObjectKind {
    Empty = 0,
    Wall = 1,
    Door = 2,
    Key = 3,
    Ball = 4,
    Box = 5,
    Goal = 6,
    /// Occluded or outside the view; never stored in a level.
    Unseen = 7,
}

impl ObjectKind {
    pub const COUNT: u8 = 8;

    pub fn from_id(id: u8) -> Option<Self> {
        use ObjectKind::*;
        Some(match id {
            0 => Empty,
            1 => Wall,
            2 => Door,
            3 => Key,
            4 => Ball,
            5 => Box,
            6 => Goal,
            7 => Unseen,
            _ => return None,
        })
    }

    /// Objects the FindObj family can ask for.
    pub const TARGETS: [ObjectKind; 3] = [ObjectKind::Key, ObjectKind::Ball, ObjectKind::Box];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

impl Color {
    pub const ALL: [Color; 6] = [Color::Red, Color::Green, Color::Blue, Color::Purple, Color::Yellow, Color::Grey];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }
}

/// Contents of one grid square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub object: ObjectKind,
    pub color: Color,
    /// Only meaningful for doors.
    pub door_open: bool,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        object: ObjectKind::Empty,
        color: Color::Red,
        door_open: false,
    };
    pub const WALL: Cell = Cell {
        object: ObjectKind::Wall,
        color: Color::Grey,
        door_open: false,
    };
    pub const GOAL: Cell = Cell {
        object: ObjectKind::Goal,
        color: Color::Green,
        door_open: false,
    };

    pub fn door(color: Color, open: bool) -> Cell {
        Cell {
            object: ObjectKind::Door,
            color,
            door_open: open,
        }
    }

    pub fn object(object: ObjectKind, color: Color) -> Cell {
        Cell {
            object,
            color,
            door_open: false,
        }
    }
}

/// Heading, numbered clockwise from east.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::South, Direction::West, Direction::North];

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i % 4]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }

    pub fn left(self) -> Direction {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Direction {
        Self::from_index(self.index() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const COUNT: usize = 7;

    pub fn from_index(i: usize) -> Option<Action> {
        use Action::*;
        Some(match i {
            0 => TurnLeft,
            1 => TurnRight,
            2 => Forward,
            3 => Pickup,
            4 => Drop,
            5 => Toggle,
            6 => Done,
            _ => return None,
        })
    }
}

/// Environment family with its size parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `rooms` chained rooms of outer size at most `max_room_size`.
    MultiRoom { rooms: usize, max_room_size: usize },
    /// 3x3 grid of rooms of outer size `room_size`.
    FindObj { room_size: usize },
    MiniPacMan { width: usize, height: usize },
}

impl Family {
    /// Side of the square egocentric view.
    pub fn view_size(&self) -> usize {
        match self {
            Family::MultiRoom { .. } => 3,
            Family::FindObj { .. } | Family::MiniPacMan { .. } => 7,
        }
    }

    pub fn default_max_steps(&self) -> usize {
        match *self {
            Family::MultiRoom { rooms, max_room_size } => 20 * rooms * max_room_size,
            Family::FindObj { room_size } => 9 * room_size * room_size,
            Family::MiniPacMan { width, height } => 4 * width * height,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::MultiRoom { rooms, max_room_size } => write!(f, "MultiRoomN{rooms}S{max_room_size}"),
            Family::FindObj { room_size } => write!(f, "FindObjS{room_size}"),
            Family::MiniPacMan { width, height } => write!(f, "MiniPacMan{width}x{height}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParams { family: String, reason: String },
    #[error("{family}: generation retry budget exhausted for seed {seed}")]
    RetryBudget { family: String, seed: u64 },
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("malformed level file: {0}")]
    Parse(String),
}
