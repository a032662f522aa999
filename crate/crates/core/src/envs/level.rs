use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Cell, Color, Direction, EnvError, Family, ObjectKind};

/// A generated map. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) grid: Vec<Cell>,
    pub(crate) agent_start: (usize, usize, Direction),
    pub(crate) goal_pos: (usize, usize),
    pub(crate) goal_object: Option<(ObjectKind, Color)>,
    pub(crate) family: Family,
    pub(crate) seed: u64,
}

/// JSON-lines metadata that accompanies the text rendering of a level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMeta {
    pub seed: u64,
    pub family: Family,
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize, Direction),
    pub goal: (usize, usize),
    pub goal_object: Option<(ObjectKind, Color)>,
    /// Colors of doors and objects, as `(x, y, color)`.
    pub colors: Vec<(usize, usize, Color)>,
}

impl Level {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agent_start(&self) -> (usize, usize, Direction) {
        self.agent_start
    }

    pub fn goal_pos(&self) -> (usize, usize) {
        self.goal_pos
    }

    pub fn goal_object(&self) -> Option<(ObjectKind, Color)> {
        self.goal_object
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.grid[y * self.width + x]
    }

    /// Cell at signed coordinates; outside the map reads as wall.
    pub fn cell_at(&self, x: i32, y: i32) -> Cell {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            Cell::WALL
        } else {
            self.cell(x as usize, y as usize)
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.grid
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Identity token used to key visitation counts.
    pub fn token(&self) -> String {
        format!("{}#{}", self.family, self.seed)
    }

    /// BFS distances from `from` through every non-wall cell; doors count as passable.
    pub fn bfs_distances(&self, from: (usize, usize)) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.grid.len()];
        let mut queue = VecDeque::new();
        dist[self.index(from.0, from.1)] = Some(0);
        queue.push_back(from);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[self.index(x, y)].unwrap();
            for dir in Direction::ALL {
                let (dx, dy) = dir.offset();
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if self.cell_at(nx, ny).object == ObjectKind::Wall {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let ni = self.index(nx, ny);
                if dist[ni].is_none() {
                    dist[ni] = Some(d + 1);
                    queue.push_back((nx, ny));
                }
            }
        }
        dist
    }

    /// One shortest start-to-goal path (inclusive), if any.
    pub fn shortest_path(&self) -> Option<Vec<(usize, usize)>> {
        let (sx, sy, _) = self.agent_start;
        let dist = self.bfs_distances(self.goal_pos);
        dist[self.index(sx, sy)]?;
        let mut path = vec![(sx, sy)];
        let (mut x, mut y) = (sx, sy);
        while (x, y) != self.goal_pos {
            let d = dist[self.index(x, y)].unwrap();
            let next = Direction::ALL.iter().find_map(|dir| {
                let (dx, dy) = dir.offset();
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if nx < 0 || ny < 0 || nx as usize >= self.width || ny as usize >= self.height {
                    return None;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                (dist[self.index(nx, ny)] == Some(d - 1)).then_some((nx, ny))
            })?;
            path.push(next);
            (x, y) = next;
        }
        Some(path)
    }

    pub fn goal_reachable(&self) -> bool {
        let (sx, sy, _) = self.agent_start;
        self.bfs_distances((sx, sy))[self.index(self.goal_pos.0, self.goal_pos.1)].is_some()
    }

    /// Cells reachable from the agent start.
    pub fn reachable(&self) -> Vec<bool> {
        let (sx, sy, _) = self.agent_start;
        self.bfs_distances((sx, sy)).into_iter().map(|d| d.is_some()).collect()
    }

    /// One character per cell, rows separated by newlines.
    ///
    /// Legend: `#` wall, `.` floor, `D` closed door, `d` open door, `G` goal,
    /// `k` key, `b` ball, `x` box.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.cell(x, y);
                s.push(match c.object {
                    ObjectKind::Empty | ObjectKind::Unseen => '.',
                    ObjectKind::Wall => '#',
                    ObjectKind::Door if c.door_open => 'd',
                    ObjectKind::Door => 'D',
                    ObjectKind::Key => 'k',
                    ObjectKind::Ball => 'b',
                    ObjectKind::Box => 'x',
                    ObjectKind::Goal => 'G',
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn meta(&self) -> LevelMeta {
        let mut colors = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.cell(x, y);
                if matches!(
                    c.object,
                    ObjectKind::Door | ObjectKind::Key | ObjectKind::Ball | ObjectKind::Box
                ) {
                    colors.push((x, y, c.color));
                }
            }
        }
        LevelMeta {
            seed: self.seed,
            family: self.family,
            width: self.width,
            height: self.height,
            start: self.agent_start,
            goal: self.goal_pos,
            goal_object: self.goal_object,
            colors,
        }
    }

    /// Single JSON line describing the level.
    pub fn meta_json(&self) -> String {
        serde_json::to_string(&self.meta()).expect("level metadata serializes")
    }

    /// Rebuilds a level from its text rendering and metadata line.
    pub fn from_text(text: &str, meta_json: &str) -> Result<Level, EnvError> {
        let meta: LevelMeta = serde_json::from_str(meta_json.trim()).map_err(|e| EnvError::Parse(e.to_string()))?;
        let rows: Vec<&str> = text.lines().collect();
        if rows.len() != meta.height || rows.iter().any(|r| r.chars().count() != meta.width) {
            return Err(EnvError::Parse(format!(
                "grid is not {}x{}",
                meta.width, meta.height
            )));
        }
        let mut grid = Vec::with_capacity(meta.width * meta.height);
        for row in &rows {
            for ch in row.chars() {
                grid.push(match ch {
                    '.' => Cell::EMPTY,
                    '#' => Cell::WALL,
                    'D' => Cell::door(Color::Red, false),
                    'd' => Cell::door(Color::Red, true),
                    'G' => Cell::GOAL,
                    'k' => Cell::object(ObjectKind::Key, Color::Red),
                    'b' => Cell::object(ObjectKind::Ball, Color::Red),
                    'x' => Cell::object(ObjectKind::Box, Color::Red),
                    other => return Err(EnvError::Parse(format!("unknown cell character {other:?}"))),
                });
            }
        }
        for &(x, y, color) in &meta.colors {
            if x >= meta.width || y >= meta.height {
                return Err(EnvError::Parse(format!("color entry ({x}, {y}) outside grid")));
            }
            grid[y * meta.width + x].color = color;
        }
        Ok(Level {
            width: meta.width,
            height: meta.height,
            grid,
            agent_start: meta.start,
            goal_pos: meta.goal,
            goal_object: meta.goal_object,
            family: meta.family,
            seed: meta.seed,
        })
    }
}
