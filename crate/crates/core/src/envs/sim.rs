use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Action, Cell, Color, Direction, EnvError, Level, ObjectKind};

/// Width of the padded goal vector fed to policies.
pub const GOAL_WIDTH: usize = 9;

/// Mutable episode state over an immutable [`Level`].
#[derive(Clone, Debug)]
pub struct EnvState {
    level: Arc<Level>,
    agent_pos: (usize, usize),
    agent_dir: Direction,
    door_open: Vec<bool>,
    step_count: usize,
    max_steps: usize,
    done: bool,
    discounted_reward: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    /// The goal (or target object) was reached on this step.
    pub success: bool,
}

/// Egocentric partial view: `size x size x 3` (object, color, door-open)
/// stored row-major with the agent on the bottom-centre cell facing up.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub size: usize,
    pub view: Vec<u8>,
    pub agent_dir: u8,
}

impl Observation {
    /// `(object, color, door_open)` at view row `row`, column `col`.
    pub fn at(&self, row: usize, col: usize) -> (u8, u8, u8) {
        let i = (row * self.size + col) * 3;
        (self.view[i], self.view[i + 1], self.view[i + 2])
    }

    /// Length of [`Observation::features`] for a view of side `size`.
    pub fn feature_width(size: usize) -> usize {
        size * size * 3 + 4
    }

    /// Channels scaled into `[0, 1]`, followed by a one-hot heading.
    pub fn features(&self, out: &mut Vec<f64>) {
        out.clear();
        let obj_scale = 1.0 / (ObjectKind::COUNT - 1) as f64;
        let color_scale = 1.0 / (Color::ALL.len() - 1) as f64;
        for cell in self.view.chunks_exact(3) {
            out.push(cell[0] as f64 * obj_scale);
            out.push(cell[1] as f64 * color_scale);
            out.push(cell[2] as f64);
        }
        for d in 0..4 {
            out.push(if d == self.agent_dir as usize { 1.0 } else { 0.0 });
        }
    }
}

/// The goal signal given to the agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSpec {
    /// Goal minus agent position, divided by `max(width, height)`.
    RelativeDisplacement { dx: f64, dy: f64 },
    ObjectDescriptor { object: ObjectKind, color: Color },
}

impl GoalSpec {
    /// Fixed-width encoding: displacement in the first two slots, or a
    /// one-hot target kind (3 slots) followed by a one-hot color (6 slots).
    pub fn to_vector(&self, out: &mut Vec<f64>) {
        out.clear();
        out.resize(GOAL_WIDTH, 0.0);
        match *self {
            GoalSpec::RelativeDisplacement { dx, dy } => {
                out[0] = dx;
                out[1] = dy;
            }
            GoalSpec::ObjectDescriptor { object, color } => {
                if let Some(k) = ObjectKind::TARGETS.iter().position(|&t| t == object) {
                    out[k] = 1.0;
                }
                out[ObjectKind::TARGETS.len() + color as usize] = 1.0;
            }
        }
    }
}

/// Canonical visitation key: level identity, position and heading.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey(pub String);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl EnvState {
    pub fn new(level: Arc<Level>, max_steps: usize) -> Self {
        let (x, y, dir) = level.agent_start;
        let door_open = level.grid.iter().map(|c| c.door_open).collect();
        Self {
            level,
            agent_pos: (x, y),
            agent_dir: dir,
            door_open,
            step_count: 0,
            max_steps,
            done: false,
            discounted_reward: false,
        }
    }

    /// Success reward decays with elapsed time: `1 - 0.9 * steps / max_steps`.
    pub fn with_discounted_reward(mut self, on: bool) -> Self {
        self.discounted_reward = on;
        self
    }

    /// Places the agent at an arbitrary non-wall pose; a door underneath is opened.
    pub fn with_pose(mut self, x: usize, y: usize, dir: Direction) -> Self {
        let idx = self.level.index(x, y);
        if self.level.grid[idx].object == ObjectKind::Door {
            self.door_open[idx] = true;
        }
        self.agent_pos = (x, y);
        self.agent_dir = dir;
        self
    }

    pub fn level(&self) -> &Arc<Level> {
        &self.level
    }

    pub fn agent_pos(&self) -> (usize, usize) {
        self.agent_pos
    }

    pub fn agent_dir(&self) -> Direction {
        self.agent_dir
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn door_is_open(&self, x: usize, y: usize) -> bool {
        self.door_open[self.level.index(x, y)]
    }

    /// Cell contents including the current door state.
    fn live_cell(&self, x: i32, y: i32) -> Cell {
        let mut c = self.level.cell_at(x, y);
        if c.object == ObjectKind::Door {
            c.door_open = self.door_open[self.level.index(x as usize, y as usize)];
        }
        c
    }

    fn front(&self) -> (i32, i32) {
        let (dx, dy) = self.agent_dir.offset();
        (self.agent_pos.0 as i32 + dx, self.agent_pos.1 as i32 + dy)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        self.step_count += 1;
        let mut success = false;
        match action {
            Action::TurnLeft => self.agent_dir = self.agent_dir.left(),
            Action::TurnRight => self.agent_dir = self.agent_dir.right(),
            Action::Forward => {
                let (fx, fy) = self.front();
                let cell = self.live_cell(fx, fy);
                let is_target = (fx, fy) == (self.level.goal_pos.0 as i32, self.level.goal_pos.1 as i32);
                let passable = match cell.object {
                    ObjectKind::Empty | ObjectKind::Goal => true,
                    ObjectKind::Door => cell.door_open,
                    ObjectKind::Key | ObjectKind::Ball | ObjectKind::Box => is_target,
                    ObjectKind::Wall | ObjectKind::Unseen => false,
                };
                if passable {
                    self.agent_pos = (fx as usize, fy as usize);
                    success = is_target;
                }
            }
            Action::Toggle => {
                let (fx, fy) = self.front();
                if self.level.cell_at(fx, fy).object == ObjectKind::Door {
                    let idx = self.level.index(fx as usize, fy as usize);
                    self.door_open[idx] = true;
                }
            }
            Action::Pickup | Action::Drop | Action::Done => {}
        }
        let reward = if success {
            if self.discounted_reward {
                1.0 - 0.9 * (self.step_count as f64 / self.max_steps as f64)
            } else {
                1.0
            }
        } else {
            0.0
        };
        self.done = success || self.step_count >= self.max_steps;
        Ok(StepResult {
            reward,
            done: self.done,
            success,
        })
    }

    /// Egocentric view with line-of-sight occlusion; hidden cells read `Unseen`.
    pub fn observe(&self) -> Observation {
        let v = self.level.family.view_size();
        let (fx, fy) = self.agent_dir.offset();
        let (rx, ry) = self.agent_dir.right().offset();
        let (ax, ay) = (self.agent_pos.0 as i32, self.agent_pos.1 as i32);
        let half = (v / 2) as i32;
        let mut cells = vec![Cell::WALL; v * v];
        for row in 0..v {
            for col in 0..v {
                let fwd = (v - 1 - row) as i32;
                let lat = col as i32 - half;
                let (wx, wy) = (ax + fwd * fx + lat * rx, ay + fwd * fy + lat * ry);
                cells[row * v + col] = self.live_cell(wx, wy);
            }
        }
        // The agent's own square is reported as empty.
        cells[(v - 1) * v + v / 2] = Cell::EMPTY;
        let visible = visibility(&cells, v);

        let mut view = Vec::with_capacity(v * v * 3);
        for (c, &seen) in cells.iter().zip(&visible) {
            if seen {
                view.extend_from_slice(&[c.object as u8, c.color as u8, c.door_open as u8]);
            } else {
                view.extend_from_slice(&[ObjectKind::Unseen as u8, 0, 0]);
            }
        }
        Observation {
            size: v,
            view,
            agent_dir: self.agent_dir as u8,
        }
    }

    pub fn goal(&self) -> GoalSpec {
        match self.level.goal_object {
            Some((object, color)) => GoalSpec::ObjectDescriptor { object, color },
            None => {
                let scale = self.level.width.max(self.level.height) as f64;
                GoalSpec::RelativeDisplacement {
                    dx: (self.level.goal_pos.0 as f64 - self.agent_pos.0 as f64) / scale,
                    dy: (self.level.goal_pos.1 as f64 - self.agent_pos.1 as f64) / scale,
                }
            }
        }
    }

    pub fn state_key(&self) -> StateKey {
        StateKey(format!(
            "{}@{},{},{}",
            self.level.token(),
            self.agent_pos.0,
            self.agent_pos.1,
            self.agent_dir as u8
        ))
    }
}

fn see_behind(c: &Cell) -> bool {
    match c.object {
        ObjectKind::Wall => false,
        ObjectKind::Door => c.door_open,
        _ => true,
    }
}

/// Visibility propagation over the view, row by row away from the agent.
fn visibility(cells: &[Cell], v: usize) -> Vec<bool> {
    let at = |col: usize, row: usize| row * v + col;
    let mut mask = vec![false; v * v];
    mask[at(v / 2, v - 1)] = true;
    for row in (0..v).rev() {
        for col in 0..v - 1 {
            if !mask[at(col, row)] || !see_behind(&cells[at(col, row)]) {
                continue;
            }
            mask[at(col + 1, row)] = true;
            if row > 0 {
                mask[at(col + 1, row - 1)] = true;
                mask[at(col, row - 1)] = true;
            }
        }
        for col in (1..v).rev() {
            if !mask[at(col, row)] || !see_behind(&cells[at(col, row)]) {
                continue;
            }
            mask[at(col - 1, row)] = true;
            if row > 0 {
                mask[at(col - 1, row - 1)] = true;
                mask[at(col, row - 1)] = true;
            }
        }
    }
    mask
}
