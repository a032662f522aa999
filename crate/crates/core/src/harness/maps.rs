use std::sync::Arc;

use crate::envs::{Direction, EnvState, Level, ObjectKind};
use crate::policy::PolicyError;
use crate::transfer::{FrozenBonusModel, VisitationTable};

/// Sentinel for walls and unreachable cells.
pub const BLOCKED: f64 = -1.0;

/// Per-cell values aligned with [`Level::to_text`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Binary 8-bit grayscale PGM, one pixel per cell, brighter is larger.
    /// Blocked cells are black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.values.iter().copied().filter(|&v| v >= 0.0).fold(0.0, f64::max);
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if v < 0.0 {
                0
            } else if max > 0.0 {
                (32.0 + 223.0 * v / max).round() as u8
            } else {
                32
            }
        }));
        out
    }

    /// Mean over the given cells, ignoring blocked ones.
    pub fn mean_over(&self, cells: &[(usize, usize)]) -> Option<f64> {
        let vals: Vec<f64> = cells.iter().map(|&(x, y)| self.get(x, y)).filter(|&v| v >= 0.0).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// KL of the frozen encoder against the prior at every reachable pose,
/// maximised over headings. The observation is rebuilt with zero memory
/// and any door under the agent open.
pub fn export_kl_heatmap(model: &FrozenBonusModel, level: &Level) -> Result<Grid, PolicyError> {
    let level = Arc::new(level.clone());
    let reachable = level.reachable();
    let mut values = vec![BLOCKED; level.width() * level.height()];
    let memory = model.initial_memory();
    let (mut obs, mut goal) = (Vec::new(), Vec::new());
    for y in 0..level.height() {
        for x in 0..level.width() {
            let i = level.index(x, y);
            if !reachable[i] || level.cell(x, y).object == ObjectKind::Wall {
                continue;
            }
            let mut best = 0.0f64;
            for dir in Direction::ALL {
                let env = EnvState::new(level.clone(), 1).with_pose(x, y, dir);
                env.observe().features(&mut obs);
                env.goal().to_vector(&mut goal);
                let (kl, _) = model.kl(&obs, &goal, &memory)?;
                best = best.max(kl);
            }
            values[i] = best;
        }
    }
    Ok(Grid {
        width: level.width(),
        height: level.height(),
        values,
    })
}

/// Visit counts per cell: `1 + visits summed over headings`, so an unvisited
/// cell reads 1. Blocked cells read -1.
pub fn export_visitation_map(table: &VisitationTable, level: &Level) -> Grid {
    let reachable = level.reachable();
    let mut values = vec![BLOCKED; level.width() * level.height()];
    for y in 0..level.height() {
        for x in 0..level.width() {
            let i = level.index(x, y);
            if reachable[i] && level.cell(x, y).object != ObjectKind::Wall {
                values[i] = 1.0;
            }
        }
    }
    let prefix = format!("{}@", level.token());
    for (key, count) in table.iter() {
        let Some(rest) = key.0.strip_prefix(&prefix) else {
            continue;
        };
        let mut parts = rest.split(',').map(|p| p.parse::<usize>());
        if let (Some(Ok(x)), Some(Ok(y))) = (parts.next(), parts.next()) {
            if x < level.width() && y < level.height() && values[level.index(x, y)] >= 0.0 {
                values[level.index(x, y)] += (count - 1) as f64;
            }
        }
    }
    Grid {
        width: level.width(),
        height: level.height(),
        values,
    }
}

/// Door cells versus corridor cells (reachable floor with no door among
/// the four neighbours), used to compare KL at decision points.
pub fn doorway_split(level: &Level) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let reachable = level.reachable();
    let mut doors = Vec::new();
    let mut corridor = Vec::new();
    for y in 0..level.height() {
        for x in 0..level.width() {
            if !reachable[level.index(x, y)] {
                continue;
            }
            match level.cell(x, y).object {
                ObjectKind::Door => doors.push((x, y)),
                ObjectKind::Empty => {
                    let near_door = Direction::ALL.iter().any(|d| {
                        let (dx, dy) = d.offset();
                        level.cell_at(x as i32 + dx, y as i32 + dy).object == ObjectKind::Door
                    });
                    if !near_door {
                        corridor.push((x, y));
                    }
                }
                _ => {}
            }
        }
    }
    (doors, corridor)
}
