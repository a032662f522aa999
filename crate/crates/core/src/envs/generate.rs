use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cell, Color, Direction, EnvError, Family, Level, ObjectKind};

const RETRY_BUDGET: usize = 1000;
/// Canvas on which MultiRoom layouts are placed before cropping.
const CANVAS: i64 = 25;
const MIN_ROOM: i64 = 4;

pub fn generate(family: Family, seed: u64) -> Result<Level, EnvError> {
    match family {
        Family::MultiRoom { rooms, max_room_size } => generate_multiroom(rooms, max_room_size, seed),
        Family::FindObj { room_size } => generate_findobj(room_size, seed),
        Family::MiniPacMan { width, height } => generate_minipacman(width, height, seed),
    }
}

#[derive(Clone, Copy, Debug)]
struct Room {
    top: (i64, i64),
    size: (i64, i64),
    entry_door: (i64, i64),
}

/// Walls: 0 = east, 1 = south, 2 = west, 3 = north.
fn place_room(
    rng: &mut ChaCha8Rng,
    num_left: usize,
    rooms: &mut Vec<Room>,
    max_size: i64,
    entry_wall: usize,
    entry_door: (i64, i64),
) -> bool {
    let size_x = rng.random_range(MIN_ROOM..=max_size);
    let size_y = rng.random_range(MIN_ROOM..=max_size);
    let (top_x, top_y) = if rooms.is_empty() {
        entry_door
    } else {
        let (dx, dy) = entry_door;
        match entry_wall {
            0 => (dx - size_x + 1, rng.random_range(dy - size_y + 2..dy)),
            1 => (rng.random_range(dx - size_x + 2..dx), dy - size_y + 1),
            2 => (dx, rng.random_range(dy - size_y + 2..dy)),
            _ => (rng.random_range(dx - size_x + 2..dx), dy),
        }
    };
    if top_x < 0 || top_y < 0 || top_x + size_x > CANVAS || top_y + size_y >= CANVAS {
        return false;
    }
    // Only the room we entered from may share a wall with the new one.
    let n = rooms.len();
    for room in rooms.iter().take(n.saturating_sub(1)) {
        let apart = top_x + size_x < room.top.0
            || room.top.0 + room.size.0 <= top_x
            || top_y + size_y < room.top.1
            || room.top.1 + room.size.1 <= top_y;
        if !apart {
            return false;
        }
    }
    rooms.push(Room {
        top: (top_x, top_y),
        size: (size_x, size_y),
        entry_door,
    });
    if num_left == 1 {
        return true;
    }
    for _ in 0..8 {
        let walls: Vec<usize> = (0..4).filter(|&w| w != entry_wall).collect();
        let exit_wall = *walls.choose(rng).expect("three candidate walls");
        let exit = match exit_wall {
            0 => (top_x + size_x - 1, top_y + rng.random_range(1..size_y - 1)),
            1 => (top_x + rng.random_range(1..size_x - 1), top_y + size_y - 1),
            2 => (top_x, top_y + rng.random_range(1..size_y - 1)),
            _ => (top_x + rng.random_range(1..size_x - 1), top_y),
        };
        if place_room(rng, num_left - 1, rooms, max_size, (exit_wall + 2) % 4, exit) {
            break;
        }
    }
    true
}

fn random_interior(rng: &mut ChaCha8Rng, room: &Room) -> (i64, i64) {
    (
        room.top.0 + rng.random_range(1..room.size.0 - 1),
        room.top.1 + rng.random_range(1..room.size.1 - 1),
    )
}

/// `rooms` rooms of outer size in `[4, max_room_size]`, chained through
/// closed doors; agent in the first room, green goal in the last.
pub fn generate_multiroom(rooms: usize, max_room_size: usize, seed: u64) -> Result<Level, EnvError> {
    let family = Family::MultiRoom { rooms, max_room_size };
    if rooms < 2 || !(4..=10).contains(&max_room_size) {
        return Err(EnvError::InvalidParams {
            family: family.to_string(),
            reason: "need at least 2 rooms and 4 <= room size <= 10".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layout = Vec::new();
    for _ in 0..RETRY_BUDGET {
        let mut attempt = Vec::new();
        let entry = (rng.random_range(0..CANVAS - 2), rng.random_range(0..CANVAS - 2));
        place_room(&mut rng, rooms, &mut attempt, max_room_size as i64, 2, entry);
        if attempt.len() == rooms {
            layout = attempt;
            break;
        }
    }
    if layout.len() != rooms {
        return Err(EnvError::RetryBudget {
            family: family.to_string(),
            seed,
        });
    }

    let min_x = layout.iter().map(|r| r.top.0).min().unwrap();
    let min_y = layout.iter().map(|r| r.top.1).min().unwrap();
    let max_x = layout.iter().map(|r| r.top.0 + r.size.0).max().unwrap();
    let max_y = layout.iter().map(|r| r.top.1 + r.size.1).max().unwrap();
    let (width, height) = ((max_x - min_x) as usize, (max_y - min_y) as usize);
    let at = |x: i64, y: i64| (y - min_y) as usize * width + (x - min_x) as usize;

    // Everything outside a room interior is wall.
    let mut grid = vec![Cell::WALL; width * height];
    for room in &layout {
        for y in room.top.1 + 1..room.top.1 + room.size.1 - 1 {
            for x in room.top.0 + 1..room.top.0 + room.size.0 - 1 {
                grid[at(x, y)] = Cell::EMPTY;
            }
        }
    }
    let mut prev_color: Option<Color> = None;
    for room in layout.iter().skip(1) {
        let choices: Vec<Color> = Color::ALL.iter().copied().filter(|&c| Some(c) != prev_color).collect();
        let color = *choices.choose(&mut rng).unwrap();
        grid[at(room.entry_door.0, room.entry_door.1)] = Cell::door(color, false);
        prev_color = Some(color);
    }

    let (ax, ay) = random_interior(&mut rng, &layout[0]);
    let dir = Direction::from_index(rng.random_range(0..4));
    let (gx, gy) = random_interior(&mut rng, layout.last().unwrap());
    grid[at(gx, gy)] = Cell::GOAL;

    let level = Level {
        width,
        height,
        grid,
        agent_start: ((ax - min_x) as usize, (ay - min_y) as usize, dir),
        goal_pos: ((gx - min_x) as usize, (gy - min_y) as usize),
        goal_object: None,
        family,
        seed,
    };
    debug_assert!(level.goal_reachable());
    Ok(level)
}

/// 3x3 grid of rooms of outer size `room_size` joined by open doorways;
/// agent in the centre room, one target object in a uniformly chosen outer room.
pub fn generate_findobj(room_size: usize, seed: u64) -> Result<Level, EnvError> {
    let family = Family::FindObj { room_size };
    if ![5, 6, 7, 10].contains(&room_size) {
        return Err(EnvError::InvalidParams {
            family: family.to_string(),
            reason: "room size must be one of 5, 6, 7, 10".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = room_size - 1;
    let side = 3 * step + 1;
    let mut grid = vec![Cell::EMPTY; side * side];
    for y in 0..side {
        for x in 0..side {
            if x % step == 0 || y % step == 0 {
                grid[y * side + x] = Cell::WALL;
            }
        }
    }
    let random_color = |rng: &mut ChaCha8Rng| Color::ALL[rng.random_range(0..Color::ALL.len())];
    // Doorways between horizontally, then vertically, adjacent rooms.
    for j in 0..3 {
        for i in 0..2 {
            let x = (i + 1) * step;
            let y = j * step + rng.random_range(1..step);
            grid[y * side + x] = Cell::door(random_color(&mut rng), true);
        }
    }
    for i in 0..3 {
        for j in 0..2 {
            let y = (j + 1) * step;
            let x = i * step + rng.random_range(1..step);
            grid[y * side + x] = Cell::door(random_color(&mut rng), true);
        }
    }
    let interior = |rng: &mut ChaCha8Rng, i: usize, j: usize| (i * step + rng.random_range(1..step), j * step + rng.random_range(1..step));

    let (ax, ay) = interior(&mut rng, 1, 1);
    let dir = Direction::from_index(rng.random_range(0..4));
    let outer: Vec<(usize, usize)> = (0..9).map(|r| (r % 3, r / 3)).filter(|&r| r != (1, 1)).collect();
    let (ri, rj) = outer[rng.random_range(0..outer.len())];
    let (gx, gy) = interior(&mut rng, ri, rj);
    let kind = ObjectKind::TARGETS[rng.random_range(0..ObjectKind::TARGETS.len())];
    let color = random_color(&mut rng);
    grid[gy * side + gx] = Cell::object(kind, color);

    Ok(Level {
        width: side,
        height: side,
        grid,
        agent_start: (ax, ay, dir),
        goal_pos: (gx, gy),
        goal_object: Some((kind, color)),
        family,
        seed,
    })
}

/// Fraction of remaining separator walls knocked out after carving.
const LOOP_FRACTION: f64 = 0.1;
const MIN_GOAL_DISTANCE: usize = 4;

/// Randomized depth-first maze over odd coordinates, with a few extra
/// walls removed to create loops; at least one dead end is guaranteed.
pub fn generate_minipacman(width: usize, height: usize, seed: u64) -> Result<Level, EnvError> {
    let family = Family::MiniPacMan { width, height };
    if ![6, 11].contains(&width) || ![6, 11].contains(&height) {
        return Err(EnvError::InvalidParams {
            family: family.to_string(),
            reason: "width and height must be 6 or 11".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<usize> = (1..width - 1).step_by(2).filter(|&x| x < width - 1).collect();
    let ys: Vec<usize> = (1..height - 1).step_by(2).filter(|&y| y < height - 1).collect();
    let (nx, ny) = (xs.len(), ys.len());

    for _ in 0..RETRY_BUDGET {
        let mut grid = vec![Cell::WALL; width * height];
        let mut visited = vec![false; nx * ny];
        let start = (rng.random_range(0..nx), rng.random_range(0..ny));
        let mut stack = vec![start];
        visited[start.1 * nx + start.0] = true;
        grid[ys[start.1] * width + xs[start.0]] = Cell::EMPTY;
        while let Some(&(ci, cj)) = stack.last() {
            let mut next: Vec<(usize, usize)> = Direction::ALL
                .iter()
                .filter_map(|d| {
                    let (dx, dy) = d.offset();
                    let (ni, nj) = (ci as i32 + dx, cj as i32 + dy);
                    (ni >= 0 && nj >= 0 && (ni as usize) < nx && (nj as usize) < ny).then_some((ni as usize, nj as usize))
                })
                .filter(|&(i, j)| !visited[j * nx + i])
                .collect();
            if next.is_empty() {
                stack.pop();
                continue;
            }
            next.shuffle(&mut rng);
            let (ni, nj) = next[0];
            visited[nj * nx + ni] = true;
            let (x0, y0, x1, y1) = (xs[ci], ys[cj], xs[ni], ys[nj]);
            grid[y1 * width + x1] = Cell::EMPTY;
            grid[((y0 + y1) / 2) * width + (x0 + x1) / 2] = Cell::EMPTY;
            stack.push((ni, nj));
        }

        let mut separators = Vec::new();
        for (j, &y) in ys.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                if i + 1 < nx && grid[y * width + x + 1].object == ObjectKind::Wall {
                    separators.push(y * width + x + 1);
                }
                if j + 1 < ny && grid[(y + 1) * width + x].object == ObjectKind::Wall {
                    separators.push((y + 1) * width + x);
                }
            }
        }
        separators.shuffle(&mut rng);
        let knock = (separators.len() as f64 * LOOP_FRACTION).round() as usize;
        for &idx in &separators[..knock] {
            grid[idx] = Cell::EMPTY;
        }

        let open: Vec<(usize, usize)> = (0..width * height)
            .filter(|&i| grid[i].object != ObjectKind::Wall)
            .map(|i| (i % width, i / width))
            .collect();
        let degree = |(x, y): (usize, usize)| {
            Direction::ALL
                .iter()
                .filter(|d| {
                    let (dx, dy) = d.offset();
                    grid[(y as i32 + dy) as usize * width + (x as i32 + dx) as usize].object != ObjectKind::Wall
                })
                .count()
        };
        if !open.iter().any(|&c| degree(c) == 1) {
            continue;
        }

        let mut level = Level {
            width,
            height,
            grid,
            agent_start: (0, 0, Direction::East),
            goal_pos: (0, 0),
            goal_object: None,
            family,
            seed,
        };
        for _ in 0..64 {
            let (sx, sy) = open[rng.random_range(0..open.len())];
            let (gx, gy) = open[rng.random_range(0..open.len())];
            let far_enough = level.bfs_distances((sx, sy))[gy * width + gx].is_some_and(|d| d >= MIN_GOAL_DISTANCE);
            if far_enough {
                level.agent_start = (sx, sy, Direction::from_index(rng.random_range(0..4)));
                level.goal_pos = (gx, gy);
                level.grid[gy * width + gx] = Cell::GOAL;
                return Ok(level);
            }
        }
    }
    Err(EnvError::RetryBudget {
        family: family.to_string(),
        seed,
    })
}
