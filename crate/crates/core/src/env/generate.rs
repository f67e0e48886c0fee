//! Procedural rooms with co-occurrence driven object placement.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::scene::{Cell, ObjectInstance, RoomType, Scene};
use crate::error::{Error, Result};
use crate::graph::{CooccurrencePrior, Vocabulary};
use crate::rng;

/// Satellites land within this Euclidean distance of their anchor.
pub const SATELLITE_RADIUS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGenParams {
    /// Inclusive range for both width and height, drawn independently.
    pub size_range: (usize, usize),
    pub object_count_range: (usize, usize),
    pub wall_segment_range: (usize, usize),
    pub wall_length_range: (usize, usize),
    pub max_retries: usize,
}

impl SceneGenParams {
    pub fn for_room(room: RoomType) -> Self {
        let (size_range, object_count_range, wall_segment_range) = match room {
            RoomType::Kitchen => ((12, 14), (6, 9), (2, 4)),
            RoomType::LivingRoom => ((16, 18), (6, 9), (3, 5)),
            RoomType::Bedroom => ((12, 14), (6, 9), (2, 4)),
            RoomType::Bathroom => ((10, 12), (5, 7), (1, 2)),
        };
        Self {
            size_range,
            object_count_range,
            wall_segment_range,
            wall_length_range: (2, 4),
            max_retries: 200,
        }
    }

    /// Open 5×5 room with a single object.
    pub fn trivial() -> Self {
        Self {
            size_range: (5, 5),
            object_count_range: (1, 1),
            wall_segment_range: (0, 0),
            wall_length_range: (1, 1),
            max_retries: 10,
        }
    }
}

fn range(rng: &mut rng::Rng, (lo, hi): (usize, usize)) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Generates a room: random interior wall segments (retried until the
/// free region is connected), then objects by anchor-then-satellite
/// placement. An anchor category is drawn uniformly from the unplaced
/// ones; each unplaced category linked to it in `prior` is then placed
/// within [`SATELLITE_RADIUS`] with probability equal to the link strength.
pub fn generate_scene(
    room: RoomType,
    params: &SceneGenParams,
    vocab: &Vocabulary,
    prior: &CooccurrencePrior,
    seed: u64,
    id: &str,
) -> Result<Scene> {
    if params.size_range.0 < 5 {
        return Err(Error::Generation("rooms must be at least 5x5".into()));
    }
    if params.object_count_range.0 == 0 || params.object_count_range.1 < params.object_count_range.0 {
        return Err(Error::Generation("need at least one object per scene".into()));
    }
    let candidates = vocab.in_room(room);
    if candidates.is_empty() {
        return Err(Error::Generation(format!("no categories for room type {room}")));
    }
    let mut rng = rng::rng_from(seed, &[rng::name_tag("scene"), rng::name_tag(id)]);
    for _ in 0..params.max_retries.max(1) {
        let width = range(&mut rng, params.size_range);
        let height = range(&mut rng, params.size_range);
        let walls = carve_walls(&mut rng, width, height, params);
        let count = range(&mut rng, params.object_count_range).min(candidates.len());
        let Some(objects) = place_objects(&mut rng, width, height, &walls, &candidates, prior, count)
        else {
            continue;
        };
        match Scene::new(id, room, width, height, walls, objects) {
            Ok(scene) => return Ok(scene),
            Err(_) => continue,
        }
    }
    Err(Error::Generation(format!(
        "no valid layout for '{id}' after {} attempts",
        params.max_retries
    )))
}

fn carve_walls(rng: &mut rng::Rng, width: usize, height: usize, params: &SceneGenParams) -> Vec<bool> {
    let mut walls = vec![false; width * height];
    let segments = range(rng, params.wall_segment_range);
    for _ in 0..segments {
        let len = range(rng, params.wall_length_range);
        let horizontal = rng.random_bool(0.5);
        let x0 = rng.random_range(0..width);
        let y0 = rng.random_range(0..height);
        for k in 0..len {
            let (x, y) = if horizontal { (x0 + k, y0) } else { (x0, y0 + k) };
            if x < width && y < height {
                walls[y * width + x] = true;
            }
        }
    }
    walls
}

fn place_objects(
    rng: &mut rng::Rng,
    width: usize,
    height: usize,
    walls: &[bool],
    candidates: &[usize],
    prior: &CooccurrencePrior,
    count: usize,
) -> Option<Vec<ObjectInstance>> {
    let mut free: Vec<Cell> = (0..height as i32)
        .flat_map(|y| (0..width as i32).map(move |x| Cell::new(x, y)))
        .filter(|c| !walls[c.y as usize * width + c.x as usize])
        .collect();
    // keep at least one spawn cell
    if free.len() <= count {
        return None;
    }
    free.shuffle(rng);
    let mut placed: Vec<ObjectInstance> = Vec::with_capacity(count);
    let mut remaining: Vec<usize> = candidates.to_vec();
    let occupied = |placed: &[ObjectInstance], c: Cell| placed.iter().any(|o| o.cell == c);

    while placed.len() < count && !remaining.is_empty() {
        let anchor = remaining.remove(rng.random_range(0..remaining.len()));
        let spots: Vec<Cell> = free.iter().copied().filter(|&c| !occupied(&placed, c)).collect();
        let anchor_cell = *spots.get(rng.random_range(0..spots.len().max(1)))?;
        placed.push(ObjectInstance {
            category: anchor,
            cell: anchor_cell,
        });
        let mut i = 0;
        while i < remaining.len() && placed.len() < count {
            let c = remaining[i];
            let s = prior.strength(anchor, c);
            if s > 0.0 && rng.random_bool(s.min(1.0)) {
                let near: Vec<Cell> = free
                    .iter()
                    .copied()
                    .filter(|&cell| {
                        cell != anchor_cell
                            && cell.distance(anchor_cell) <= SATELLITE_RADIUS
                            && !occupied(&placed, cell)
                    })
                    .collect();
                if !near.is_empty() {
                    let cell = near[rng.random_range(0..near.len())];
                    placed.push(ObjectInstance { category: c, cell });
                    remaining.remove(i);
                    continue;
                }
            }
            i += 1;
        }
    }
    Some(placed)
}

/// Generates `count` scenes of one room type with ids `<room>-<k>`.
pub fn generate_scenes(
    room: RoomType,
    params: &SceneGenParams,
    vocab: &Vocabulary,
    prior: &CooccurrencePrior,
    seed: u64,
    count: usize,
) -> Result<Vec<Scene>> {
    (0..count)
        .map(|k| {
            let id = format!("{}-{:03}", room.as_str(), k);
            generate_scene(room, params, vocab, prior, seed, &id)
        })
        .collect()
}
