//! Field of view, occlusion and per-category visibility scores.

use rand_distr::{Distribution, Normal};

use super::scene::{Cell, Pose, Scene};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisionParams {
    /// Score decay length: a visible instance at distance `d` scores `exp(-d/τ)`.
    pub decay_cells: f64,
    pub noise_std: f64,
    /// Success distance threshold (2 cells at 0.5 m per cell is 1 m).
    pub success_distance: f64,
}

impl Default for VisionParams {
    fn default() -> Self {
        Self {
            decay_cells: 3.0,
            noise_std: 0.05,
            success_distance: 2.0,
        }
    }
}

/// Whether `cell` lies in the 90° cone centred on the heading. The agent's
/// own cell counts as in view.
pub fn in_field_of_view(pose: Pose, cell: Cell) -> bool {
    let (dx, dy) = (cell.x - pose.cell.x, cell.y - pose.cell.y);
    let (fx, fy) = pose.heading.delta();
    let forward = dx * fx + dy * fy;
    // right-hand perpendicular of (fx, fy) with y pointing south
    let lateral = -dx * fy + dy * fx;
    forward >= lateral.abs()
}

/// Walks the cells crossed by the segment between the two cell centres.
/// A segment passing exactly through a grid corner steps diagonally and
/// does not touch the two side cells. Returns false if any visited cell,
/// including `to`, is a wall or out of bounds.
pub fn line_of_sight(scene: &Scene, from: Cell, to: Cell) -> bool {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    let (nx, ny) = (dx.abs() as i64, dy.abs() as i64);
    let (sx, sy) = (dx.signum(), dy.signum());
    let (mut ix, mut iy) = (0i64, 0i64);
    let mut p = from;
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            p = p.offset(sx, sy);
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            p = p.offset(sx, 0);
            ix += 1;
        } else {
            p = p.offset(0, sy);
            iy += 1;
        }
        if !scene.is_free(p) {
            return false;
        }
    }
    true
}

pub fn is_visible(scene: &Scene, pose: Pose, cell: Cell) -> bool {
    in_field_of_view(pose, cell) && line_of_sight(scene, pose.cell, cell)
}

/// True iff an instance of `target` is in view, unoccluded, and within
/// `max_distance` of the agent.
pub fn success_predicate(scene: &Scene, pose: Pose, target: usize, max_distance: f64) -> bool {
    scene
        .instances(target)
        .any(|c| pose.cell.distance(c) <= max_distance + 1e-12 && is_visible(scene, pose, c))
}

/// Noise-free scores: per category, the max of `exp(-d/τ)` over visible
/// instances, 0 when none is visible.
pub fn clean_scores(scene: &Scene, pose: Pose, num_categories: usize, params: &VisionParams) -> Vec<f64> {
    let mut scores = vec![0.0; num_categories];
    for o in scene.objects() {
        if is_visible(scene, pose, o.cell) {
            let s = (-pose.cell.distance(o.cell) / params.decay_cells).exp();
            if s > scores[o.category] {
                scores[o.category] = s;
            }
        }
    }
    scores
}

/// [`clean_scores`] plus Gaussian noise, clamped to `[0, 1]`.
pub fn visible_scores(
    scene: &Scene,
    pose: Pose,
    num_categories: usize,
    params: &VisionParams,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut scores = clean_scores(scene, pose, num_categories, params);
    if params.noise_std > 0.0 {
        let normal = Normal::new(0.0, params.noise_std).expect("valid noise std");
        for s in &mut scores {
            *s = (*s + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scene::{scene_from_ascii, Heading, RoomType};

    fn open(rows: &[&str]) -> Scene {
        scene_from_ascii("t", RoomType::Kitchen, rows, &[('t', 0)]).unwrap()
    }

    #[test]
    fn fov_cone() {
        let p = Pose::new(2, 2, Heading::North);
        assert!(in_field_of_view(p, Cell::new(2, 1)));
        assert!(in_field_of_view(p, Cell::new(3, 1)));
        assert!(in_field_of_view(p, Cell::new(2, 2)));
        assert!(!in_field_of_view(p, Cell::new(2, 3)));
        assert!(!in_field_of_view(p, Cell::new(3, 2)));
        assert!(!in_field_of_view(p, Cell::new(4, 1)));
        let e = Pose::new(2, 2, Heading::East);
        assert!(in_field_of_view(e, Cell::new(4, 3)));
        assert!(!in_field_of_view(e, Cell::new(1, 2)));
    }

    #[test]
    fn predicate_minimal_cases() {
        let s = open(&[".....", "..t..", ".....", "....."]);
        assert!(success_predicate(&s, Pose::new(2, 2, Heading::North), 0, 2.0));
        assert!(!success_predicate(&s, Pose::new(2, 0, Heading::North), 0, 2.0));
        assert!(success_predicate(&s, Pose::new(2, 3, Heading::North), 0, 2.0));
        assert!(!success_predicate(&s, Pose::new(2, 4, Heading::North), 0, 2.0));
    }

    #[test]
    fn walls_occlude() {
        let s = open(&["..t..", "..#..", ".....", "....."]);
        assert!(!success_predicate(&s, Pose::new(2, 2, Heading::North), 0, 2.0));
        assert!(!line_of_sight(&s, Cell::new(2, 2), Cell::new(2, 0)));
        assert!(line_of_sight(&s, Cell::new(0, 2), Cell::new(0, 0)));
    }

    #[test]
    fn exact_corner_passes_between_cells() {
        let s = open(&["#..", ".#.", "..."]);
        // from (0,2) to (2,0) passes through (1,1), a wall
        assert!(!line_of_sight(&s, Cell::new(0, 2), Cell::new(2, 0)));
        let s = open(&["....", "..#.", ".#..", "...."]);
        // (1,1)->(2,2) crosses only the shared corner of the two walls
        assert!(line_of_sight(&s, Cell::new(1, 1), Cell::new(2, 2)));
    }

    #[test]
    fn scores_before_noise() {
        let s = open(&["t....", ".....", ".....", "....."]);
        let params = VisionParams::default();
        let facing_away = clean_scores(&s, Pose::new(0, 3, Heading::South), 2, &params);
        assert_eq!(facing_away, vec![0.0, 0.0]);
        let at = clean_scores(&s, Pose::new(0, 0, Heading::South), 2, &params);
        assert_eq!(at[0], 1.0);
        let three = clean_scores(&s, Pose::new(0, 3, Heading::North), 2, &params);
        assert!((three[0] - (-1f64).exp()).abs() < 1e-15);
        assert!((three[0] - 0.3679).abs() < 1e-4);
    }
}
