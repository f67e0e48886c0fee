//! Breadth-first search over `(cell, heading)` poses.

use std::collections::VecDeque;

use super::nav::Action;
use super::scene::{Heading, Pose, Scene};
use super::vision::success_predicate;
use crate::error::{Error, Result};

const MOVES: [Action; 4] = [
    Action::MoveForward,
    Action::MoveBack,
    Action::RotateLeft,
    Action::RotateRight,
];

fn state_index(scene: &Scene, p: Pose) -> usize {
    (p.cell.y as usize * scene.width() + p.cell.x as usize) * 4 + p.heading.index()
}

/// Pose after `action`; moves into walls, objects or out of bounds leave
/// the pose unchanged.
pub fn transition(scene: &Scene, p: Pose, action: Action) -> Pose {
    match action {
        Action::MoveForward | Action::MoveBack => {
            let (dx, dy) = p.heading.delta();
            let s = if action == Action::MoveForward { 1 } else { -1 };
            let next = p.cell.offset(s * dx, s * dy);
            if scene.is_walkable(next) {
                Pose { cell: next, ..p }
            } else {
                p
            }
        }
        Action::RotateLeft => Pose {
            heading: p.heading.rotate_left(),
            ..p
        },
        Action::RotateRight => Pose {
            heading: p.heading.rotate_right(),
            ..p
        },
        Action::Stop => p,
    }
}

/// A shortest action sequence from `start` to any pose satisfying the
/// success predicate. Ties break by action order forward, back, left, right.
pub fn shortest_path(scene: &Scene, start: Pose, target: usize, max_distance: f64) -> Result<Vec<Action>> {
    if success_predicate(scene, start, target, max_distance) {
        return Ok(Vec::new());
    }
    let n = scene.width() * scene.height() * 4;
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut poses = vec![start; n];
    let s0 = state_index(scene, start);
    seen[s0] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let pi = state_index(scene, p);
        for action in MOVES {
            let q = transition(scene, p, action);
            let qi = state_index(scene, q);
            if seen[qi] {
                continue;
            }
            seen[qi] = true;
            parent[qi] = Some((pi, action));
            poses[qi] = q;
            if success_predicate(scene, q, target, max_distance) {
                let mut path = Vec::new();
                let mut cur = qi;
                while let Some((prev, a)) = parent[cur] {
                    path.push(a);
                    cur = prev;
                }
                path.reverse();
                return Ok(path);
            }
            queue.push_back(q);
        }
    }
    Err(Error::Unreachable(format!(
        "category {target} from ({},{}) {:?} in scene '{}'",
        start.cell.x,
        start.cell.y,
        start.heading,
        scene.id()
    )))
}

/// Minimum number of moves and rotations needed to satisfy the success
/// predicate from `start`.
pub fn shortest_path_length(scene: &Scene, start: Pose, target: usize, max_distance: f64) -> Result<usize> {
    shortest_path(scene, start, target, max_distance).map(|p| p.len())
}

/// Every pose in the scene, for exhaustive checks.
pub fn all_poses(scene: &Scene) -> Vec<Pose> {
    scene
        .free_cells()
        .into_iter()
        .flat_map(|cell| Heading::ALL.into_iter().map(move |heading| Pose { cell, heading }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scene::{scene_from_ascii, RoomType};

    fn scene(rows: &[&str]) -> Scene {
        scene_from_ascii("o", RoomType::Kitchen, rows, &[('t', 0)]).unwrap()
    }

    #[test]
    fn zero_when_already_satisfied() {
        let s = scene(&["..t..", ".....", "....."]);
        assert_eq!(shortest_path_length(&s, Pose::new(2, 1, Heading::North), 0, 2.0).unwrap(), 0);
        assert_eq!(shortest_path_length(&s, Pose::new(2, 2, Heading::North), 0, 2.0).unwrap(), 0);
    }

    #[test]
    fn target_behind_needs_two_rotations() {
        let s = scene(&[".....", "..t..", ".....", ".....", "....."]);
        let p = Pose::new(2, 2, Heading::South);
        assert_eq!(shortest_path_length(&s, p, 0, 2.0).unwrap(), 2);
    }

    #[test]
    fn walls_force_detours() {
        let s = scene(&["t....", "####.", ".....", "....."]);
        let start = Pose::new(0, 2, Heading::North);
        let path = shortest_path(&s, start, 0, 2.0).unwrap();
        let mut p = start;
        for &a in &path {
            p = transition(&s, p, a);
        }
        assert!(success_predicate(&s, p, 0, 2.0));
        assert!(path.len() > 3);
    }

    #[test]
    fn unreachable_is_an_error() {
        let s = scene(&["....."]);
        assert!(matches!(
            shortest_path_length(&s, Pose::new(0, 0, Heading::East), 0, 2.0),
            Err(Error::Unreachable(_))
        ));
    }
}
