use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng as _;

use super::scene::{Pose, Scene};
use super::vision::{self, VisionParams};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const SUCCESS_REWARD: f64 = 10.0;
pub const STEP_PENALTY: f64 = -0.01;
/// Frames in the visual-branch stack (current plus three past).
pub const FRAME_STACK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    MoveForward,
    MoveBack,
    RotateLeft,
    RotateRight,
    Stop,
}

impl Action {
    /// Action order used by the policy head; `Stop` is last so the
    /// no-stop action set is a prefix.
    pub const ALL: [Action; 5] = [
        Action::MoveForward,
        Action::MoveBack,
        Action::RotateLeft,
        Action::RotateRight,
        Action::Stop,
    ];

    pub fn count(with_stop: bool) -> usize {
        if with_stop {
            5
        } else {
            4
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::MoveForward => "forward",
            Action::MoveBack => "back",
            Action::RotateLeft => "left",
            Action::RotateRight => "right",
            Action::Stop => "stop",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub with_stop: bool,
    pub vision: VisionParams,
    /// Overrides the room type's default step budget.
    pub step_budget: Option<usize>,
}

impl EnvConfig {
    pub fn new(with_stop: bool) -> Self {
        Self {
            with_stop,
            vision: VisionParams::default(),
            step_budget: None,
        }
    }
}

/// Egocentric observation: current score vector and the newest-first stack
/// `[f_t, f_{t-1}, f_{t-2}, f_{t-3}]`, zero-padded at episode start.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub frame: Vec<f64>,
    pub stack: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Success predicate held after an action (no-stop mode) or at reset.
    Reached,
    Stopped { success: bool },
    BudgetExhausted,
}

impl Termination {
    /// Whether the return should be bootstrapped from the last value.
    pub fn is_terminal(self) -> bool {
        !matches!(self, Termination::BudgetExhausted)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One navigation episode in a scene.
#[derive(Clone, Debug)]
pub struct NavEnv {
    scene: Arc<Scene>,
    num_categories: usize,
    target: usize,
    config: EnvConfig,
    budget: usize,
    pose: Pose,
    start: Pose,
    frames: VecDeque<Vec<f64>>,
    noise: Rng,
    steps: usize,
    path_length: usize,
    total_reward: f64,
    termination: Option<Termination>,
    actions: Vec<Action>,
}

impl NavEnv {
    /// Starts an episode at a pose drawn uniformly from spawn cells × 4
    /// headings. In no-stop mode an episode whose start already satisfies
    /// the success predicate is immediately done.
    pub fn reset(
        scene: Arc<Scene>,
        num_categories: usize,
        target: usize,
        config: EnvConfig,
        seed: u64,
        allow_absent: bool,
    ) -> Result<Self> {
        let mut pose_rng = rng::rng_from(seed, &[rng::name_tag("pose")]);
        let cell = scene.spawn_cells()[pose_rng.random_range(0..scene.spawn_cells().len())];
        let heading = super::scene::Heading::from_index(pose_rng.random_range(0..4));
        Self::reset_at(scene, num_categories, target, config, seed, allow_absent, Pose { cell, heading })
    }

    pub fn reset_at(
        scene: Arc<Scene>,
        num_categories: usize,
        target: usize,
        config: EnvConfig,
        seed: u64,
        allow_absent: bool,
        start: Pose,
    ) -> Result<Self> {
        if target >= num_categories {
            return Err(Error::Contract(format!("target {target} outside vocabulary")));
        }
        if !allow_absent && !scene.has_category(target) {
            return Err(Error::Contract(format!(
                "target {target} has no instance in scene '{}'",
                scene.id()
            )));
        }
        if !scene.is_walkable(start.cell) {
            return Err(Error::Contract("start pose is not on a walkable cell".into()));
        }
        let budget = config.step_budget.unwrap_or_else(|| scene.room_type().step_budget());
        let mut env = Self {
            scene,
            num_categories,
            target,
            budget,
            pose: start,
            start,
            frames: VecDeque::with_capacity(FRAME_STACK),
            noise: rng::rng_from(seed, &[rng::name_tag("noise")]),
            steps: 0,
            path_length: 0,
            total_reward: 0.0,
            termination: None,
            actions: Vec::new(),
            config,
        };
        for _ in 0..FRAME_STACK {
            env.frames.push_back(vec![0.0; num_categories]);
        }
        env.push_frame();
        if !env.config.with_stop && env.success_now() {
            env.termination = Some(Termination::Reached);
        }
        Ok(env)
    }

    fn push_frame(&mut self) {
        let frame = vision::visible_scores(
            &self.scene,
            self.pose,
            self.num_categories,
            &self.config.vision,
            &mut self.noise,
        );
        self.frames.pop_back();
        self.frames.push_front(frame);
    }

    pub fn success_now(&self) -> bool {
        vision::success_predicate(&self.scene, self.pose, self.target, self.config.vision.success_distance)
    }

    pub fn observation(&self) -> Observation {
        Observation {
            frame: self.frames[0].clone(),
            stack: self.frames.iter().flatten().copied().collect(),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.termination.is_some() {
            return Err(Error::Contract("step called after episode end".into()));
        }
        if action == Action::Stop && !self.config.with_stop {
            return Err(Error::Contract("stop is not in the action set".into()));
        }
        self.steps += 1;
        self.actions.push(action);
        let mut reward = STEP_PENALTY;
        match action {
            Action::MoveForward | Action::MoveBack | Action::RotateLeft | Action::RotateRight => {
                self.pose = super::oracle::transition(&self.scene, self.pose, action);
                self.path_length += 1;
            }
            Action::Stop => {
                let success = self.success_now();
                if success {
                    reward = SUCCESS_REWARD;
                }
                self.termination = Some(Termination::Stopped { success });
            }
        }
        if action != Action::Stop && !self.config.with_stop && self.success_now() {
            reward = SUCCESS_REWARD;
            self.termination = Some(Termination::Reached);
        }
        if self.termination.is_none() && self.steps >= self.budget {
            self.termination = Some(Termination::BudgetExhausted);
        }
        self.push_frame();
        self.total_reward += reward;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.termination.is_some(),
        })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn start_pose(&self) -> Pose {
        self.start
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        Action::count(self.config.with_stop)
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn succeeded(&self) -> bool {
        matches!(
            self.termination,
            Some(Termination::Reached) | Some(Termination::Stopped { success: true })
        )
    }

    /// Actions taken, including any stop.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Movement and rotation actions taken; a stop action is not counted.
    pub fn path_length(&self) -> usize {
        self.path_length
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn budget(&self) -> usize {
        self.budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scene::{scene_from_ascii, Heading, RoomType};

    fn scene() -> Arc<Scene> {
        Arc::new(
            scene_from_ascii(
                "s",
                RoomType::Kitchen,
                &[".....", ".....", "..#..", ".....", "t...."],
                &[('t', 0)],
            )
            .unwrap(),
        )
    }

    fn env(with_stop: bool, start: Pose) -> NavEnv {
        NavEnv::reset_at(scene(), 3, 0, EnvConfig::new(with_stop), 1, false, start).unwrap()
    }

    #[test]
    fn stack_is_newest_first_and_zero_padded() {
        let e = env(true, Pose::new(4, 0, Heading::North));
        let obs = e.observation();
        assert_eq!(obs.stack.len(), 12);
        assert_eq!(&obs.stack[..3], &obs.frame[..]);
        assert!(obs.stack[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blocked_move_is_penalized_noop() {
        let mut e = env(true, Pose::new(2, 1, Heading::South));
        let out = e.step(Action::MoveForward).unwrap();
        assert_eq!(e.pose().cell, crate::env::Cell::new(2, 1));
        assert_eq!(out.reward, STEP_PENALTY);
        let mut e = env(true, Pose::new(4, 0, Heading::North));
        e.step(Action::MoveForward).unwrap();
        assert_eq!(e.pose().cell, crate::env::Cell::new(4, 0));
    }

    #[test]
    fn stop_semantics() {
        let mut e = env(true, Pose::new(0, 2, Heading::South));
        let out = e.step(Action::Stop).unwrap();
        assert_eq!((out.reward, out.done), (SUCCESS_REWARD, true));
        assert!(e.succeeded());
        assert_eq!(e.path_length(), 0);

        let mut e = env(true, Pose::new(4, 0, Heading::North));
        let out = e.step(Action::Stop).unwrap();
        assert!(out.done && !e.succeeded());
        assert_eq!(out.reward, STEP_PENALTY);
        assert!(matches!(e.step(Action::RotateLeft), Err(Error::Contract(_))));
    }

    #[test]
    fn no_stop_mode_notifies_on_arrival() {
        let mut e = env(false, Pose::new(0, 1, Heading::North));
        assert!(!e.is_done());
        e.step(Action::RotateLeft).unwrap();
        let out = e.step(Action::RotateLeft).unwrap();
        assert!(!out.done);
        let out = e.step(Action::MoveForward).unwrap();
        assert_eq!((out.reward, out.done), (SUCCESS_REWARD, true));
        assert!(matches!(e.step(Action::Stop), Err(Error::Contract(_))));
    }

    #[test]
    fn budget_ends_episode() {
        let mut cfg = EnvConfig::new(false);
        cfg.step_budget = Some(3);
        let mut e = NavEnv::reset_at(scene(), 3, 0, cfg, 1, false, Pose::new(4, 0, Heading::North)).unwrap();
        for _ in 0..2 {
            assert!(!e.step(Action::RotateLeft).unwrap().done);
        }
        e.step(Action::RotateLeft).unwrap();
        assert_eq!(e.termination(), Some(Termination::BudgetExhausted));
        assert!(!e.termination().unwrap().is_terminal());
        assert!((e.total_reward() + 0.03).abs() < 1e-12);
    }

    #[test]
    fn reset_requires_present_target() {
        let err = NavEnv::reset(scene(), 3, 1, EnvConfig::new(true), 0, false).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert!(NavEnv::reset(scene(), 3, 1, EnvConfig::new(true), 0, true).is_ok());
    }

    #[test]
    fn same_seed_same_pose() {
        let a = NavEnv::reset(scene(), 3, 0, EnvConfig::new(true), 42, false).unwrap();
        let b = NavEnv::reset(scene(), 3, 0, EnvConfig::new(true), 42, false).unwrap();
        assert_eq!(a.pose(), b.pose());
        assert_eq!(a.observation(), b.observation());
    }
}
