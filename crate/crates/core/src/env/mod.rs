//! Grid-world stand-in for a photorealistic indoor simulator.

mod generate;
mod nav;
pub mod oracle;
mod scene;
pub mod vision;

pub use generate::{generate_scene, generate_scenes, SceneGenParams, SATELLITE_RADIUS};
pub use nav::{
    Action, EnvConfig, NavEnv, Observation, StepOutcome, Termination, FRAME_STACK, STEP_PENALTY,
    SUCCESS_REWARD,
};
pub use oracle::{shortest_path, shortest_path_length};
pub use scene::{scene_from_ascii, Cell, Heading, ObjectInstance, Pose, RoomType, Scene};
pub use vision::{success_predicate, visible_scores, VisionParams};
