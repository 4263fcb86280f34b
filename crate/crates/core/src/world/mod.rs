//! Scenes, preset maps, footprint collision and scene perturbation.

pub mod presets;
pub mod scene;

pub use presets::{preset, square_room, PRESET_NAMES};
pub use scene::{Contact, Obstacle, PerturbSigmas, Scene, SceneError};
