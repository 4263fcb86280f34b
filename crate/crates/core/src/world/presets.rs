use crate::world::scene::{Obstacle, Scene, SceneError};

pub const PRESET_NAMES: [&str; 2] = ["parking_school", "driving_school"];

const PARKING_SCHOOL: &str = include_str!("../../presets/parking_school.json");
const DRIVING_SCHOOL: &str = include_str!("../../presets/driving_school.json");

/// Loads a shipped scene by name.
pub fn preset(name: &str) -> Result<Scene, SceneError> {
    match name {
        "parking_school" => Scene::from_json(PARKING_SCHOOL),
        "driving_school" => Scene::from_json(DRIVING_SCHOOL),
        "square_room" => Ok(square_room(2.0, true)),
        other => Err(SceneError::UnknownPreset(other.into())),
    }
}

/// Axis-aligned square room `[0, side]^2` with four walls.
///
/// With `marker`, a small off-center box breaks the room's fourfold symmetry
/// so a scan determines the pose uniquely.
pub fn square_room(side: f64, marker: bool) -> Scene {
    let mut s = Scene::empty("square_room", [0.0, 0.0, side, side]);
    s.walls = vec![
        [0.0, 0.0, side, 0.0],
        [side, 0.0, side, side],
        [side, side, 0.0, side],
        [0.0, side, 0.0, 0.0],
    ];
    if marker {
        s.obstacles.push(Obstacle {
            center: [0.8 * side, 0.3 * side],
            extents: [0.05 * side, 0.1 * side],
            yaw: 0.0,
            unmapped: false,
        });
    }
    s.spawn = Some([0.5 * side, 0.5 * side, 0.0]);
    s
}
