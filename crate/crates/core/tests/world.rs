use desksim_core::geometry::{OrientedRect, Vec2};
use desksim_core::sensors::{lidar_scan, LidarSpec};
use desksim_core::vehicle::Pose;
use desksim_core::world::{preset, square_room, Contact, PerturbSigmas, Scene, SceneError};
use proptest::prelude::*;

fn footprint(x: f64, y: f64, yaw: f64) -> OrientedRect<f64> {
    OrientedRect {
        center: Vec2::new(x, y),
        half: Vec2::new(0.11, 0.08),
        yaw,
    }
}

#[test]
fn empty_scene_is_valid() {
    let s = Scene::from_json(r#"{"name":"open","bounds":[0,0,5,5],"walls":[],"obstacles":[]}"#)
        .unwrap();
    assert!(s.collide(&footprint(2.5, 2.5, 0.3)).is_none());
}

#[test]
fn parking_school_has_walls_and_boxes() {
    let s = preset("parking_school").unwrap();
    assert!(s.walls.len() >= 4);
    assert!(!s.obstacles.is_empty());
    assert!(s.goal.is_some() && s.spawn.is_some());
}

#[test]
fn zero_extent_is_rejected() {
    let doc = r#"{"name":"x","bounds":[0,0,2,2],"obstacles":[{"center":[1,1],"extents":[0,0.1],"yaw":0}]}"#;
    match Scene::from_json(doc) {
        Err(SceneError::Invalid { key, .. }) => assert_eq!(key, "obstacles[0].extents"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn parse_errors_carry_position() {
    match Scene::from_json("{\n  \"name\": \"x\",\n  \"bounds\": [0, 0, 1,\n}") {
        Err(SceneError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn footprint_on_wall_names_it() {
    let s = square_room(2.0, false);
    assert!(s.collide(&footprint(1.0, 1.0, 0.0)).is_none());
    assert_eq!(
        s.collide(&footprint(1.0, 0.05, 0.0)),
        Some(Contact::Wall(0))
    );
    assert_eq!(
        s.collide(&footprint(1.95, 1.0, 0.0)),
        Some(Contact::Wall(1))
    );
}

#[test]
fn corner_touch_counts_as_contact() {
    let mut s = Scene::empty("t", [0.0, 0.0, 4.0, 4.0]);
    s = s
        .spawn_unmapped_obstacle([2.0, 2.0], [0.1, 0.1], 0.0)
        .unwrap();
    // footprint corner at (1.9, 1.9), obstacle corner at (1.9, 1.9)
    let fp = footprint(1.9 - 0.11, 1.9 - 0.08, 0.0);
    assert!(fp.corners().iter().any(|c| *c == Vec2::new(1.9, 1.9)));
    assert_eq!(s.collide(&fp), Some(Contact::Obstacle(0)));
    let apart = footprint(1.9 - 0.11 - 1e-9, 1.9 - 0.08, 0.0);
    assert!(s.collide(&apart).is_none());
}

#[test]
fn perturbation_is_seeded_and_scaled() {
    let s = preset("parking_school").unwrap();
    let zero = PerturbSigmas {
        xy: 0.0,
        theta: 0.0,
    };
    assert_eq!(s.perturb(zero, 3).0, s);
    assert_eq!(
        s.perturb(PerturbSigmas::default(), 9),
        s.perturb(PerturbSigmas::default(), 9)
    );
    let mut dx = Vec::new();
    for seed in 0..1000 {
        let (p, _) = s.perturb(PerturbSigmas::default(), seed);
        dx.push(p.obstacles[0].center[0] - s.obstacles[0].center[0]);
    }
    let mean = dx.iter().sum::<f64>() / dx.len() as f64;
    let std = (dx.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (dx.len() - 1) as f64).sqrt();
    assert!((std / 0.01 - 1.0).abs() < 0.1, "{std}");
}

#[test]
fn perturbation_stays_in_bounds() {
    let mut s = Scene::empty("edge", [0.0, 0.0, 1.0, 1.0]);
    s.walls.push([0.0, 0.0, 1.0, 0.0]);
    s = s
        .spawn_unmapped_obstacle([0.1, 0.1], [0.1, 0.1], 0.0)
        .unwrap();
    let big = PerturbSigmas {
        xy: 0.2,
        theta: 1.0,
    };
    let mut warned = false;
    for seed in 0..50 {
        let (p, w) = s.perturb(big, seed);
        p.validate().unwrap();
        warned |= !w.is_empty();
    }
    assert!(warned);
}

#[test]
fn unmapped_obstacle_shows_in_scans_only() {
    let room = square_room(2.0, false);
    let pose = Pose::new(1.0, 1.0, 0.0);
    let spec = LidarSpec::default();
    let before = lidar_scan(&room.segments(), &pose, &spec, None, 0.0);
    let live = room
        .spawn_unmapped_obstacle([1.5, 1.0], [0.05, 0.05], 0.0)
        .unwrap();
    let after = lidar_scan(&live.segments(), &pose, &spec, None, 0.0);
    assert!((after.ranges[0] - 0.45).abs() < 1e-12);
    assert!(before.ranges[0] > after.ranges[0]);
    assert_eq!(live.static_segments(), room.static_segments());
    assert_eq!(live.remove_unmapped(), room);
    assert!(room
        .spawn_unmapped_obstacle([1.99, 1.0], [0.05, 0.05], 0.0)
        .is_err());
}

#[test]
fn presets_round_trip() {
    for name in ["parking_school", "driving_school"] {
        let s = preset(name).unwrap();
        assert_eq!(Scene::from_json(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn driving_school_lane_is_clear_along_centerline() {
    let s = preset("driving_school").unwrap();
    let cl = s.centerline.clone().unwrap();
    for i in 0..cl.len() {
        let a = cl[i];
        let b = cl[(i + 1) % cl.len()];
        let yaw = (b[1] - a[1]).atan2(b[0] - a[0]);
        assert!(
            s.collide(&footprint(a[0], a[1], yaw)).is_none(),
            "collision at centerline point {i}"
        );
    }
    let spawn = s.spawn_pose();
    assert!(s.collide(&footprint(spawn.x, spawn.y, spawn.yaw)).is_none());
}

#[test]
fn parking_school_spawn_and_goal_are_free() {
    let s = preset("parking_school").unwrap();
    let g = s.goal.unwrap();
    let p = s.spawn_pose();
    assert!(s.collide(&footprint(p.x, p.y, p.yaw)).is_none());
    assert!(s.collide(&footprint(g[0], g[1], g[2])).is_none());
}

proptest! {
    #[test]
    fn collision_is_translation_invariant(
        x in 0.3f64..2.7, y in 0.3f64..2.7, yaw in -3.2f64..3.2, kx in -40i32..40, ky in -40i32..40
    ) {
        // dyadic offsets keep the translation exact
        let (tx, ty) = (kx as f64 * 0.125, ky as f64 * 0.125);
        let s = preset("parking_school").unwrap();
        let mut moved = s.clone();
        moved.bounds = [s.bounds[0] + tx, s.bounds[1] + ty, s.bounds[2] + tx, s.bounds[3] + ty];
        for w in &mut moved.walls {
            *w = [w[0] + tx, w[1] + ty, w[2] + tx, w[3] + ty];
        }
        for o in &mut moved.obstacles {
            o.center = [o.center[0] + tx, o.center[1] + ty];
        }
        let a = s.collide(&footprint(x, y, yaw)).is_some();
        let b = moved.collide(&footprint(x + tx, y + ty, yaw)).is_some();
        prop_assert_eq!(a, b);
    }
}
