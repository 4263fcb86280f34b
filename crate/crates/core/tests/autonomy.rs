use std::collections::BinaryHeap;

use desksim_core::autonomy::grid::{probability, InverseSensorModel, OccupancyGrid};
use desksim_core::autonomy::mission::{path_blocked, replan_check, ParkingMission, Stage};
use desksim_core::autonomy::{
    astar_cells, run_parking_mission, CostGrid, Mcl, MclParams, MissionConfig, OdomDelta,
    PlanError, PlannedPath, TrackStatus, Tracker, TrackerParams,
};
use desksim_core::rng::{Channel, NoiseStream};
use desksim_core::sensors::{lidar_scan, LidarScan, LidarSpec, NoiseConfig};
use desksim_core::sim::Simulator;
use desksim_core::vehicle::{Command, Pose};
use desksim_core::world::{preset, square_room, Scene};

fn scan_at(scene: &Scene, pose: &Pose<f64>) -> LidarScan {
    lidar_scan(&scene.segments(), pose, &LidarSpec::default(), None, 0.0)
}

#[test]
fn single_beam_update_rule() {
    let mut g = OccupancyGrid::new(0.02, [0.0, 0.0], 100, 100);
    let mut ranges = vec![f64::INFINITY; 360];
    ranges[0] = 1.0;
    let scan = LidarScan {
        timestamp: 0.0,
        angle_min: 0.0,
        angle_increment: 1f64.to_radians(),
        ranges,
    };
    let pose = Pose::new(0.51, 0.51, 0.0);
    g.update(&pose, &scan, &InverseSensorModel::default())
        .unwrap();
    let end = g.world_to_cell(1.51, 0.51).unwrap();
    assert_eq!(g.log_odds_at(end.0, end.1), 0.85);
    let start = g.world_to_cell(0.51, 0.51).unwrap();
    for i in start.0..end.0 {
        assert_eq!(g.log_odds_at(i, start.1), -0.4);
    }
    assert_eq!(g.log_odds_at(end.0 + 1, end.1), 0.0);
    for _ in 0..30 {
        g.update(&pose, &scan, &InverseSensorModel::default())
            .unwrap();
    }
    assert_eq!(g.log_odds_at(end.0, end.1), 10.0);
    assert_eq!(g.log_odds_at(start.0, start.1), -10.0);
    assert!(g
        .update(
            &Pose::new(5.0, 0.5, 0.0),
            &scan,
            &InverseSensorModel::default()
        )
        .is_err());
}

#[test]
fn room_map_lies_on_the_walls() {
    let room = square_room(2.0, false);
    let mut g = OccupancyGrid::covering([-0.1, -0.1, 2.1, 2.1], 0.02);
    let pose = Pose::new(1.0, 1.0, 0.0);
    g.update(
        &pose,
        &scan_at(&room, &pose),
        &InverseSensorModel::default(),
    )
    .unwrap();
    let mut occupied = 0;
    for j in 0..g.height {
        for i in 0..g.width {
            if g.probability_at(i, j) > 0.65 {
                occupied += 1;
                let (x, y) = g.cell_center(i, j);
                // distance to the nearest true wall line
                let d = x
                    .abs()
                    .min((x - 2.0).abs())
                    .min(y.abs())
                    .min((y - 2.0).abs());
                assert!(d <= 0.02 + 1e-9, "cell ({x}, {y}) is {d} from a wall");
            }
        }
    }
    assert!(occupied > 100);
}

#[test]
fn probabilities_stay_in_open_interval() {
    for l in [-10.0, -1.0, 0.0, 2.0, 10.0] {
        let p = probability(l);
        assert!(p > 0.0 && p < 1.0);
    }
}

/// Independent oracle: plain Dijkstra over the same neighbor rule.
fn dijkstra(
    blocked: &[bool],
    w: usize,
    h: usize,
    s: (usize, usize),
    g: (usize, usize),
) -> Option<(u32, u32)> {
    #[derive(PartialEq)]
    struct E(f64, usize, u32, u32);
    impl Eq for E {}
    impl Ord for E {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    impl PartialOrd for E {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    let free = |i: i64, j: i64| {
        i >= 0
            && j >= 0
            && (i as usize) < w
            && (j as usize) < h
            && !blocked[j as usize * w + i as usize]
    };
    if !free(s.0 as i64, s.1 as i64) || !free(g.0 as i64, g.1 as i64) {
        return None;
    }
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[s.1 * w + s.0] = 0.0;
    heap.push(E(0.0, s.1 * w + s.0, 0, 0));
    while let Some(E(d, k, a, b)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        if (i as usize, j as usize) == g {
            return Some((a, b));
        }
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                if (di, dj) == (0, 0) || !free(i + di, j + dj) {
                    continue;
                }
                let diag = di != 0 && dj != 0;
                if diag && !(free(i + di, j) && free(i, j + dj)) {
                    continue;
                }
                let (na, nb) = if diag { (a, b + 1) } else { (a + 1, b) };
                let nd = na as f64 + nb as f64 * std::f64::consts::SQRT_2;
                let m = (j + dj) as usize * w + (i + di) as usize;
                if nd < dist[m] {
                    dist[m] = nd;
                    heap.push(E(nd, m, na, nb));
                }
            }
        }
    }
    None
}

#[test]
fn astar_matches_dijkstra_on_random_grids() {
    let mut rng = NoiseStream::new(2024, Channel::Particles);
    let mut solved = 0;
    for case in 0..200 {
        let w = 2 + rng.below(49);
        let h = 2 + rng.below(49);
        let density = rng.uniform(0.0, 0.4);
        let blocked: Vec<bool> = (0..w * h)
            .map(|_| rng.uniform(0.0, 1.0) < density)
            .collect();
        let s = (rng.below(w), rng.below(h));
        let g = (rng.below(w), rng.below(h));
        let grid = CostGrid::new(w, h, blocked.clone());
        let a = astar_cells(&grid, s, g, 1.0);
        let u = astar_cells(&grid, s, g, 0.0);
        match dijkstra(&blocked, w, h, s, g) {
            Some((straight, diagonal)) => {
                let a = a.unwrap_or_else(|e| panic!("case {case}: {e}"));
                let u = u.unwrap();
                let oracle = straight as f64 + diagonal as f64 * std::f64::consts::SQRT_2;
                assert_eq!(a.cost(), oracle, "case {case}");
                assert_eq!(u.cost(), oracle, "case {case}");
                assert!(u.expanded >= a.expanded, "case {case}");
                solved += 1;
            }
            None => assert!(a.is_err() && u.is_err(), "case {case}"),
        }
    }
    assert!(solved > 100);
}

#[test]
fn astar_threads_a_single_gap() {
    let (w, h) = (30, 20);
    let mut blocked = vec![false; w * h];
    for j in 0..h {
        if j != 13 {
            blocked[j * w + 15] = true;
        }
    }
    let grid = CostGrid::new(w, h, blocked.clone());
    let p = astar_cells(&grid, (2, 3), (27, 3), 1.0).unwrap();
    assert!(p.cells.contains(&(15, 13)));
    let (a, b) = dijkstra(&blocked, w, h, (2, 3), (27, 3)).unwrap();
    assert_eq!(p.cost(), a as f64 + b as f64 * std::f64::consts::SQRT_2);
}

#[test]
fn goal_inside_inflated_obstacle_is_rejected() {
    let room = square_room(2.0, true);
    let mut g = OccupancyGrid::covering([-0.1, -0.1, 2.1, 2.1], 0.02);
    let pose = Pose::new(1.0, 1.0, 0.0);
    for _ in 0..3 {
        g.update(
            &pose,
            &scan_at(&room, &pose),
            &InverseSensorModel::default(),
        )
        .unwrap();
    }
    let blocked = g.inflated(0.65, 0.156);
    let cg = CostGrid::new(g.width, g.height, blocked);
    let s = g.world_to_cell(1.0, 1.0).unwrap();
    let near_wall = g.world_to_cell(1.0, 0.05).unwrap();
    assert!(matches!(
        astar_cells(&cg, s, near_wall, 1.0),
        Err(PlanError::InvalidGoal(_))
    ));
}

fn mapped_room(room: &Scene) -> OccupancyGrid {
    let mut g = OccupancyGrid::covering([-0.1, -0.1, 2.1, 2.1], 0.02);
    for &(x, y) in &[(1.0, 1.0), (0.5, 0.5), (1.5, 1.5), (0.5, 1.5), (1.2, 0.4)] {
        let p = Pose::new(x, y, 0.0);
        g.update(&p, &scan_at(room, &p), &InverseSensorModel::default())
            .unwrap();
    }
    g
}

#[test]
fn mcl_fixed_point_at_truth() {
    let room = square_room(2.0, true);
    let map = mapped_room(&room);
    let truth = Pose::new(1.0, 0.9, 0.3);
    let mut mcl = Mcl::new(
        &map,
        MclParams::default(),
        NoiseStream::new(1, Channel::Particles),
    );
    mcl.init_gaussian(truth, 0.0, 0.0, 500);
    let scan = scan_at(&room, &truth);
    for _ in 0..10 {
        let e = mcl.update(&OdomDelta::default(), &scan);
        let sum: f64 = mcl.particles.iter().map(|p| p.weight).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(e.count >= 100 && e.count <= 2000);
        assert!((e.pose.x - truth.x).hypot(e.pose.y - truth.y) < 0.02);
        assert!((e.pose.yaw - truth.yaw).abs() < 0.03);
    }
}

/// Scripted drive in the marked square room with uniform initialization.
/// Returns the final position error after `updates` filter cycles.
pub fn mcl_convergence_run(seed: u64, updates: u32) -> f64 {
    let room = square_room(2.0, true);
    let map = mapped_room(&room);
    let mut sim = Simulator::with_scene(room, NoiseConfig::paper(seed));
    sim.reset(Pose::new(0.6, 1.0, -1.2));
    let mut mcl = Mcl::new(
        &map,
        MclParams::default(),
        NoiseStream::new(seed, Channel::Particles),
    );
    mcl.init_uniform(2000);
    let cfg = sim.vehicle.config.clone();
    let mut prev = sim.last_frame().clone();
    let mut odom = OdomDelta::default();
    let mut done = 0;
    let mut err = f64::INFINITY;
    while done < updates {
        let out = sim.step(Command::new(0.5, 0.6)).unwrap();
        odom = odom.then(desksim_core::autonomy::odometry_update(
            &prev,
            &out.frame,
            cfg.wheel.radius,
            cfg.encoder_cpr,
        ));
        prev = out.frame.clone();
        if let Some(scan) = &out.frame.lidar {
            let e = mcl.update(&odom, scan);
            odom = OdomDelta::default();
            done += 1;
            let t = sim.state.pose;
            err = (e.pose.x - t.x).hypot(e.pose.y - t.y);
        }
    }
    assert!(sim.contact().is_none());
    err
}

#[test]
fn mcl_global_convergence() {
    let ok = (0..10)
        .filter(|&s| mcl_convergence_run(s, 30) < 0.04)
        .count();
    assert!(ok >= 9, "{ok}/10 converged");
}

#[test]
fn replan_rules() {
    let room = square_room(2.0, false);
    let mut live = OccupancyGrid::covering([-0.1, -0.1, 2.1, 2.1], 0.02);
    let pose = Pose::new(0.4, 1.0, 0.0);
    let path = PlannedPath {
        waypoints: (0..=60).map(|k| [0.4 + k as f64 * 0.02, 1.0]).collect(),
        goal_pose: [1.6, 1.0, 0.0],
    };
    let model = InverseSensorModel::default();
    assert!(!replan_check(
        &mut live,
        &path,
        &scan_at(&room, &pose),
        &pose,
        &model,
        0.5,
        0.65,
        0.136
    ));
    let near = room
        .spawn_unmapped_obstacle([0.7, 1.0], [0.05, 0.05], 0.0)
        .unwrap();
    assert!(replan_check(
        &mut live.clone(),
        &path,
        &scan_at(&near, &pose),
        &pose,
        &model,
        0.5,
        0.65,
        0.136
    ));
    let far = room
        .spawn_unmapped_obstacle([1.4, 1.0], [0.05, 0.05], 0.0)
        .unwrap();
    let mut l2 = live.clone();
    assert!(!replan_check(
        &mut l2,
        &path,
        &scan_at(&far, &pose),
        &pose,
        &model,
        0.5,
        0.65,
        0.136
    ));
    assert!(path_blocked(&l2, &path, 0.0, 1.2, 0.65, 0.136));
}

#[test]
fn tracker_closed_loop_straight_path() {
    let scene = Scene::empty("open", [0.0, 0.0, 4.0, 4.0]);
    let mut sim = Simulator::with_scene(scene, NoiseConfig::off(0));
    sim.reset(Pose::new(0.5, 2.0, 0.0));
    let path = PlannedPath {
        waypoints: (0..=100).map(|k| [0.5 + k as f64 * 0.02, 2.0]).collect(),
        goal_pose: [2.5, 2.0, 0.0],
    };
    let mut t = Tracker::new(TrackerParams::default());
    let mut arrived = false;
    for _ in 0..30_000 {
        let (cmd, status) = t
            .track_path(&sim.state.pose, sim.state.velocity.vx, &path)
            .unwrap();
        assert!(cmd.throttle.abs() <= 1.0 && cmd.steering.abs() <= 1.0);
        if status == TrackStatus::Arrived {
            arrived = true;
            break;
        }
        sim.step(cmd).unwrap();
    }
    assert!(arrived);
    let p = sim.state.pose;
    assert!((p.x - 2.5).hypot(p.y - 2.0) < 0.05 && p.yaw.abs() < 0.1);
}

#[test]
fn noise_free_parking_succeeds_without_replans() {
    let scene = preset("parking_school").unwrap();
    let goal = scene.goal.unwrap();
    let mut sim = Simulator::with_scene(scene, NoiseConfig::off(0));
    let out = run_parking_mission(&mut sim, MissionConfig::new(goal, 0), None).unwrap();
    assert!(out.success, "{out:?}");
    assert_eq!(out.replans, 0);
    assert_eq!(out.collisions, 0);
    let order: Vec<Stage> = out.stage_times.iter().map(|s| s.0).collect();
    assert_eq!(
        order,
        [
            Stage::Mapping,
            Stage::Localizing,
            Stage::Planning,
            Stage::Tracking,
            Stage::Parked
        ]
    );
}

#[test]
fn walled_off_goal_fails_in_planning() {
    let mut scene = preset("parking_school").unwrap();
    let g = scene.goal.unwrap();
    // a closed pen around the goal
    let (x0, y0, x1, y1) = (g[0] - 0.3, g[1] - 0.3, g[0] + 0.3, (g[1] + 0.3).min(2.99));
    scene.walls.extend([
        [x0, y0, x1, y0],
        [x1, y0, x1, y1],
        [x1, y1, x0, y1],
        [x0, y1, x0, y0],
    ]);
    let mut sim = Simulator::with_scene(scene, NoiseConfig::off(0));
    let out = run_parking_mission(&mut sim, MissionConfig::new(g, 0), None).unwrap();
    assert!(!out.success);
    assert_eq!(out.final_stage, Stage::Failed);
    assert!(out.failure.unwrap().starts_with("PLANNING"));
}

#[test]
fn mission_logs_are_reproducible() {
    let go = || {
        let scene = preset("parking_school").unwrap();
        let goal = scene.goal.unwrap();
        let mut sim = Simulator::with_scene(scene, NoiseConfig::paper(3));
        let mut log = Vec::new();
        let mut cfg = MissionConfig::new(goal, 3);
        cfg.stage_timeout = 30.0;
        run_parking_mission(&mut sim, cfg, Some(&mut log)).unwrap();
        log
    };
    let a = go();
    assert!(!a.is_empty());
    assert_eq!(a, go());
}

#[test]
fn mission_starts_in_mapping() {
    let scene = preset("parking_school").unwrap();
    let goal = scene.goal.unwrap();
    let sim = Simulator::with_scene(scene, NoiseConfig::off(0));
    let m = ParkingMission::new(MissionConfig::new(goal, 0), &sim);
    assert_eq!(m.stage, Stage::Mapping);
    assert!((m.inflation_radius() - (0.5 * 0.22f64.hypot(0.16) + 0.02)).abs() < 1e-15);
}
