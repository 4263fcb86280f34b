//! Five-stage parking mission: MAPPING, LOCALIZING, PLANNING, TRACKING, PARKED.
//!
//! MAPPING drives a scripted loop and inserts scans at the ground-truth pose.
//! From LOCALIZING on, the vehicle only uses its own estimate: Monte Carlo
//! localization against the static map, fed by encoder/IMU odometry. PLANNING
//! runs A* on the inflated live map to a pre-goal point behind the goal and
//! appends a straight final approach. TRACKING follows the path, keeps
//! inserting scans into the live map and returns to PLANNING when the path
//! ahead becomes blocked.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autonomy::grid::{InverseSensorModel, OccupancyGrid};
use crate::autonomy::mcl::{Mcl, MclParams, PoseEstimate};
use crate::autonomy::odometry::{odometry_update, OdomDelta};
use crate::autonomy::planner::{astar_cells, CostGrid, PlanError, PlannedPath};
use crate::autonomy::tracker::{TrackStatus, Tracker, TrackerParams};
use crate::num::wrap_angle;
use crate::rng::{Channel, NoiseStream};
use crate::sensors::{LidarScan, SensorFrame};
use crate::sim::{Simulator, TickOutput};
use crate::vehicle::{Command, Pose, StepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Mapping,
    Localizing,
    Planning,
    Tracking,
    Parked,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnmappedObstacle {
    /// Position along the first planned path, as a fraction of its length.
    pub fraction: f64,
    /// Half extents, m.
    pub extents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    pub goal: [f64; 3],
    pub tolerance_xy: f64,
    pub tolerance_yaw: f64,
    /// Simulated seconds allowed per stage.
    pub stage_timeout: f64,
    pub grid_resolution: f64,
    /// Map extends this far beyond the scene bounds, m.
    pub map_margin: f64,
    pub occupied_threshold: f64,
    /// Added to half the vehicle diagonal to get the inflation radius, m.
    pub inflation_margin: f64,
    pub replan_lookahead: f64,
    /// Distance of the pre-goal point behind the goal, m.
    pub pregoal_offset: f64,
    /// Scripted mapping loop: throttle and steering held for one full turn.
    pub mapping_throttle: f64,
    pub mapping_steering: f64,
    /// Prior spread around the mapping end pose when localization starts.
    pub init_sigma_xy: f64,
    pub init_sigma_yaw: f64,
    /// Localization gate on the particle position spread, m.
    pub localize_gate: f64,
    pub localize_min_updates: u32,
    pub mcl: MclParams,
    pub tracker: TrackerParams,
    pub sensor_model: InverseSensorModel,
    pub unmapped_obstacle: Option<UnmappedObstacle>,
    pub seed: u64,
}

impl MissionConfig {
    pub fn new(goal: [f64; 3], seed: u64) -> Self {
        Self {
            goal,
            tolerance_xy: 0.05,
            tolerance_yaw: 0.1,
            stage_timeout: 120.0,
            grid_resolution: 0.02,
            map_margin: 0.1,
            occupied_threshold: 0.65,
            inflation_margin: 0.02,
            replan_lookahead: 0.5,
            pregoal_offset: 0.4,
            mapping_throttle: 0.4,
            mapping_steering: 1.0,
            init_sigma_xy: 0.1,
            init_sigma_yaw: 0.1,
            localize_gate: 0.05,
            localize_min_updates: 5,
            mcl: MclParams::default(),
            tracker: TrackerParams::default(),
            sensor_model: InverseSensorModel::default(),
            unmapped_obstacle: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutcome {
    /// PARKED within tolerance with no collisions.
    pub success: bool,
    pub final_stage: Stage,
    pub failure: Option<String>,
    pub position_error: f64,
    pub heading_error: f64,
    pub replans: u32,
    pub collisions: u32,
    pub recoveries: u32,
    /// Simulated time spent in each stage, in order of entry.
    pub stage_times: Vec<(Stage, f64)>,
    pub sim_time: f64,
}

#[derive(Serialize)]
struct TickRecord<'a> {
    tick: u64,
    t: f64,
    stage: Stage,
    est: Option<[f64; 3]>,
    truth: [f64; 3],
    cmd: [f64; 2],
    replans: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contact: Option<String>,
}

/// Whether any occupied live cell lies within `radius` of the path ahead.
///
/// The path is sampled every half cell from arc length `from_s` for `lookahead` meters.
pub fn path_blocked(
    live: &OccupancyGrid,
    path: &PlannedPath,
    from_s: f64,
    lookahead: f64,
    threshold: f64,
    radius: f64,
) -> bool {
    let occ = live.occupied_mask(threshold);
    let step = 0.5 * live.resolution;
    let r = (radius / live.resolution).ceil() as i64;
    let total = path.length();
    let mut s = from_s;
    while s <= (from_s + lookahead).min(total) {
        let [x, y] = path.point_at(s);
        let (ci, cj) = live.cell_of(x, y);
        for dj in -r..=r {
            for di in -r..=r {
                let (i, j) = (ci + di, cj + dj);
                if !live.contains(i, j) || !occ[live.index(i as usize, j as usize)] {
                    continue;
                }
                let (cx, cy) = live.cell_center(i as usize, j as usize);
                if (cx - x).hypot(cy - y) <= radius {
                    return true;
                }
            }
        }
        s += step;
    }
    false
}

/// Inserts `scan` at `pose` into the live grid and reports whether the path
/// ahead of `pose` within `lookahead` is now blocked.
#[allow(clippy::too_many_arguments)]
pub fn replan_check(
    live: &mut OccupancyGrid,
    path: &PlannedPath,
    scan: &LidarScan,
    pose: &Pose<f64>,
    model: &InverseSensorModel,
    lookahead: f64,
    threshold: f64,
    radius: f64,
) -> bool {
    let _ = live.update(pose, scan, model);
    let mut best = (f64::INFINITY, 0.0);
    let mut s = 0.0;
    for w in path.waypoints.windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let d = (w[0][0] - pose.x).hypot(w[0][1] - pose.y);
        if d < best.0 {
            best = (d, s);
        }
        s += len;
    }
    path_blocked(live, path, best.1, lookahead, threshold, radius)
}

/// Per-tick parking controller. Feed it every tick's output; it returns the next command.
pub struct ParkingMission {
    pub config: MissionConfig,
    pub stage: Stage,
    pub map: OccupancyGrid,
    pub live: OccupancyGrid,
    pub mcl: Option<Mcl>,
    pub estimate: Option<PoseEstimate>,
    pub path: Option<PlannedPath>,
    pub replans: u32,
    pub failure: Option<String>,
    inflation_radius: f64,
    tracker: Tracker,
    stage_start: f64,
    stage_times: Vec<(Stage, f64)>,
    mapping_turned: f64,
    mapping_last_yaw: f64,
    mapping_done: bool,
    mcl_updates: u32,
    prev_frame: Option<SensorFrame>,
    odom_since_scan: OdomDelta,
    obstacle_spawned: bool,
    event: Option<&'static str>,
}

impl ParkingMission {
    pub fn new(config: MissionConfig, sim: &Simulator) -> Self {
        // pad so that walls on the far bounds still land inside the grid
        let [x0, y0, x1, y1] = sim.scene().bounds;
        let m = config.map_margin;
        let grid =
            OccupancyGrid::covering([x0 - m, y0 - m, x1 + m, y1 + m], config.grid_resolution);
        let body = &sim.vehicle.config.body;
        let inflation_radius = 0.5 * body.length.hypot(body.width) + config.inflation_margin;
        Self {
            tracker: Tracker::new(config.tracker),
            stage: Stage::Mapping,
            live: grid.clone(),
            map: grid,
            mcl: None,
            estimate: None,
            path: None,
            replans: 0,
            failure: None,
            inflation_radius,
            stage_start: sim.time(),
            stage_times: Vec::new(),
            mapping_turned: 0.0,
            mapping_last_yaw: sim.state.pose.yaw,
            mapping_done: false,
            mcl_updates: 0,
            prev_frame: None,
            odom_since_scan: OdomDelta::default(),
            obstacle_spawned: false,
            event: None,
            config,
        }
    }

    pub fn inflation_radius(&self) -> f64 {
        self.inflation_radius
    }

    /// Event raised by the last [`tick`](Self::tick), if any.
    pub fn last_event(&self) -> Option<&'static str> {
        self.event
    }

    pub fn is_done(&self) -> bool {
        matches!(self.stage, Stage::Parked | Stage::Failed)
    }

    fn enter(&mut self, stage: Stage, now: f64) {
        self.stage_times.push((self.stage, now - self.stage_start));
        self.stage = stage;
        self.stage_start = now;
    }

    fn fail(&mut self, reason: String, now: f64) {
        self.failure = Some(reason);
        self.enter(Stage::Failed, now);
    }

    /// Current pose belief: last filter estimate advanced by odometry since that scan.
    pub fn believed_pose(&self) -> Option<Pose<f64>> {
        self.estimate.map(|e| {
            let p = e.pose;
            let d = self.odom_since_scan;
            let (s, c) = p.yaw.sin_cos();
            Pose::new(
                p.x + c * d.dx - s * d.dy,
                p.y + s * d.dx + c * d.dy,
                wrap_angle(p.yaw + d.dyaw),
            )
        })
    }

    fn blocked_grid(&self) -> CostGrid {
        CostGrid::new(
            self.live.width,
            self.live.height,
            self.live
                .inflated(self.config.occupied_threshold, self.inflation_radius),
        )
    }

    fn plan(&self, from: Pose<f64>) -> Result<PlannedPath, PlanError> {
        let [gx, gy, gyaw] = self.config.goal;
        let (s, c) = gyaw.sin_cos();
        let pre = [
            gx - self.config.pregoal_offset * c,
            gy - self.config.pregoal_offset * s,
        ];
        let cg = self.blocked_grid();
        let cell = |x: f64, y: f64| self.live.world_to_cell(x, y);
        let goal_cell = cell(gx, gy).ok_or(PlanError::InvalidGoal((usize::MAX, usize::MAX)))?;
        if !cg.is_free(goal_cell.0, goal_cell.1) {
            return Err(PlanError::InvalidGoal(goal_cell));
        }
        let pre_cell =
            cell(pre[0], pre[1]).ok_or(PlanError::InvalidGoal((usize::MAX, usize::MAX)))?;
        let start =
            cell(from.x, from.y).ok_or(PlanError::InvalidStart((usize::MAX, usize::MAX)))?;
        let start = if cg.is_free(start.0, start.1) {
            start
        } else {
            cg.nearest_free(start.0, start.1, 12)
                .ok_or(PlanError::InvalidStart(start))?
        };
        let path = astar_cells(&cg, start, pre_cell, 1.0)?;
        let mut waypoints = vec![[from.x, from.y]];
        for &(i, j) in path.cells.iter().skip(1) {
            let (x, y) = self.live.cell_center(i, j);
            waypoints.push([x, y]);
        }
        if waypoints.len() > 1 {
            let last = waypoints.len() - 1;
            waypoints[last] = pre;
        }
        let n = (self.config.pregoal_offset / self.live.resolution).ceil() as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            waypoints.push([pre[0] + t * (gx - pre[0]), pre[1] + t * (gy - pre[1])]);
        }
        Ok(PlannedPath {
            waypoints,
            goal_pose: self.config.goal,
        })
    }

    fn update_localization(&mut self, frame: &SensorFrame, sim: &Simulator) {
        if let Some(prev) = &self.prev_frame {
            let cfg = &sim.vehicle.config;
            let d = odometry_update(prev, frame, cfg.wheel.radius, cfg.encoder_cpr);
            self.odom_since_scan = self.odom_since_scan.then(d);
        }
        self.prev_frame = Some(frame.clone());
        if let (Some(mcl), Some(scan)) = (self.mcl.as_mut(), frame.lidar.as_ref()) {
            self.estimate = Some(mcl.update(&self.odom_since_scan, scan));
            self.odom_since_scan = OdomDelta::default();
            self.mcl_updates += 1;
        }
    }

    /// Advances the mission after a simulator tick and returns the next command.
    pub fn tick(&mut self, sim: &mut Simulator, out: &TickOutput) -> Command<f64> {
        self.event = None;
        let now = sim.time();
        if self.is_done() {
            return Command::zero();
        }
        if now - self.stage_start > self.config.stage_timeout {
            self.fail(
                format!("{:?} stage timed out", self.stage).to_uppercase(),
                now,
            );
            return Command::zero();
        }
        let frame = &out.frame;
        self.update_localization(frame, sim);
        match self.stage {
            Stage::Mapping => {
                let truth = sim.state.pose;
                if let Some(scan) = &frame.lidar {
                    let _ = self.map.update(&truth, scan, &self.config.sensor_model);
                }
                self.mapping_turned += wrap_angle(truth.yaw - self.mapping_last_yaw).abs();
                self.mapping_last_yaw = truth.yaw;
                if self.mapping_turned >= std::f64::consts::TAU {
                    self.mapping_done = true;
                }
                if !self.mapping_done {
                    return Command::new(
                        self.config.mapping_throttle,
                        self.config.mapping_steering,
                    );
                }
                if sim.state.velocity.vx.abs() > 0.005 {
                    return Command::zero();
                }
                self.live = self.map.clone();
                let mut mcl = Mcl::new(
                    &self.map,
                    self.config.mcl,
                    NoiseStream::new(self.config.seed, Channel::Particles),
                );
                mcl.init_gaussian(
                    truth,
                    self.config.init_sigma_xy,
                    self.config.init_sigma_yaw,
                    self.config.mcl.max_particles,
                );
                self.estimate = Some(mcl.estimate());
                self.mcl = Some(mcl);
                self.odom_since_scan = OdomDelta::default();
                self.enter(Stage::Localizing, now);
                Command::zero()
            }
            Stage::Localizing => {
                if let Some(e) = self.estimate {
                    if self.mcl_updates >= self.config.localize_min_updates
                        && e.std_xy < self.config.localize_gate
                    {
                        self.enter(Stage::Planning, now);
                    }
                }
                Command::zero()
            }
            Stage::Planning => {
                let from = self.believed_pose().expect("localized");
                match self.plan(from) {
                    Ok(path) => {
                        if !self.obstacle_spawned {
                            self.obstacle_spawned = true;
                            if let Some(ob) = self.config.unmapped_obstacle {
                                let [x, y] = path.point_at(ob.fraction * path.length());
                                let mut rng = NoiseStream::new(self.config.seed, Channel::Spawn);
                                let yaw = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
                                if let Ok(scene) =
                                    sim.scene().spawn_unmapped_obstacle([x, y], ob.extents, yaw)
                                {
                                    sim.set_scene(scene);
                                    self.event = Some("unmapped_obstacle");
                                }
                            }
                        }
                        self.path = Some(path);
                        self.tracker.reset();
                        self.enter(Stage::Tracking, now);
                    }
                    Err(e) => self.fail(format!("PLANNING failed: {e}"), now),
                }
                Command::zero()
            }
            Stage::Tracking => {
                let pose = self.believed_pose().expect("localized");
                let path = self.path.clone().expect("planned");
                if let Some(scan) = &frame.lidar {
                    let radius = self.inflation_radius - self.live.resolution;
                    if replan_check(
                        &mut self.live,
                        &path,
                        scan,
                        &pose,
                        &self.config.sensor_model,
                        self.config.replan_lookahead,
                        self.config.occupied_threshold,
                        radius,
                    ) {
                        self.replans += 1;
                        self.event = Some("replan");
                        self.enter(Stage::Planning, now);
                        return Command::zero();
                    }
                }
                match self.tracker.track_path(&pose, sim.state.velocity.vx, &path) {
                    Ok((_, TrackStatus::Arrived)) => {
                        self.event = Some("parked");
                        self.enter(Stage::Parked, now);
                        Command::zero()
                    }
                    Ok((cmd, TrackStatus::Following)) => cmd,
                    Err(e) => {
                        self.fail(format!("TRACKING failed: {e}"), now);
                        Command::zero()
                    }
                }
            }
            Stage::Parked | Stage::Failed => Command::zero(),
        }
    }

    fn record(
        &self,
        sim: &Simulator,
        cmd: Command<f64>,
        event: Option<&str>,
        contact: Option<String>,
    ) -> String {
        let p = sim.state.pose;
        let rec = TickRecord {
            tick: sim.tick,
            t: sim.time(),
            stage: self.stage,
            est: self.believed_pose().map(|e| [e.x, e.y, e.yaw]),
            truth: [p.x, p.y, p.yaw],
            cmd: [cmd.throttle, cmd.steering],
            replans: self.replans,
            event,
            contact,
        };
        serde_json::to_string(&rec).expect("record serializes")
    }

    /// Summary of the mission so far; `collisions` is counted by the caller.
    pub fn outcome(&self, sim: &Simulator, collisions: u32) -> MissionOutcome {
        let p = sim.state.pose;
        let [gx, gy, gyaw] = self.config.goal;
        let position_error = (p.x - gx).hypot(p.y - gy);
        let heading_error = wrap_angle(p.yaw - gyaw).abs();
        let parked = self.stage == Stage::Parked;
        let mut stage_times = self.stage_times.clone();
        stage_times.push((self.stage, sim.time() - self.stage_start));
        MissionOutcome {
            success: parked
                && collisions == 0
                && position_error <= self.config.tolerance_xy
                && heading_error <= self.config.tolerance_yaw,
            final_stage: self.stage,
            failure: self.failure.clone(),
            position_error,
            heading_error,
            replans: self.replans,
            collisions,
            recoveries: self.mcl.as_ref().map_or(0, |m| m.recoveries),
            stage_times,
            sim_time: sim.time(),
        }
    }
}

/// Runs a mission to PARKED or failure, optionally writing a JSONL tick log
/// followed by one summary record.
pub fn run_parking_mission(
    sim: &mut Simulator,
    config: MissionConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<MissionOutcome, StepError> {
    let mut mission = ParkingMission::new(config, sim);
    let mut cmd = Command::zero();
    let mut collisions = 0;
    // hard stop well past every stage timeout
    let max_ticks = (6.0 * mission.config.stage_timeout / sim.dt) as u64;
    while !mission.is_done() && sim.tick < max_ticks {
        let out = sim.step(cmd)?;
        let mut event = None;
        let mut contact = None;
        if out.contact_onset {
            collisions += 1;
            event = Some("collision");
            contact = out.contact.map(|c| c.to_string());
        }
        cmd = mission.tick(sim, &out);
        if let Some(w) = log.as_deref_mut() {
            let line = mission.record(sim, cmd, event.or(mission.event), contact);
            let _ = writeln!(w, "{line}");
        }
    }
    if !mission.is_done() {
        mission.fail("mission exceeded its tick budget".into(), sim.time());
    }
    let outcome = mission.outcome(sim, collisions);
    if let Some(w) = log {
        let _ = writeln!(w, "{}", serde_json::json!({ "summary": outcome }));
        let _ = w.flush();
    }
    Ok(outcome)
}
