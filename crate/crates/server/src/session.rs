//! Simulation session: owns the simulator and everything attached to it.
//!
//! Nothing here knows about sockets. Messages are applied between ticks via
//! [`Session::handle`], ticks run via [`Session::tick`], and both return the
//! frames to send. Given the same configuration and the same log of
//! `(tick, client, message)` entries the output is identical, which is what
//! [`replay`] relies on.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use desksim_core::autonomy::mission::ParkingMission;
use desksim_core::autonomy::{MissionConfig, Stage};
use desksim_core::imitation::{
    course_of, featurizer_for, BcDriver, DatasetRow, Featurizer, LapCounter, ModelDoc,
};
use desksim_core::sensors::{LidarSpec, NoiseConfig};
use desksim_core::sim::{Simulator, DEFAULT_DT};
use desksim_core::world::{preset, Scene};
use desksim_core::{Command, Pose, VehicleConfig};

use crate::protocol::{
    parse_client, ClientMessage, ControlAction, Event, EventKind, Mode, ServerMessage, Switch,
    Telemetry, Truth, PROTOCOL_VERSION,
};
use crate::recorder::RecordingWriter;

pub type ClientId = u64;

/// Commands older than this are replaced by zero in manual mode, s.
pub const DEAD_MAN_TIMEOUT: f64 = 0.5;

/// Most particles sent per telemetry frame.
const MAX_PARTICLES: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Vehicle(#[from] desksim_core::vehicle::ConfigError),
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scene: Scene,
    pub vehicle: VehicleConfig,
    pub lidar: LidarSpec,
    pub noise: NoiseConfig,
    pub mode: Mode,
    pub dt: f64,
    /// Simulated seconds per wall second; 0 runs unpaced.
    pub realtime_factor: f64,
    pub seed: u64,
    /// Where `record` messages write.
    pub record: Option<PathBuf>,
    /// Required for `bc_drive`.
    pub model: Option<ModelDoc>,
}

impl SessionConfig {
    pub fn new(scene: Scene, seed: u64) -> Self {
        Self {
            scene,
            vehicle: VehicleConfig::default(),
            lidar: LidarSpec::default(),
            noise: NoiseConfig::off(seed),
            mode: Mode::Manual,
            dt: DEFAULT_DT,
            realtime_factor: 1.0,
            seed,
            record: None,
            model: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(SessionError::Config(format!(
                "dt {} outside (0, 0.01]",
                self.dt
            )));
        }
        if !(self.realtime_factor >= 0.0 && self.realtime_factor.is_finite()) {
            return Err(SessionError::Config(
                "realtime factor must be finite and >= 0".into(),
            ));
        }
        if self.mode == Mode::BcDrive && self.model.is_none() {
            return Err(SessionError::Config("bc_drive mode needs a model".into()));
        }
        Ok(())
    }
}

/// Frame to send: to one client, or to everyone when `to` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub to: Option<ClientId>,
    pub text: String,
}

impl Output {
    fn all(msg: &ServerMessage) -> Self {
        Self {
            to: None,
            text: msg.to_json(),
        }
    }

    fn to(client: ClientId, msg: &ServerMessage) -> Self {
        Self {
            to: Some(client),
            text: msg.to_json(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    Connect,
    Message { text: String },
    Disconnect,
}

/// Everything that reached the session, stamped with the number of steps run before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    pub client: ClientId,
    #[serde(flatten)]
    pub event: LogEvent,
}

pub struct Session {
    config: SessionConfig,
    sim: Simulator,
    mode: Mode,
    goal: Option<[f64; 3]>,
    mission: Option<ParkingMission>,
    mission_collisions: u32,
    mission_reported: bool,
    driver: Option<BcDriver>,
    featurizer: Featurizer,
    laps: Option<LapCounter>,
    manual: Command,
    manual_tick: Option<u64>,
    auto: Command,
    controller: Option<ClientId>,
    writer: Option<RecordingWriter>,
    epoch: u32,
    frozen: bool,
    /// Steps run since the session started; never reset.
    steps: u64,
    log: Vec<LogEntry>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let sim = Simulator::new(
            config.vehicle.clone(),
            config.scene.clone(),
            config.lidar,
            config.noise,
            config.dt,
        )?;
        let mut s = Self {
            featurizer: featurizer_for(&sim),
            laps: lap_counter(&sim),
            sim,
            mode: Mode::Manual,
            goal: None,
            mission: None,
            mission_collisions: 0,
            mission_reported: false,
            driver: None,
            manual: Command::zero(),
            manual_tick: None,
            auto: Command::zero(),
            controller: None,
            writer: None,
            epoch: 0,
            frozen: false,
            steps: 0,
            log: Vec::new(),
            config,
        };
        s.set_mode(s.config.mode).map_err(SessionError::Config)?;
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    /// Direct simulator access, bypassing the message path. For tests.
    #[doc(hidden)]
    pub fn sim_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn controller(&self) -> Option<ClientId> {
        self.controller
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn is_recording(&self) -> bool {
        self.writer.as_ref().is_some_and(RecordingWriter::is_open)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn command_log(&self) -> &[LogEntry] {
        &self.log
    }

    fn event(&self, kind: EventKind, detail: Value) -> Output {
        Output::all(&ServerMessage::Event(Event {
            kind,
            tick: self.sim.tick,
            t: self.sim.time(),
            epoch: self.epoch,
            detail,
        }))
    }

    pub fn connect(&mut self, client: ClientId) -> Vec<Output> {
        self.log.push(LogEntry {
            tick: self.steps,
            client,
            event: LogEvent::Connect,
        });
        vec![Output::to(
            client,
            &ServerMessage::Hello {
                protocol: PROTOCOL_VERSION,
                client,
                dt: self.config.dt,
                scene: self.sim.scene().name.clone(),
                mode: self.mode,
                controlled: self.controller.is_some(),
            },
        )]
    }

    pub fn disconnect(&mut self, client: ClientId) {
        self.log.push(LogEntry {
            tick: self.steps,
            client,
            event: LogEvent::Disconnect,
        });
        if self.controller == Some(client) {
            self.controller = None;
        }
    }

    /// Applies one client frame. Never panics on client input.
    pub fn handle(&mut self, client: ClientId, text: &str) -> Vec<Output> {
        self.log.push(LogEntry {
            tick: self.steps,
            client,
            event: LogEvent::Message { text: text.into() },
        });
        let env = match parse_client(text) {
            Ok(env) => env,
            Err(f) => {
                return vec![Output::to(
                    client,
                    &ServerMessage::Err {
                        reference: f.id,
                        of: f.of,
                        detail: f.detail,
                    },
                )];
            }
        };
        let of = env.message.kind().to_string();
        let reply = |result: Result<Reply, String>| match result {
            Ok(r) => ServerMessage::Ack {
                reference: env.id.clone(),
                of: of.clone(),
                warning: r.warning,
                detail: r.detail,
            },
            Err(detail) => ServerMessage::Err {
                reference: env.id.clone(),
                of: Some(of.clone()),
                detail,
            },
        };
        let mut out = Vec::new();
        let mut acquired = false;
        if !matches!(env.message, ClientMessage::Control { .. }) {
            match self.controller {
                None => {
                    self.controller = Some(client);
                    acquired = true;
                }
                Some(c) if c != client => {
                    let e = Err(format!("control token is held by client {c}"));
                    return vec![Output::to(client, &reply(e))];
                }
                Some(_) => {}
            }
        }
        let mut result = self.apply(client, env.message.clone(), &mut out);
        if acquired {
            if let Ok(r) = &mut result {
                r.detail = Some(match r.detail.take() {
                    Some(d) => format!("control acquired; {d}"),
                    None => "control acquired".into(),
                });
            }
        }
        let mut all = vec![Output::to(client, &reply(result))];
        all.extend(out);
        all
    }

    fn apply(
        &mut self,
        client: ClientId,
        msg: ClientMessage,
        out: &mut Vec<Output>,
    ) -> Result<Reply, String> {
        match msg {
            ClientMessage::Cmd { throttle, steering } => {
                if !throttle.is_finite() || !steering.is_finite() {
                    return Err("command values must be finite".into());
                }
                let cmd = Command::new(throttle, steering).clamped();
                self.manual = cmd;
                self.manual_tick = Some(self.sim.tick);
                let mut warnings = Vec::new();
                if cmd.throttle != throttle {
                    warnings.push(format!("throttle clamped to {}", cmd.throttle));
                }
                if cmd.steering != steering {
                    warnings.push(format!("steering clamped to {}", cmd.steering));
                }
                if self.mode != Mode::Manual {
                    warnings.push(format!("ignored in {} mode", mode_name(self.mode)));
                }
                Ok(Reply::warn(
                    (!warnings.is_empty()).then(|| warnings.join("; ")),
                ))
            }
            ClientMessage::Reset { pose } => {
                let pose = match pose {
                    Some(p) => {
                        let p = Pose::new(p[0], p[1], p[2]);
                        self.check_in_bounds("pose", p.x, p.y)?;
                        if !p.yaw.is_finite() {
                            return Err("pose yaw must be finite".into());
                        }
                        p
                    }
                    None => self.sim.scene().spawn_pose(),
                };
                self.restart(pose, out);
                Ok(Reply::ok())
            }
            ClientMessage::LoadScene { name } => {
                let scene = preset(&name).map_err(|e| e.to_string())?;
                let mut sim = Simulator::new(
                    self.config.vehicle.clone(),
                    scene,
                    self.config.lidar,
                    self.config.noise,
                    self.config.dt,
                )
                .map_err(|e| e.to_string())?;
                std::mem::swap(&mut self.sim, &mut sim);
                self.goal = None;
                self.laps = lap_counter(&self.sim);
                let spawn = self.sim.scene().spawn_pose();
                self.restart(spawn, out);
                Ok(Reply::detail(format!("scene {name} loaded")))
            }
            ClientMessage::SetGoal { x, y, yaw } => {
                self.check_in_bounds("goal", x, y)?;
                if !yaw.is_finite() {
                    return Err("goal yaw must be finite".into());
                }
                if let Some(i) = self.sim.scene().obstacle_at(desksim_core::Vec2::new(x, y)) {
                    return Err(format!("goal lies inside obstacles[{i}]"));
                }
                self.goal = Some([x, y, yaw]);
                if self.mode == Mode::Parking {
                    self.start_mission()?;
                    return Ok(Reply::detail("mission restarted".into()));
                }
                Ok(Reply::ok())
            }
            ClientMessage::SetMode { mode } => {
                self.set_mode(mode)?;
                Ok(Reply::ok())
            }
            ClientMessage::Record { state: Switch::On } => {
                if self.is_recording() {
                    return Ok(Reply::warn(Some("already recording".into())));
                }
                self.start_recording(out)?;
                Ok(Reply::ok())
            }
            ClientMessage::Record { state: Switch::Off } => {
                if !self.is_recording() {
                    return Ok(Reply::warn(Some("not recording".into())));
                }
                self.stop_recording(out);
                Ok(Reply::ok())
            }
            ClientMessage::Control {
                action: ControlAction::Acquire,
            } => match self.controller {
                Some(c) if c != client => Err(format!("control token is held by client {c}")),
                _ => {
                    self.controller = Some(client);
                    Ok(Reply::ok())
                }
            },
            ClientMessage::Control {
                action: ControlAction::Release,
            } => {
                if self.controller != Some(client) {
                    return Err("not holding the control token".into());
                }
                self.controller = None;
                Ok(Reply::ok())
            }
        }
    }

    fn check_in_bounds(&self, what: &str, x: f64, y: f64) -> Result<(), String> {
        let [x0, y0, x1, y1] = self.sim.scene().bounds;
        if !(x >= x0 && x <= x1 && y >= y0 && y <= y1) {
            return Err(format!("{what} ({x}, {y}) lies outside the scene bounds"));
        }
        Ok(())
    }

    /// Vehicle at rest at `pose`, clock at 0, mission and goal cleared.
    fn restart(&mut self, pose: Pose, out: &mut Vec<Output>) {
        let recording = self.is_recording();
        if recording {
            self.stop_recording(out);
        }
        self.sim.reset(pose);
        self.epoch += 1;
        self.frozen = false;
        self.manual = Command::zero();
        self.manual_tick = None;
        self.auto = Command::zero();
        self.featurizer.reset();
        if let Some(l) = &mut self.laps {
            *l = LapCounter::new(l.course().clone());
            l.update(&pose);
        }
        if self.mode == Mode::Parking {
            self.mission = None;
            self.goal = None;
            self.mode = Mode::Manual;
        }
        if let Some(d) = &mut self.driver {
            d.reset();
        }
        if recording {
            // a failed reopen is reported as a failure event
            let _ = self.start_recording(out);
        }
    }

    fn set_mode(&mut self, mode: Mode) -> Result<(), String> {
        match mode {
            Mode::Manual => {
                self.mission = None;
                self.driver = None;
            }
            Mode::Parking => {
                if self.goal.is_none() {
                    self.goal = self.sim.scene().goal;
                }
                if self.goal.is_none() {
                    return Err("no goal set and the scene has no default goal".into());
                }
                self.driver = None;
                self.mode = Mode::Parking;
                self.start_mission()?;
            }
            Mode::BcDrive => {
                let doc = self
                    .config
                    .model
                    .as_ref()
                    .ok_or("no model loaded (start the server with --model)")?;
                let policy = doc.policy().map_err(|e| e.to_string())?;
                self.mission = None;
                self.driver = Some(BcDriver::new(policy, featurizer_for(&self.sim)));
            }
        }
        self.mode = mode;
        self.auto = Command::zero();
        Ok(())
    }

    fn start_mission(&mut self) -> Result<(), String> {
        let goal = self.goal.ok_or("no goal set")?;
        let cfg = MissionConfig::new(goal, self.config.seed);
        self.mission = Some(ParkingMission::new(cfg, &self.sim));
        self.mission_collisions = 0;
        self.mission_reported = false;
        self.auto = Command::zero();
        Ok(())
    }

    fn start_recording(&mut self, out: &mut Vec<Output>) -> Result<(), String> {
        let path = self
            .config
            .record
            .clone()
            .ok_or("no recording path configured (start the server with --record)")?;
        if self.writer.is_none() {
            match RecordingWriter::create(&path) {
                Ok(w) => self.writer = Some(w),
                Err(e) => return Err(format!("cannot create {}: {e}", path.display())),
            }
        }
        let laps = self.laps.as_ref().map(LapCounter::laps);
        let spec = self.featurizer.spec;
        let (name, dt, tick, t) = (
            self.sim.scene().name.clone(),
            self.config.dt,
            self.sim.tick,
            self.sim.time(),
        );
        let w = self.writer.as_mut().expect("writer opened above");
        match w.begin(&name, dt, tick, t, spec, laps) {
            Ok(index) => {
                out.push(self.event(
                    EventKind::Recording,
                    json!({"state": "on", "path": path.display().to_string(), "segment": index}),
                ));
                Ok(())
            }
            Err(e) => {
                self.writer = None;
                let detail = format!("recording failed: {e}");
                out.push(self.event(EventKind::Failure, json!({"detail": detail})));
                Err(detail)
            }
        }
    }

    fn stop_recording(&mut self, out: &mut Vec<Output>) {
        let laps = self.laps.as_ref().map(LapCounter::laps);
        let Some(w) = self.writer.as_mut() else {
            return;
        };
        match w.end(laps) {
            Ok(Some(s)) => out.push(self.event(
                EventKind::Recording,
                json!({"state": "off", "segment": s.index, "rows": s.rows, "telemetry": s.telemetry,
                       "duration": s.duration, "laps": s.laps}),
            )),
            Ok(None) => {}
            Err(e) => {
                self.writer = None;
                out.push(self.event(
                    EventKind::Failure,
                    json!({"detail": format!("recording failed: {e}")}),
                ));
            }
        }
    }

    /// Closes any open recording segment.
    pub fn finish(&mut self) -> Vec<Output> {
        let mut out = Vec::new();
        self.stop_recording(&mut out);
        out
    }

    fn next_command(&self) -> Command {
        match self.mode {
            Mode::Manual => {
                let fresh = self.manual_tick.is_some_and(|k| {
                    (self.sim.tick + 1 - k) as f64 * self.config.dt <= DEAD_MAN_TIMEOUT + 1e-12
                });
                if fresh {
                    self.manual
                } else {
                    Command::zero()
                }
            }
            Mode::Parking | Mode::BcDrive => self.auto,
        }
    }

    /// Runs one fixed step and returns its telemetry and events.
    pub fn tick(&mut self) -> Vec<Output> {
        let mut out = Vec::new();
        if self.frozen {
            return out;
        }
        let cmd = self.next_command();
        self.steps += 1;
        let step = match self.sim.step(cmd) {
            Ok(s) => s,
            Err(e) => {
                self.frozen = true;
                out.push(self.event(
                    EventKind::Failure,
                    json!({"detail": format!("integration fault: {e}"), "frozen": true}),
                ));
                return out;
            }
        };
        if step.contact_onset {
            let contact = step.contact.map(|c| c.to_string());
            out.push(self.event(EventKind::Collision, json!({"contact": contact})));
            if self.mission.is_some() {
                self.mission_collisions += 1;
            }
        }
        if let Some(l) = &mut self.laps {
            let before = l.laps();
            let now = l.update(&self.sim.state.pose);
            if now > before {
                out.push(self.event(EventKind::Lap, json!({"laps": now})));
            }
        }
        match self.mode {
            Mode::Parking => {
                if let Some(m) = &mut self.mission {
                    self.auto = if m.is_done() {
                        Command::zero()
                    } else {
                        m.tick(&mut self.sim, &step)
                    };
                    if m.is_done() && !self.mission_reported {
                        self.mission_reported = true;
                        let o = m.outcome(&self.sim, self.mission_collisions);
                        let detail = serde_json::to_value(&o).unwrap_or(Value::Null);
                        let kind = if o.final_stage == Stage::Parked {
                            EventKind::Parked
                        } else {
                            EventKind::Failure
                        };
                        out.push(self.event(kind, detail));
                    }
                }
            }
            Mode::BcDrive => {
                if let Some(d) = &mut self.driver {
                    self.auto = d.drive(&step.frame);
                }
            }
            Mode::Manual => {}
        }
        let features = self.featurizer.observe(&step.frame);
        let telemetry = self.telemetry(step.frame, step.contact.map(|c| c.to_string()), cmd);
        let text = ServerMessage::Telemetry(Box::new(telemetry)).to_json();
        if self.is_recording() {
            let row = features.map(|features| DatasetRow {
                features,
                label_steering: cmd.steering,
                label_throttle: cmd.throttle,
                t: self.sim.time(),
                lap_id: self.laps.as_ref().map_or(0, LapCounter::laps),
            });
            let t = self.sim.time();
            let w = self.writer.as_mut().expect("recording implies a writer");
            if let Err(e) = w.tick(&text, t, row.as_ref()) {
                self.writer = None;
                out.push(self.event(
                    EventKind::Failure,
                    json!({"detail": format!("recording failed: {e}")}),
                ));
                out.push(self.event(
                    EventKind::Recording,
                    json!({"state": "off", "error": e.to_string()}),
                ));
            }
        }
        out.insert(0, Output { to: None, text });
        out
    }

    fn telemetry(
        &self,
        frame: desksim_core::sensors::SensorFrame,
        contact: Option<String>,
        cmd: Command,
    ) -> Telemetry {
        let s = &self.sim.state;
        let mission = self.mission.as_ref();
        let particles = mission
            .filter(|_| frame.lidar.is_some())
            .and_then(|m| m.mcl.as_ref())
            .map(|mcl| {
                let step = mcl.particles.len().div_ceil(MAX_PARTICLES).max(1);
                mcl.particles
                    .iter()
                    .step_by(step)
                    .map(|p| [p.pose.x, p.pose.y, p.pose.yaw])
                    .collect()
            });
        Telemetry {
            tick: self.sim.tick,
            t: self.sim.time(),
            epoch: self.epoch,
            truth: Truth {
                pose: [s.pose.x, s.pose.y, s.pose.yaw],
                vx: s.velocity.vx,
                vy: s.velocity.vy,
                yaw_rate: s.velocity.yaw_rate,
                steer_angle: s.steer_angle,
            },
            frame,
            command: [cmd.throttle, cmd.steering],
            mode: self.mode,
            scene: self.sim.scene().name.clone(),
            stage: mission.map(|m| m.stage),
            estimate: mission
                .and_then(|m| m.believed_pose())
                .map(|p| [p.x, p.y, p.yaw]),
            goal: self.goal,
            path: mission
                .and_then(|m| m.path.as_ref())
                .map(|p| p.waypoints.clone()),
            particles,
            laps: self.laps.as_ref().map(LapCounter::laps),
            contact,
            recording: self.is_recording(),
        }
    }
}

fn lap_counter(sim: &Simulator) -> Option<LapCounter> {
    course_of(sim.scene()).ok().map(|c| {
        let mut l = LapCounter::new(c);
        l.update(&sim.state.pose);
        l
    })
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Manual => "manual",
        Mode::Parking => "parking",
        Mode::BcDrive => "bc_drive",
    }
}

struct Reply {
    warning: Option<String>,
    detail: Option<String>,
}

impl Reply {
    fn ok() -> Self {
        Self {
            warning: None,
            detail: None,
        }
    }

    fn warn(warning: Option<String>) -> Self {
        Self {
            warning,
            detail: None,
        }
    }

    fn detail(d: String) -> Self {
        Self {
            warning: None,
            detail: Some(d),
        }
    }
}

/// Runs `steps` steps headless, feeding `log` entries in at their step
/// indices, and returns every frame produced.
pub fn replay(
    config: SessionConfig,
    log: &[LogEntry],
    steps: u64,
) -> Result<Vec<Output>, SessionError> {
    let mut s = Session::new(config)?;
    let mut out = Vec::new();
    let mut next = 0;
    for k in 0..=steps {
        while next < log.len() && log[next].tick <= s.steps {
            let e = &log[next];
            match &e.event {
                LogEvent::Connect => out.extend(s.connect(e.client)),
                LogEvent::Message { text } => out.extend(s.handle(e.client, text)),
                LogEvent::Disconnect => s.disconnect(e.client),
            }
            next += 1;
        }
        if k < steps {
            out.extend(s.tick());
        }
    }
    out.extend(s.finish());
    Ok(out)
}
