//! Fixed-step simulation pipeline shared by the headless tools and the server.
//!
//! Per tick: noisy actuation of the command, vehicle step, sensor frame (LIDAR
//! on its cadence), collision check against the live scene.

use crate::geometry::Segment;
use crate::sensors::{
    actuate_noisy, LidarSpec, NoiseConfig, NoiseSources, SensorFrame, SensorSuite,
};
use crate::vehicle::{Command, ConfigError, Pose, StepError, Vehicle, VehicleConfig, VehicleState};
use crate::world::{Contact, Scene};

pub const DEFAULT_DT: f64 = 0.002;

#[derive(Debug, Clone)]
pub struct TickOutput {
    pub frame: SensorFrame,
    /// Feature in contact after this tick.
    pub contact: Option<Contact>,
    /// True on the first tick of a contact.
    pub contact_onset: bool,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub vehicle: Vehicle<f64>,
    scene: Scene,
    segments: Vec<Segment<f64>>,
    pub suite: SensorSuite,
    pub noise: NoiseSources,
    pub state: VehicleState<f64>,
    pub tick: u64,
    pub dt: f64,
    contact: Option<Contact>,
    last_frame: SensorFrame,
}

impl Simulator {
    pub fn new(
        config: VehicleConfig<f64>,
        scene: Scene,
        lidar: LidarSpec,
        noise: NoiseConfig,
        dt: f64,
    ) -> Result<Self, ConfigError> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(ConfigError::invalid("dt", "must lie in (0, 0.01] s"));
        }
        noise
            .validate()
            .map_err(|e| ConfigError::invalid("noise", e))?;
        lidar
            .validate()
            .map_err(|e| ConfigError::invalid("lidar", e))?;
        let cpr = config.encoder_cpr;
        let vehicle = Vehicle::new(config)?;
        let state = vehicle.rest_state(scene.spawn_pose());
        let suite = SensorSuite::new(lidar, cpr, dt);
        let mut sim = Self {
            vehicle,
            segments: scene.segments(),
            scene,
            suite,
            noise: NoiseSources::new(noise),
            state,
            tick: 0,
            dt,
            contact: None,
            last_frame: empty_frame(),
        };
        sim.last_frame = sim.rest_frame();
        Ok(sim)
    }

    /// Defaults: default vehicle, default LIDAR, 2 ms step.
    pub fn with_scene(scene: Scene, noise: NoiseConfig) -> Self {
        Self::new(
            VehicleConfig::default(),
            scene,
            LidarSpec::default(),
            noise,
            DEFAULT_DT,
        )
        .expect("default configuration is valid")
    }

    fn rest_frame(&mut self) -> SensorFrame {
        let s = self.state.clone();
        let mut f = self.suite.read(
            &s,
            &s,
            &self.segments,
            0,
            &mut NoiseSources::new(NoiseConfig::off(0)),
        );
        f.imu = Default::default();
        f
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Replaces the live scene (geometry only; vehicle state is kept).
    pub fn set_scene(&mut self, scene: Scene) {
        self.segments = scene.segments();
        self.scene = scene;
        self.contact = self
            .scene
            .collide(&self.vehicle.footprint(&self.state.pose));
    }

    /// Puts the vehicle at rest at `pose`, clock and noise streams restarted.
    pub fn reset(&mut self, pose: Pose<f64>) {
        self.state = self.vehicle.rest_state(pose);
        self.tick = 0;
        self.noise = NoiseSources::new(self.noise.config);
        self.contact = self.scene.collide(&self.vehicle.footprint(&pose));
        self.last_frame = self.rest_frame();
    }

    pub fn time(&self) -> f64 {
        self.state.sim_time
    }

    pub fn last_frame(&self) -> &SensorFrame {
        &self.last_frame
    }

    pub fn contact(&self) -> Option<Contact> {
        self.contact
    }

    pub fn step(&mut self, cmd: Command<f64>) -> Result<TickOutput, StepError> {
        let input = actuate_noisy(cmd, &mut self.noise);
        let next = self.vehicle.step(&self.state, &input, self.dt)?;
        self.tick += 1;
        // keep the clock on the integer tick grid
        let mut next = next;
        next.sim_time = self.tick as f64 * self.dt;
        let frame = self.suite.read(
            &self.state,
            &next,
            &self.segments,
            self.tick,
            &mut self.noise,
        );
        self.state = next;
        let contact = self
            .scene
            .collide(&self.vehicle.footprint(&self.state.pose));
        let onset = contact.is_some() && self.contact.is_none();
        self.contact = contact;
        self.last_frame = frame.clone();
        Ok(TickOutput {
            frame,
            contact,
            contact_onset: onset,
        })
    }
}

fn empty_frame() -> SensorFrame {
    SensorFrame {
        throttle_fb: 0.0,
        steering_fb: 0.0,
        encoders: [0, 0],
        ips: Pose::default(),
        imu: Default::default(),
        lidar: None,
        t: 0.0,
    }
}
