//! Headless record / train / deploy runs on a lap course.

use serde::{Deserialize, Serialize};

use crate::imitation::dataset::{augment_mirror, balance_dataset, Dataset, Recorder};
use crate::imitation::driver::{BcDriver, Course, HumanDriver, HumanParams, LapCounter};
use crate::imitation::features::{FeatureSpec, Featurizer};
use crate::imitation::train::{train, ModelDoc, ModelMetadata, TrainConfig};
use crate::rng::{Channel, NoiseStream};
use crate::sensors::NoiseConfig;
use crate::sim::Simulator;
use crate::vehicle::StepError;
use crate::world::Scene;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("scene {0:?} has no centerline")]
    NoCenterline(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Dataset(#[from] crate::imitation::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] crate::imitation::mlp::MlpError),
}

pub fn course_of(scene: &Scene) -> Result<Course, SessionError> {
    scene
        .centerline
        .as_deref()
        .map(Course::new)
        .ok_or_else(|| SessionError::NoCenterline(scene.name.clone()))
}

pub fn featurizer_for(sim: &Simulator) -> Featurizer {
    let cfg = &sim.vehicle.config;
    let spec = FeatureSpec {
        range_max: sim.suite.lidar.range_max,
        max_speed: cfg.actuators.max_drive_speed,
    };
    Featurizer::new(spec, cfg.wheel.radius, sim.suite.encoder_cpr)
}

#[derive(Debug, Clone)]
pub struct RecordOutcome {
    pub dataset: Dataset,
    pub laps: u32,
    pub collisions: u32,
    pub sim_time: f64,
    /// Frames without a scan.
    pub skipped: u64,
}

/// Drives `laps` loops with the scripted human from the simulator's current
/// state, recording one row per scan.
pub fn record_human_session(
    sim: &mut Simulator,
    laps: u32,
    params: HumanParams,
    seed: u64,
    max_time: f64,
) -> Result<RecordOutcome, SessionError> {
    let course = course_of(sim.scene())?;
    let g = &sim.vehicle.config.geometry;
    let mut human = HumanDriver::new(
        params,
        course.clone(),
        g.wheelbase,
        g.max_steer,
        NoiseStream::new(seed, Channel::Teleop),
    );
    let mut counter = LapCounter::new(course);
    counter.update(&sim.state.pose);
    let mut recorder = Recorder::new(featurizer_for(sim));
    let mut collisions = 0;
    let t0 = sim.time();
    while counter.laps() < laps && sim.time() - t0 < max_time {
        let cmd = human.command(&sim.state.pose, sim.time());
        let out = sim.step(cmd)?;
        collisions += out.contact_onset as u32;
        recorder.lap_id = counter.update(&sim.state.pose);
        recorder.record(&out.frame, &human.label());
    }
    Ok(RecordOutcome {
        laps: counter.laps(),
        collisions,
        sim_time: sim.time() - t0,
        skipped: recorder.skipped,
        dataset: recorder.into_dataset(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveOutcome {
    /// Laps completed before the first contact.
    pub laps: u32,
    pub collided: bool,
    /// Scene feature hit first, if any.
    pub contact: Option<String>,
    pub progress: f64,
    pub sim_time: f64,
}

/// Lets `driver` run until it completes `laps`, touches anything, or `max_time` passes.
pub fn evaluate_driver(
    sim: &mut Simulator,
    driver: &mut BcDriver,
    laps: u32,
    max_time: f64,
) -> Result<DriveOutcome, SessionError> {
    let mut counter = LapCounter::new(course_of(sim.scene())?);
    counter.update(&sim.state.pose);
    driver.reset();
    let t0 = sim.time();
    let mut frame = sim.last_frame().clone();
    let mut contact = None;
    while counter.laps() < laps && sim.time() - t0 < max_time {
        let cmd = driver.drive(&frame);
        let out = sim.step(cmd)?;
        counter.update(&sim.state.pose);
        if let Some(c) = out.contact {
            contact = Some(c.to_string());
            break;
        }
        frame = out.frame;
    }
    Ok(DriveOutcome {
        laps: counter.laps(),
        collided: contact.is_some(),
        contact,
        progress: counter.progress,
        sim_time: sim.time() - t0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcTrialConfig {
    pub seed: u64,
    pub record_laps: u32,
    pub eval_laps: u32,
    pub noise: NoiseConfig,
    pub human: HumanParams,
    pub train: TrainConfig,
    pub bins: usize,
    /// Time limit per lap, s.
    pub lap_timeout: f64,
    /// Std of the seeded start-pose offset for the deployment run: lateral m, yaw rad.
    pub start_sigma: [f64; 2],
}

impl BcTrialConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            record_laps: 5,
            eval_laps: 1,
            noise: NoiseConfig {
                lidar_sigma: 0.0,
                ..NoiseConfig::paper(seed)
            },
            human: HumanParams::default(),
            train: TrainConfig {
                seed,
                ..Default::default()
            },
            bins: 21,
            lap_timeout: 120.0,
            start_sigma: [0.02, 0.05],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BcTrial {
    pub recorded: RecordOutcome,
    /// Rows after balancing and mirroring.
    pub training_rows: usize,
    pub model: ModelDoc,
    pub drive: DriveOutcome,
}

/// Record, balance, mirror, train and deploy on `scene`.
pub fn run_bc_trial(scene: &Scene, config: &BcTrialConfig) -> Result<BcTrial, SessionError> {
    let spawn = scene.spawn_pose();
    let mut sim = Simulator::with_scene(scene.clone(), config.noise);
    sim.reset(spawn);
    let timeout = config.lap_timeout * config.record_laps as f64;
    let recorded = record_human_session(
        &mut sim,
        config.record_laps,
        config.human,
        config.seed,
        timeout,
    )?;
    let balanced = balance_dataset(&recorded.dataset.rows, config.bins, config.seed)?;
    let rows = augment_mirror(&balanced);
    let trained = train(&rows, &config.train, None)?;
    let meta = ModelMetadata {
        seed: config.train.seed,
        epochs: config.train.epochs,
        batch: config.train.batch,
        lr: config.train.adam.lr,
        rows: rows.len(),
        loss_curve: trained.loss_curve.clone(),
    };
    let model = ModelDoc::new(&trained.policy, recorded.dataset.spec, meta);

    let eval_noise = NoiseConfig {
        seed: config.seed.wrapping_add(1_000_003),
        ..config.noise
    };
    let mut sim = Simulator::with_scene(scene.clone(), eval_noise);
    let mut rng = NoiseStream::new(config.seed, Channel::Spawn);
    let (s, c) = spawn.yaw.sin_cos();
    let lateral = rng.gaussian(config.start_sigma[0]);
    let start = crate::vehicle::Pose::new(
        spawn.x - s * lateral,
        spawn.y + c * lateral,
        spawn.yaw + rng.gaussian(config.start_sigma[1]),
    );
    sim.reset(start);
    let mut driver = BcDriver::new(trained.policy, featurizer_for(&sim));
    let drive = evaluate_driver(
        &mut sim,
        &mut driver,
        config.eval_laps,
        config.lap_timeout * config.eval_laps as f64,
    )?;
    Ok(BcTrial {
        recorded,
        training_rows: rows.len(),
        model,
        drive,
    })
}
