//! `desksim` command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use desksim_core::autonomy::mission::UnmappedObstacle;
use desksim_core::autonomy::{run_parking_mission, MissionConfig, MissionOutcome};
use desksim_core::imitation::{
    augment_mirror, balance_dataset, evaluate_driver, featurizer_for, record_human_session,
    BcDriver, HumanParams, ModelDoc, ModelMetadata, TrainConfig, FEATURE_LEN,
};
use desksim_core::sensors::{lidar_scan, LidarSpec, NoiseConfig};
use desksim_core::sim::{Simulator, DEFAULT_DT};
use desksim_core::world::{preset, square_room, PerturbSigmas, Scene, PRESET_NAMES};
use desksim_core::{Pose, VehicleConfig};

use crate::net::{self, LoopLimits};
use crate::protocol::Mode;
use crate::recorder::load_rows;
use crate::session::{Session, SessionConfig};

pub const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Parser)]
#[command(
    name = "desksim",
    version,
    about = "Desk-scale Ackermann vehicle simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Off,
    /// LIDAR 0.025 m, drive 0.013 m/s, steering 0.018 rad/s.
    Paper,
    /// Drive and steering noise as in `paper`, noise-free LIDAR.
    Actuators,
}

impl NoiseArg {
    pub fn config(self, seed: u64) -> NoiseConfig {
        match self {
            NoiseArg::Off => NoiseConfig::off(seed),
            NoiseArg::Paper => NoiseConfig::paper(seed),
            NoiseArg::Actuators => NoiseConfig {
                lidar_sigma: 0.0,
                ..NoiseConfig::paper(seed)
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Manual,
    Parking,
    #[value(name = "bc_drive")]
    BcDrive,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Manual => Mode::Manual,
            ModeArg::Parking => Mode::Parking,
            ModeArg::BcDrive => Mode::BcDrive,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the simulation loop behind a WebSocket server.
    Serve {
        /// Preset name or scene JSON path.
        #[arg(long, default_value = "driving_school")]
        scene: String,
        /// Vehicle config JSON; defaults to the built-in vehicle.
        #[arg(long)]
        vehicle: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "manual")]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Realtime factor; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        rt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "DESKSIM_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Recording file used by `record` messages.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "off")]
        noise: NoiseArg,
        /// Model JSON for bc_drive mode.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Stop after this much simulated time, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Headless parking mission; prints the log path and the verdict.
    Park {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "paper")]
        noise: NoiseArg,
        #[arg(long, default_value = "parking_school")]
        scene: String,
        /// Mission log; defaults to park-seed<SEED>.jsonl.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Keep the scene walls where the map says they are.
        #[arg(long)]
        no_perturb: bool,
        /// Do not drop an unmapped box onto the planned path.
        #[arg(long)]
        no_obstacle: bool,
    },
    /// Train a model from a dataset or session recording.
    Train {
        /// Dataset JSONL or recording JSONL.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steering histogram bins for balancing; 0 disables it.
        #[arg(long, default_value_t = 21)]
        bins: usize,
        #[arg(long)]
        no_mirror: bool,
        /// Hidden layer widths.
        #[arg(long, value_delimiter = ',', default_value = "64,32,16")]
        hidden: Vec<usize>,
    },
    /// Evaluate a model headless; prints laps and collisions.
    Drive {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "driving_school")]
        scene: String,
        #[arg(long, default_value_t = 1)]
        laps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "actuators")]
        noise: NoiseArg,
        /// Time limit per lap, s.
        #[arg(long, default_value_t = 120.0)]
        lap_timeout: f64,
    },
    /// Record laps with the scripted driver into a dataset file.
    Record {
        #[arg(long, default_value = "driving_school")]
        scene: String,
        #[arg(long, default_value_t = 5)]
        laps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "actuators")]
        noise: NoiseArg,
        #[arg(long, default_value = "dataset.jsonl")]
        out: PathBuf,
    },
    /// Print a noise-free scan of the analytic square room.
    ScanTest {
        #[arg(long, default_value_t = 2.0)]
        side: f64,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        yaw: f64,
        /// Add the off-center marker box.
        #[arg(long)]
        marker: bool,
        /// Print every n-th beam.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
}

type CliResult = Result<ExitCode, String>;

pub fn load_scene(name_or_path: &str) -> Result<Scene, String> {
    if PRESET_NAMES.contains(&name_or_path) || name_or_path == "square_room" {
        return preset(name_or_path).map_err(|e| e.to_string());
    }
    Scene::load(name_or_path).map_err(|e| e.to_string())
}

/// Parking run with the given noise, perturbed walls and one unmapped box.
pub fn parking_setup(
    scene: &Scene,
    seed: u64,
    noise: NoiseArg,
    perturb: bool,
    obstacle: bool,
) -> Result<(Simulator, MissionConfig), String> {
    let goal = scene
        .goal
        .ok_or_else(|| format!("scene {} has no goal", scene.name))?;
    let live = if perturb {
        scene.perturb(PerturbSigmas::default(), seed).0
    } else {
        scene.clone()
    };
    let sim = Simulator::with_scene(live, noise.config(seed));
    let mut cfg = MissionConfig::new(goal, seed);
    if obstacle {
        cfg.unmapped_obstacle = Some(UnmappedObstacle {
            fraction: 0.5,
            extents: [0.06, 0.06],
        });
    }
    Ok((sim, cfg))
}

/// Runs one parking mission and writes its log to `log`.
pub fn park(
    scene: &Scene,
    seed: u64,
    noise: NoiseArg,
    perturb: bool,
    obstacle: bool,
    log: &Path,
) -> Result<MissionOutcome, String> {
    let (mut sim, cfg) = parking_setup(scene, seed, noise, perturb, obstacle)?;
    let file = File::create(log).map_err(|e| format!("cannot create {}: {e}", log.display()))?;
    let mut w = BufWriter::new(file);
    let outcome = run_parking_mission(&mut sim, cfg, Some(&mut w)).map_err(|e| e.to_string())?;
    w.flush()
        .map_err(|e| format!("cannot write {}: {e}", log.display()))?;
    Ok(outcome)
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Cmd::Serve {
            scene,
            vehicle,
            mode,
            dt,
            rt,
            seed,
            port,
            bind,
            record,
            noise,
            model,
            duration,
        } => {
            let mut cfg = SessionConfig::new(load_scene(&scene)?, seed);
            if let Some(v) = vehicle {
                cfg.vehicle = VehicleConfig::load(&v).map_err(|e| e.to_string())?;
            }
            cfg.mode = mode.into();
            cfg.dt = dt;
            cfg.realtime_factor = rt;
            cfg.noise = noise.config(seed);
            cfg.record = record;
            if let Some(m) = model {
                cfg.model = Some(ModelDoc::load(&m).map_err(|e| e.to_string())?);
            }
            let limits = LoopLimits {
                max_steps: duration.map(|d| (d / dt).round() as u64),
            };
            let session = Session::new(cfg).map_err(|e| e.to_string())?;
            let handle = net::spawn(session, SocketAddr::new(bind, port), limits)
                .map_err(|e| format!("cannot listen on {bind}:{port}: {e}"))?;
            println!("listening on ws://{}", handle.addr);
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| e.to_string())?;
            rt.block_on(async {
                loop {
                    tokio::select! {
                        _ = tokio::signal::ctrl_c() => { handle.stop(); break; }
                        _ = tokio::time::sleep(Duration::from_millis(100)) => {
                            if handle.is_finished() { break; }
                        }
                    }
                }
            });
            let session = handle.join();
            println!(
                "stopped after {} steps, t = {:.3} s",
                session.steps(),
                session.sim().time()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Park {
            seed,
            noise,
            scene,
            log,
            no_perturb,
            no_obstacle,
        } => {
            let scene = load_scene(&scene)?;
            let log = log.unwrap_or_else(|| PathBuf::from(format!("park-seed{seed}.jsonl")));
            let o = park(&scene, seed, noise, !no_perturb, !no_obstacle, &log)?;
            println!("mission log: {}", log.display());
            if o.success {
                println!(
                    "PARKED position error {:.4} m, heading error {:.4} rad, replans {}, sim time {:.2} s",
                    o.position_error, o.heading_error, o.replans, o.sim_time
                );
                Ok(ExitCode::SUCCESS)
            } else {
                println!(
                    "FAILED in {:?}: {} (position error {:.4} m, heading error {:.4} rad, collisions {})",
                    o.final_stage,
                    o.failure.as_deref().unwrap_or("outside tolerance or collided"),
                    o.position_error,
                    o.heading_error,
                    o.collisions
                );
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Train {
            data,
            out,
            epochs,
            lr,
            batch,
            seed,
            bins,
            no_mirror,
            hidden,
        } => {
            let ds = load_rows(&data).map_err(|e| format!("{}: {e}", data.display()))?;
            let mut rows = if bins > 0 {
                balance_dataset(&ds.rows, bins, seed).map_err(|e| e.to_string())?
            } else {
                ds.rows
            };
            if !no_mirror {
                rows = augment_mirror(&rows);
            }
            let mut layers = vec![FEATURE_LEN];
            layers.extend(hidden);
            layers.push(2);
            let mut cfg = TrainConfig {
                layers,
                epochs,
                batch,
                seed,
                ..Default::default()
            };
            cfg.adam.lr = lr;
            let result =
                desksim_core::imitation::train(&rows, &cfg, None).map_err(|e| e.to_string())?;
            let meta = ModelMetadata {
                seed,
                epochs,
                batch,
                lr,
                rows: rows.len(),
                loss_curve: result.loss_curve.clone(),
            };
            ModelDoc::new(&result.policy, ds.spec, meta)
                .save(&out)
                .map_err(|e| e.to_string())?;
            println!("trained on {} rows", rows.len());
            for (k, l) in result.loss_curve.iter().enumerate() {
                println!("epoch {}: loss {l:.6}", k + 1);
            }
            println!("model: {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Drive {
            model,
            scene,
            laps,
            seed,
            noise,
            lap_timeout,
        } => {
            let doc = ModelDoc::load(&model).map_err(|e| e.to_string())?;
            let policy = doc.policy().map_err(|e| e.to_string())?;
            let mut sim = Simulator::with_scene(load_scene(&scene)?, noise.config(seed));
            let mut driver = BcDriver::new(policy, featurizer_for(&sim));
            let o = evaluate_driver(&mut sim, &mut driver, laps, lap_timeout * laps as f64)
                .map_err(|e| e.to_string())?;
            println!(
                "laps {} collisions {} progress {:.2} m sim time {:.2} s{}",
                o.laps,
                o.collided as u32,
                o.progress,
                o.sim_time,
                o.contact
                    .as_ref()
                    .map(|c| format!(" contact {c}"))
                    .unwrap_or_default()
            );
            Ok(if o.laps >= laps && !o.collided {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Record {
            scene,
            laps,
            seed,
            noise,
            out,
        } => {
            let mut sim = Simulator::with_scene(load_scene(&scene)?, noise.config(seed));
            let rec = record_human_session(
                &mut sim,
                laps,
                HumanParams::default(),
                seed,
                120.0 * laps as f64,
            )
            .map_err(|e| e.to_string())?;
            rec.dataset.save(&out).map_err(|e| e.to_string())?;
            println!(
                "recorded {} rows over {} laps in {:.1} s ({} collisions): {}",
                rec.dataset.rows.len(),
                rec.laps,
                rec.sim_time,
                rec.collisions,
                out.display()
            );
            Ok(if rec.laps >= laps {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::ScanTest {
            side,
            x,
            y,
            yaw,
            marker,
            every,
        } => {
            if !(side > 0.0) || !(0.0..=side).contains(&x) || !(0.0..=side).contains(&y) {
                return Err(format!("pose ({x}, {y}) must lie inside the {side} m room"));
            }
            let room = square_room(side, marker);
            let spec = LidarSpec::default();
            let scan = lidar_scan(&room.segments(), &Pose::new(x, y, yaw), &spec, None, 0.0);
            println!(
                "# square room {side} m, pose ({x}, {y}, {yaw}), {} beams",
                scan.ranges.len()
            );
            println!("# beam bearing_rad range_m");
            for i in (0..scan.ranges.len()).step_by(every.max(1)) {
                match scan.range(i) {
                    Some(r) => println!("{i} {:.6} {r:.9}", scan.bearing(i)),
                    None => println!("{i} {:.6} none", scan.bearing(i)),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
