//! Parking pipeline: occupancy mapping, Monte Carlo localization, A* planning,
//! replanning around unmapped obstacles, proportional path tracking.

pub mod grid;
pub mod mcl;
pub mod mission;
pub mod odometry;
pub mod planner;
pub mod tracker;

pub use grid::{InverseSensorModel, OccupancyGrid};
pub use mcl::{LikelihoodField, Mcl, MclParams, Particle, PoseEstimate};
pub use mission::{run_parking_mission, MissionConfig, MissionOutcome, Stage};
pub use odometry::{odometry_update, OdomDelta};
pub use planner::{astar_cells, astar_plan, CostGrid, GridPath, PlanError, PlannedPath, StepCount};
pub use tracker::{TrackStatus, Tracker, TrackerParams};
