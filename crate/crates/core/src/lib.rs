//! Desk-scale digital twin of a 1:14 Ackermann-steered vehicle.
//!
//! The numeric kernels ([`vehicle`], [`geometry`], [`imitation::mlp`]) are
//! generic over [`num::Real`]; the aliases below fix them to `f64`, which is
//! what the simulator, autonomy stack and file formats use.

pub mod autonomy;
pub mod geometry;
pub mod imitation;
pub mod num;
pub mod rng;
pub mod sensors;
pub mod sim;
pub mod vehicle;
pub mod world;

pub type Vec2 = geometry::Vec2<f64>;
pub type Pose = vehicle::Pose<f64>;
pub type Command = vehicle::Command<f64>;
pub type VehicleConfig = vehicle::VehicleConfig<f64>;
pub type VehicleState = vehicle::VehicleState<f64>;
pub type Vehicle = vehicle::Vehicle<f64>;
pub type FrictionCurve = vehicle::FrictionCurve<f64>;
