//! Simulation server for the desksim vehicle twin.
//!
//! [`session::Session`] owns one simulator and applies client messages between
//! fixed steps; [`net`] paces it in real time behind a WebSocket endpoint;
//! [`cli`] wires both into the `desksim` binary along with the headless tools.

pub mod cli;
pub mod net;
pub mod protocol;
pub mod recorder;
pub mod session;
