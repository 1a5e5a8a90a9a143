//! Real-time teleoperation service for recording demonstrations.
//!
//! [`session::Session`] holds the deterministic per-operator state machine;
//! [`server`] exposes it over `/ws/teleop` with a fixed-rate tick loop.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, Mode, ServerMessage};
pub use server::{list_datasets, start, DatasetEntry, RunningServer, ServerConfig};
pub use session::{RecordOutcome, Session, SessionConfig};
