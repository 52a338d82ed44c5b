//! Live operator bridge for a running city.
//!
//! Clients speak JSON over `/ws`: they send [`ClientCommand`]s and receive
//! `{device, snapshot, virtual_ms}` frames plus an `ack` or `error` reply per
//! command. `GET /history/<table>` and `GET /devices` serve telemetry and
//! device snapshots.

pub mod server;
pub mod session;

pub use server::{router, serve, Gateway, HEARTBEAT};
pub use session::{schema_of, Accepted, ClientCommand, GatewayError, Session, SnapshotFrame};
