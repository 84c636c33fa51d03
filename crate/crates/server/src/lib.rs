//! Spatial name system server.
//!
//! Listens on one port for UDP datagrams and length-prefixed TCP frames,
//! resolves queries against an in-memory [`Registry`](sns_core::Registry),
//! and persists the registry to a snapshot file.

pub mod config;
pub mod handler;
pub mod server;
pub mod survey;

pub use config::{Args, ServerConfig};
pub use server::{Discovery, NoDiscovery, RunningServer, Server, ServerError, Shutdown};
