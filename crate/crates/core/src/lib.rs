//! Core of the spatial name system.
//!
//! A spatial name system resolves physical locations to network addresses.
//! Locations inside a cell (a room or building) are linearised with a 2-D
//! Hilbert curve, areas become sets of curve-index intervals, and an
//! augmented red-black interval tree finds every registered device whose
//! area overlaps a query area.
//!
//! ```text
//!   QueryGeometry ──hilbert──▶ IntervalSet ──tree──▶ (device, matched) ...
//!        ▲                                               │
//!        │ protocol (UDP / TCP)                          ▼
//!     client ◀──────────────────────────────────── Registry::resolve
//! ```
//!
//! The [`loc`] module is independent of the rest: it is a codec for the DNS
//! LOC resource record (RFC 1876) text and wire formats.

pub mod hilbert;
pub mod interval;
pub mod loc;
pub mod protocol;
pub mod registry;
pub mod snapshot;
pub mod tree;
pub mod units;
mod wire;

pub use loc::LocRecord;

pub use hilbert::{GridConfig, GridCoord, HilbertIndex, QueryGeometry};
pub use interval::{Interval, IntervalSet};
pub use tree::IntervalTree;
pub use protocol::{Body, ErrorCode, Message};
pub use registry::{
    AddressArea, CellId, DeviceId, Match, NetworkAddress, Registry, RegistryError, Resolution,
};
