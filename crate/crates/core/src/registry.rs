//! Spatial registry: devices, their address areas and resolution.
//!
//! All mutable state sits behind one `RwLock`. An update removes the old
//! intervals and inserts the new ones under a single write guard, so a
//! concurrent `resolve` sees either the previous or the next area of a
//! device, never a mix.

use std::collections::BTreeMap;
use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::str::FromStr;
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::hilbert::{geometry_to_intervals, GridConfig, HilbertError, QueryGeometry};
use crate::interval::IntervalSet;
use crate::tree::IntervalTree;

pub const DEFAULT_MAX_RESULTS: usize = 32;
pub const MAX_LABEL_LEN: usize = 63;

/// Opaque 128-bit device identifier chosen by the device.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId([u8; 16]);

impl DeviceId {
    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn from_u128(v: u128) -> Self {
        Self(v.to_be_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeviceId({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("device id must be 32 hex digits")]
pub struct ParseDeviceIdError;

impl FromStr for DeviceId {
    type Err = ParseDeviceIdError;

    /// 32 hex digits; dashes (UUID style) are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits: String = s.chars().filter(|c| *c != '-').collect();
        let mut bytes = [0u8; 16];
        hex::decode_to_slice(digits, &mut bytes).map_err(|_| ParseDeviceIdError)?;
        Ok(Self(bytes))
    }
}

/// Identifier of the physical domain one server is responsible for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CellId(pub u64);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("port must be non-zero")]
    ZeroPort,
    #[error("label longer than {MAX_LABEL_LEN} bytes")]
    LabelTooLong,
    #[error("label contains control characters")]
    LabelControl,
}

/// Endpoint a resolved device can be reached at.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkAddress {
    pub ip: IpAddr,
    pub port: u16,
    pub label: Option<String>,
}

impl NetworkAddress {
    /// An empty label is stored as `None`.
    pub fn new(ip: IpAddr, port: u16, label: Option<String>) -> Result<Self, AddressError> {
        if port == 0 {
            return Err(AddressError::ZeroPort);
        }
        let label = label.filter(|l| !l.is_empty());
        if let Some(l) = &label {
            if l.len() > MAX_LABEL_LEN {
                return Err(AddressError::LabelTooLong);
            }
            if l.chars().any(char::is_control) {
                return Err(AddressError::LabelControl);
            }
        }
        Ok(Self { ip, port, label })
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.ip, self.port)
    }
}

impl fmt::Display for NetworkAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.socket_addr())?;
        if let Some(label) = &self.label {
            write!(f, " ({label})")?;
        }
        Ok(())
    }
}

/// A device's registered extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressArea {
    pub device_id: DeviceId,
    pub address: NetworkAddress,
    pub intervals: IntervalSet,
    pub version: u64,
    /// Milliseconds since the Unix epoch.
    pub updated_at: u64,
}

/// One resolved device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub device_id: DeviceId,
    pub address: NetworkAddress,
    /// Part of the device's area that falls inside the query.
    pub matched: IntervalSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Found(Vec<Match>),
    /// More distinct devices matched than the caller allowed.
    TooMany { count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("stale version; current version is {current}")]
    Stale { current: u64 },
    #[error(transparent)]
    Geometry(#[from] HilbertError),
    #[error("area does not intersect the grid")]
    EmptyArea,
    #[error("max_results must be at least 1")]
    InvalidMaxResults,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct State {
    pub tree: IntervalTree<DeviceId>,
    pub devices: BTreeMap<DeviceId, AddressArea>,
}

impl State {
    pub fn insert_area(&mut self, area: AddressArea) {
        for iv in &area.intervals {
            self.tree.insert(*iv, area.device_id);
        }
        self.devices.insert(area.device_id, area);
    }

    pub fn remove_device(&mut self, id: &DeviceId) -> Option<AddressArea> {
        let area = self.devices.remove(id)?;
        for iv in &area.intervals {
            self.tree.remove(iv, id);
        }
        Some(area)
    }
}

pub struct Registry {
    grid: GridConfig,
    cell_id: CellId,
    max_results: usize,
    pub(crate) state: RwLock<State>,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Registry {
    pub fn new(grid: GridConfig, cell_id: CellId) -> Self {
        Self {
            grid,
            cell_id,
            max_results: DEFAULT_MAX_RESULTS,
            state: RwLock::new(State::default()),
        }
    }

    pub fn with_max_results(mut self, max_results: usize) -> Self {
        self.max_results = max_results.max(1);
        self
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn cell_id(&self) -> CellId {
        self.cell_id
    }

    pub fn max_results(&self) -> usize {
        self.max_results
    }

    pub(crate) fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn len(&self) -> usize {
        self.read().devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total intervals stored in the tree.
    pub fn interval_count(&self) -> usize {
        self.read().tree.len()
    }

    pub fn get(&self, id: &DeviceId) -> Option<AddressArea> {
        self.read().devices.get(id).cloned()
    }

    /// All areas ordered by device id.
    pub fn areas(&self) -> Vec<AddressArea> {
        self.read().devices.values().cloned().collect()
    }

    /// Registers a new device or moves an existing one.
    ///
    /// `version` must exceed the stored version; the first registration may
    /// use any version, including 0.
    pub fn register_or_update(
        &self,
        device_id: DeviceId,
        address: NetworkAddress,
        area: &QueryGeometry,
        version: u64,
    ) -> Result<AddressArea, RegistryError> {
        let intervals = geometry_to_intervals(&self.grid, area)?;
        if intervals.is_empty() {
            return Err(RegistryError::EmptyArea);
        }
        let mut state = self.write();
        if let Some(existing) = state.devices.get(&device_id) {
            if version <= existing.version {
                return Err(RegistryError::Stale {
                    current: existing.version,
                });
            }
        }
        state.remove_device(&device_id);
        let area = AddressArea {
            device_id,
            address,
            intervals,
            version,
            updated_at: now_millis(),
        };
        state.insert_area(area.clone());
        Ok(area)
    }

    /// Returns `false` if the device was not registered.
    pub fn deregister(&self, device_id: &DeviceId) -> bool {
        self.write().remove_device(device_id).is_some()
    }

    /// Devices whose area overlaps `query`, ordered by device id.
    pub fn resolve(
        &self,
        query: &QueryGeometry,
        max_results: usize,
    ) -> Result<Resolution, RegistryError> {
        if max_results == 0 {
            return Err(RegistryError::InvalidMaxResults);
        }
        let intervals = geometry_to_intervals(&self.grid, query)?;
        Ok(self.resolve_intervals(&intervals, max_results))
    }

    pub fn resolve_intervals(&self, intervals: &IntervalSet, max_results: usize) -> Resolution {
        let state = self.read();
        let hits = state.tree.query_all(intervals);
        if hits.len() > max_results {
            return Resolution::TooMany { count: hits.len() };
        }
        Resolution::Found(
            hits.into_iter()
                .map(|(device_id, matched)| Match {
                    device_id,
                    address: state.devices[&device_id].address.clone(),
                    matched,
                })
                .collect(),
        )
    }

    /// Replaces all contents.
    pub(crate) fn replace_areas(&self, areas: Vec<AddressArea>) {
        let mut fresh = State::default();
        for area in areas {
            fresh.insert_area(area);
        }
        *self.write() = fresh;
    }

    /// Checks the tree against the device table. For tests.
    pub fn validate(&self) -> Result<(), String> {
        let state = self.read();
        state.tree.validate()?;
        let expected: usize = state.devices.values().map(|a| a.intervals.len()).sum();
        if expected != state.tree.len() {
            return Err(format!("{} intervals in tree, {} in areas", state.tree.len(), expected));
        }
        for (iv, id) in state.tree.iter() {
            let area = state.devices.get(id).ok_or("tree references unknown device")?;
            if !area.intervals.intervals().contains(&iv) {
                return Err(format!("stray interval {iv} for {id}"));
            }
        }
        Ok(())
    }
}
