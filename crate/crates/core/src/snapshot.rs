//! Registry snapshot files.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! magic        8 bytes  "SNSSNAP1"
//! cell_id      u64
//! grid order   u8
//! cell size    u32      centimetres
//! origin x, y  i64, i64 centimetres
//! count        u32      number of records
//! records      count x (u32 length, record bytes)
//! checksum     u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! A record is `device_id[16] version:u64 updated_at:u64 address
//! interval_count:u32 (low:u32 high:u32)*`, with the address encoded as in
//! the wire protocol.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::hilbert::GridConfig;
use crate::interval::IntervalSet;
use crate::registry::{AddressArea, CellId, Registry};
use crate::wire::{Reader, WireError, Writer};

const MAGIC: &[u8; 8] = b"SNSSNAP1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("corrupt snapshot: {0}")]
    Corrupt(&'static str),
    #[error("snapshot was taken for a different cell or grid")]
    ConfigMismatch,
}

impl From<WireError> for SnapshotError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Truncated => SnapshotError::Corrupt("truncated"),
            WireError::Invalid(what) => SnapshotError::Corrupt(what),
        }
    }
}

pub fn encode(cell_id: CellId, grid: &GridConfig, areas: &[AddressArea]) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u64(cell_id.0);
    w.u8(grid.order());
    w.u32(grid.cell_size_cm());
    let (ox, oy) = grid.origin_cm();
    w.i64(ox);
    w.i64(oy);
    w.u32(areas.len() as u32);
    for area in areas {
        let mut rec = Writer::default();
        rec.device_id(&area.device_id);
        rec.u64(area.version);
        rec.u64(area.updated_at);
        rec.address(&area.address);
        rec.u32(area.intervals.len() as u32);
        for iv in &area.intervals {
            rec.interval(iv);
        }
        w.u32(rec.buf.len() as u32);
        w.bytes(&rec.buf);
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<(CellId, GridConfig, Vec<AddressArea>), SnapshotError> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(SnapshotError::Corrupt("bad magic"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body).to_be_bytes() != crc {
        return Err(SnapshotError::Checksum);
    }
    let mut r = Reader::new(&body[MAGIC.len()..]);
    let cell_id = CellId(r.u64()?);
    let order = r.u8()?;
    let cell_size = r.u32()?;
    let (ox, oy) = (r.i64()?, r.i64()?);
    let grid = GridConfig::with_origin(order, cell_size, ox, oy)
        .map_err(|_| SnapshotError::Corrupt("invalid grid"))?;
    let count = r.u32()? as usize;
    let mut areas = Vec::with_capacity(count.min(r.remaining() / 4));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut rec = Reader::new(r.take(len)?);
        let device_id = rec.device_id()?;
        let version = rec.u64()?;
        let updated_at = rec.u64()?;
        let address = rec.address()?;
        let n = rec.u32()? as usize;
        let intervals = IntervalSet::from_intervals(rec.intervals(n)?);
        rec.finish()?;
        if intervals.is_empty() || intervals.len() != n {
            return Err(SnapshotError::Corrupt("area intervals not normalised"));
        }
        areas.push(AddressArea {
            device_id,
            address,
            intervals,
            version,
            updated_at,
        });
    }
    r.finish()?;
    Ok((cell_id, grid, areas))
}

impl Registry {
    /// Writes every area to `path` via a temporary file and rename.
    pub fn snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let bytes = encode(self.cell_id(), self.grid(), &self.areas());
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Replaces the registry contents with those of a snapshot taken for the
    /// same cell and grid. Returns the number of devices loaded.
    pub fn restore(&self, path: &Path) -> Result<usize, SnapshotError> {
        let bytes = fs::read(path)?;
        let (cell_id, grid, areas) = decode(&bytes)?;
        if cell_id != self.cell_id() || grid != *self.grid() {
            return Err(SnapshotError::ConfigMismatch);
        }
        let count = areas.len();
        self.replace_areas(areas);
        Ok(count)
    }
}
