//! 2-D Hilbert curve over a square grid of cells, and decomposition of
//! query shapes into index intervals.
//!
//! Orientation: index 0 is cell `(0, 0)` and the first step of the curve is
//! along +y, so an order-1 curve visits `(0,0) (0,1) (1,1) (1,0)`. Every
//! block of `4^k` consecutive indices starting at a multiple of `4^k` fills
//! an aligned `2^k x 2^k` square, which is what makes the recursive
//! decomposition in [`geometry_to_intervals`] work.

use thiserror::Error;

use crate::interval::{Interval, IntervalSet};

pub const MAX_ORDER: u8 = 16;
/// Spatial dimensions handled by this curve. A 3-D curve would use a
/// different value in the geometry tags of the wire protocol.
pub const DIMENSIONS: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HilbertError {
    #[error("grid order {0} outside 1..=16")]
    InvalidOrder(u8),
    #[error("cell size must be positive")]
    InvalidCellSize,
    #[error("coordinate ({x}, {y}) outside a grid of side {side}")]
    CoordOutOfBounds { x: u32, y: u32, side: u32 },
    #[error("index {index} outside a curve of {cells} cells")]
    IndexOutOfRange { index: u64, cells: u64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
}

/// Local coordinate frame: a `2^order` square grid of `cell_size_cm` cells
/// whose cell `(0, 0)` starts at `origin_*_cm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridConfig {
    order: u8,
    cell_size_cm: u32,
    origin_x_cm: i64,
    origin_y_cm: i64,
}

impl GridConfig {
    pub fn new(order: u8, cell_size_cm: u32) -> Result<Self, HilbertError> {
        Self::with_origin(order, cell_size_cm, 0, 0)
    }

    pub fn with_origin(
        order: u8,
        cell_size_cm: u32,
        origin_x_cm: i64,
        origin_y_cm: i64,
    ) -> Result<Self, HilbertError> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(HilbertError::InvalidOrder(order));
        }
        if cell_size_cm == 0 {
            return Err(HilbertError::InvalidCellSize);
        }
        Ok(Self {
            order,
            cell_size_cm,
            origin_x_cm,
            origin_y_cm,
        })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn cell_size_cm(&self) -> u32 {
        self.cell_size_cm
    }

    pub fn origin_cm(&self) -> (i64, i64) {
        (self.origin_x_cm, self.origin_y_cm)
    }

    /// Cells along one edge.
    pub fn side(&self) -> u32 {
        1 << self.order
    }

    /// Total number of cells, `4^order`.
    pub fn cells(&self) -> u64 {
        1u64 << (2 * u32::from(self.order))
    }

    pub fn max_index(&self) -> u32 {
        (self.cells() - 1) as u32
    }

    pub fn dimensions(&self) -> u8 {
        DIMENSIONS
    }

    /// Cell containing a physical point, or `None` outside the grid.
    pub fn cell_at(&self, x_cm: i64, y_cm: i64) -> Option<GridCoord> {
        let cs = i128::from(self.cell_size_cm);
        let x = (i128::from(x_cm) - i128::from(self.origin_x_cm)).div_euclid(cs);
        let y = (i128::from(y_cm) - i128::from(self.origin_y_cm)).div_euclid(cs);
        let side = i128::from(self.side());
        ((0..side).contains(&x) && (0..side).contains(&y)).then(|| GridCoord {
            x: x as u32,
            y: y as u32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoord {
    pub x: u32,
    pub y: u32,
}

impl GridCoord {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HilbertIndex(pub u32);

impl HilbertIndex {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// A query or address area. Coordinates are physical centimetres in the
/// grid's frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryGeometry {
    /// Closed disc; a cell matches when any point of it lies within the
    /// radius, boundary included.
    Circle {
        center_x_cm: i64,
        center_y_cm: i64,
        radius_cm: u64,
    },
    /// Half-open box `[min, max)` on both axes, matching cells with which it
    /// shares positive area.
    Rect {
        min_x_cm: i64,
        min_y_cm: i64,
        max_x_cm: i64,
        max_y_cm: i64,
    },
    /// Curve indices given directly.
    Raw(IntervalSet),
}

impl QueryGeometry {
    pub fn validate(&self, cfg: &GridConfig) -> Result<(), HilbertError> {
        match self {
            QueryGeometry::Circle { radius_cm, .. } => {
                if *radius_cm == 0 {
                    return Err(HilbertError::DegenerateGeometry("radius must be positive"));
                }
            }
            QueryGeometry::Rect {
                min_x_cm,
                min_y_cm,
                max_x_cm,
                max_y_cm,
            } => {
                if min_x_cm >= max_x_cm || min_y_cm >= max_y_cm {
                    return Err(HilbertError::DegenerateGeometry("rect min must be below max"));
                }
            }
            QueryGeometry::Raw(set) => {
                if let Some(last) = set.intervals().last() {
                    if u64::from(last.high) >= cfg.cells() {
                        return Err(HilbertError::IndexOutOfRange {
                            index: u64::from(last.high),
                            cells: cfg.cells(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rotates/reflects a quadrant so that sub-curves connect.
fn rotate(side: u32, x: &mut u32, y: &mut u32, rx: u32, ry: u32) {
    if ry == 0 {
        if rx == 1 {
            *x = side - 1 - *x;
            *y = side - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

pub fn coord_to_index(cfg: &GridConfig, c: GridCoord) -> Result<HilbertIndex, HilbertError> {
    let side = cfg.side();
    if c.x >= side || c.y >= side {
        return Err(HilbertError::CoordOutOfBounds { x: c.x, y: c.y, side });
    }
    let (mut x, mut y) = (c.x, c.y);
    let mut d: u64 = 0;
    let mut s = side >> 1;
    while s > 0 {
        let rx = u32::from(x & s != 0);
        let ry = u32::from(y & s != 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        rotate(side, &mut x, &mut y, rx, ry);
        s >>= 1;
    }
    Ok(HilbertIndex(d as u32))
}

pub fn index_to_coord(cfg: &GridConfig, i: HilbertIndex) -> Result<GridCoord, HilbertError> {
    if u64::from(i.0) >= cfg.cells() {
        return Err(HilbertError::IndexOutOfRange {
            index: u64::from(i.0),
            cells: cfg.cells(),
        });
    }
    let (mut x, mut y) = (0u32, 0u32);
    let mut t = i.0;
    let mut s = 1u32;
    while s < cfg.side() {
        let rx = 1 & (t >> 1);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t >>= 2;
        s <<= 1;
    }
    Ok(GridCoord { x, y })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cover {
    None,
    Partial,
    Full,
}

/// Physical extent of a block of cells, `[x0, x1] x [y0, y1]`.
struct Block {
    x0: i128,
    y0: i128,
    x1: i128,
    y1: i128,
}

fn classify(geometry: &QueryGeometry, b: &Block) -> Cover {
    match *geometry {
        QueryGeometry::Circle {
            center_x_cm,
            center_y_cm,
            radius_cm,
        } => {
            let (cx, cy, r) = (
                i128::from(center_x_cm),
                i128::from(center_y_cm),
                i128::from(radius_cm),
            );
            let r2 = r * r;
            let near_x = cx.clamp(b.x0, b.x1) - cx;
            let near_y = cy.clamp(b.y0, b.y1) - cy;
            if near_x * near_x + near_y * near_y > r2 {
                return Cover::None;
            }
            let far_x = (b.x0 - cx).abs().max((b.x1 - cx).abs());
            let far_y = (b.y0 - cy).abs().max((b.y1 - cy).abs());
            if far_x * far_x + far_y * far_y <= r2 {
                Cover::Full
            } else {
                Cover::Partial
            }
        }
        QueryGeometry::Rect {
            min_x_cm,
            min_y_cm,
            max_x_cm,
            max_y_cm,
        } => {
            let (min_x, min_y, max_x, max_y) = (
                i128::from(min_x_cm),
                i128::from(min_y_cm),
                i128::from(max_x_cm),
                i128::from(max_y_cm),
            );
            if b.x0 >= max_x || min_x >= b.x1 || b.y0 >= max_y || min_y >= b.y1 {
                Cover::None
            } else if min_x <= b.x0 && b.x1 <= max_x && min_y <= b.y0 && b.y1 <= max_y {
                Cover::Full
            } else {
                Cover::Partial
            }
        }
        QueryGeometry::Raw(_) => unreachable!("raw geometry is not classified"),
    }
}

fn descend(
    cfg: &GridConfig,
    geometry: &QueryGeometry,
    level: u32,
    base: u64,
    out: &mut IntervalSet,
) {
    let side = 1u32 << level;
    // every block of 4^level indices is an aligned square; locate it through
    // its first cell
    let first = index_to_coord(cfg, HilbertIndex(base as u32)).expect("base within curve");
    let (bx, by) = (first.x & !(side - 1), first.y & !(side - 1));
    let cs = i128::from(cfg.cell_size_cm);
    let (ox, oy) = cfg.origin_cm();
    let block = Block {
        x0: i128::from(ox) + i128::from(bx) * cs,
        y0: i128::from(oy) + i128::from(by) * cs,
        x1: i128::from(ox) + (i128::from(bx) + i128::from(side)) * cs,
        y1: i128::from(oy) + (i128::from(by) + i128::from(side)) * cs,
    };
    match classify(geometry, &block) {
        Cover::None => {}
        Cover::Full => {
            let len = 1u64 << (2 * level);
            out.push_ordered(Interval {
                low: base as u32,
                high: (base + len - 1) as u32,
            });
        }
        Cover::Partial if level == 0 => out.push_ordered(Interval::point(base as u32)),
        Cover::Partial => {
            let quarter = 1u64 << (2 * (level - 1));
            for q in 0..4 {
                descend(cfg, geometry, level - 1, base + q * quarter, out);
            }
        }
    }
}

/// Hilbert indices of every cell the geometry touches, as a normalised set.
///
/// Portions outside the grid are clipped; a geometry entirely outside yields
/// an empty set.
pub fn geometry_to_intervals(
    cfg: &GridConfig,
    geometry: &QueryGeometry,
) -> Result<IntervalSet, HilbertError> {
    geometry.validate(cfg)?;
    if let QueryGeometry::Raw(set) = geometry {
        return Ok(IntervalSet::from_intervals(set.iter().copied()));
    }
    let mut out = IntervalSet::new();
    descend(cfg, geometry, u32::from(cfg.order), 0, &mut out);
    Ok(out)
}
