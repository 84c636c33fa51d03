//! Survey files: statically placed devices loaded at startup.
//!
//! One device per line, `#` starts a comment:
//!
//! ```text
//! # device id                        address          area             label
//! 6f1c0c2a9d6e4b7f8a31e2d4c5b6a790   10.0.0.20:5683   circle:2.5,1,0.4 lamp-desk
//! 0000000000000000000000000000002a   [fd00::7]:80     rect:0,0,1.2,0.8
//! 0000000000000000000000000000002b   10.0.0.21:80     intervals:10-12,55
//! ```
//!
//! Coordinates and radii are metres (up to two decimals) in the grid frame.

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use sns_core::units::parse_meters_cm;
use sns_core::{DeviceId, IntervalSet, NetworkAddress, QueryGeometry, Registry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("cannot read survey file: {0}")]
    Io(#[from] std::io::Error),
    #[error("survey line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyEntry {
    pub line: usize,
    pub device_id: DeviceId,
    pub address: NetworkAddress,
    pub area: QueryGeometry,
}

/// Parses `circle:x,y,r`, `rect:x0,y0,x1,y1` or `intervals:list`.
pub fn parse_area(text: &str) -> Result<QueryGeometry, String> {
    let (kind, args) = text
        .split_once(':')
        .ok_or_else(|| format!("area {text:?} lacks a `kind:` prefix"))?;
    if kind == "intervals" {
        return args
            .parse::<IntervalSet>()
            .map(QueryGeometry::Raw)
            .map_err(|e| e.to_string());
    }
    let nums = args
        .split(',')
        .map(|v| parse_meters_cm(v.trim()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<i64>, _>>()?;
    match (kind, nums.as_slice()) {
        ("circle", &[x, y, r]) => Ok(QueryGeometry::Circle {
            center_x_cm: x,
            center_y_cm: y,
            radius_cm: u64::try_from(r).map_err(|_| "negative radius".to_string())?,
        }),
        ("rect", &[x0, y0, x1, y1]) => Ok(QueryGeometry::Rect {
            min_x_cm: x0.min(x1),
            min_y_cm: y0.min(y1),
            max_x_cm: x0.max(x1),
            max_y_cm: y0.max(y1),
        }),
        ("circle" | "rect", _) => Err(format!("wrong number of values for {kind}")),
        _ => Err(format!("unknown area kind {kind:?}")),
    }
}

pub fn parse_survey(text: &str) -> Result<Vec<SurveyEntry>, SurveyError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| SurveyError::Line { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [id, addr, area, rest @ ..] = fields.as_slice() else {
            return Err(err("expected `device_id address area [label]`".into()));
        };
        if rest.len() > 1 {
            return Err(err("label must be a single word".into()));
        }
        let device_id: DeviceId = id
            .parse()
            .map_err(|_| err(format!("bad device id {id:?}")))?;
        if !seen.insert(device_id) {
            return Err(err(format!("duplicate device id {device_id}")));
        }
        let sock: SocketAddr = addr
            .parse()
            .map_err(|_| err(format!("bad address {addr:?}")))?;
        let address = NetworkAddress::new(sock.ip(), sock.port(), rest.first().map(|s| s.to_string()))
            .map_err(|e| err(e.to_string()))?;
        let area = parse_area(area).map_err(err)?;
        out.push(SurveyEntry {
            line,
            device_id,
            address,
            area,
        });
    }
    Ok(out)
}

/// Registers every surveyed device at version 0, skipping devices the
/// registry already holds (for example from a newer snapshot). Returns the
/// number registered.
pub fn load_survey(registry: &Registry, path: &Path) -> Result<usize, SurveyError> {
    let entries = parse_survey(&fs::read_to_string(path)?)?;
    let mut loaded = 0;
    for e in entries {
        if registry.get(&e.device_id).is_some() {
            continue;
        }
        registry
            .register_or_update(e.device_id, e.address, &e.area, 0)
            .map_err(|err| SurveyError::Line {
                line: e.line,
                message: err.to_string(),
            })?;
        loaded += 1;
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sns_core::{CellId, GridConfig, Interval};

    #[test]
    fn areas() {
        assert_eq!(
            parse_area("circle:2.5,-1,0.4").unwrap(),
            QueryGeometry::Circle {
                center_x_cm: 250,
                center_y_cm: -100,
                radius_cm: 40
            }
        );
        assert_eq!(
            parse_area("rect:1.2,0.8,0,0").unwrap(),
            QueryGeometry::Rect {
                min_x_cm: 0,
                min_y_cm: 0,
                max_x_cm: 120,
                max_y_cm: 80
            }
        );
        let raw = parse_area("intervals:10-12,55").unwrap();
        assert_eq!(
            raw,
            QueryGeometry::Raw(IntervalSet::from_intervals([
                Interval::new(10, 12).unwrap(),
                Interval::point(55)
            ]))
        );
        for bad in ["circle:1,2", "blob:1", "circle", "circle:1,2,-3", "rect:1,2,3,4.567"] {
            assert!(parse_area(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_file() {
        assert!(parse_survey("").unwrap().is_empty());
        assert!(parse_survey("# nothing\n\n   \n").unwrap().is_empty());
    }

    #[test]
    fn three_devices() {
        let text = "\
0000000000000000000000000000000a 10.0.0.1:80 circle:1,1,0.5 lamp # desk lamp
0000000000000000000000000000000b [fd00::7]:5683 rect:0,0,1.2,0.8
0000000000000000000000000000000c 10.0.0.3:80 intervals:10-12,55
";
        let entries = parse_survey(text).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].address.label.as_deref(), Some("lamp"));
        let reg = Registry::new(GridConfig::new(6, 10).unwrap(), CellId(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("survey");
        fs::write(&path, text).unwrap();
        assert_eq!(load_survey(&reg, &path).unwrap(), 3);
        assert_eq!(reg.len(), 3);
        assert!(reg.areas().iter().all(|a| a.version == 0));
        // already present devices are left alone
        assert_eq!(load_survey(&reg, &path).unwrap(), 0);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "0000000000000000000000000000000a 10.0.0.1:80 circle:1,1,0.5\nnot a line\n";
        let err = parse_survey(text).unwrap_err();
        assert!(err.to_string().starts_with("survey line 2:"), "{err}");
        let dup = "0000000000000000000000000000000a 10.0.0.1:80 circle:1,1,0.5\n\n\
                   0000000000000000000000000000000a 10.0.0.2:80 circle:1,1,0.5\n";
        let err = parse_survey(dup).unwrap_err();
        assert!(err.to_string().starts_with("survey line 3: duplicate"), "{err}");
    }
}
