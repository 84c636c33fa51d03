//! DNS LOC resource record (RFC 1876): text parsing, canonical printing and
//! the 16-byte RDATA encoding.
//!
//! A [`LocRecord`] keeps every field in its wire representation, so what is
//! printed is derived from exactly the integers that would be transmitted.
//! No floating point is used anywhere: seconds are read to three decimal
//! places (milliarcseconds) and metres to two (centimetres).

mod lexer;
pub mod packet;
mod parser;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::units::format_fixed;

pub use lexer::{tokenize, Direction, LocToken, Spanned};

/// DNS RR type code for LOC.
pub const LOC_RR_TYPE: u16 = 29;
pub const RDATA_LEN: usize = 16;
pub const VERSION: u8 = 0;

/// Wire value of 0 degrees latitude or longitude.
const EQUATOR: i64 = 1 << 31;
const ALTITUDE_OFFSET_CM: i64 = 10_000_000;
const MIN_ALTITUDE_CM: i64 = -ALTITUDE_OFFSET_CM;
const MAX_ALTITUDE_CM: i64 = u32::MAX as i64 - ALTITUDE_OFFSET_CM;
const MAX_LATITUDE_MAS: u64 = 90 * 3_600_000;
const MAX_LONGITUDE_MAS: u64 = 180 * 3_600_000;
const MAX_SIZE_CM: u64 = 9_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocError {
    #[error("unexpected character at offset {offset}")]
    Lex { offset: usize },
    #[error("expected {expected} at offset {offset}")]
    Syntax {
        offset: usize,
        expected: &'static str,
    },
    #[error("{field} out of range")]
    OutOfRange { field: &'static str },
    #[error("{field} has more decimal places than the record can hold")]
    TooPrecise { field: &'static str },
    #[error("RDATA must be 16 bytes, got {0}")]
    WrongLength(usize),
    #[error("unknown LOC version {0}")]
    UnknownVersion(u8),
    #[error("invalid size/precision byte {0:#04x}")]
    InvalidSizeByte(u8),
    #[error("malformed DNS packet: {0}")]
    Packet(&'static str),
}

/// A size or precision value stored as one byte: the high nibble is a
/// mantissa and the low nibble a power of ten, in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SizePrecision(u8);

impl SizePrecision {
    /// Encodes a length, rounding down to the nearest representable value.
    /// Returns `None` above 9 * 10^9 cm.
    pub fn from_centimeters(cm: u64) -> Option<Self> {
        if cm > MAX_SIZE_CM {
            return None;
        }
        let mut exponent = 0u32;
        while exponent < 9 && cm >= 10u64.pow(exponent + 1) {
            exponent += 1;
        }
        let mantissa = cm / 10u64.pow(exponent);
        if mantissa == 0 {
            return Some(Self(0));
        }
        Some(Self(((mantissa as u8) << 4) | exponent as u8))
    }

    /// Validates a wire byte. Both nibbles must be decimal digits; a zero
    /// mantissa is normalised to `0x00` since every such byte means 0 cm.
    pub fn from_byte(byte: u8) -> Result<Self, LocError> {
        let (mantissa, exponent) = (byte >> 4, byte & 0x0f);
        if mantissa > 9 || exponent > 9 {
            return Err(LocError::InvalidSizeByte(byte));
        }
        Ok(Self(if mantissa == 0 { 0 } else { byte }))
    }

    pub fn byte(self) -> u8 {
        self.0
    }

    pub fn to_centimeters(self) -> u64 {
        u64::from(self.0 >> 4) * 10u64.pow(u32::from(self.0 & 0x0f))
    }
}

/// Parsed LOC RDATA in wire units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocRecord {
    latitude: u32,
    longitude: u32,
    altitude: u32,
    size: SizePrecision,
    horiz_pre: SizePrecision,
    vert_pre: SizePrecision,
}

impl Default for LocRecord {
    /// Equator/meridian at 0 m, with RFC 1876 default size (1 m), horizontal
    /// precision (10 km) and vertical precision (10 m).
    fn default() -> Self {
        Self {
            latitude: EQUATOR as u32,
            longitude: EQUATOR as u32,
            altitude: ALTITUDE_OFFSET_CM as u32,
            size: SizePrecision(0x12),
            horiz_pre: SizePrecision(0x16),
            vert_pre: SizePrecision(0x13),
        }
    }
}

impl LocRecord {
    pub fn from_wire(
        latitude: u32,
        longitude: u32,
        altitude: u32,
        size: SizePrecision,
        horiz_pre: SizePrecision,
        vert_pre: SizePrecision,
    ) -> Result<Self, LocError> {
        if (i64::from(latitude) - EQUATOR).unsigned_abs() > MAX_LATITUDE_MAS {
            return Err(LocError::OutOfRange { field: "latitude" });
        }
        if (i64::from(longitude) - EQUATOR).unsigned_abs() > MAX_LONGITUDE_MAS {
            return Err(LocError::OutOfRange { field: "longitude" });
        }
        Ok(Self {
            latitude,
            longitude,
            altitude,
            size,
            horiz_pre,
            vert_pre,
        })
    }

    pub fn latitude_wire(&self) -> u32 {
        self.latitude
    }

    pub fn longitude_wire(&self) -> u32 {
        self.longitude
    }

    pub fn altitude_wire(&self) -> u32 {
        self.altitude
    }

    pub fn size(&self) -> SizePrecision {
        self.size
    }

    pub fn horiz_pre(&self) -> SizePrecision {
        self.horiz_pre
    }

    pub fn vert_pre(&self) -> SizePrecision {
        self.vert_pre
    }

    /// Signed milliarcseconds, positive north.
    pub fn latitude_mas(&self) -> i64 {
        i64::from(self.latitude) - EQUATOR
    }

    /// Signed milliarcseconds, positive east.
    pub fn longitude_mas(&self) -> i64 {
        i64::from(self.longitude) - EQUATOR
    }

    /// Centimetres relative to the reference spheroid.
    pub fn altitude_cm(&self) -> i64 {
        i64::from(self.altitude) - ALTITUDE_OFFSET_CM
    }

    pub fn to_rdata(&self) -> [u8; RDATA_LEN] {
        let mut out = [0u8; RDATA_LEN];
        out[0] = VERSION;
        out[1] = self.size.byte();
        out[2] = self.horiz_pre.byte();
        out[3] = self.vert_pre.byte();
        out[4..8].copy_from_slice(&self.latitude.to_be_bytes());
        out[8..12].copy_from_slice(&self.longitude.to_be_bytes());
        out[12..16].copy_from_slice(&self.altitude.to_be_bytes());
        out
    }

    pub fn from_rdata(bytes: &[u8]) -> Result<Self, LocError> {
        if bytes.len() != RDATA_LEN {
            return Err(LocError::WrongLength(bytes.len()));
        }
        if bytes[0] != VERSION {
            return Err(LocError::UnknownVersion(bytes[0]));
        }
        let word = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        Self::from_wire(
            word(4),
            word(8),
            word(12),
            SizePrecision::from_byte(bytes[1])?,
            SizePrecision::from_byte(bytes[2])?,
            SizePrecision::from_byte(bytes[3])?,
        )
    }
}

pub fn parse_loc_text(text: &str) -> Result<LocRecord, LocError> {
    parser::parse(text)
}

pub fn print_loc(record: &LocRecord) -> String {
    record.to_string()
}

pub fn encode_rdata(record: &LocRecord) -> [u8; RDATA_LEN] {
    record.to_rdata()
}

pub fn decode_rdata(bytes: &[u8]) -> Result<LocRecord, LocError> {
    LocRecord::from_rdata(bytes)
}

impl FromStr for LocRecord {
    type Err = LocError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parser::parse(s)
    }
}

fn write_angle(f: &mut fmt::Formatter<'_>, mas: i64, hemispheres: [char; 2]) -> fmt::Result {
    let magnitude = mas.unsigned_abs();
    let deg = magnitude / 3_600_000;
    let min = magnitude / 60_000 % 60;
    let sec = magnitude % 60_000;
    write!(f, "{deg}")?;
    if min != 0 || sec != 0 {
        write!(f, " {min}")?;
    }
    if sec != 0 {
        write!(f, " {}", format_fixed(sec as i64, 3))?;
    }
    write!(f, " {}", if mas < 0 { hemispheres[1] } else { hemispheres[0] })
}

impl fmt::Display for LocRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_angle(f, self.latitude_mas(), ['N', 'S'])?;
        f.write_str(" ")?;
        write_angle(f, self.longitude_mas(), ['E', 'W'])?;
        write!(f, " {}m", format_fixed(self.altitude_cm(), 2))?;
        for value in [self.size, self.horiz_pre, self.vert_pre] {
            write!(f, " {}m", format_fixed(value.to_centimeters() as i64, 2))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "52 12 40.4 N 0 5 31.9 E 22m 10m 10m 10m";

    #[test]
    fn example_record_wire_values() {
        let rec = parse_loc_text(EXAMPLE).unwrap();
        assert_eq!(rec.latitude_wire(), 2_335_444_048);
        assert_eq!(rec.longitude_wire(), 2_147_815_548);
        assert_eq!(rec.altitude_wire(), 10_002_200);
        assert_eq!(rec.size().byte(), 0x13);
        assert_eq!(rec.horiz_pre().byte(), 0x13);
        assert_eq!(rec.vert_pre().byte(), 0x13);
    }

    #[test]
    fn all_zero_record() {
        let rec = parse_loc_text("0 N 0 E 0m 0m 0m 0m").unwrap();
        assert_eq!(rec.latitude_wire(), 1 << 31);
        assert_eq!(rec.longitude_wire(), 1 << 31);
        assert_eq!(rec.altitude_wire(), 10_000_000);
        assert_eq!(
            encode_rdata(&rec),
            [0, 0, 0, 0, 0x80, 0, 0, 0, 0x80, 0, 0, 0, 0x00, 0x98, 0x96, 0x80]
        );
        assert_eq!(print_loc(&rec), "0 N 0 E 0m 0m 0m 0m");
    }

    #[test]
    fn extreme_altitude_and_pole() {
        let rec = parse_loc_text("90 0 0 N 180 0 0 E 42849672.95m").unwrap();
        assert_eq!(rec.latitude_wire(), (1u32 << 31) + 324_000_000);
        assert_eq!(rec.longitude_wire(), (1u32 << 31) + 648_000_000);
        assert_eq!(rec.altitude_wire(), u32::MAX);
        let low = parse_loc_text("0 S 0 W -100000m").unwrap();
        assert_eq!(low.altitude_wire(), 0);
    }

    #[test]
    fn omitted_fields_take_rfc_defaults() {
        let rec = parse_loc_text("0 N 0 E 0m").unwrap();
        assert_eq!(
            (rec.size().byte(), rec.horiz_pre().byte(), rec.vert_pre().byte()),
            (0x12, 0x16, 0x13)
        );
        let rec = parse_loc_text("0 N 0 E 0m 2m").unwrap();
        assert_eq!(
            (rec.size().byte(), rec.horiz_pre().byte(), rec.vert_pre().byte()),
            (0x22, 0x16, 0x13)
        );
    }

    #[test]
    fn optional_m_suffix_and_partial_fractions() {
        let with = parse_loc_text("1 2 3.5 S 4 5 6.05 W -12.5m 3m 4m 5m").unwrap();
        let without = parse_loc_text("1 2 3.5 S 4 5 6.05 W -12.5 3 4. 5.00").unwrap();
        assert_eq!(with, without);
        assert_eq!(with.altitude_cm(), -1250);
        assert_eq!(with.latitude_mas(), -((60 + 2) * 60_000 + 3_500));
        assert_eq!(with.longitude_mas(), -((4 * 60 + 5) * 60_000 + 6_050));
        assert_eq!(parse_loc_text("1 2 3. N 4 E 0m").unwrap().latitude_mas(), 3_723_000);
    }

    #[test]
    fn whitespace_is_flexible_but_required() {
        assert_eq!(
            parse_loc_text("  52\t12 40.4 N  0 5 31.9 E 22m 10m 10m 10m  ").unwrap(),
            parse_loc_text(EXAMPLE).unwrap()
        );
        assert!(parse_loc_text("52 12 40.4N 0 E 0m").is_err());
        assert!(parse_loc_text("52 12 40 .4 N 0 E 0m").is_err());
    }

    #[test]
    fn range_errors() {
        let out = |s| matches!(parse_loc_text(s), Err(LocError::OutOfRange { .. }));
        assert!(out("91 N 0 E 0m"));
        assert!(out("90 0 1 N 0 E 0m"));
        assert!(out("0 N 181 E 0m"));
        assert!(out("0 60 N 0 E 0m"));
        assert!(out("0 0 60 N 0 E 0m"));
        assert!(out("0 N 0 E -100000.01m"));
        assert!(out("0 N 0 E 42849672.96m"));
        assert!(out("0 N 0 E 0m 90000000.01m"));
        assert!(out("0 N 0 E 0m -1m"));
        assert!(parse_loc_text("0 0 59.999 N 0 E 0m").is_ok());
        assert!(parse_loc_text("0 N 0 E 0m 90000000m 90000000m 90000000m").is_ok());
    }

    #[test]
    fn malformed_input() {
        let syntax = |s| matches!(parse_loc_text(s), Err(LocError::Syntax { .. }));
        assert!(syntax(""));
        assert!(syntax("52 N"));
        assert!(syntax("52 E 0 N 0m"));
        assert!(syntax("1 2 3 4 N 0 E 0m"));
        assert!(syntax("1.5 N 0 E 0m"));
        assert!(syntax("0 N 0 E 0m 1m 1m 1m 1m"));
        assert!(syntax("0 N 0 E foo"));
        assert!(syntax("192.0.2.0"));
        assert!(matches!(
            parse_loc_text("0 0 1.2345 N 0 E 0m"),
            Err(LocError::TooPrecise { field: "latitude" })
        ));
        assert!(matches!(
            parse_loc_text("0 N 0 E 1.234m"),
            Err(LocError::TooPrecise { field: "altitude" })
        ));
    }

    #[test]
    fn canonical_printing() {
        let rec = parse_loc_text("0 N 0 E 0.00m").unwrap();
        assert!(print_loc(&rec).starts_with("0 N 0 E 0m "));
        assert_eq!(print_loc(&rec), "0 N 0 E 0m 1m 10000m 10m");
        let rec = parse_loc_text(EXAMPLE).unwrap();
        assert_eq!(print_loc(&rec), EXAMPLE);
        let rec = parse_loc_text("10 30 0.000 S 20 0 0.001 W 1.50m").unwrap();
        assert_eq!(print_loc(&rec), "10 30 S 20 0 0.001 W 1.5m 1m 10000m 10m");
    }

    #[test]
    fn sign_symmetry() {
        let n = parse_loc_text("52 12 40.4 N 0 5 31.9 E 0m").unwrap();
        let s = parse_loc_text("52 12 40.4 S 0 5 31.9 W 0m").unwrap();
        assert_eq!(u64::from(n.latitude_wire()) + u64::from(s.latitude_wire()), 1 << 32);
        assert_eq!(u64::from(n.longitude_wire()) + u64::from(s.longitude_wire()), 1 << 32);
    }

    #[test]
    fn decode_errors() {
        let good = encode_rdata(&LocRecord::default());
        assert_eq!(decode_rdata(&good[..15]), Err(LocError::WrongLength(15)));
        let mut bad = good;
        bad[0] = 1;
        assert_eq!(decode_rdata(&bad), Err(LocError::UnknownVersion(1)));
        let mut bad = good;
        bad[1] = 0xa0;
        assert_eq!(decode_rdata(&bad), Err(LocError::InvalidSizeByte(0xa0)));
        let mut bad = good;
        bad[4..8].copy_from_slice(&((1u32 << 31) + 324_000_001).to_be_bytes());
        assert!(matches!(decode_rdata(&bad), Err(LocError::OutOfRange { field: "latitude" })));
    }

    #[test]
    fn unsigned_altitude_decode() {
        let mut bytes = encode_rdata(&LocRecord::default());
        bytes[12..16].copy_from_slice(&[0xff; 4]);
        let rec = decode_rdata(&bytes).unwrap();
        assert_eq!(rec.altitude_cm(), 4_284_967_295);
        assert!(print_loc(&rec).contains(" 42849672.95m "));
    }

    #[test]
    fn size_byte_examples() {
        assert_eq!(SizePrecision::from_centimeters(1000).unwrap().byte(), 0x13);
        assert_eq!(SizePrecision::from_centimeters(0).unwrap().byte(), 0x00);
        assert_eq!(SizePrecision::from_centimeters(1050).unwrap().to_centimeters(), 1000);
        assert_eq!(SizePrecision::from_centimeters(9_000_000_000).unwrap().byte(), 0x99);
        assert_eq!(SizePrecision::from_centimeters(9_000_000_001), None);
        assert_eq!(SizePrecision::from_byte(0x05).unwrap().byte(), 0x00);
    }

    /// Brute force over all 100 mantissa/exponent pairs: the largest
    /// representable value not exceeding `cm`.
    fn representable_floor(cm: u64) -> u64 {
        (0..10u64)
            .flat_map(|m| (0..10u32).map(move |e| m * 10u64.pow(e)))
            .filter(|&v| v <= cm)
            .max()
            .unwrap()
    }

    #[test]
    fn size_encoding_rounds_down_exhaustively() {
        for cm in 0..=1_000_000u64 {
            let encoded = SizePrecision::from_centimeters(cm).unwrap();
            let decoded = encoded.to_centimeters();
            assert_eq!(decoded, representable_floor(cm), "cm = {cm}");
            assert_eq!(decoded == cm, representable_floor(cm) == cm);
            assert_eq!(SizePrecision::from_byte(encoded.byte()), Ok(encoded));
        }
    }

    #[test]
    fn size_byte_for_ten_metres_by_brute_force() {
        let found: Vec<u8> = (0..10u8)
            .flat_map(|m| (0..10u8).map(move |e| (m, e)))
            .filter(|&(m, e)| m > 0 && u64::from(m) * 10u64.pow(u32::from(e)) == 1000)
            .map(|(m, e)| (m << 4) | e)
            .collect();
        assert_eq!(found, vec![SizePrecision::from_centimeters(1000).unwrap().byte()]);
    }
}
