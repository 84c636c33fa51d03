//! Fixed-point decimal helpers.
//!
//! Everything in this crate is integral (milliarcseconds, centimetres), so
//! decimal text is converted digit by digit and never goes through floats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("invalid decimal number {0:?}")]
    Invalid(String),
    #[error("{0:?} has more than {1} decimal places")]
    TooPrecise(String, u32),
    #[error("{0:?} is out of range")]
    OutOfRange(String),
}

/// Combines integer and fractional digit strings into `int * 10^places + frac`.
///
/// `frac` may be empty or shorter than `places`; longer is an error.
pub fn fixed_from_digits(int: &str, frac: &str, places: u32) -> Result<u64, UnitError> {
    let whole = || format!("{int}.{frac}");
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return Err(UnitError::Invalid(whole()));
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(UnitError::Invalid(whole()));
    }
    if frac.len() as u32 > places {
        return Err(UnitError::TooPrecise(whole(), places));
    }
    let mut value: u64 = 0;
    for b in int.bytes() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u64::from(b - b'0')))
            .ok_or_else(|| UnitError::OutOfRange(whole()))?;
    }
    let mut scaled_frac: u64 = 0;
    for i in 0..places as usize {
        let digit = frac.as_bytes().get(i).map_or(0, |b| u64::from(b - b'0'));
        scaled_frac = scaled_frac * 10 + digit;
    }
    value
        .checked_mul(10u64.pow(places))
        .and_then(|v| v.checked_add(scaled_frac))
        .ok_or_else(|| UnitError::OutOfRange(whole()))
}

/// Parses a signed decimal such as `-12.5` into units of `10^-places`.
pub fn parse_fixed(text: &str, places: u32) -> Result<i64, UnitError> {
    let (negative, rest) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int, frac) = rest.split_once('.').unwrap_or((rest, ""));
    let magnitude = fixed_from_digits(int, frac, places)?;
    let magnitude = i64::try_from(magnitude).map_err(|_| UnitError::OutOfRange(text.into()))?;
    Ok(if negative { -magnitude } else { magnitude })
}

/// Parses metres (optionally suffixed with `m`) into centimetres.
pub fn parse_meters_cm(text: &str) -> Result<i64, UnitError> {
    parse_fixed(text.strip_suffix('m').unwrap_or(text), 2)
}

/// Formats `value * 10^-places` with trailing fractional zeros removed.
pub fn format_fixed(value: i64, places: u32) -> String {
    let scale = 10u64.pow(places);
    let magnitude = value.unsigned_abs();
    let sign = if value < 0 { "-" } else { "" };
    let int = magnitude / scale;
    let frac = magnitude % scale;
    if frac == 0 {
        return format!("{sign}{int}");
    }
    let digits = format!("{frac:0width$}", width = places as usize);
    format!("{sign}{int}.{}", digits.trim_end_matches('0'))
}
