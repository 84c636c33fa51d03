use super::lexer::{tokenize, Direction, LocToken, Spanned};
use super::{
    LocError, LocRecord, SizePrecision, ALTITUDE_OFFSET_CM, MAX_ALTITUDE_CM, MAX_LATITUDE_MAS,
    MAX_LONGITUDE_MAS, MAX_SIZE_CM, MIN_ALTITUDE_CM,
};
use crate::units::{fixed_from_digits, UnitError};

struct Parser<'a> {
    tokens: Vec<Spanned<'a>>,
    pos: usize,
    len: usize,
}

#[derive(Clone, Copy)]
enum Axis {
    Latitude,
    Longitude,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<LocToken<'a>> {
        self.tokens.get(self.pos).map(|s| s.token)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |s| s.offset)
    }

    fn syntax(&self, expected: &'static str) -> LocError {
        LocError::Syntax {
            offset: self.offset(),
            expected,
        }
    }

    fn space(&mut self) -> Result<(), LocError> {
        match self.peek() {
            Some(LocToken::Whitespace) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.syntax("whitespace")),
        }
    }

    fn integer(&mut self, expected: &'static str) -> Result<&'a str, LocError> {
        match self.peek() {
            Some(LocToken::Integer(digits)) => {
                self.pos += 1;
                Ok(digits)
            }
            _ => Err(self.syntax(expected)),
        }
    }

    /// `deg [min [sec[.frac]]] dir`, returned as signed milliarcseconds.
    fn angle(&mut self, axis: Axis) -> Result<i64, LocError> {
        let (field, max_deg, max_mas) = match axis {
            Axis::Latitude => ("latitude", 90, MAX_LATITUDE_MAS),
            Axis::Longitude => ("longitude", 180, MAX_LONGITUDE_MAS),
        };
        let mut parts: Vec<(&'a str, &'a str)> = Vec::with_capacity(3);
        parts.push((self.integer("degrees")?, ""));
        let direction = loop {
            self.space()?;
            match self.peek() {
                Some(LocToken::Direction(dir)) => {
                    self.pos += 1;
                    break dir;
                }
                Some(LocToken::Integer(_)) if parts.len() < 3 => {
                    let digits = self.integer("integer")?;
                    let mut frac = "";
                    if parts.len() == 2 && self.peek() == Some(LocToken::Dot) {
                        self.pos += 1;
                        if let Some(LocToken::Integer(f)) = self.peek() {
                            self.pos += 1;
                            frac = f;
                        }
                    }
                    parts.push((digits, frac));
                }
                _ => return Err(self.syntax("integer or hemisphere letter")),
            }
        };
        let (positive, negative) = match axis {
            Axis::Latitude => (Direction::North, Direction::South),
            Axis::Longitude => (Direction::East, Direction::West),
        };
        let sign = if direction == positive {
            1
        } else if direction == negative {
            -1
        } else {
            return Err(LocError::Syntax {
                offset: self.tokens[self.pos - 1].offset,
                expected: match axis {
                    Axis::Latitude => "N or S",
                    Axis::Longitude => "E or W",
                },
            });
        };

        let range = |what: &'static str| LocError::OutOfRange { field: what };
        let unit = |e: UnitError| match e {
            UnitError::TooPrecise(..) => LocError::TooPrecise { field },
            _ => range(field),
        };
        let deg = fixed_from_digits(parts[0].0, "", 0).map_err(unit)?;
        let min = match parts.get(1) {
            Some((digits, _)) => fixed_from_digits(digits, "", 0).map_err(unit)?,
            None => 0,
        };
        let sec_mas = match parts.get(2) {
            Some((digits, frac)) => fixed_from_digits(digits, frac, 3).map_err(unit)?,
            None => 0,
        };
        if deg > max_deg {
            return Err(range(field));
        }
        if min > 59 {
            return Err(range(field));
        }
        if sec_mas >= 60_000 {
            return Err(range(field));
        }
        let mas = ((deg * 60 + min) * 60) * 1000 + sec_mas;
        if mas > max_mas {
            return Err(range(field));
        }
        Ok(sign * mas as i64)
    }

    /// `[-]int[.[frac]][m]` in centimetres. Either a single metres token or
    /// adjacent minus/integer/dot tokens.
    fn meters(&mut self, field: &'static str) -> Result<i64, LocError> {
        let unit = |e: UnitError| match e {
            UnitError::TooPrecise(..) => LocError::TooPrecise { field },
            _ => LocError::OutOfRange { field },
        };
        let (negative, magnitude) = match self.peek() {
            Some(LocToken::Meters { negative, int, frac }) => {
                self.pos += 1;
                (negative, fixed_from_digits(int, frac.unwrap_or(""), 2).map_err(unit)?)
            }
            Some(LocToken::Minus | LocToken::Integer(_)) => {
                let negative = self.peek() == Some(LocToken::Minus);
                if negative {
                    self.pos += 1;
                }
                let int = self.integer("metres")?;
                let mut frac = "";
                if self.peek() == Some(LocToken::Dot) {
                    self.pos += 1;
                    if let Some(LocToken::Integer(f)) = self.peek() {
                        self.pos += 1;
                        frac = f;
                    }
                }
                (negative, fixed_from_digits(int, frac, 2).map_err(unit)?)
            }
            _ => return Err(self.syntax("metres")),
        };
        let magnitude = i64::try_from(magnitude).map_err(|_| LocError::OutOfRange { field })?;
        Ok(if negative { -magnitude } else { magnitude })
    }

    /// True when only optional trailing whitespace remains.
    fn at_end(&self) -> bool {
        match self.peek() {
            None => true,
            Some(LocToken::Whitespace) => self.pos + 1 >= self.tokens.len(),
            _ => false,
        }
    }
}

fn size_field(cm: i64, field: &'static str) -> Result<SizePrecision, LocError> {
    if !(0..=MAX_SIZE_CM as i64).contains(&cm) {
        return Err(LocError::OutOfRange { field });
    }
    SizePrecision::from_centimeters(cm as u64).ok_or(LocError::OutOfRange { field })
}

pub(super) fn parse(text: &str) -> Result<LocRecord, LocError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        len: text.len(),
    };
    if parser.peek() == Some(LocToken::Whitespace) {
        parser.pos += 1;
    }
    let latitude = parser.angle(Axis::Latitude)?;
    parser.space()?;
    let longitude = parser.angle(Axis::Longitude)?;
    parser.space()?;
    let altitude = parser.meters("altitude")?;
    if !(MIN_ALTITUDE_CM..=MAX_ALTITUDE_CM).contains(&altitude) {
        return Err(LocError::OutOfRange { field: "altitude" });
    }

    let mut record = LocRecord {
        latitude: (super::EQUATOR + latitude) as u32,
        longitude: (super::EQUATOR + longitude) as u32,
        altitude: (altitude + ALTITUDE_OFFSET_CM) as u32,
        ..LocRecord::default()
    };
    for (i, field) in ["size", "horizontal precision", "vertical precision"]
        .into_iter()
        .enumerate()
    {
        if parser.at_end() {
            return Ok(record);
        }
        parser.space()?;
        let value = size_field(parser.meters(field)?, field)?;
        match i {
            0 => record.size = value,
            1 => record.horiz_pre = value,
            _ => record.vert_pre = value,
        }
    }
    if parser.at_end() {
        Ok(record)
    } else {
        Err(parser.syntax("end of record"))
    }
}
