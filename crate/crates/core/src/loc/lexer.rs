//! Tokeniser for LOC record text.
//!
//! Metres are lexed as a single token only when the trailing `m` is present.
//! The forms without `m` are assembled by the parser out of integer, dot and
//! minus tokens, so dotted quads such as `192.0.2.0` never turn into a
//! metres token.

use super::LocError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocToken<'a> {
    Integer(&'a str),
    Dot,
    Minus,
    /// `-?digits(.digits?)?m`; `frac` is `None` when no dot was written.
    Meters {
        negative: bool,
        int: &'a str,
        frac: Option<&'a str>,
    },
    Direction(Direction),
    CharString(&'a str),
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spanned<'a> {
    pub token: LocToken<'a>,
    pub offset: usize,
}

fn is_space(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

fn digit_run(bytes: &[u8], start: usize) -> usize {
    bytes[start..].iter().take_while(|b| b.is_ascii_digit()).count()
}

/// Tries `-?digits(.digits?)?m` at `start`, requiring a token boundary after
/// the `m`. Returns the token and its length.
fn meters_at(text: &str, start: usize) -> Option<(LocToken<'_>, usize)> {
    let bytes = text.as_bytes();
    let mut pos = start;
    let negative = bytes[pos] == b'-';
    if negative {
        pos += 1;
    }
    let int_len = digit_run(bytes, pos);
    if int_len == 0 {
        return None;
    }
    let int = &text[pos..pos + int_len];
    pos += int_len;
    let mut frac = None;
    if bytes.get(pos) == Some(&b'.') {
        let frac_len = digit_run(bytes, pos + 1);
        frac = Some(&text[pos + 1..pos + 1 + frac_len]);
        pos += 1 + frac_len;
    }
    if bytes.get(pos) != Some(&b'm') {
        return None;
    }
    pos += 1;
    match bytes.get(pos) {
        None => {}
        Some(&b) if is_space(b) => {}
        Some(_) => return None,
    }
    Some((LocToken::Meters { negative, int, frac }, pos - start))
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned<'_>>, LocError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let b = bytes[pos];
        let (token, len) = if is_space(b) {
            let len = bytes[pos..].iter().take_while(|b| is_space(**b)).count();
            (LocToken::Whitespace, len)
        } else if b.is_ascii_digit() || b == b'-' {
            if let Some(found) = meters_at(text, pos) {
                found
            } else if b == b'-' {
                (LocToken::Minus, 1)
            } else {
                let len = digit_run(bytes, pos);
                (LocToken::Integer(&text[pos..pos + len]), len)
            }
        } else if b == b'.' {
            (LocToken::Dot, 1)
        } else if b.is_ascii_control() {
            return Err(LocError::Lex { offset: pos });
        } else {
            let len = text[pos..]
                .bytes()
                .take_while(|b| !is_space(*b))
                .count();
            let word = &text[pos..pos + len];
            let token = match word {
                "N" => LocToken::Direction(Direction::North),
                "S" => LocToken::Direction(Direction::South),
                "E" => LocToken::Direction(Direction::East),
                "W" => LocToken::Direction(Direction::West),
                _ => LocToken::CharString(word),
            };
            (token, len)
        };
        tokens.push(Spanned { token, offset: pos });
        pos += len;
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<LocToken<'_>> {
        tokenize(text).unwrap().into_iter().map(|s| s.token).collect()
    }

    #[test]
    fn dotted_quad_is_not_meters() {
        use LocToken::*;
        assert_eq!(
            kinds("192.0.2.0"),
            vec![Integer("192"), Dot, Integer("0"), Dot, Integer("2"), Dot, Integer("0")]
        );
    }

    #[test]
    fn meters_require_the_suffix() {
        use LocToken::*;
        assert_eq!(
            kinds("0m -12.5m 3.m 7"),
            vec![
                Meters { negative: false, int: "0", frac: None },
                Whitespace,
                Meters { negative: true, int: "12", frac: Some("5") },
                Whitespace,
                Meters { negative: false, int: "3", frac: Some("") },
                Whitespace,
                Integer("7"),
            ]
        );
    }

    #[test]
    fn seconds_and_directions() {
        use LocToken::*;
        assert_eq!(
            kinds("40.4 N\tE"),
            vec![
                Integer("40"),
                Dot,
                Integer("4"),
                Whitespace,
                Direction(super::Direction::North),
                Whitespace,
                Direction(super::Direction::East),
            ]
        );
    }

    #[test]
    fn words_and_glued_suffixes() {
        use LocToken::*;
        assert_eq!(kinds("0mx"), vec![Integer("0"), CharString("mx")]);
        assert_eq!(kinds("NE"), vec![CharString("NE")]);
        assert_eq!(kinds("- 1"), vec![Minus, Whitespace, Integer("1")]);
    }

    #[test]
    fn control_characters_are_rejected() {
        assert_eq!(tokenize("1\n2"), Err(LocError::Lex { offset: 1 }));
    }
}
