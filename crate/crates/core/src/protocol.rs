//! Binary wire format for queries, updates, responses and errors.
//!
//! Every message starts with a fixed 20-byte header followed by an options
//! area and a type-specific body. All integers are big-endian.
//!
//! ```text
//! 0      version        u8   = 1
//! 1      type           u8   1 QUERY_GEOM .. 6 ERROR
//! 2..10  request_id     u64  echoed in the reply
//! 10..18 cell_id        u64
//! 18..20 options_len    u16  bytes of options that follow
//!        options        (type u8, len u16, value)*   1 = auth token, 2 = padding
//!        body
//! ```
//!
//! The full byte layouts, with examples, are in `docs/protocol.md`.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::hilbert::QueryGeometry;
use crate::interval::{Interval, IntervalSet};
use crate::registry::{CellId, DeviceId, Match, NetworkAddress};
use crate::wire::{Reader, WireError, Writer};

pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
/// Largest datagram either side sends or accepts over UDP.
pub const MAX_UDP_MESSAGE: usize = 1400;
pub const MIN_TOKEN_LEN: usize = 16;
pub const MAX_TOKEN_LEN: usize = 64;

const OPT_AUTH: u8 = 1;
const OPT_PADDING: u8 = 2;
const OPT_HEADER_LEN: usize = 3;

const SHAPE_CIRCLE: u8 = 1;
const SHAPE_RECT: u8 = 2;
const AREA_INTERVALS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    QueryGeom = 1,
    QueryIntervals = 2,
    Update = 3,
    Deregister = 4,
    Response = 5,
    Error = 6,
}

impl MessageType {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::QueryGeom,
            2 => Self::QueryIntervals,
            3 => Self::Update,
            4 => Self::Deregister,
            5 => Self::Response,
            6 => Self::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    TooManyResults,
    Unauthorized,
    ResponseTooLarge,
    CellMismatch,
    StaleVersion,
    Other(u16),
}

impl ErrorCode {
    pub fn code(self) -> u16 {
        match self {
            Self::Malformed => 1,
            Self::UnsupportedVersion => 2,
            Self::TooManyResults => 3,
            Self::Unauthorized => 4,
            Self::ResponseTooLarge => 5,
            Self::CellMismatch => 6,
            Self::StaleVersion => 7,
            Self::Other(c) => c,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            1 => Self::Malformed,
            2 => Self::UnsupportedVersion,
            3 => Self::TooManyResults,
            4 => Self::Unauthorized,
            5 => Self::ResponseTooLarge,
            6 => Self::CellMismatch,
            7 => Self::StaleVersion,
            c => Self::Other(c),
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Malformed => "MALFORMED",
            Self::UnsupportedVersion => "UNSUPPORTED_VERSION",
            Self::TooManyResults => "TOO_MANY_RESULTS",
            Self::Unauthorized => "UNAUTHORIZED",
            Self::ResponseTooLarge => "RESPONSE_TOO_LARGE",
            Self::CellMismatch => "CELL_MISMATCH",
            Self::StaleVersion => "STALE_VERSION",
            Self::Other(c) => return write!(f, "ERROR_{c}"),
        };
        f.write_str(name)
    }
}

/// Opaque shared secret, 16 to 64 bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AuthToken(Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("auth token must be {MIN_TOKEN_LEN} to {MAX_TOKEN_LEN} bytes")]
pub struct TokenLengthError;

impl AuthToken {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, TokenLengthError> {
        let bytes = bytes.into();
        if (MIN_TOKEN_LEN..=MAX_TOKEN_LEN).contains(&bytes.len()) {
            Ok(Self(bytes))
        } else {
            Err(TokenLengthError)
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Constant-time comparison.
    pub fn matches(&self, other: &AuthToken) -> bool {
        self.0.ct_eq(&other.0).into()
    }
}

impl fmt::Debug for AuthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthToken({} bytes)", self.0.len())
    }
}

/// Compact query shape in 32-bit centimetre coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Circle {
        center_x_cm: i32,
        center_y_cm: i32,
        radius_cm: u32,
    },
    Rect {
        min_x_cm: i32,
        min_y_cm: i32,
        max_x_cm: i32,
        max_y_cm: i32,
    },
}

impl Shape {
    pub fn to_geometry(self) -> QueryGeometry {
        match self {
            Shape::Circle {
                center_x_cm,
                center_y_cm,
                radius_cm,
            } => QueryGeometry::Circle {
                center_x_cm: center_x_cm.into(),
                center_y_cm: center_y_cm.into(),
                radius_cm: radius_cm.into(),
            },
            Shape::Rect {
                min_x_cm,
                min_y_cm,
                max_x_cm,
                max_y_cm,
            } => QueryGeometry::Rect {
                min_x_cm: min_x_cm.into(),
                min_y_cm: min_y_cm.into(),
                max_x_cm: max_x_cm.into(),
                max_y_cm: max_y_cm.into(),
            },
        }
    }
}

/// Area carried by an update: a shape or raw curve intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Area {
    Shape(Shape),
    Intervals(Vec<Interval>),
}

impl Area {
    pub fn to_geometry(&self) -> QueryGeometry {
        match self {
            Area::Shape(shape) => shape.to_geometry(),
            Area::Intervals(list) => {
                QueryGeometry::Raw(IntervalSet::from_intervals(list.iter().copied()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    /// `max_results` of 0 asks for the server default.
    QueryGeom { shape: Shape, max_results: u16 },
    QueryIntervals {
        intervals: Vec<Interval>,
        max_results: u16,
    },
    Update {
        device_id: DeviceId,
        version: u64,
        address: NetworkAddress,
        area: Area,
    },
    Deregister { device_id: DeviceId },
    Response { results: Vec<Match> },
    Error { code: ErrorCode, detail: String },
}

impl Body {
    pub fn message_type(&self) -> MessageType {
        match self {
            Body::QueryGeom { .. } => MessageType::QueryGeom,
            Body::QueryIntervals { .. } => MessageType::QueryIntervals,
            Body::Update { .. } => MessageType::Update,
            Body::Deregister { .. } => MessageType::Deregister,
            Body::Response { .. } => MessageType::Response,
            Body::Error { .. } => MessageType::Error,
        }
    }

    /// An error whose detail is `key=value`, as used for counts and
    /// versions.
    pub fn error_with_value(code: ErrorCode, key: &str, value: u64) -> Self {
        Body::Error {
            code,
            detail: format!("{key}={value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub request_id: u64,
    pub cell_id: CellId,
    pub auth: Option<AuthToken>,
    /// Zero bytes appended in a padding option, letting a UDP client make
    /// room for a larger reply.
    pub padding: u16,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
}

impl DecodeError {
    pub fn code(&self) -> ErrorCode {
        match self {
            DecodeError::Malformed(_) => ErrorCode::Malformed,
            DecodeError::UnsupportedVersion(_) => ErrorCode::UnsupportedVersion,
        }
    }
}

impl From<WireError> for DecodeError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Truncated => DecodeError::Malformed("truncated"),
            WireError::Invalid(what) => DecodeError::Malformed(what),
        }
    }
}

impl Message {
    pub fn new(request_id: u64, cell_id: CellId, body: Body) -> Self {
        Self {
            request_id,
            cell_id,
            auth: None,
            padding: 0,
            body,
        }
    }

    /// A reply echoing the request id and cell.
    pub fn reply(&self, body: Body) -> Self {
        Self::new(self.request_id, self.cell_id, body)
    }

    pub fn error(request_id: u64, cell_id: CellId, code: ErrorCode, detail: impl Into<String>) -> Self {
        Self::new(
            request_id,
            cell_id,
            Body::Error {
                code,
                detail: detail.into(),
            },
        )
    }

    pub fn message_type(&self) -> MessageType {
        self.body.message_type()
    }

    /// Numeric value of a `key=value` error detail.
    pub fn detail_value(&self, key: &str) -> Option<u64> {
        match &self.body {
            Body::Error { detail, .. } => detail
                .split(|c: char| c == ';' || c.is_whitespace())
                .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
                .and_then(|v| v.parse().ok()),
            _ => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        self.encode().len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(PROTOCOL_VERSION);
        w.u8(self.message_type() as u8);
        w.u64(self.request_id);
        w.u64(self.cell_id.0);
        let mut options_len = 0;
        if let Some(token) = &self.auth {
            options_len += OPT_HEADER_LEN + token.0.len();
        }
        if self.padding > 0 {
            options_len += OPT_HEADER_LEN + usize::from(self.padding);
        }
        w.u16(options_len as u16);
        if let Some(token) = &self.auth {
            w.u8(OPT_AUTH);
            w.u16(token.0.len() as u16);
            w.bytes(&token.0);
        }
        if self.padding > 0 {
            w.u8(OPT_PADDING);
            w.u16(self.padding);
            w.buf.resize(w.buf.len() + usize::from(self.padding), 0);
        }
        encode_body(&mut w, &self.body);
        w.buf
    }

    /// Decodes exactly one message; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let version = r.u8().map_err(|_| DecodeError::Malformed("empty"))?;
        if version != PROTOCOL_VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        let kind = MessageType::from_byte(r.u8()?).ok_or(DecodeError::Malformed("unknown type"))?;
        let request_id = r.u64()?;
        let cell_id = CellId(r.u64()?);
        let options_len = usize::from(r.u16()?);
        let mut opts = Reader::new(r.take(options_len)?);
        let mut auth = None;
        let mut padding = None;
        while opts.remaining() > 0 {
            let kind = opts.u8()?;
            let len = opts.u16()?;
            let value = opts.take(usize::from(len))?;
            match kind {
                OPT_AUTH if auth.is_none() => {
                    auth = Some(
                        AuthToken::new(value).map_err(|_| DecodeError::Malformed("token length"))?,
                    );
                }
                OPT_PADDING if padding.is_none() && len > 0 => {
                    if value.iter().any(|b| *b != 0) {
                        return Err(DecodeError::Malformed("non-zero padding"));
                    }
                    padding = Some(len);
                }
                _ => return Err(DecodeError::Malformed("bad option")),
            }
        }
        let body = decode_body(kind, &mut r)?;
        r.finish()?;
        Ok(Self {
            request_id,
            cell_id,
            auth,
            padding: padding.unwrap_or(0),
            body,
        })
    }
}

fn encode_shape(w: &mut Writer, shape: &Shape) {
    match *shape {
        Shape::Circle {
            center_x_cm,
            center_y_cm,
            radius_cm,
        } => {
            w.u8(SHAPE_CIRCLE);
            w.i32(center_x_cm);
            w.i32(center_y_cm);
            w.u32(radius_cm);
        }
        Shape::Rect {
            min_x_cm,
            min_y_cm,
            max_x_cm,
            max_y_cm,
        } => {
            w.u8(SHAPE_RECT);
            w.i32(min_x_cm);
            w.i32(min_y_cm);
            w.i32(max_x_cm);
            w.i32(max_y_cm);
        }
    }
}

fn encode_intervals(w: &mut Writer, intervals: &[Interval]) {
    w.u16(intervals.len() as u16);
    for iv in intervals {
        w.interval(iv);
    }
}

fn encode_body(w: &mut Writer, body: &Body) {
    match body {
        Body::QueryGeom { shape, max_results } => {
            encode_shape(w, shape);
            w.u16(*max_results);
        }
        Body::QueryIntervals {
            intervals,
            max_results,
        } => {
            w.u16(*max_results);
            encode_intervals(w, intervals);
        }
        Body::Update {
            device_id,
            version,
            address,
            area,
        } => {
            w.device_id(device_id);
            w.u64(*version);
            w.address(address);
            match area {
                Area::Shape(shape) => encode_shape(w, shape),
                Area::Intervals(list) => {
                    w.u8(AREA_INTERVALS);
                    encode_intervals(w, list);
                }
            }
        }
        Body::Deregister { device_id } => w.device_id(device_id),
        Body::Response { results } => {
            w.u16(results.len() as u16);
            for m in results {
                w.device_id(&m.device_id);
                w.address(&m.address);
                encode_intervals(w, m.matched.intervals());
            }
        }
        Body::Error { code, detail } => {
            w.u16(code.code());
            w.u16(detail.len() as u16);
            w.bytes(detail.as_bytes());
        }
    }
}

fn decode_shape_fields(r: &mut Reader<'_>, tag: u8) -> Result<Shape, DecodeError> {
    match tag {
        SHAPE_CIRCLE => Ok(Shape::Circle {
            center_x_cm: r.i32()?,
            center_y_cm: r.i32()?,
            radius_cm: r.u32()?,
        }),
        SHAPE_RECT => Ok(Shape::Rect {
            min_x_cm: r.i32()?,
            min_y_cm: r.i32()?,
            max_x_cm: r.i32()?,
            max_y_cm: r.i32()?,
        }),
        _ => Err(DecodeError::Malformed("unknown shape")),
    }
}

fn decode_intervals(r: &mut Reader<'_>) -> Result<Vec<Interval>, DecodeError> {
    let count = usize::from(r.u16()?);
    Ok(r.intervals(count)?)
}

fn decode_body(kind: MessageType, r: &mut Reader<'_>) -> Result<Body, DecodeError> {
    Ok(match kind {
        MessageType::QueryGeom => {
            let tag = r.u8()?;
            let shape = decode_shape_fields(r, tag)?;
            Body::QueryGeom {
                shape,
                max_results: r.u16()?,
            }
        }
        MessageType::QueryIntervals => {
            let max_results = r.u16()?;
            Body::QueryIntervals {
                intervals: decode_intervals(r)?,
                max_results,
            }
        }
        MessageType::Update => {
            let device_id = r.device_id()?;
            let version = r.u64()?;
            let address = r.address()?;
            let area = match r.u8()? {
                AREA_INTERVALS => Area::Intervals(decode_intervals(r)?),
                tag => Area::Shape(decode_shape_fields(r, tag)?),
            };
            Body::Update {
                device_id,
                version,
                address,
                area,
            }
        }
        MessageType::Deregister => Body::Deregister {
            device_id: r.device_id()?,
        },
        MessageType::Response => {
            let count = usize::from(r.u16()?);
            // each result needs well over 16 bytes
            if count.saturating_mul(16) > r.remaining() {
                return Err(DecodeError::Malformed("truncated"));
            }
            let mut results = Vec::with_capacity(count);
            for _ in 0..count {
                let device_id = r.device_id()?;
                let address = r.address()?;
                let list = decode_intervals(r)?;
                let matched = IntervalSet::from_intervals(list.iter().copied());
                if matched.intervals() != list.as_slice() {
                    return Err(DecodeError::Malformed("matched intervals not normalised"));
                }
                results.push(Match {
                    device_id,
                    address,
                    matched,
                });
            }
            Body::Response { results }
        }
        MessageType::Error => {
            let code = ErrorCode::from_code(r.u16()?);
            let len = usize::from(r.u16()?);
            let detail = std::str::from_utf8(r.take(len)?)
                .map_err(|_| DecodeError::Malformed("detail is not UTF-8"))?
                .to_owned();
            Body::Error { code, detail }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Udp,
    Tcp,
}

/// Keeps UDP replies no larger than the request that caused them.
///
/// An oversized UDP result list is replaced by `RESPONSE_TOO_LARGE` carrying
/// the result count, telling the client to retry over TCP. Oversized error
/// replies, and result lists where even the replacement does not fit, are
/// dropped (`None`). TCP replies pass through untouched.
pub fn amplification_guard(
    request_len: usize,
    response: Message,
    transport: Transport,
) -> Option<Message> {
    if transport == Transport::Tcp {
        return Some(response);
    }
    if response.encoded_len() <= request_len {
        return Some(response);
    }
    let Body::Response { results } = &response.body else {
        return None;
    };
    let count = results.len() as u64;
    let replacement = response.reply(Body::error_with_value(
        ErrorCode::ResponseTooLarge,
        "count",
        count,
    ));
    (replacement.encoded_len() <= request_len).then_some(replacement)
}

/// Largest TCP frame either side accepts.
pub const MAX_TCP_FRAME: usize = 16 << 20;

/// Writes one length-prefixed (u32, big-endian) TCP frame.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)
}

/// Reads one frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame<R: Read>(r: &mut R, max_len: usize) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > max_len {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

/// Recently sent replies keyed by peer and request id, so a retransmitted
/// request gets the original answer instead of being applied twice.
pub struct ResponseCache {
    ttl: Duration,
    capacity: usize,
    entries: Mutex<HashMap<(SocketAddr, u64), (Instant, Vec<u8>)>>,
}

impl ResponseCache {
    pub const DEFAULT_TTL: Duration = Duration::from_secs(2);

    pub fn new(ttl: Duration, capacity: usize) -> Self {
        Self {
            ttl,
            capacity,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, peer: SocketAddr, request_id: u64) -> Option<Vec<u8>> {
        let entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        let (at, bytes) = entries.get(&(peer, request_id))?;
        (at.elapsed() < self.ttl).then(|| bytes.clone())
    }

    /// Stores a reply. When full, expired entries are purged first; if none
    /// have expired the reply is not cached.
    pub fn insert(&self, peer: SocketAddr, request_id: u64, reply: Vec<u8>) {
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        if entries.len() >= self.capacity {
            let ttl = self.ttl;
            entries.retain(|_, (at, _)| at.elapsed() < ttl);
            if entries.len() >= self.capacity {
                return;
            }
        }
        entries.insert((peer, request_id), (Instant::now(), reply));
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ResponseCache {
    fn default() -> Self {
        Self::new(Self::DEFAULT_TTL, 4096)
    }
}
