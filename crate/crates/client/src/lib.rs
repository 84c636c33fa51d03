//! Client for the spatial name system.
//!
//! Requests go over UDP first. A `RESPONSE_TOO_LARGE` reply, or a request
//! too big for one datagram, moves the exchange to TCP.
//!
//! ```no_run
//! use sns_client::{Client, ClientConfig, QueryOutcome};
//! use sns_core::protocol::Shape;
//!
//! let mut client = Client::new(ClientConfig::new("127.0.0.1:4700".parse().unwrap()))?;
//! let shape = Shape::Circle { center_x_cm: 250, center_y_cm: 100, radius_cm: 50 };
//! if let QueryOutcome::Found(found) = client.query(shape, 0)? {
//!     for m in found {
//!         println!("{} at {}", m.device_id, m.address);
//!     }
//! }
//! # Ok::<(), sns_client::ClientError>(())
//! ```

use std::io;
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::time::{Duration, Instant};

use sns_core::protocol::{
    read_frame, write_frame, Area, AuthToken, DecodeError, HEADER_LEN, MAX_TCP_FRAME,
    MAX_UDP_MESSAGE,
};
use sns_core::{Body, CellId, DeviceId, ErrorCode, Interval, Match, Message, NetworkAddress};
use thiserror::Error;

pub use sns_core::protocol::Shape;

/// UDP requests are never smaller than this, leaving room for a
/// `RESPONSE_TOO_LARGE` notice with any result count.
pub const MIN_UDP_REQUEST: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportPreference {
    UdpThenTcp,
    Tcp,
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub server: SocketAddr,
    pub cell_id: CellId,
    /// Wait per UDP attempt; also bounds TCP connect and read.
    pub timeout: Duration,
    /// UDP resends after the first attempt.
    pub retries: u32,
    pub transport: TransportPreference,
    pub auth: Option<AuthToken>,
    /// UDP requests are padded to this many bytes so that replies up to the
    /// same size pass the server's amplification limit. Values below
    /// [`MIN_UDP_REQUEST`] act as that minimum.
    pub udp_pad_to: usize,
}

impl ClientConfig {
    pub fn new(server: SocketAddr) -> Self {
        Self {
            server,
            cell_id: CellId(0),
            timeout: Duration::from_millis(200),
            retries: 2,
            transport: TransportPreference::UdpThenTcp,
            auth: None,
            udp_pad_to: 512,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("no reply from server")]
    Timeout,
    #[error("server serves a different cell{}", .server_cell.map(|c| format!(" ({c})")).unwrap_or_default())]
    CellMismatch { server_cell: Option<u64> },
    #[error("unauthorized")]
    Unauthorized,
    #[error("stale version; server holds version {current}")]
    Stale { current: u64 },
    #[error("server error {code}: {detail}")]
    Server { code: ErrorCode, detail: String },
    #[error("malformed reply: {0}")]
    Malformed(#[from] DecodeError),
    #[error("unexpected reply: {0}")]
    Unexpected(&'static str),
}

impl ClientError {
    /// True for failures to reach the server at all.
    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Io(_) | ClientError::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutcome {
    Found(Vec<Match>),
    /// More devices matched than allowed; narrow the query.
    TooMany { count: u64 },
}

/// One client handle; use from one thread at a time.
pub struct Client {
    config: ClientConfig,
    udp: Option<UdpSocket>,
    last_transport: Option<&'static str>,
}

impl Client {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        let udp = match config.transport {
            TransportPreference::Tcp => None,
            TransportPreference::UdpThenTcp => {
                let local: SocketAddr = if config.server.is_ipv4() {
                    "0.0.0.0:0".parse().unwrap()
                } else {
                    "[::]:0".parse().unwrap()
                };
                let socket = UdpSocket::bind(local)?;
                socket.connect(config.server)?;
                Some(socket)
            }
        };
        Ok(Self {
            config,
            udp,
            last_transport: None,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// `"udp"` or `"tcp"`: how the last reply arrived.
    pub fn last_transport(&self) -> Option<&'static str> {
        self.last_transport
    }

    /// Devices within `shape`. `max_results` of 0 uses the server default.
    pub fn query(&mut self, shape: Shape, max_results: u16) -> Result<QueryOutcome, ClientError> {
        self.query_body(Body::QueryGeom { shape, max_results })
    }

    pub fn query_intervals(
        &mut self,
        intervals: Vec<Interval>,
        max_results: u16,
    ) -> Result<QueryOutcome, ClientError> {
        self.query_body(Body::QueryIntervals {
            intervals,
            max_results,
        })
    }

    fn query_body(&mut self, body: Body) -> Result<QueryOutcome, ClientError> {
        let reply = self.request(body)?;
        match reply.body {
            Body::Response { results } => Ok(QueryOutcome::Found(results)),
            Body::Error {
                code: ErrorCode::TooManyResults,
                ..
            } => Ok(QueryOutcome::TooMany {
                count: reply.detail_value("count").unwrap_or(0),
            }),
            _ => Err(error_from(&reply)),
        }
    }

    /// Registers or moves a device. Acknowledged updates are immediately
    /// visible to queries.
    pub fn announce(
        &mut self,
        device_id: DeviceId,
        address: NetworkAddress,
        area: Area,
        version: u64,
    ) -> Result<(), ClientError> {
        self.expect_ack(Body::Update {
            device_id,
            version,
            address,
            area,
        })
    }

    pub fn deregister(&mut self, device_id: DeviceId) -> Result<(), ClientError> {
        self.expect_ack(Body::Deregister { device_id })
    }

    fn expect_ack(&mut self, body: Body) -> Result<(), ClientError> {
        let reply = self.request(body)?;
        match reply.body {
            Body::Response { results } if results.is_empty() => Ok(()),
            Body::Response { .. } => Err(ClientError::Unexpected("results in an acknowledgement")),
            _ => Err(error_from(&reply)),
        }
    }

    /// Sends one request and returns the reply, retrying over TCP when the
    /// server asks for it. Error replies are returned, not converted.
    pub fn request(&mut self, body: Body) -> Result<Message, ClientError> {
        let mut msg = Message::new(rand::random(), self.config.cell_id, body);
        msg.auth = self.config.auth.clone();
        if let Some(udp) = &self.udp {
            let unpadded = msg.encoded_len();
            if unpadded <= MAX_UDP_MESSAGE {
                let target = self.config.udp_pad_to.clamp(MIN_UDP_REQUEST, MAX_UDP_MESSAGE);
                // a padding option costs three bytes of header
                if target >= unpadded + 4 {
                    msg.padding = (target - unpadded - 3) as u16;
                }
                let reply = udp_exchange(udp, &msg, &self.config)?;
                let too_large = matches!(
                    reply.body,
                    Body::Error {
                        code: ErrorCode::ResponseTooLarge,
                        ..
                    }
                );
                if !too_large {
                    self.last_transport = Some("udp");
                    return Ok(reply);
                }
                msg.padding = 0;
            }
        }
        let reply = tcp_exchange(&msg, &self.config)?;
        self.last_transport = Some("tcp");
        Ok(reply)
    }
}

fn error_from(reply: &Message) -> ClientError {
    match &reply.body {
        Body::Error { code, detail } => match code {
            ErrorCode::CellMismatch => ClientError::CellMismatch {
                server_cell: reply.detail_value("cell"),
            },
            ErrorCode::Unauthorized => ClientError::Unauthorized,
            ErrorCode::StaleVersion => ClientError::Stale {
                current: reply.detail_value("current").unwrap_or(0),
            },
            _ => ClientError::Server {
                code: *code,
                detail: detail.clone(),
            },
        },
        _ => ClientError::Unexpected("unexpected message type"),
    }
}

/// Accepts only well-formed replies carrying our request id.
fn matching_reply(bytes: &[u8], request: &Message) -> Option<Message> {
    if bytes.len() < HEADER_LEN {
        return None;
    }
    let reply = Message::decode(bytes).ok()?;
    let is_reply = matches!(reply.body, Body::Response { .. } | Body::Error { .. });
    (reply.request_id == request.request_id && is_reply).then_some(reply)
}

fn udp_exchange(
    socket: &UdpSocket,
    msg: &Message,
    config: &ClientConfig,
) -> Result<Message, ClientError> {
    let bytes = msg.encode();
    let mut buf = vec![0u8; 65_536];
    for _ in 0..=config.retries {
        socket.send(&bytes)?;
        let deadline = Instant::now() + config.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            socket.set_read_timeout(Some(left))?;
            match socket.recv(&mut buf) {
                Ok(n) => {
                    if let Some(reply) = matching_reply(&buf[..n], msg) {
                        return Ok(reply);
                    }
                }
                Err(e)
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                {
                    break
                }
                // an ICMP error from an earlier datagram; keep waiting
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {
                    std::thread::sleep(left.min(Duration::from_millis(5)));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Err(ClientError::Timeout)
}

fn tcp_exchange(msg: &Message, config: &ClientConfig) -> Result<Message, ClientError> {
    let timeout = config.timeout.max(Duration::from_secs(1));
    let mut stream = TcpStream::connect_timeout(&config.server, timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    write_frame(&mut stream, &msg.encode())?;
    let reply = read_frame(&mut stream, MAX_TCP_FRAME)
        .map_err(|e| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ClientError::Timeout,
            _ => e.into(),
        })?
        .ok_or(ClientError::Unexpected("connection closed without reply"))?;
    let reply = Message::decode(&reply)?;
    if reply.request_id != msg.request_id {
        return Err(ClientError::Unexpected("reply to a different request"));
    }
    Ok(reply)
}

/// Centimetre value as a 32-bit wire coordinate.
pub fn wire_cm(cm: i64) -> Option<i32> {
    i32::try_from(cm).ok()
}
