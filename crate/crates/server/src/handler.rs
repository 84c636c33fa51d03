//! Turns one request datagram or frame into at most one reply.

use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;
use std::time::Instant;

use ipnet::IpNet;
use log::debug;
use sns_core::protocol::{
    amplification_guard, AuthToken, DecodeError, ResponseCache, Transport, MAX_UDP_MESSAGE,
};
use sns_core::registry::RegistryError;
use sns_core::{Body, CellId, ErrorCode, IntervalSet, Message, QueryGeometry, Registry, Resolution};

pub struct Handler {
    registry: Arc<Registry>,
    auth: Option<AuthToken>,
    trusted: Vec<IpNet>,
    cache: ResponseCache,
}

impl Handler {
    pub fn new(registry: Arc<Registry>, auth: Option<AuthToken>, trusted: Vec<IpNet>) -> Self {
        Self {
            registry,
            auth,
            trusted,
            cache: ResponseCache::default(),
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    fn is_trusted(&self, ip: IpAddr) -> bool {
        let ip = match ip {
            IpAddr::V6(v6) => v6.to_ipv4_mapped().map_or(ip, IpAddr::V4),
            v4 => v4,
        };
        self.trusted.iter().any(|net| net.contains(&ip))
    }

    /// Encoded reply to `request`, or `None` when nothing should be sent.
    pub fn handle(&self, request: &[u8], peer: SocketAddr, transport: Transport) -> Option<Vec<u8>> {
        let started = Instant::now();
        let mut cache_key = None;
        let (kind, reply) = match Message::decode(request) {
            Ok(msg) => {
                if transport == Transport::Udp {
                    if let Some(cached) = self.cache.get(peer, msg.request_id) {
                        debug!("{peer} {transport:?} retransmit id={} answered from cache", msg.request_id);
                        return Some(cached);
                    }
                }
                cache_key = Some(msg.request_id);
                let kind = format!("{:?}", msg.message_type());
                let reply = if transport == Transport::Udp && request.len() > MAX_UDP_MESSAGE {
                    msg.reply(malformed("datagram exceeds UDP limit"))
                } else {
                    self.dispatch(&msg, peer.ip())
                };
                (kind, reply)
            }
            Err(e) => ("undecodable".to_string(), self.decode_failure(request, &e)),
        };
        let request_id = reply.request_id;
        let outcome = describe(&reply.body);
        let reply = match transport {
            Transport::Udp => amplification_guard(request.len(), reply, transport),
            Transport::Tcp => Some(reply),
        };
        let bytes = reply.map(|r| r.encode());
        debug!(
            "{peer} {transport:?} {kind} id={request_id} -> {}{} in {:?}",
            outcome,
            if bytes.is_none() { " (dropped)" } else { "" },
            started.elapsed()
        );
        if let (Transport::Udp, Some(b), Some(id)) = (transport, &bytes, cache_key) {
            self.cache.insert(peer, id, b.clone());
        }
        bytes
    }

    fn decode_failure(&self, request: &[u8], e: &DecodeError) -> Message {
        // echo whatever header fields are present
        let request_id = request
            .get(2..10)
            .map_or(0, |b| u64::from_be_bytes(b.try_into().unwrap()));
        let cell = request
            .get(10..18)
            .map_or(self.registry.cell_id(), |b| CellId(u64::from_be_bytes(b.try_into().unwrap())));
        let detail = match e {
            DecodeError::Malformed(what) => what.to_string(),
            DecodeError::UnsupportedVersion(v) => format!("version={v}"),
        };
        Message::error(request_id, cell, e.code(), detail)
    }

    fn dispatch(&self, msg: &Message, ip: IpAddr) -> Message {
        if msg.cell_id != self.registry.cell_id() {
            return msg.reply(Body::error_with_value(
                ErrorCode::CellMismatch,
                "cell",
                self.registry.cell_id().0,
            ));
        }
        if let Some(expected) = &self.auth {
            let ok = self.is_trusted(ip) || msg.auth.as_ref().is_some_and(|t| expected.matches(t));
            if !ok {
                return msg.reply(Body::Error {
                    code: ErrorCode::Unauthorized,
                    detail: String::new(),
                });
            }
        }
        msg.reply(match &msg.body {
            Body::QueryGeom { shape, max_results } => {
                self.resolve(&shape.to_geometry(), *max_results)
            }
            Body::QueryIntervals {
                intervals,
                max_results,
            } => self.resolve(
                &QueryGeometry::Raw(IntervalSet::from_intervals(intervals.iter().copied())),
                *max_results,
            ),
            Body::Update {
                device_id,
                version,
                address,
                area,
            } => match self.registry.register_or_update(
                *device_id,
                address.clone(),
                &area.to_geometry(),
                *version,
            ) {
                Ok(_) => ack(),
                Err(RegistryError::Stale { current }) => {
                    Body::error_with_value(ErrorCode::StaleVersion, "current", current)
                }
                Err(e) => malformed(&e.to_string()),
            },
            Body::Deregister { device_id } => {
                self.registry.deregister(device_id);
                ack()
            }
            Body::Response { .. } | Body::Error { .. } => malformed("not a request"),
        })
    }

    fn resolve(&self, query: &QueryGeometry, requested: u16) -> Body {
        let cap = self.registry.max_results();
        let limit = match usize::from(requested) {
            0 => cap,
            n => n.min(cap),
        };
        match self.registry.resolve(query, limit) {
            Ok(Resolution::Found(results)) => Body::Response { results },
            Ok(Resolution::TooMany { count }) => {
                Body::error_with_value(ErrorCode::TooManyResults, "count", count as u64)
            }
            Err(e) => malformed(&e.to_string()),
        }
    }
}

fn ack() -> Body {
    Body::Response {
        results: Vec::new(),
    }
}

fn malformed(detail: &str) -> Body {
    Body::Error {
        code: ErrorCode::Malformed,
        detail: detail.to_owned(),
    }
}

fn describe(body: &Body) -> String {
    match body {
        Body::Response { results } => format!("{} result(s)", results.len()),
        Body::Error { code, detail } if detail.is_empty() => code.to_string(),
        Body::Error { code, detail } => format!("{code} {detail}"),
        other => format!("{:?}", other.message_type()),
    }
}
