//! Big-endian byte cursor shared by the protocol and snapshot codecs.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::interval::Interval;
use crate::registry::{DeviceId, NetworkAddress};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WireError {
    Truncated,
    Invalid(&'static str),
}

pub(crate) type WireResult<T> = Result<T, WireError>;

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn interval(&mut self, iv: &Interval) {
        self.u32(iv.low);
        self.u32(iv.high);
    }

    pub fn device_id(&mut self, id: &DeviceId) {
        self.bytes(id.as_bytes());
    }

    /// family (4 | 6), address bytes, port, label length, label.
    pub fn address(&mut self, addr: &NetworkAddress) {
        match addr.ip {
            IpAddr::V4(ip) => {
                self.u8(4);
                self.bytes(&ip.octets());
            }
            IpAddr::V6(ip) => {
                self.u8(6);
                self.bytes(&ip.octets());
            }
        }
        self.u16(addr.port);
        let label = addr.label.as_deref().unwrap_or("");
        self.u8(label.len() as u8);
        self.bytes(label.as_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> WireResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(WireError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> WireResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> WireResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> WireResult<u16> {
        self.array().map(u16::from_be_bytes)
    }

    pub fn u32(&mut self) -> WireResult<u32> {
        self.array().map(u32::from_be_bytes)
    }

    pub fn u64(&mut self) -> WireResult<u64> {
        self.array().map(u64::from_be_bytes)
    }

    pub fn i32(&mut self) -> WireResult<i32> {
        self.array().map(i32::from_be_bytes)
    }

    pub fn i64(&mut self) -> WireResult<i64> {
        self.array().map(i64::from_be_bytes)
    }

    pub fn interval(&mut self) -> WireResult<Interval> {
        let low = self.u32()?;
        let high = self.u32()?;
        Interval::new(low, high).ok_or(WireError::Invalid("interval low above high"))
    }

    /// `count` intervals, refusing counts the remaining input cannot hold.
    pub fn intervals(&mut self, count: usize) -> WireResult<Vec<Interval>> {
        if count.saturating_mul(8) > self.remaining() {
            return Err(WireError::Truncated);
        }
        (0..count).map(|_| self.interval()).collect()
    }

    pub fn device_id(&mut self) -> WireResult<DeviceId> {
        self.array().map(DeviceId::from_bytes)
    }

    pub fn address(&mut self) -> WireResult<NetworkAddress> {
        let ip = match self.u8()? {
            4 => IpAddr::V4(Ipv4Addr::from(self.array::<4>()?)),
            6 => IpAddr::V6(Ipv6Addr::from(self.array::<16>()?)),
            _ => return Err(WireError::Invalid("unknown address family")),
        };
        let port = self.u16()?;
        let len = usize::from(self.u8()?);
        let label = match len {
            0 => None,
            _ => Some(
                std::str::from_utf8(self.take(len)?)
                    .map_err(|_| WireError::Invalid("label is not UTF-8"))?
                    .to_owned(),
            ),
        };
        NetworkAddress::new(ip, port, label).map_err(|_| WireError::Invalid("invalid address"))
    }

    pub fn finish(&self) -> WireResult<()> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(WireError::Invalid("trailing bytes"))
        }
    }
}
