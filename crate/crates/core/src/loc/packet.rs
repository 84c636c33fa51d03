//! Minimal DNS message framing around a single LOC answer.
//!
//! Enough of RFC 1035 to synthesise a response to a `LOC` question and to
//! pull the LOC RDATA back out of one: one question, one answer, name
//! compression via a pointer to the question name.

use super::{LocError, LocRecord, LOC_RR_TYPE, RDATA_LEN};

pub const CLASS_IN: u16 = 1;
/// Flags of a standard recursive response with no error (QR, RD, RA).
const RESPONSE_FLAGS: u16 = 0x8180;
const HEADER_LEN: usize = 12;

/// One LOC answer extracted from a DNS response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocAnswer {
    pub id: u16,
    pub name: String,
    pub class: u16,
    pub ttl: u32,
    pub record: LocRecord,
}

fn push_name(out: &mut Vec<u8>, name: &str) -> Result<(), LocError> {
    for label in name.trim_end_matches('.').split('.').filter(|l| !l.is_empty()) {
        if label.len() > 63 {
            return Err(LocError::Packet("label longer than 63 bytes"));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
    Ok(())
}

/// Builds a response carrying one LOC answer for `name`.
pub fn answer_packet(id: u16, name: &str, ttl: u32, record: &LocRecord) -> Result<Vec<u8>, LocError> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&RESPONSE_FLAGS.to_be_bytes());
    for count in [1u16, 1, 0, 0] {
        out.extend_from_slice(&count.to_be_bytes());
    }
    push_name(&mut out, name)?;
    out.extend_from_slice(&LOC_RR_TYPE.to_be_bytes());
    out.extend_from_slice(&CLASS_IN.to_be_bytes());
    // compressed owner: pointer to the question name right after the header
    out.extend_from_slice(&(0xc000 | HEADER_LEN as u16).to_be_bytes());
    out.extend_from_slice(&LOC_RR_TYPE.to_be_bytes());
    out.extend_from_slice(&CLASS_IN.to_be_bytes());
    out.extend_from_slice(&ttl.to_be_bytes());
    out.extend_from_slice(&(RDATA_LEN as u16).to_be_bytes());
    out.extend_from_slice(&record.to_rdata());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LocError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or(LocError::Packet("truncated"))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, LocError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, LocError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Reads a possibly compressed name starting at the cursor.
    fn name(&mut self) -> Result<String, LocError> {
        let mut labels: Vec<String> = Vec::new();
        let mut at = self.pos;
        let mut jumped = false;
        for _ in 0..128 {
            let len = *self.buf.get(at).ok_or(LocError::Packet("truncated name"))? as usize;
            match len {
                0 => {
                    if !jumped {
                        self.pos = at + 1;
                    }
                    return Ok(labels.join("."));
                }
                l if l & 0xc0 == 0xc0 => {
                    let low = *self.buf.get(at + 1).ok_or(LocError::Packet("truncated pointer"))?;
                    if !jumped {
                        self.pos = at + 2;
                    }
                    jumped = true;
                    at = ((l & 0x3f) << 8) | usize::from(low);
                }
                l if l <= 63 => {
                    let label = self
                        .buf
                        .get(at + 1..at + 1 + l)
                        .ok_or(LocError::Packet("truncated label"))?;
                    labels.push(String::from_utf8_lossy(label).into_owned());
                    at += 1 + l;
                }
                _ => return Err(LocError::Packet("bad label type")),
            }
        }
        Err(LocError::Packet("name compression loop"))
    }
}

/// Returns the first LOC answer in a DNS response.
pub fn extract_loc_answer(packet: &[u8]) -> Result<LocAnswer, LocError> {
    let mut r = Reader { buf: packet, pos: 0 };
    let id = r.u16()?;
    let _flags = r.u16()?;
    let qdcount = r.u16()?;
    let ancount = r.u16()?;
    r.take(4)?;
    for _ in 0..qdcount {
        r.name()?;
        r.take(4)?;
    }
    for _ in 0..ancount {
        let name = r.name()?;
        let rtype = r.u16()?;
        let class = r.u16()?;
        let ttl = r.u32()?;
        let rdlength = usize::from(r.u16()?);
        let rdata = r.take(rdlength)?;
        if rtype == LOC_RR_TYPE {
            return Ok(LocAnswer {
                id,
                name,
                class,
                ttl,
                record: LocRecord::from_rdata(rdata)?,
            });
        }
    }
    Err(LocError::Packet("no LOC answer"))
}
