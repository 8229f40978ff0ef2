//! MRT TABLE_DUMP_V2 decoding (RFC 6396, add-path variants per RFC 8050).
//!
//! Only the fields needed to recover prefix and AS path are decoded. Records
//! of other types are skipped and counted.

use std::io::{BufRead, BufReader, Read};
use std::net::{Ipv4Addr, Ipv6Addr};

use flate2::read::MultiGzDecoder;
use ipnet::{IpNet, Ipv4Net, Ipv6Net};
use thiserror::Error;

use super::{PathError, PathSegment, RibEntry, RibParse};
use crate::net::Asn;

const TABLE_DUMP_V2: u16 = 13;

const PEER_INDEX_TABLE: u16 = 1;
const RIB_IPV4_UNICAST: u16 = 2;
const RIB_IPV6_UNICAST: u16 = 4;
const RIB_IPV4_UNICAST_ADDPATH: u16 = 8;
const RIB_IPV6_UNICAST_ADDPATH: u16 = 10;

const ATTR_AS_PATH: u8 = 2;
const ATTR_AS4_PATH: u8 = 17;
const FLAG_EXTENDED_LENGTH: u8 = 0x10;

const SEG_AS_SET: u8 = 1;
const SEG_AS_SEQUENCE: u8 = 2;
const SEG_CONFED_SEQUENCE: u8 = 3;
const SEG_CONFED_SET: u8 = 4;

#[derive(Debug, Error)]
pub enum MrtError {
    #[error("input is not an MRT stream")]
    BadMagic,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether `kind` is an assigned MRT type.
fn known_type(kind: u16) -> bool {
    matches!(kind, 0..=13 | 16 | 17 | 32 | 33 | 48 | 49)
}

/// Decodes a possibly gzip-compressed MRT stream.
pub fn parse_mrt<R: Read>(source: R) -> Result<RibParse, MrtError> {
    let mut reader = BufReader::new(source);
    let gzipped = reader.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if gzipped {
        parse_plain(BufReader::new(MultiGzDecoder::new(reader)))
    } else {
        parse_plain(reader)
    }
}

fn parse_plain<R: Read>(mut reader: R) -> Result<RibParse, MrtError> {
    let mut out = RibParse::default();
    let mut first = true;
    loop {
        let mut header = [0u8; 12];
        let got = read_full(&mut reader, &mut header)?;
        if got == 0 {
            if first {
                return Err(MrtError::BadMagic);
            }
            break;
        }
        let kind = u16::from_be_bytes([header[4], header[5]]);
        if first && (got < header.len() || !known_type(kind)) {
            return Err(MrtError::BadMagic);
        }
        first = false;
        out.diagnostics.records += 1;
        if got < header.len() {
            out.diagnostics.truncated_records += 1;
            break;
        }
        let subtype = u16::from_be_bytes([header[6], header[7]]);
        let length = u32::from_be_bytes([header[8], header[9], header[10], header[11]]) as usize;
        let mut body = Vec::new();
        let read = reader.by_ref().take(length as u64).read_to_end(&mut body)?;
        if read < length {
            log::debug!("MRT record claims {} bytes, {} remain", length, read);
            out.diagnostics.truncated_records += 1;
            break;
        }
        if kind != TABLE_DUMP_V2 {
            out.diagnostics.unsupported_records += 1;
            continue;
        }
        let decoded = match subtype {
            PEER_INDEX_TABLE => parse_peer_index(&body).map(|_| Vec::new()),
            RIB_IPV4_UNICAST => parse_rib(&body, Afi::V4, false),
            RIB_IPV6_UNICAST => parse_rib(&body, Afi::V6, false),
            RIB_IPV4_UNICAST_ADDPATH => parse_rib(&body, Afi::V4, true),
            RIB_IPV6_UNICAST_ADDPATH => parse_rib(&body, Afi::V6, true),
            _ => {
                out.diagnostics.unsupported_records += 1;
                continue;
            }
        };
        match decoded {
            Ok(entries) => {
                for entry in entries {
                    match entry {
                        Ok(entry) => out.push(entry),
                        Err(PathError::EmptyPath) => out.diagnostics.empty_path_entries += 1,
                        Err(PathError::AsSetOrigin) => unreachable!("not produced by parsing"),
                    }
                }
            }
            Err(Malformed) => {
                log::debug!(
                    "skipping malformed TABLE_DUMP_V2 subtype {} record",
                    subtype
                );
                out.diagnostics.malformed_records += 1;
            }
        }
    }
    Ok(out)
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

//------------ Body decoding -------------------------------------------------

#[derive(Debug)]
struct Malformed;

struct Cursor<'a> {
    data: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Malformed> {
        if self.data.len() < n {
            return Err(Malformed);
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, Malformed> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Malformed> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, Malformed> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy)]
enum Afi {
    V4,
    V6,
}

/// Peer ASNs of a PEER_INDEX_TABLE. Only used to validate framing.
fn parse_peer_index(body: &[u8]) -> Result<Vec<Asn>, Malformed> {
    let mut cur = Cursor::new(body);
    cur.take(4)?; // collector BGP ID
    let view_len = cur.u16()? as usize;
    cur.take(view_len)?;
    let count = cur.u16()?;
    let mut peers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let peer_type = cur.u8()?;
        cur.take(4)?; // peer BGP ID
        cur.take(if peer_type & 0x01 != 0 { 16 } else { 4 })?;
        let asn = if peer_type & 0x02 != 0 {
            cur.u32()?
        } else {
            cur.u16()? as u32
        };
        peers.push(Asn(asn));
    }
    if !cur.is_empty() {
        return Err(Malformed);
    }
    Ok(peers)
}

fn parse_prefix(cur: &mut Cursor, afi: Afi) -> Result<IpNet, Malformed> {
    let len = cur.u8()?;
    let max = match afi {
        Afi::V4 => 32,
        Afi::V6 => 128,
    };
    if len > max {
        return Err(Malformed);
    }
    let bytes = cur.take((len as usize).div_ceil(8))?;
    let net = match afi {
        Afi::V4 => {
            let mut octets = [0u8; 4];
            octets[..bytes.len()].copy_from_slice(bytes);
            IpNet::V4(Ipv4Net::new(Ipv4Addr::from(octets), len).map_err(|_| Malformed)?)
        }
        Afi::V6 => {
            let mut octets = [0u8; 16];
            octets[..bytes.len()].copy_from_slice(bytes);
            IpNet::V6(Ipv6Net::new(Ipv6Addr::from(octets), len).map_err(|_| Malformed)?)
        }
    };
    if net.trunc() != net {
        return Err(Malformed);
    }
    Ok(net)
}

type EntryResult = Result<RibEntry, PathError>;

fn parse_rib(body: &[u8], afi: Afi, add_path: bool) -> Result<Vec<EntryResult>, Malformed> {
    let mut cur = Cursor::new(body);
    cur.u32()?; // sequence number
    let prefix = parse_prefix(&mut cur, afi)?;
    let count = cur.u16()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        cur.u16()?; // peer index
        cur.u32()?; // originated time
        if add_path {
            cur.u32()?; // path identifier
        }
        let attr_len = cur.u16()? as usize;
        let attrs = cur.take(attr_len)?;
        let path = parse_attributes(attrs)?;
        entries.push(RibEntry::new(prefix, path));
    }
    if !cur.is_empty() {
        return Err(Malformed);
    }
    Ok(entries)
}

/// Extracts the effective AS path from a path attribute block.
fn parse_attributes(attrs: &[u8]) -> Result<Vec<PathSegment>, Malformed> {
    let mut cur = Cursor::new(attrs);
    let mut as_path: Option<&[u8]> = None;
    let mut as4_path: Option<&[u8]> = None;
    while !cur.is_empty() {
        let flags = cur.u8()?;
        let kind = cur.u8()?;
        let len = if flags & FLAG_EXTENDED_LENGTH != 0 {
            cur.u16()? as usize
        } else {
            cur.u8()? as usize
        };
        let value = cur.take(len)?;
        match kind {
            ATTR_AS_PATH => as_path = Some(value),
            ATTR_AS4_PATH => as4_path = Some(value),
            _ => {}
        }
    }
    let Some(raw) = as_path else {
        return Ok(Vec::new());
    };
    // TABLE_DUMP_V2 mandates 4-byte ASNs, but some dumps carry the
    // 2-byte encoding; fall back when the 4-byte reading does not fit.
    if let Some(path) = decode_segments(raw, 4) {
        return Ok(path);
    }
    let path = decode_segments(raw, 2).ok_or(Malformed)?;
    match as4_path {
        Some(raw4) => {
            let path4 = decode_segments(raw4, 4).ok_or(Malformed)?;
            Ok(merge_as4_path(path, path4))
        }
        None => Ok(path),
    }
}

/// Decodes AS_PATH segments with the given ASN width, requiring the data
/// to be consumed exactly. Confederation segments are dropped.
fn decode_segments(raw: &[u8], width: usize) -> Option<Vec<PathSegment>> {
    let mut cur = Cursor::new(raw);
    let mut segments = Vec::new();
    while !cur.is_empty() {
        let kind = cur.u8().ok()?;
        let count = cur.u8().ok()? as usize;
        let mut asns = Vec::with_capacity(count);
        for _ in 0..count {
            let asn = if width == 4 {
                cur.u32().ok()?
            } else {
                cur.u16().ok()? as u32
            };
            asns.push(Asn(asn));
        }
        match kind {
            SEG_AS_SET => segments.push(PathSegment::Set(asns)),
            SEG_AS_SEQUENCE => segments.push(PathSegment::Sequence(asns)),
            SEG_CONFED_SEQUENCE | SEG_CONFED_SET => {}
            _ => return None,
        }
    }
    Some(segments)
}

fn path_units(path: &[PathSegment]) -> usize {
    path.iter()
        .map(|s| match s {
            PathSegment::Sequence(v) => v.len(),
            PathSegment::Set(_) => 1,
        })
        .sum()
}

/// Reconstructs the 4-byte path from AS_PATH and AS4_PATH (RFC 6793).
fn merge_as4_path(path: Vec<PathSegment>, path4: Vec<PathSegment>) -> Vec<PathSegment> {
    let units = path_units(&path);
    let units4 = path_units(&path4);
    if units < units4 {
        return path;
    }
    let mut keep = units - units4;
    let mut merged = Vec::new();
    for seg in path {
        if keep == 0 {
            break;
        }
        match seg {
            PathSegment::Set(v) => {
                merged.push(PathSegment::Set(v));
                keep -= 1;
            }
            PathSegment::Sequence(v) => {
                let n = v.len().min(keep);
                merged.push(PathSegment::Sequence(v[..n].to_vec()));
                keep -= n;
            }
        }
    }
    merged.extend(path4);
    // Join adjacent sequences split across the two attributes.
    let mut joined: Vec<PathSegment> = Vec::with_capacity(merged.len());
    for seg in merged {
        match (joined.last_mut(), seg) {
            (Some(PathSegment::Sequence(prev)), PathSegment::Sequence(next)) => prev.extend(next),
            (_, seg) => joined.push(seg),
        }
    }
    joined
}
