//! Fixed-layout per-bit header encoding and header field extraction.
//!
//! Every packet maps to the same 1136 positions, each −1 (absent), 0 or 1:
//!
//! ```text
//! eth     0..112     dst, src, type
//! ipv4  112..272     fixed header
//!       272..592     options, zero-padded to 40 bytes
//! tcp   592..752     fixed header
//!       752..1072    options, zero-padded to 40 bytes
//! udp  1072..1136
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::headers::{be16, ETHERTYPE_IPV4, ETH_HEADER_LEN, IPPROTO_TCP, IPPROTO_UDP};
use crate::pcap::Packet;

/// Total number of bit positions.
pub const BIT_COUNT: usize = 1136;
/// Maximum options length for IPv4 and TCP, in bytes.
pub const MAX_OPTIONS_LEN: usize = 40;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("frame of {0} bytes is shorter than an Ethernet header")]
    NotEthernet(usize),
    #[error("{layer} header truncated")]
    HeaderTruncated { layer: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Eth,
    Ipv4,
    Tcp,
    Udp,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Eth => "eth",
            Protocol::Ipv4 => "ipv4",
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldSpec {
    pub protocol: Protocol,
    /// Short name within the protocol, e.g. `version`.
    pub name: &'static str,
    /// Absolute bit offset in the vector.
    pub offset: usize,
    pub width: usize,
    /// Name used by `extract_fields`, when the field is a plain integer.
    pub field_name: Option<&'static str>,
}

impl FieldSpec {
    /// `proto.name`, e.g. `ipv4.version`.
    pub fn qualified_name(&self) -> String {
        format!("{}.{}", self.protocol.as_str(), self.name)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldLayout {
    pub fields: Vec<FieldSpec>,
    pub bit_count: usize,
}

impl FieldLayout {
    pub fn field(&self, qualified: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.qualified_name() == qualified)
    }

    pub fn by_field_name(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.field_name == Some(name))
    }

    /// Column names `proto.field.bitN`, one per position.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.bit_count);
        for f in &self.fields {
            let q = f.qualified_name();
            out.extend((0..f.width).map(|i| format!("{q}.bit{i}")));
        }
        out
    }

    /// The spec covering bit position `bit`.
    pub fn field_at(&self, bit: usize) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.range().contains(&bit))
    }
}

// (protocol, name, width, field_name)
const SPECS: &[(Protocol, &str, usize, Option<&str>)] = &[
    (Protocol::Eth, "dst", 48, Some("Ether_dst")),
    (Protocol::Eth, "src", 48, Some("Ether_src")),
    (Protocol::Eth, "type", 16, Some("Ether_type")),
    (Protocol::Ipv4, "version", 4, Some("IP_version")),
    (Protocol::Ipv4, "ihl", 4, Some("IP_ihl")),
    (Protocol::Ipv4, "tos", 8, Some("IP_tos")),
    (Protocol::Ipv4, "len", 16, Some("IP_len")),
    (Protocol::Ipv4, "id", 16, Some("IP_id")),
    (Protocol::Ipv4, "flags", 3, Some("IP_flags")),
    (Protocol::Ipv4, "frag", 13, Some("IP_frag")),
    (Protocol::Ipv4, "ttl", 8, Some("IP_ttl")),
    (Protocol::Ipv4, "proto", 8, Some("IP_proto")),
    (Protocol::Ipv4, "chksum", 16, Some("IP_chksum")),
    (Protocol::Ipv4, "src", 32, Some("IP_src")),
    (Protocol::Ipv4, "dst", 32, Some("IP_dst")),
    (Protocol::Ipv4, "options", 8 * MAX_OPTIONS_LEN, None),
    (Protocol::Tcp, "sport", 16, Some("TCP_sport")),
    (Protocol::Tcp, "dport", 16, Some("TCP_dport")),
    (Protocol::Tcp, "seq", 32, Some("TCP_seq")),
    (Protocol::Tcp, "ack", 32, Some("TCP_ack")),
    (Protocol::Tcp, "dataofs", 4, Some("TCP_dataofs")),
    (Protocol::Tcp, "reserved", 3, Some("TCP_reserved")),
    (Protocol::Tcp, "flags", 9, Some("TCP_flags")),
    (Protocol::Tcp, "window", 16, Some("TCP_window")),
    (Protocol::Tcp, "chksum", 16, Some("TCP_chksum")),
    (Protocol::Tcp, "urgptr", 16, Some("TCP_urgptr")),
    (Protocol::Tcp, "options", 8 * MAX_OPTIONS_LEN, None),
    (Protocol::Udp, "sport", 16, Some("UDP_sport")),
    (Protocol::Udp, "dport", 16, Some("UDP_dport")),
    (Protocol::Udp, "len", 16, Some("UDP_len")),
    (Protocol::Udp, "chksum", 16, Some("UDP_chksum")),
];

const IPV4_OFFSET: usize = 112;
const IPV4_OPTIONS_OFFSET: usize = 272;
const TCP_OFFSET: usize = 592;
const TCP_OPTIONS_OFFSET: usize = 752;
const UDP_OFFSET: usize = 1072;

pub fn layout() -> &'static FieldLayout {
    static LAYOUT: OnceLock<FieldLayout> = OnceLock::new();
    LAYOUT.get_or_init(|| {
        let mut offset = 0;
        let fields = SPECS
            .iter()
            .map(|&(protocol, name, width, field_name)| {
                let spec = FieldSpec {
                    protocol,
                    name,
                    offset,
                    width,
                    field_name,
                };
                offset += width;
                spec
            })
            .collect();
        FieldLayout {
            fields,
            bit_count: offset,
        }
    })
}

/// Copy `len` header bytes starting at `start` into `bits[at..]`, MSB first.
/// Bytes beyond the end of the frame stay −1.
fn copy_bytes(bits: &mut [i8], at: usize, frame: &[u8], start: usize, len: usize) {
    for i in 0..len {
        let Some(&byte) = frame.get(start + i) else {
            break;
        };
        for b in 0..8 {
            bits[at + 8 * i + b] = ((byte >> (7 - b)) & 1) as i8;
        }
    }
}

/// Options region: declared bytes are copied (−1 past the capture), the rest
/// of the fixed width is zero padding.
fn copy_options(bits: &mut [i8], at: usize, frame: &[u8], start: usize, declared: usize) {
    let declared = declared.min(MAX_OPTIONS_LEN);
    bits[at + 8 * declared..at + 8 * MAX_OPTIONS_LEN].fill(0);
    copy_bytes(bits, at, frame, start, declared);
}

/// Per-bit header encoding of one frame.
pub fn encode_bits(frame: &[u8]) -> Result<Vec<i8>, FieldError> {
    if frame.len() < ETH_HEADER_LEN {
        return Err(FieldError::NotEthernet(frame.len()));
    }
    let mut bits = vec![-1i8; BIT_COUNT];
    copy_bytes(&mut bits, 0, frame, 0, ETH_HEADER_LEN);
    if be16(frame, 12) != ETHERTYPE_IPV4 {
        return Ok(bits);
    }

    let ip = ETH_HEADER_LEN;
    copy_bytes(&mut bits, IPV4_OFFSET, frame, ip, 20);
    let Some(&ver_ihl) = frame.get(ip) else {
        return Ok(bits);
    };
    let ihl = 4 * (ver_ihl & 0x0f) as usize;
    let ip_len = ihl.max(20);
    copy_options(&mut bits, IPV4_OPTIONS_OFFSET, frame, ip + 20, ip_len - 20);

    // Transport needs the protocol byte and a first fragment.
    let (Some(&proto), Some(frag)) = (frame.get(ip + 9), frame.get(ip + 6..ip + 8)) else {
        return Ok(bits);
    };
    if u16::from_be_bytes([frag[0], frag[1]]) & 0x1fff != 0 {
        return Ok(bits);
    }
    let l4 = ip + ip_len;
    match proto {
        IPPROTO_TCP => {
            copy_bytes(&mut bits, TCP_OFFSET, frame, l4, 20);
            if let Some(&off) = frame.get(l4 + 12) {
                let hdr = 4 * (off >> 4) as usize;
                copy_options(&mut bits, TCP_OPTIONS_OFFSET, frame, l4 + 20, hdr.max(20) - 20);
            }
        }
        IPPROTO_UDP => copy_bytes(&mut bits, UDP_OFFSET, frame, l4, 8),
        _ => {}
    }
    Ok(bits)
}

pub fn encode_packet(p: &Packet) -> Result<Vec<i8>, FieldError> {
    encode_bits(&p.data)
}

/// Reassemble the unsigned integer stored in a field's bits; `None` if any
/// bit is −1.
pub fn read_field(bits: &[i8], spec: &FieldSpec) -> Option<u64> {
    bits[spec.range()].iter().try_fold(0u64, |acc, &b| match b {
        0 | 1 => Some((acc << 1) | b as u64),
        _ => None,
    })
}

fn bits_at(bytes: &[u8], bit_offset: usize, width: usize) -> u64 {
    (0..width).fold(0u64, |acc, i| {
        let bit = bit_offset + i;
        (acc << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1) as u64
    })
}

/// Header field values keyed by field name (`IP_ttl`, `TCP_seq`, ...).
///
/// Option and payload presence appear as 0/1 indicators `IP_options`,
/// `TCP_options` and `Raw_load`. Fields of absent layers are omitted.
pub fn extract_fields(frame: &[u8]) -> Result<BTreeMap<String, u64>, FieldError> {
    if frame.len() < ETH_HEADER_LEN {
        return Err(FieldError::NotEthernet(frame.len()));
    }
    let l = layout();
    let mut out = BTreeMap::new();
    let put = |fields: &mut BTreeMap<String, u64>, region: &[u8], base: usize, proto: Protocol| {
        for f in l.fields.iter().filter(|f| f.protocol == proto) {
            if let Some(name) = f.field_name {
                fields.insert(name.to_string(), bits_at(region, f.offset - base, f.width));
            }
        }
    };
    put(&mut out, &frame[..ETH_HEADER_LEN], 0, Protocol::Eth);
    if be16(frame, 12) != ETHERTYPE_IPV4 {
        return Ok(out);
    }

    let ip = &frame[ETH_HEADER_LEN..];
    let truncated = |layer| FieldError::HeaderTruncated { layer };
    if ip.len() < 20 {
        return Err(truncated("ipv4"));
    }
    let ihl = 4 * (ip[0] & 0x0f) as usize;
    if ihl < 20 || ip.len() < ihl {
        return Err(truncated("ipv4"));
    }
    put(&mut out, &ip[..20], IPV4_OFFSET, Protocol::Ipv4);
    out.insert("IP_options".into(), (ihl > 20) as u64);

    let l4 = &ip[ihl..];
    let first_fragment = be16(ip, 6) & 0x1fff == 0;
    let payload_start = match ip[9] {
        IPPROTO_TCP if first_fragment => {
            if l4.len() < 20 {
                return Err(truncated("tcp"));
            }
            let hdr = 4 * (l4[12] >> 4) as usize;
            if hdr < 20 || l4.len() < hdr {
                return Err(truncated("tcp"));
            }
            put(&mut out, &l4[..20], TCP_OFFSET, Protocol::Tcp);
            out.insert("TCP_options".into(), (hdr > 20) as u64);
            hdr
        }
        IPPROTO_UDP if first_fragment => {
            if l4.len() < 8 {
                return Err(truncated("udp"));
            }
            put(&mut out, &l4[..8], UDP_OFFSET, Protocol::Udp);
            8
        }
        _ => 0,
    };
    out.insert("Raw_load".into(), (l4.len() > payload_start) as u64);
    Ok(out)
}

/// CSV with one header row of `proto.field.bitN` columns and one row per
/// frame. Frames shorter than an Ethernet header are an error.
pub fn write_csv<'a, W: Write>(mut w: W, frames: impl IntoIterator<Item = &'a [u8]>) -> std::io::Result<usize> {
    let mut line = layout().column_names().join(",");
    line.push('\n');
    w.write_all(line.as_bytes())?;
    let mut rows = 0;
    for frame in frames {
        let bits = encode_bits(frame).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        line.clear();
        for (i, b) in bits.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(match b {
                -1 => "-1",
                0 => "0",
                _ => "1",
            });
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
        rows += 1;
    }
    Ok(rows)
}
