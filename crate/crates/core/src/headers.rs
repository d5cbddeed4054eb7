//! Minimal Ethernet / IPv4 / TCP / UDP header views over raw frames.

use std::net::Ipv4Addr;

use thiserror::Error;

pub const ETH_HEADER_LEN: usize = 14;
pub const IPV4_MIN_HEADER_LEN: usize = 20;
pub const TCP_MIN_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum HeaderError {
    #[error("frame is not Ethernet/IPv4")]
    NotIPv4,
    #[error("header truncated")]
    HeaderTruncated,
}

pub(crate) fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

pub(crate) fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn ethertype(frame: &[u8]) -> Option<u16> {
    (frame.len() >= ETH_HEADER_LEN).then(|| be16(frame, 12))
}

/// Location and addressing of an IPv4 header inside an Ethernet frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Info {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub proto: u8,
    /// IHL × 4, in octets.
    pub header_len: usize,
}

impl Ipv4Info {
    pub fn transport_offset(&self) -> usize {
        ETH_HEADER_LEN + self.header_len
    }
}

/// Parse the IPv4 header of an Ethernet frame. The fixed 20-byte part and
/// any options announced by IHL must be present.
pub fn parse_ipv4(frame: &[u8]) -> Result<Ipv4Info, HeaderError> {
    match ethertype(frame) {
        Some(ETHERTYPE_IPV4) => {}
        Some(_) => return Err(HeaderError::NotIPv4),
        None => return Err(HeaderError::HeaderTruncated),
    }
    let ip = &frame[ETH_HEADER_LEN..];
    if ip.len() < IPV4_MIN_HEADER_LEN {
        return Err(HeaderError::HeaderTruncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(HeaderError::NotIPv4);
    }
    let header_len = usize::from(ip[0] & 0x0f) * 4;
    if header_len < IPV4_MIN_HEADER_LEN {
        return Err(HeaderError::NotIPv4);
    }
    if ip.len() < header_len {
        return Err(HeaderError::HeaderTruncated);
    }
    Ok(Ipv4Info {
        src: Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]),
        dst: Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]),
        proto: ip[9],
        header_len,
    })
}

/// Source and destination ports for TCP and UDP, `None` for other protocols.
pub fn transport_ports(frame: &[u8], ip: &Ipv4Info) -> Result<Option<(u16, u16)>, HeaderError> {
    if ip.proto != IPPROTO_TCP && ip.proto != IPPROTO_UDP {
        return Ok(None);
    }
    let at = ip.transport_offset();
    if frame.len() < at + 4 {
        return Err(HeaderError::HeaderTruncated);
    }
    Ok(Some((be16(frame, at), be16(frame, at + 2))))
}

/// RFC 1071 ones-complement checksum.
pub fn internet_checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut carry: Option<u8> = None;
    for chunk in chunks {
        for &b in chunk.iter() {
            match carry.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => carry = Some(b),
            }
        }
    }
    if let Some(hi) = carry {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_of_rfc1071_example() {
        // 0001 f203 f4f5 f6f7 sums to ddf2, complement 220d.
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(internet_checksum(&[&data]), 0x220d);
        assert_eq!(internet_checksum(&[&data[..3], &data[3..]]), 0x220d);
    }

    #[test]
    fn short_frames() {
        assert_eq!(parse_ipv4(&[0; 10]), Err(HeaderError::HeaderTruncated));
        let mut f = vec![0u8; 30];
        f[12] = 0x08;
        assert_eq!(parse_ipv4(&f), Err(HeaderError::HeaderTruncated));
        f[12] = 0x86;
        f[13] = 0xdd;
        assert_eq!(parse_ipv4(&f), Err(HeaderError::NotIPv4));
    }
}
