//! Classic libpcap capture files.
//!
//! Readers accept all four magic numbers (micro/nanosecond resolution in
//! either byte order). The writer always emits little-endian files with
//! version 2.4, so `write_pcap` output is canonical for a given capture.
//!
//! Only Ethernet (`LINKTYPE_ETHERNET = 1`) captures are supported.

use thiserror::Error;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const MAX_PACKET_LEN: usize = 65_535;

const MAGIC_MICRO: u32 = 0xa1b2_c3d4;
const MAGIC_NANO: u32 = 0xa1b2_3c4d;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcapError {
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("truncated record at offset {offset}: need {needed} bytes, {available} available")]
    TruncatedRecord {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("packet {index} is {len} bytes, larger than {MAX_PACKET_LEN}")]
    OversizedPacket { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsResolution {
    #[default]
    Micro,
    Nano,
}

/// One captured frame. `data` may be shorter than `orig_len` when the
/// capture used a snap length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub data: Vec<u8>,
    pub ts_sec: u32,
    pub ts_frac: u32,
    pub orig_len: u32,
}

impl Packet {
    /// An untruncated packet with the given timestamp.
    pub fn new(data: Vec<u8>, ts_sec: u32, ts_frac: u32) -> Self {
        let orig_len = data.len() as u32;
        Packet {
            data,
            ts_sec,
            ts_frac,
            orig_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFile {
    pub link_type: u32,
    pub resolution: TsResolution,
    pub packets: Vec<Packet>,
}

impl Default for CaptureFile {
    fn default() -> Self {
        CaptureFile::new(Vec::new())
    }
}

impl CaptureFile {
    /// An Ethernet, microsecond-resolution capture.
    pub fn new(packets: Vec<Packet>) -> Self {
        CaptureFile {
            link_type: LINKTYPE_ETHERNET,
            resolution: TsResolution::Micro,
            packets,
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        }
    }
}

fn take<'a>(input: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8], PcapError> {
    let available = input.len().saturating_sub(offset);
    if available < len {
        return Err(PcapError::TruncatedRecord {
            offset,
            needed: len,
            available,
        });
    }
    Ok(&input[offset..offset + len])
}

/// Parse a whole capture held in memory.
pub fn parse_pcap(bytes: &[u8]) -> Result<CaptureFile, PcapError> {
    if bytes.len() < 4 {
        return Err(PcapError::TruncatedRecord {
            offset: 0,
            needed: GLOBAL_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic_le = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (endian, resolution) = match magic_le {
        MAGIC_MICRO => (Endian::Little, TsResolution::Micro),
        MAGIC_NANO => (Endian::Little, TsResolution::Nano),
        m if m.swap_bytes() == MAGIC_MICRO => (Endian::Big, TsResolution::Micro),
        m if m.swap_bytes() == MAGIC_NANO => (Endian::Big, TsResolution::Nano),
        _ => {
            return Err(PcapError::BadMagic(u32::from_be_bytes([
                bytes[0], bytes[1], bytes[2], bytes[3],
            ])))
        }
    };
    let header = take(bytes, 0, GLOBAL_HEADER_LEN)?;
    let link_type = endian.u32(&header[20..24]);
    if link_type != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(link_type));
    }

    let mut packets = Vec::new();
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < bytes.len() {
        let rec = take(bytes, offset, RECORD_HEADER_LEN)?;
        let ts_sec = endian.u32(&rec[0..4]);
        let ts_frac = endian.u32(&rec[4..8]);
        let incl_len = endian.u32(&rec[8..12]) as usize;
        let orig_len = endian.u32(&rec[12..16]);
        offset += RECORD_HEADER_LEN;
        let data = take(bytes, offset, incl_len)?.to_vec();
        offset += incl_len;
        packets.push(Packet {
            data,
            ts_sec,
            ts_frac,
            orig_len,
        });
    }

    Ok(CaptureFile {
        link_type,
        resolution,
        packets,
    })
}

/// Serialize a capture as little-endian classic PCAP.
///
/// The magic number follows `capture.resolution` so that nanosecond
/// timestamps survive a round trip unchanged.
pub fn write_pcap(capture: &CaptureFile) -> Result<Vec<u8>, PcapError> {
    let body: usize = capture
        .packets
        .iter()
        .map(|p| RECORD_HEADER_LEN + p.data.len())
        .sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + body);
    let magic = match capture.resolution {
        TsResolution::Micro => MAGIC_MICRO,
        TsResolution::Nano => MAGIC_NANO,
    };
    out.extend_from_slice(&magic.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    out.extend_from_slice(&(MAX_PACKET_LEN as u32).to_le_bytes());
    out.extend_from_slice(&capture.link_type.to_le_bytes());

    for (index, p) in capture.packets.iter().enumerate() {
        if p.data.len() > MAX_PACKET_LEN {
            return Err(PcapError::OversizedPacket {
                index,
                len: p.data.len(),
            });
        }
        out.extend_from_slice(&p.ts_sec.to_le_bytes());
        out.extend_from_slice(&p.ts_frac.to_le_bytes());
        out.extend_from_slice(&(p.data.len() as u32).to_le_bytes());
        out.extend_from_slice(&p.orig_len.to_le_bytes());
        out.extend_from_slice(&p.data);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: [u8; 4], link: u32) -> Vec<u8> {
        let mut h = magic.to_vec();
        h.extend_from_slice(&[2, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0, 0]);
        h.extend_from_slice(&link.to_le_bytes());
        h
    }

    #[test]
    fn header_only_is_empty_capture() {
        let cap = parse_pcap(&header([0xd4, 0xc3, 0xb2, 0xa1], 1)).unwrap();
        assert!(cap.is_empty());
        assert_eq!(cap.resolution, TsResolution::Micro);
    }

    #[test]
    fn bad_magic() {
        let mut h = header([0xde, 0xad, 0xbe, 0xef], 1);
        h.truncate(24);
        assert_eq!(parse_pcap(&h), Err(PcapError::BadMagic(0xdeadbeef)));
    }

    #[test]
    fn non_ethernet_rejected() {
        let h = header([0xd4, 0xc3, 0xb2, 0xa1], 101);
        assert_eq!(parse_pcap(&h), Err(PcapError::UnsupportedLinkType(101)));
    }

    #[test]
    fn big_endian_nano_header() {
        let mut h = vec![0xa1, 0xb2, 0x3c, 0x4d, 0, 2, 0, 4];
        h.extend_from_slice(&[0; 8]);
        h.extend_from_slice(&65535u32.to_be_bytes());
        h.extend_from_slice(&1u32.to_be_bytes());
        // one record: ts 7.000000123, incl 2, orig 9
        for v in [7u32, 123, 2, 9] {
            h.extend_from_slice(&v.to_be_bytes());
        }
        h.extend_from_slice(&[0xab, 0xcd]);
        let cap = parse_pcap(&h).unwrap();
        assert_eq!(cap.resolution, TsResolution::Nano);
        assert_eq!(
            cap.packets,
            vec![Packet {
                data: vec![0xab, 0xcd],
                ts_sec: 7,
                ts_frac: 123,
                orig_len: 9
            }]
        );
    }

    #[test]
    fn empty_capture_writes_24_bytes() {
        assert_eq!(write_pcap(&CaptureFile::default()).unwrap().len(), 24);
    }

    #[test]
    fn two_packet_length_arithmetic() {
        let cap = CaptureFile::new(vec![
            Packet::new(vec![1; 60], 1, 0),
            Packet::new(vec![2; 54], 1, 5),
        ]);
        let bytes = write_pcap(&cap).unwrap();
        assert_eq!(bytes.len(), 24 + (16 + 60) + (16 + 54));
        assert_eq!(parse_pcap(&bytes).unwrap(), cap);
    }

    #[test]
    fn oversized_packet_rejected() {
        let cap = CaptureFile::new(vec![Packet::new(vec![0; MAX_PACKET_LEN + 1], 0, 0)]);
        assert!(matches!(
            write_pcap(&cap),
            Err(PcapError::OversizedPacket { index: 0, .. })
        ));
    }

    #[test]
    fn truncated_body_is_error() {
        let cap = CaptureFile::new(vec![Packet::new(vec![9; 40], 0, 0)]);
        let bytes = write_pcap(&cap).unwrap();
        let err = parse_pcap(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, PcapError::TruncatedRecord { .. }));
        let err = parse_pcap(&bytes[..30]).unwrap_err();
        assert!(matches!(err, PcapError::TruncatedRecord { .. }));
    }
}
