//! Splitting captures into per-connection flows, plus DNS-driven service
//! filtering.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::net::Ipv4Addr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::headers::{parse_ipv4, transport_ports, HeaderError, IPPROTO_UDP};
use crate::pcap::{CaptureFile, Packet};

mod dns;

pub use dns::{parse_dns_message, DnsError, DnsMessage, DnsRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error(transparent)]
    Header(#[from] HeaderError),
    #[error("flow has no packets")]
    Empty,
    #[error("packet {index} belongs to {found}, not {expected}")]
    MixedKeys {
        index: usize,
        expected: FlowKey,
        found: FlowKey,
    },
    #[error("manifest label {0:?} is not in the configured label set")]
    UnknownLabel(String),
}

/// Connection identity. Endpoints are stored in canonical order, so both
/// directions of a connection share one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub addr_a: Ipv4Addr,
    pub port_a: u16,
    pub addr_b: Ipv4Addr,
    pub port_b: u16,
    pub proto: u8,
}

impl FlowKey {
    /// Build a canonical key from one packet's source and destination.
    pub fn canonical(src: Ipv4Addr, sport: u16, dst: Ipv4Addr, dport: u16, proto: u8) -> Self {
        let (a, b) = if (src.octets(), sport) <= (dst.octets(), dport) {
            ((src, sport), (dst, dport))
        } else {
            ((dst, dport), (src, sport))
        };
        FlowKey {
            addr_a: a.0,
            port_a: a.1,
            addr_b: b.0,
            port_b: b.1,
            proto,
        }
    }

    /// Filesystem-safe rendering, e.g. `10.0.0.1_443-10.0.0.2_51000-6`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}-{}_{}-{}",
            self.addr_a, self.port_a, self.addr_b, self.port_b, self.proto
        )
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} <-> {}:{} proto {}",
            self.addr_a, self.port_a, self.addr_b, self.port_b, self.proto
        )
    }
}

/// Whether the two directions of a connection form one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowDirection {
    #[default]
    Bidirectional,
    Unidirectional,
}

/// Canonical 5-tuple of an Ethernet/IPv4 frame. Protocols without ports
/// get ports (0, 0).
pub fn extract_key(p: &Packet) -> Result<FlowKey, HeaderError> {
    let ip = parse_ipv4(&p.data)?;
    let (sport, dport) = transport_ports(&p.data, &ip)?.unwrap_or((0, 0));
    Ok(FlowKey::canonical(ip.src, sport, ip.dst, dport, ip.proto))
}

fn directed_key(p: &Packet) -> Result<FlowKey, HeaderError> {
    let ip = parse_ipv4(&p.data)?;
    let (sport, dport) = transport_ports(&p.data, &ip)?.unwrap_or((0, 0));
    Ok(FlowKey {
        addr_a: ip.src,
        port_a: sport,
        addr_b: ip.dst,
        port_b: dport,
        proto: ip.proto,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub packets: Vec<Packet>,
    pub label: String,
}

impl FlowRecord {
    /// Wrap packets already known to share one connection.
    pub fn from_packets(label: impl Into<String>, packets: Vec<Packet>) -> Result<Self, FlowError> {
        let first = packets.first().ok_or(FlowError::Empty)?;
        let key = extract_key(first)?;
        for (index, p) in packets.iter().enumerate().skip(1) {
            let found = extract_key(p)?;
            if found != key {
                return Err(FlowError::MixedKeys {
                    index,
                    expected: key,
                    found,
                });
            }
        }
        Ok(FlowRecord {
            key,
            packets,
            label: label.into(),
        })
    }

    pub fn to_capture(&self) -> CaptureFile {
        CaptureFile::new(self.packets.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub flows: Vec<FlowRecord>,
    /// Packets that are not Ethernet/IPv4 or whose headers are truncated.
    pub diverted: usize,
}

/// Partition a capture into flows ordered by first appearance.
pub fn split_flows(cap: &CaptureFile, label: &str) -> SplitOutcome {
    split_flows_with(cap, label, FlowDirection::Bidirectional)
}

pub fn split_flows_with(cap: &CaptureFile, label: &str, direction: FlowDirection) -> SplitOutcome {
    let mut index: HashMap<FlowKey, usize> = HashMap::new();
    let mut flows: Vec<FlowRecord> = Vec::new();
    let mut diverted = 0;
    for p in &cap.packets {
        let key = match direction {
            FlowDirection::Bidirectional => extract_key(p),
            FlowDirection::Unidirectional => directed_key(p),
        };
        let Ok(key) = key else {
            diverted += 1;
            continue;
        };
        let slot = *index.entry(key).or_insert_with(|| {
            flows.push(FlowRecord {
                key,
                packets: Vec::new(),
                label: label.to_string(),
            });
            flows.len() - 1
        });
        flows[slot].packets.push(p.clone());
    }
    SplitOutcome { flows, diverted }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DnsFilterReport {
    pub addresses: BTreeSet<Ipv4Addr>,
    pub dns_packets: usize,
    pub malformed_dns: usize,
    pub kept: usize,
    pub dropped: usize,
}

fn name_matches(name: &str, patterns: &[String]) -> bool {
    let name = name.trim_end_matches('.').to_ascii_lowercase();
    patterns.iter().any(|pat| {
        let pat = pat.trim_start_matches('.').trim_end_matches('.').to_ascii_lowercase();
        name == pat || name.ends_with(&format!(".{pat}"))
    })
}

/// UDP payload of a DNS packet (either port 53), if the frame is one.
fn dns_payload(p: &Packet) -> Option<(&[u8], bool)> {
    let ip = parse_ipv4(&p.data).ok()?;
    if ip.proto != IPPROTO_UDP {
        return None;
    }
    let (sport, dport) = transport_ports(&p.data, &ip).ok()??;
    if sport != 53 && dport != 53 {
        return None;
    }
    let start = ip.transport_offset() + 8;
    Some((p.data.get(start..).unwrap_or(&[]), sport == 53))
}

/// Keep only traffic to or from addresses that DNS responses in the same
/// capture resolved for names matching `patterns` (case-insensitive domain
/// suffixes). DNS packets themselves are always kept. An empty pattern list
/// keeps everything.
pub fn dns_filter(cap: &CaptureFile, patterns: &[String]) -> (CaptureFile, DnsFilterReport) {
    let mut report = DnsFilterReport::default();
    if patterns.is_empty() {
        report.kept = cap.len();
        return (cap.clone(), report);
    }

    for p in &cap.packets {
        let Some((payload, from_server)) = dns_payload(p) else {
            continue;
        };
        report.dns_packets += 1;
        if !from_server {
            continue;
        }
        let msg = match parse_dns_message(payload) {
            Ok(m) => m,
            Err(_) => {
                report.malformed_dns += 1;
                continue;
            }
        };
        if !msg.is_response || !msg.questions.iter().any(|q| name_matches(q, patterns)) {
            continue;
        }
        report.addresses.extend(msg.answers.iter().filter_map(|r| match r {
            DnsRecord::A { addr, .. } => Some(*addr),
            _ => None,
        }));
    }

    let packets: Vec<Packet> = cap
        .packets
        .iter()
        .filter(|p| {
            if dns_payload(p).is_some() {
                return true;
            }
            match parse_ipv4(&p.data) {
                Ok(ip) => report.addresses.contains(&ip.src) || report.addresses.contains(&ip.dst),
                Err(_) => false,
            }
        })
        .cloned()
        .collect();
    report.kept = packets.len();
    report.dropped = cap.len() - packets.len();
    let out = CaptureFile {
        link_type: cap.link_type,
        resolution: cap.resolution,
        packets,
    };
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pcap: PathBuf,
    pub label: String,
}

/// Dataset manifest: a JSON array of `{"pcap": path, "label": name}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest(pub Vec<ManifestEntry>);

impl Manifest {
    pub fn validate(&self, labels: &[String]) -> Result<(), FlowError> {
        match self.0.iter().find(|e| !labels.contains(&e.label)) {
            Some(e) => Err(FlowError::UnknownLabel(e.label.clone())),
            None => Ok(()),
        }
    }
}
