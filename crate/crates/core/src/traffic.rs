//! Frame builders and a small seeded workload generator.
//!
//! The builders produce well-formed Ethernet/IPv4/TCP|UDP frames with valid
//! checksums. [`Workload`] strings them together into labeled flows and
//! interleaved captures, which is what the examples and integration tests
//! train and evaluate on.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::FlowRecord;
use crate::headers::{internet_checksum, IPPROTO_TCP, IPPROTO_UDP};
use crate::pcap::{CaptureFile, Packet};

pub mod tcp_flags {
    pub const FIN: u16 = 0x001;
    pub const SYN: u16 = 0x002;
    pub const RST: u16 = 0x004;
    pub const PSH: u16 = 0x008;
    pub const ACK: u16 = 0x010;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub mac: [u8; 6],
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(mac: [u8; 6], ip: Ipv4Addr, port: u16) -> Self {
        Endpoint { mac, ip, port }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TcpSegment {
    pub seq: u32,
    pub ack: u32,
    pub flags: u16,
    pub window: u16,
    /// Raw option bytes; padded with NOPs to a 4-byte boundary.
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

/// IPv4 fields that vary per packet.
#[derive(Debug, Clone, Copy)]
pub struct IpParams {
    pub id: u16,
    pub ttl: u8,
    pub dont_fragment: bool,
}

impl Default for IpParams {
    fn default() -> Self {
        IpParams {
            id: 0,
            ttl: 64,
            dont_fragment: true,
        }
    }
}

fn ethernet(src: &Endpoint, dst: &Endpoint, out: &mut Vec<u8>) {
    out.extend_from_slice(&dst.mac);
    out.extend_from_slice(&src.mac);
    out.extend_from_slice(&0x0800u16.to_be_bytes());
}

fn ipv4_header(src: &Endpoint, dst: &Endpoint, ip: IpParams, proto: u8, payload_len: usize) -> [u8; 20] {
    let mut h = [0u8; 20];
    h[0] = 0x45;
    h[2..4].copy_from_slice(&((20 + payload_len) as u16).to_be_bytes());
    h[4..6].copy_from_slice(&ip.id.to_be_bytes());
    if ip.dont_fragment {
        h[6] = 0x40;
    }
    h[8] = ip.ttl;
    h[9] = proto;
    h[12..16].copy_from_slice(&src.ip.octets());
    h[16..20].copy_from_slice(&dst.ip.octets());
    let sum = internet_checksum(&[&h]);
    h[10..12].copy_from_slice(&sum.to_be_bytes());
    h
}

fn pseudo_header(src: &Endpoint, dst: &Endpoint, proto: u8, len: usize) -> [u8; 12] {
    let mut p = [0u8; 12];
    p[0..4].copy_from_slice(&src.ip.octets());
    p[4..8].copy_from_slice(&dst.ip.octets());
    p[9] = proto;
    p[10..12].copy_from_slice(&(len as u16).to_be_bytes());
    p
}

pub fn tcp_frame(src: &Endpoint, dst: &Endpoint, ip: IpParams, seg: &TcpSegment) -> Vec<u8> {
    let mut options = seg.options.clone();
    while options.len() % 4 != 0 {
        options.push(1);
    }
    assert!(options.len() <= 40, "TCP options exceed 40 bytes");
    let header_len = 20 + options.len();
    let mut tcp = Vec::with_capacity(header_len + seg.payload.len());
    tcp.extend_from_slice(&src.port.to_be_bytes());
    tcp.extend_from_slice(&dst.port.to_be_bytes());
    tcp.extend_from_slice(&seg.seq.to_be_bytes());
    tcp.extend_from_slice(&seg.ack.to_be_bytes());
    let offset_flags = ((header_len as u16 / 4) << 12) | (seg.flags & 0x01ff);
    tcp.extend_from_slice(&offset_flags.to_be_bytes());
    tcp.extend_from_slice(&seg.window.to_be_bytes());
    tcp.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent pointer
    tcp.extend_from_slice(&options);
    tcp.extend_from_slice(&seg.payload);
    let sum = internet_checksum(&[&pseudo_header(src, dst, IPPROTO_TCP, tcp.len()), &tcp]);
    tcp[16..18].copy_from_slice(&sum.to_be_bytes());

    let mut frame = Vec::with_capacity(34 + tcp.len());
    ethernet(src, dst, &mut frame);
    frame.extend_from_slice(&ipv4_header(src, dst, ip, IPPROTO_TCP, tcp.len()));
    frame.extend_from_slice(&tcp);
    frame
}

pub fn udp_frame(src: &Endpoint, dst: &Endpoint, ip: IpParams, payload: &[u8]) -> Vec<u8> {
    let len = 8 + payload.len();
    let mut udp = Vec::with_capacity(len);
    udp.extend_from_slice(&src.port.to_be_bytes());
    udp.extend_from_slice(&dst.port.to_be_bytes());
    udp.extend_from_slice(&(len as u16).to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(payload);
    let mut sum = internet_checksum(&[&pseudo_header(src, dst, IPPROTO_UDP, len), &udp]);
    if sum == 0 {
        sum = 0xffff;
    }
    udp[6..8].copy_from_slice(&sum.to_be_bytes());

    let mut frame = Vec::with_capacity(34 + len);
    ethernet(src, dst, &mut frame);
    frame.extend_from_slice(&ipv4_header(src, dst, ip, IPPROTO_UDP, len));
    frame.extend_from_slice(&udp);
    frame
}

/// ICMP echo request; used as a portless-protocol fixture.
pub fn icmp_echo_frame(src: &Endpoint, dst: &Endpoint, ip: IpParams, ident: u16, seq: u16) -> Vec<u8> {
    let mut icmp = vec![8, 0, 0, 0];
    icmp.extend_from_slice(&ident.to_be_bytes());
    icmp.extend_from_slice(&seq.to_be_bytes());
    icmp.extend_from_slice(&[0x61; 32]);
    let sum = internet_checksum(&[&icmp]);
    icmp[2..4].copy_from_slice(&sum.to_be_bytes());
    let mut frame = Vec::new();
    ethernet(src, dst, &mut frame);
    frame.extend_from_slice(&ipv4_header(src, dst, ip, 1, icmp.len()));
    frame.extend_from_slice(&icmp);
    frame
}

fn encode_qname(name: &str, out: &mut Vec<u8>) {
    for label in name.trim_end_matches('.').split('.') {
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
}

/// A DNS query message for one A record.
pub fn dns_query(id: u16, name: &str) -> Vec<u8> {
    let mut m = Vec::new();
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&[0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0]);
    encode_qname(name, &mut m);
    m.extend_from_slice(&[0, 1, 0, 1]);
    m
}

/// A DNS response answering `name` with the given A records. Answers use
/// a compression pointer back to the question name.
pub fn dns_response(id: u16, name: &str, addrs: &[Ipv4Addr]) -> Vec<u8> {
    let mut m = Vec::new();
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&[0x81, 0x80, 0, 1]);
    m.extend_from_slice(&(addrs.len() as u16).to_be_bytes());
    m.extend_from_slice(&[0, 0, 0, 0]);
    encode_qname(name, &mut m);
    m.extend_from_slice(&[0, 1, 0, 1]);
    for a in addrs {
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0x0e, 0x10, 0, 4]);
        m.extend_from_slice(&a.octets());
    }
    m
}

/// Per-label traffic shape used by [`Workload`].
#[derive(Debug, Clone)]
struct ServiceProfile {
    server_port: u16,
    udp: bool,
    payload: (usize, usize),
    server_ttl: u8,
}

fn profile_for(label: &str) -> ServiceProfile {
    // Stable per-label variation without a lookup table.
    let h = label.bytes().fold(0u32, |acc, b| acc.wrapping_mul(31).wrapping_add(u32::from(b)));
    let udp = matches!(label, "zoom" | "teams" | "meet" | "webex") || h % 5 == 0;
    ServiceProfile {
        server_port: if udp { 3478 + (h % 8) as u16 } else { [443, 80, 8443][(h % 3) as usize] },
        udp,
        payload: if udp { (60, 220) } else { (80, 360) },
        server_ttl: [52, 56, 58, 61, 117][(h % 5) as usize],
    }
}

/// Seeded generator of labeled synthetic flows.
pub struct Workload {
    rng: ChaCha8Rng,
    next_client: u32,
}

impl Workload {
    pub fn new(seed: u64) -> Self {
        Workload {
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_client: 2,
        }
    }

    fn client(&mut self) -> Endpoint {
        let n = self.next_client;
        self.next_client += 1;
        Endpoint::new(
            [0x02, 0x00, 0x5e, 0x10, (n >> 8) as u8, n as u8],
            Ipv4Addr::new(192, 168, (n >> 8) as u8, n as u8),
            self.rng.gen_range(49152..=65535),
        )
    }

    fn server(&mut self, label: &str, port: u16) -> Endpoint {
        let h = label.bytes().fold(7u8, |acc, b| acc.wrapping_mul(13).wrapping_add(b));
        Endpoint::new(
            [0x00, 0x1b, 0x21, 0x3a, 0x4f, 0x01],
            Ipv4Addr::new(93, 184, h, self.rng.gen_range(1..=254)),
            port,
        )
    }

    /// One flow of `packets` frames for the given service label.
    pub fn flow(&mut self, label: &str, packets: usize) -> FlowRecord {
        let profile = profile_for(label);
        let client = self.client();
        let server = self.server(label, profile.server_port);
        let t0 = self.rng.gen_range(1_600_000_000u32..1_700_000_000);
        let frames = if profile.udp {
            self.udp_frames(&client, &server, &profile, packets)
        } else {
            self.tcp_frames(&client, &server, &profile, packets)
        };
        let packets = frames
            .into_iter()
            .enumerate()
            .map(|(i, data)| Packet::new(data, t0, (i as u32) * 1_250))
            .collect();
        FlowRecord::from_packets(label, packets).expect("generated frames are IPv4")
    }

    /// `count` flows cycling through `labels`, each with a packet count in
    /// `packets` (inclusive).
    pub fn flows(&mut self, labels: &[&str], count: usize, packets: (usize, usize)) -> Vec<FlowRecord> {
        (0..count)
            .map(|i| {
                let n = self.rng.gen_range(packets.0..=packets.1);
                self.flow(labels[i % labels.len()], n)
            })
            .collect()
    }

    fn payload(&mut self, range: (usize, usize)) -> Vec<u8> {
        let len = self.rng.gen_range(range.0..=range.1);
        (0..len).map(|_| self.rng.gen()).collect()
    }

    fn tcp_frames(&mut self, client: &Endpoint, server: &Endpoint, p: &ServiceProfile, n: usize) -> Vec<Vec<u8>> {
        use tcp_flags::*;
        let mut c_seq: u32 = self.rng.gen();
        let mut s_seq: u32 = self.rng.gen();
        let mut c_id: u16 = self.rng.gen();
        let mut s_id: u16 = self.rng.gen();
        let mss = vec![2, 4, 0x05, 0xb4, 4, 2, 1, 3, 3, 7];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let from_client = i % 2 == 0;
            let (src, dst, ttl) = if from_client {
                (client, server, 64)
            } else {
                (server, client, p.server_ttl)
            };
            let id = if from_client { &mut c_id } else { &mut s_id };
            let ip = IpParams { id: *id, ttl, dont_fragment: true };
            *id = id.wrapping_add(1);
            let seg = match i {
                0 => TcpSegment { seq: c_seq, flags: SYN, window: 64240, options: mss.clone(), ..Default::default() },
                1 => TcpSegment {
                    seq: s_seq,
                    ack: c_seq.wrapping_add(1),
                    flags: SYN | ACK,
                    window: 65160,
                    options: mss.clone(),
                    ..Default::default()
                },
                _ => {
                    if i == 2 {
                        c_seq = c_seq.wrapping_add(1);
                        s_seq = s_seq.wrapping_add(1);
                    }
                    let payload = if i == 2 { Vec::new() } else { self.payload(p.payload) };
                    let (seq, ack) = if from_client { (c_seq, s_seq) } else { (s_seq, c_seq) };
                    let adv = payload.len() as u32;
                    if from_client {
                        c_seq = c_seq.wrapping_add(adv);
                    } else {
                        s_seq = s_seq.wrapping_add(adv);
                    }
                    TcpSegment {
                        seq,
                        ack,
                        flags: if payload.is_empty() { ACK } else { ACK | PSH },
                        window: if from_client { 501 } else { 283 },
                        options: Vec::new(),
                        payload,
                    }
                }
            };
            out.push(tcp_frame(src, dst, ip, &seg));
        }
        out
    }

    fn udp_frames(&mut self, client: &Endpoint, server: &Endpoint, p: &ServiceProfile, n: usize) -> Vec<Vec<u8>> {
        let mut c_id: u16 = self.rng.gen();
        let mut s_id: u16 = self.rng.gen();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let from_client = i % 3 != 1;
            let (src, dst, ttl, id) = if from_client {
                (client, server, 64, &mut c_id)
            } else {
                (server, client, p.server_ttl, &mut s_id)
            };
            let ip = IpParams { id: *id, ttl, dont_fragment: false };
            *id = id.wrapping_add(1);
            let payload = self.payload(p.payload);
            out.push(udp_frame(src, dst, ip, &payload));
        }
        out
    }
}

/// Round-robin interleave the packets of several flows into one capture,
/// as they would appear on a shared link.
pub fn interleave(flows: &[FlowRecord]) -> CaptureFile {
    let longest = flows.iter().map(|f| f.packets.len()).max().unwrap_or(0);
    let mut packets = Vec::new();
    for i in 0..longest {
        for f in flows {
            if let Some(p) = f.packets.get(i) {
                packets.push(p.clone());
            }
        }
    }
    CaptureFile::new(packets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headers::parse_ipv4;

    #[test]
    fn tcp_frame_checksums_verify() {
        let a = Endpoint::new([1; 6], Ipv4Addr::new(10, 0, 0, 2), 51000);
        let b = Endpoint::new([2; 6], Ipv4Addr::new(10, 0, 0, 1), 443);
        let seg = TcpSegment { seq: 1000, flags: tcp_flags::SYN, window: 1024, payload: vec![1, 2, 3], ..Default::default() };
        let f = tcp_frame(&a, &b, IpParams::default(), &seg);
        assert_eq!(f.len(), 14 + 20 + 20 + 3);
        // A correct header sums to zero.
        assert_eq!(internet_checksum(&[&f[14..34]]), 0);
        let ip = parse_ipv4(&f).unwrap();
        let tcp = &f[ip.transport_offset()..];
        assert_eq!(internet_checksum(&[&pseudo_header(&a, &b, 6, tcp.len()), tcp]), 0);
    }

    #[test]
    fn workload_is_deterministic() {
        let a = Workload::new(3).flows(&["twitch", "zoom"], 4, (4, 8));
        let b = Workload::new(3).flows(&["twitch", "zoom"], 4, (4, 8));
        assert_eq!(a, b);
        assert!(a.iter().all(|f| f.packets.iter().all(|p| p.data.len() >= 34)));
    }
}
