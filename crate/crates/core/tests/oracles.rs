//! Frozen values from independent tools (scapy, dpkt, scipy); see
//! `fixtures/make_fixtures.py`.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::Deserialize;
use ssm_tracegen::eval::{hellinger, jsd, tvd};
use ssm_tracegen::flow::{dns_filter, extract_key, parse_dns_message, split_flows, DnsRecord, FlowKey};
use ssm_tracegen::nprint::{encode_bits, extract_fields, layout, read_field};
use ssm_tracegen::pcap::{parse_pcap, write_pcap, TsResolution};

const MICRO: &[u8] = include_bytes!("fixtures/oracle_micro.pcap");
const NANO: &[u8] = include_bytes!("fixtures/oracle_nano.pcap");
const ORACLE: &str = include_str!("fixtures/oracle.json");

#[derive(Deserialize)]
struct Flow {
    src: Ipv4Addr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    proto: u8,
}

#[derive(Deserialize)]
struct PacketOracle {
    len: usize,
    fields: BTreeMap<String, u64>,
    flow: Option<Flow>,
}

#[derive(Deserialize)]
struct Metric {
    p: Vec<f64>,
    q: Vec<f64>,
    jsd: f64,
    tvd: f64,
    hd: f64,
}

#[derive(Deserialize)]
struct Oracle {
    micro_times: Vec<(u32, u32)>,
    nano_times: Vec<(u32, u32)>,
    packets: Vec<PacketOracle>,
    dns_answer_index: usize,
    dns_a_records: Vec<Ipv4Addr>,
    metrics: Vec<Metric>,
}

fn oracle() -> Oracle {
    serde_json::from_str(ORACLE).unwrap()
}

#[test]
fn pcap_reader_matches_external_writer() {
    let o = oracle();
    for (bytes, res, times) in [
        (MICRO, TsResolution::Micro, &o.micro_times),
        (NANO, TsResolution::Nano, &o.nano_times),
    ] {
        let cap = parse_pcap(bytes).unwrap();
        assert_eq!(cap.resolution, res);
        assert_eq!(cap.link_type, 1);
        assert_eq!(cap.len(), o.packets.len());
        for ((p, want), &(sec, frac)) in cap.packets.iter().zip(&o.packets).zip(times) {
            assert_eq!(p.data.len(), want.len);
            assert_eq!(p.orig_len as usize, want.len);
            assert_eq!((p.ts_sec, p.ts_frac), (sec, frac));
        }
        // Little-endian 2.4 with snaplen 65535 is what the writer emits too.
        assert_eq!(write_pcap(&cap).unwrap(), bytes);
    }
}

#[test]
fn header_fields_match_dissector() {
    let o = oracle();
    let cap = parse_pcap(MICRO).unwrap();
    for (i, (p, want)) in cap.packets.iter().zip(&o.packets).enumerate() {
        let got = extract_fields(&p.data).unwrap();
        assert_eq!(got, want.fields, "packet {i}");
        let bits = encode_bits(&p.data).unwrap();
        for (name, &v) in &want.fields {
            if let Some(spec) = layout().by_field_name(name) {
                assert_eq!(read_field(&bits, spec), Some(v), "packet {i} {name}");
            }
        }
    }
}

#[test]
fn flow_keys_match_dpkt() {
    let o = oracle();
    let cap = parse_pcap(MICRO).unwrap();
    for (p, want) in cap.packets.iter().zip(&o.packets) {
        match &want.flow {
            Some(f) => assert_eq!(
                extract_key(p).unwrap(),
                FlowKey::canonical(f.src, f.sport, f.dst, f.dport, f.proto)
            ),
            None => assert!(extract_key(p).is_err()),
        }
    }
    let out = split_flows(&cap, "twitch");
    assert_eq!(out.diverted, 1);
    // SYN, SYN-ACK and data share one connection.
    assert_eq!(out.flows[0].packets.len(), 3);
    assert_eq!(out.flows.iter().map(|f| f.packets.len()).sum::<usize>(), cap.len() - 1);
}

#[test]
fn dns_answers_match_dissector() {
    let o = oracle();
    let cap = parse_pcap(MICRO).unwrap();
    let frame = &cap.packets[o.dns_answer_index].data;
    let msg = parse_dns_message(&frame[14 + 20 + 8..]).unwrap();
    assert!(msg.is_response);
    assert_eq!(msg.id, 0xbeef);
    assert_eq!(msg.questions, vec!["video-edge.twitch.tv".to_string()]);
    let a: Vec<Ipv4Addr> = msg
        .answers
        .iter()
        .filter_map(|r| match r {
            DnsRecord::A { addr, .. } => Some(*addr),
            _ => None,
        })
        .collect();
    assert_eq!(a, o.dns_a_records);

    let (kept, report) = dns_filter(&cap, &["twitch.tv".to_string()]);
    assert_eq!(report.addresses.iter().copied().collect::<Vec<_>>(), o.dns_a_records);
    assert_eq!(report.dns_packets, 2);
    // Everything except the ping to 8.8.8.8 and the ARP request.
    assert_eq!(kept.len(), cap.len() - 2);
}

#[test]
fn divergences_match_scipy() {
    for m in oracle().metrics {
        assert!((jsd(&m.p, &m.q) - m.jsd).abs() < 1e-12, "jsd {:?} {:?}", m.p, m.q);
        assert!((tvd(&m.p, &m.q) - m.tvd).abs() < 1e-12);
        assert!((hellinger(&m.p, &m.q) - m.hd).abs() < 1e-12);
    }
}
