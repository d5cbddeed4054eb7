//! Keep only traffic to addresses that DNS answers resolved for a service.

use std::net::Ipv4Addr;

use ssm_tracegen::flow::dns_filter;
use ssm_tracegen::headers::parse_ipv4;
use ssm_tracegen::pcap::{CaptureFile, Packet};
use ssm_tracegen::traffic::{dns_response, udp_frame, Endpoint, IpParams, Workload};

fn main() {
    let mut work = Workload::new(3);
    let twitch = work.flow("twitch", 6);
    let zoom = work.flow("zoom", 6);

    // A resolver answer pointing the client at the twitch server, which is
    // the destination of the opening SYN.
    let server = parse_ipv4(&twitch.packets[0].data).expect("IPv4").dst;
    let resolver = Endpoint::new([0x02, 0, 0, 0, 0, 0x53], Ipv4Addr::new(192, 168, 0, 53), 53);
    let client = Endpoint::new([0x02, 0, 0, 0, 0, 0x02], Ipv4Addr::new(192, 168, 0, 200), 53001);
    let answer = dns_response(0x1234, "video-edge.twitch.tv", &[server]);
    let dns = Packet::new(udp_frame(&resolver, &client, IpParams::default(), &answer), 1, 0);

    let mut packets = vec![dns];
    packets.extend(twitch.packets.iter().cloned());
    packets.extend(zoom.packets.iter().cloned());
    let capture = CaptureFile::new(packets);

    let (kept, report) = dns_filter(&capture, &["twitch.tv".to_string()]);
    println!("resolved addresses: {:?}", report.addresses);
    println!(
        "kept {} of {} packets ({} DNS, {} dropped)",
        kept.len(),
        capture.len(),
        report.dns_packets,
        report.dropped
    );
    assert_eq!(kept.len(), 1 + twitch.packets.len());
}
