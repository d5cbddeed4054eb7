//! Partition an interleaved capture into bidirectional flows.

use ssm_tracegen::flow::split_flows;
use ssm_tracegen::traffic::{interleave, Workload};

fn main() {
    let flows = Workload::new(2).flows(&["youtube", "teams"], 5, (3, 9));
    let capture = interleave(&flows);
    let outcome = split_flows(&capture, "youtube");
    println!("{} packets -> {} flows, {} diverted", capture.len(), outcome.flows.len(), outcome.diverted);
    for f in &outcome.flows {
        println!("  {:<50} {:>3} packets  {}.pcap", f.key.to_string(), f.packets.len(), f.key.file_stem());
    }
    // Each generated flow comes back whole and in order.
    for (orig, got) in flows.iter().zip(&outcome.flows) {
        assert_eq!(orig.packets, got.packets);
    }
}
