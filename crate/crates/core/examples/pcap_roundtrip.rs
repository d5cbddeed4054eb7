//! Write a synthetic capture to disk and read it back.
//!
//! ```text
//! cargo run --example pcap_roundtrip -- [out.pcap]
//! ```

use ssm_tracegen::pcap::{parse_pcap, write_pcap};
use ssm_tracegen::traffic::{interleave, Workload};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("roundtrip.pcap"));

    let flows = Workload::new(1).flows(&["twitch", "zoom", "netflix"], 6, (4, 12));
    let capture = interleave(&flows);
    let bytes = write_pcap(&capture)?;
    std::fs::write(&path, &bytes)?;

    let back = parse_pcap(&std::fs::read(&path)?)?;
    assert_eq!(back, capture);
    println!(
        "{} packets, {} bytes, link type {} -> {}",
        back.len(),
        bytes.len(),
        back.link_type,
        path.display()
    );
    for p in back.packets.iter().take(3) {
        println!("  t={}.{:06} len={}", p.ts_sec, p.ts_frac, p.data.len());
    }
    Ok(())
}
