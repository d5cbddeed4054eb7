//! Score a perturbed copy and a random baseline against real flows, then
//! run the memorization comparison.

use ssm_tracegen::eval::{memorization, random_baseline, similarity, write_field_changes_csv};
use ssm_tracegen::pcap::CaptureFile;
use ssm_tracegen::traffic::Workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flows = Workload::new(12).flows(&["twitch", "zoom", "amazon"], 12, (6, 16));
    let real: Vec<CaptureFile> = flows.iter().map(|f| f.to_capture()).collect();

    // Every IPv4 TTL lowered by two; the checksum is left alone.
    let ttl_minus_two: Vec<CaptureFile> = real
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for p in &mut c.packets {
                p.data[14 + 8] -= 2;
            }
            c
        })
        .collect();
    let random = random_baseline(&real, 7);

    for (name, synth) in [("ttl-2", &ttl_minus_two), ("random", &random)] {
        let r = similarity(&real, synth)?;
        println!(
            "{name:<7} JSD {:.4}  TVD {:.4}  HD {:.4}  ({} bits scored, {} skipped)",
            r.mean.jsd,
            r.mean.tvd,
            r.mean.hd,
            r.scored_bits,
            r.skipped_bits.len()
        );
    }

    let m = memorization(&real, &ttl_minus_two, 100)?;
    println!("{} of {} packets identical", m.total_identical, m.total_compared);
    let mut csv = Vec::new();
    write_field_changes_csv(&mut csv, &m)?;
    for line in String::from_utf8(csv)?.lines().filter(|l| !l.ends_with(",0.00")) {
        println!("  {line}");
    }
    Ok(())
}
