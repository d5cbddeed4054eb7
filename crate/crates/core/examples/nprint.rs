//! Per-bit header encoding and field extraction for one TCP and one UDP
//! packet.

use ssm_tracegen::nprint::{encode_bits, extract_fields, layout, read_field, BIT_COUNT};
use ssm_tracegen::traffic::Workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let l = layout();
    println!("layout: {} fields, {} bits", l.fields.len(), l.bit_count);
    for f in l.fields.iter().filter(|f| f.name == "version" || f.name == "options" || f.name == "sport") {
        println!("  {:<14} bits {:>4}..{:<4}", f.qualified_name(), f.offset, f.offset + f.width);
    }

    let mut work = Workload::new(8);
    let tcp = &work.flow("netflix", 2).packets[1];
    let udp = &work.flow("zoom", 1).packets[0];
    for (name, p) in [("tcp", tcp), ("udp", udp)] {
        let bits = encode_bits(&p.data)?;
        let absent = bits.iter().filter(|&&b| b == -1).count();
        let fields = extract_fields(&p.data)?;
        println!("{name}: {absent}/{BIT_COUNT} bits absent, {} fields", fields.len());
        for key in ["IP_ttl", "IP_len", "TCP_seq", "TCP_flags", "UDP_len"] {
            if let Some(v) = fields.get(key) {
                let spec = l.by_field_name(key).unwrap();
                assert_eq!(read_field(&bits, spec), Some(*v));
                println!("  {key:<10} = {v}");
            }
        }
    }
    Ok(())
}
