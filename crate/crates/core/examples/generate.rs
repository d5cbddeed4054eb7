//! Briefly train a small model, sample a synthetic flow from a real seed,
//! and rebuild it as a capture.
//!
//! ```text
//! cargo run --release --example generate -- [out.pcap]
//! ```

use ssm_tracegen::generate::{default_length, make_seed, rebuild_pcap, GenerationRequest, Generator, Sampling};
use ssm_tracegen::model::ModelConfig;
use ssm_tracegen::pcap::{parse_pcap, write_pcap};
use ssm_tracegen::tokenizer::{encode_flow, Vocabulary};
use ssm_tracegen::traffic::Workload;
use ssm_tracegen::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("synthetic.pcap"));
    let vocab = Vocabulary::new(["twitch", "zoom"])?;
    let flows = Workload::new(21).flows(&["twitch", "zoom"], 4, (3, 5));
    let corpus = flows.iter().map(|f| encode_flow(f, &vocab)).collect::<Result<Vec<_>, _>>()?;

    let mcfg = ModelConfig::new(32, 2, 8, vocab.size(), 2048).with_seed(1);
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 2e-3,
        ..Default::default()
    };
    let out = train(&corpus, &cfg, &mcfg)?;
    println!("trained 20 epochs, loss {:.3} nats", out.losses.last().unwrap().mean_loss);

    let flow = &flows[0];
    let req = GenerationRequest {
        seed: make_seed(flow, &vocab)?,
        length: default_length(flow),
        sampling: Sampling::Temperature { tau: 1.0, rng_seed: 3 },
    };
    let tokens = Generator::new(&out.params).generate(&req)?;
    println!("seed {} tokens, budget {}, generated {}", req.seed.len(), req.length, tokens.len());

    let (capture, report) = rebuild_pcap(tokens.as_slice(), &vocab);
    println!(
        "rebuilt {} packets; {} malformed, {} tail tokens dropped",
        report.packets, report.malformed, report.dropped_tail_tokens
    );
    let bytes = write_pcap(&capture)?;
    assert_eq!(parse_pcap(&bytes)?, capture);
    std::fs::write(&path, bytes)?;
    println!("-> {}", path.display());
    Ok(())
}
