//! Overfit the desk-size model on two short flows, then check that greedy
//! decoding from each flow's first packet replays the flow.
//!
//! ```text
//! cargo run --release --example train_overfit -- [epochs]
//! ```

use std::time::Instant;

use ssm_tracegen::generate::{make_seed, GenerationRequest, Generator, Sampling};
use ssm_tracegen::model::{ModelConfig, ModelParameters};
use ssm_tracegen::tokenizer::{encode_flow, Vocabulary, DEFAULT_LABELS};
use ssm_tracegen::traffic::Workload;
use ssm_tracegen::train::{train_from, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let vocab = Vocabulary::new(DEFAULT_LABELS)?;
    let mut work = Workload::new(11);
    let flows = [work.flow("twitch", 4), work.flow("zoom", 3)];
    let corpus = flows
        .iter()
        .map(|f| encode_flow(f, &vocab))
        .collect::<Result<Vec<_>, _>>()?;
    for s in &corpus {
        println!("sample: {} tokens", s.len());
    }

    let mcfg = ModelConfig::desk(vocab.size());
    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let start = Instant::now();
    let params = ModelParameters::init(&mcfg)?;
    let out = train_from(&corpus, &cfg, params, |s, _| {
        if s.epoch % 25 == 0 || s.epoch == 1 {
            println!("epoch {:>4}  loss {:.4} nats  ({:.1?})", s.epoch, s.mean_loss, start.elapsed());
        }
        Ok(())
    })?;
    println!("final loss {:.4} nats", out.losses.last().unwrap().mean_loss);

    let gen = Generator::new(&out.params);
    for (flow, sample) in flows.iter().zip(&corpus) {
        let seed = make_seed(flow, &vocab)?;
        let req = GenerationRequest {
            length: seed.len() + 50,
            seed,
            sampling: Sampling::Greedy,
        };
        let got = gen.generate(&req)?;
        let matching = got.0.iter().zip(&sample.0).take_while(|(a, b)| a == b).count();
        println!(
            "{}: greedy replay matches the first {matching} of {} tokens",
            flow.label,
            got.len()
        );
    }
    Ok(())
}
