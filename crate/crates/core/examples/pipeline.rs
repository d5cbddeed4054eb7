//! The whole command-line pipeline on a synthetic capture:
//! split → tokenize → train → generate → similarity / memcheck → nprint.
//!
//! ```text
//! cargo run --release --example pipeline -- [workdir]
//! ```

use std::path::Path;

use ssm_tracegen::cli;
use ssm_tracegen::pcap::write_pcap;
use ssm_tracegen::traffic::{interleave, Workload};

fn run(args: &[&str]) {
    println!("$ ssm-tracegen {}", args.join(" "));
    let code = cli::run(std::iter::once("ssm-tracegen").chain(args.iter().copied()));
    assert_eq!(code, 0, "command failed");
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("ssm-tracegen-pipeline"));
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let flows = Workload::new(5).flows(&["twitch"], 4, (3, 6));
    std::fs::write(p("capture.pcap"), write_pcap(&interleave(&flows))?)?;
    std::fs::write(
        p("config.json"),
        r#"{"labels": ["twitch", "zoom"], "model": {"d_model": 16, "n_layers": 1, "d_state": 4,
            "d_inner": 32, "conv_width": 4, "vocab_size": 259, "max_seq_len": 2048, "rng_seed": 0},
            "train": {"epochs": 5, "learning_rate": 0.003}}"#,
    )?;
    let cfg = p("config.json");

    run(&["--config", &cfg, "split", "--input", &p("capture.pcap"), "--out", &p("flows"), "--label", "twitch"]);
    run(&["--config", &cfg, "tokenize", "--manifest", &p("flows/manifest.json"), "--out", &p("corpus.ntgc")]);
    run(&["--config", &cfg, "train", "--corpus", &p("corpus.ntgc"), "--out", &p("model.ntgm")]);

    let first = std::fs::read_dir(dir.join("flows"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|f| f.extension().is_some_and(|x| x == "pcap"))
        .min()
        .expect("split wrote flows");
    let first = first.to_string_lossy().into_owned();
    run(&["--config", &cfg, "generate", "--model", &p("model.ntgm"), "--seed-pcap", &first, "--label", "twitch", "--out", &p("synth.pcap")]);
    run(&["--config", &cfg, "similarity", "--real", &first, "--synth", &p("synth.pcap"), "--random-baseline", "1", "--out", &p("similarity.json")]);
    run(&["--config", &cfg, "memcheck", "--real", &first, "--synth", &p("synth.pcap"), "--out", &p("memcheck.json"), "--csv", &p("fields.csv")]);
    run(&["--json", "nprint", "--input", &p("synth.pcap"), "--out", &p("synth.nprint.csv")]);

    println!("artifacts in {}", Path::new(&dir).display());
    Ok(())
}
