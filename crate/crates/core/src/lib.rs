//! Synthetic packet trace generation with byte-level selective state-space
//! models.
//!
//! The pipeline runs: PCAP → flows → token streams → training → seeded
//! generation → PCAP, with header-bit similarity and memorization checks
//! on the output.

pub mod cli;
pub mod eval;
pub mod flow;
pub mod generate;
pub mod headers;
pub mod model;
pub mod nprint;
pub mod pcap;
pub mod tokenizer;
pub mod traffic;
pub mod train;
