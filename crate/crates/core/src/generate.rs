//! Seeded autoregressive generation and conversion back to PCAP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowRecord;
use crate::model::{ModelError, ModelParameters};
use crate::pcap::{CaptureFile, Packet, MAX_PACKET_LEN};
use crate::tokenizer::{decode_tokens, encoded_len, TokenId, TokenStream, TokenizerError, Vocabulary, FIRST_LABEL_TOKEN, PKT_TOKEN};

/// Default cap on the total token budget of one request.
pub const DEFAULT_MAX_TOKENS: usize = 100_000;
/// Extra tokens allowed beyond the real flow's encoded length.
pub const LENGTH_SLACK: usize = 10;
/// Spacing of synthetic timestamps, in microseconds.
pub const PACKET_SPACING_US: u64 = 1_000;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("seed of {seed} tokens does not fit a budget of {length}")]
    SeedTooLong { seed: usize, length: usize },
    #[error("budget of {length} tokens exceeds the cap of {max}")]
    BudgetTooLarge { length: usize, max: usize },
    #[error("invalid seed: {0}")]
    InvalidSeed(&'static str),
    #[error("invalid sampling: {0}")]
    InvalidSampling(&'static str),
    #[error("flow has no packets")]
    EmptyFlow,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Sampling {
    Greedy,
    /// Multinomial sampling from `softmax(logits / tau)`.
    Temperature { tau: f64, rng_seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Temperature { tau: 1.0, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub seed: TokenStream,
    /// Total length of the output, seed included.
    pub length: usize,
    pub sampling: Sampling,
}

/// Label token, the first packet's bytes, and a packet delimiter.
pub fn make_seed(flow: &FlowRecord, vocab: &Vocabulary) -> Result<TokenStream, GenerateError> {
    let label = vocab.label_id(&flow.label)?;
    let first = flow.packets.first().ok_or(GenerateError::EmptyFlow)?;
    let mut tokens = Vec::with_capacity(first.data.len() + 2);
    tokens.push(label);
    tokens.extend(first.data.iter().map(|&b| TokenId::from(b)));
    tokens.push(PKT_TOKEN);
    Ok(TokenStream(tokens))
}

/// Budget for regenerating `flow`: its encoded length plus ten tokens.
pub fn default_length(flow: &FlowRecord) -> usize {
    encoded_len(flow) + LENGTH_SLACK
}

fn check_seed(seed: &[TokenId], vocab_size: usize) -> Result<(), GenerateError> {
    let bad = GenerateError::InvalidSeed;
    match seed.first() {
        Some(&t) if t >= FIRST_LABEL_TOKEN && (t as usize) < vocab_size => {}
        Some(_) => return Err(bad("must start with a label token")),
        None => return Err(bad("empty")),
    }
    if seed.last() != Some(&PKT_TOKEN) || seed.len() < 2 {
        return Err(bad("must end with a packet delimiter"));
    }
    if seed[1..].iter().any(|&t| t > PKT_TOKEN) {
        return Err(bad("label or out-of-range token after position 0"));
    }
    Ok(())
}

fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

fn sample(logits: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| ((l - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    argmax(logits)
}

/// Autoregressive sampler over shared, immutable parameters.
#[derive(Debug, Clone, Copy)]
pub struct Generator<'a> {
    params: &'a ModelParameters,
    max_tokens: usize,
}

impl<'a> Generator<'a> {
    pub fn new(params: &'a ModelParameters) -> Self {
        Generator {
            params,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// Copy the seed, then sample until the output holds `req.length`
    /// tokens. Label tokens can never be sampled.
    pub fn generate(&self, req: &GenerationRequest) -> Result<TokenStream, GenerateError> {
        let vocab_size = self.params.config().vocab_size;
        let seed = req.seed.as_slice();
        check_seed(seed, vocab_size)?;
        if req.length > self.max_tokens {
            return Err(GenerateError::BudgetTooLarge {
                length: req.length,
                max: self.max_tokens,
            });
        }
        if seed.len() >= req.length {
            return Err(GenerateError::SeedTooLong {
                seed: seed.len(),
                length: req.length,
            });
        }
        let mut rng = match req.sampling {
            Sampling::Greedy => None,
            Sampling::Temperature { tau, rng_seed } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(GenerateError::InvalidSampling("temperature must be positive and finite"));
                }
                Some((tau, ChaCha8Rng::seed_from_u64(rng_seed)))
            }
        };

        let mut state = self.params.start_state();
        let mut out = seed.to_vec();
        out.reserve(req.length - seed.len());
        let mut logits = Vec::new();
        for &t in seed {
            logits = self.params.step(&mut state, t)?;
        }
        while out.len() < req.length {
            logits[FIRST_LABEL_TOKEN as usize..].fill(f64::NEG_INFINITY);
            let next = match &mut rng {
                None => argmax(&logits),
                Some((tau, rng)) => sample(&logits, *tau, rng),
            } as TokenId;
            out.push(next);
            if out.len() < req.length {
                logits = self.params.step(&mut state, next)?;
            }
        }
        Ok(TokenStream(out))
    }
}

/// Counts from turning a token stream back into packets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebuildReport {
    pub packets: usize,
    pub malformed: usize,
    /// Segments longer than a PCAP record may hold.
    pub oversized: usize,
    pub dropped_tail_tokens: usize,
    pub stopped_at_label: bool,
}

impl RebuildReport {
    /// Segments dropped for any reason.
    pub fn dropped(&self) -> usize {
        self.malformed + self.oversized
    }
}

/// Default start of synthetic timestamps (2023-11-14T22:13:20Z).
pub const DEFAULT_T0_SEC: u32 = 1_700_000_000;

pub fn rebuild_pcap(ts: &[TokenId], vocab: &Vocabulary) -> (CaptureFile, RebuildReport) {
    rebuild_pcap_at(ts, vocab, DEFAULT_T0_SEC)
}

/// Decode a stream into an Ethernet capture with packets spaced 1 ms apart
/// from `t0_sec`.
pub fn rebuild_pcap_at(ts: &[TokenId], vocab: &Vocabulary, t0_sec: u32) -> (CaptureFile, RebuildReport) {
    let decoded = decode_tokens(ts, vocab);
    let mut report = RebuildReport {
        malformed: decoded.malformed,
        dropped_tail_tokens: decoded.dropped_tail_tokens,
        stopped_at_label: decoded.stopped_at_label,
        ..Default::default()
    };
    let mut packets = Vec::with_capacity(decoded.packets.len());
    for data in decoded.packets {
        if data.len() > MAX_PACKET_LEN {
            report.oversized += 1;
            continue;
        }
        let us = packets.len() as u64 * PACKET_SPACING_US;
        let sec = t0_sec as u64 + us / 1_000_000;
        packets.push(Packet::new(data, sec as u32, (us % 1_000_000) as u32));
    }
    report.packets = packets.len();
    (CaptureFile::new(packets), report)
}

/// Summary of one generation run, as written next to the output PCAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub label: String,
    pub seed_tokens: usize,
    pub budget: usize,
    pub generated_tokens: usize,
    pub sampling: Sampling,
    #[serde(flatten)]
    pub rebuild: RebuildReport,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::pcap::{parse_pcap, write_pcap};
    use crate::tokenizer::encode_flow;
    use crate::traffic::Workload;

    fn setup() -> (ModelParameters, Vocabulary, FlowRecord) {
        let vocab = Vocabulary::new(["twitch", "zoom"]).unwrap();
        let cfg = ModelConfig::new(8, 1, 4, vocab.size(), 256).with_seed(4);
        let flow = Workload::new(2).flow("twitch", 3);
        (ModelParameters::init(&cfg).unwrap(), vocab, flow)
    }

    #[test]
    fn seed_layout() {
        let (_, vocab, flow) = setup();
        let seed = make_seed(&flow, &vocab).unwrap();
        assert_eq!(seed.len(), flow.packets[0].data.len() + 2);
        assert_eq!(seed.0[0], 257);
        assert_eq!(*seed.0.last().unwrap(), PKT_TOKEN);
        assert_eq!(default_length(&flow), encode_flow(&flow, &vocab).unwrap().len() + 10);
    }

    #[test]
    fn prompt_budget_and_masking() {
        let (params, vocab, flow) = setup();
        let seed = make_seed(&flow, &vocab).unwrap();
        let length = seed.len() + 40;
        for sampling in [Sampling::Greedy, Sampling::Temperature { tau: 1.5, rng_seed: 9 }] {
            let req = GenerationRequest {
                seed: seed.clone(),
                length,
                sampling,
            };
            let g = Generator::new(&params);
            let out = g.generate(&req).unwrap();
            assert_eq!(out.len(), length);
            assert_eq!(&out.0[..seed.len()], seed.as_slice());
            assert!(out.0[1..].iter().all(|&t| t <= PKT_TOKEN));
            assert_eq!(out, g.generate(&req).unwrap());
        }
    }

    #[test]
    fn request_errors() {
        let (params, vocab, flow) = setup();
        let seed = make_seed(&flow, &vocab).unwrap();
        let g = Generator::new(&params).with_max_tokens(100);
        let req = |seed: TokenStream, length| GenerationRequest {
            seed,
            length,
            sampling: Sampling::Greedy,
        };
        assert!(matches!(
            g.generate(&req(seed.clone(), seed.len())),
            Err(GenerateError::SeedTooLong { .. })
        ));
        assert!(matches!(
            g.generate(&req(seed.clone(), 101)),
            Err(GenerateError::BudgetTooLarge { .. })
        ));
        assert!(matches!(
            g.generate(&req(TokenStream(vec![1, 256]), 10)),
            Err(GenerateError::InvalidSeed(_))
        ));
        assert!(matches!(
            g.generate(&req(TokenStream(vec![257, 1]), 10)),
            Err(GenerateError::InvalidSeed(_))
        ));
        let bad_tau = GenerationRequest {
            seed,
            length: 90,
            sampling: Sampling::Temperature { tau: 0.0, rng_seed: 0 },
        };
        assert!(matches!(g.generate(&bad_tau), Err(GenerateError::InvalidSampling(_))));
    }

    #[test]
    fn rebuild_round_trip_and_timestamps() {
        let (_, vocab, flow) = setup();
        let ts = encode_flow(&flow, &vocab).unwrap();
        let (cap, report) = rebuild_pcap(ts.as_slice(), &vocab);
        assert_eq!(report.packets, flow.packets.len());
        assert_eq!(report.dropped(), 0);
        for (a, b) in cap.packets.iter().zip(&flow.packets) {
            assert_eq!(a.data, b.data);
        }
        for w in cap.packets.windows(2) {
            assert!((w[0].ts_sec, w[0].ts_frac) < (w[1].ts_sec, w[1].ts_frac));
        }
        let parsed = parse_pcap(&write_pcap(&cap).unwrap()).unwrap();
        assert_eq!(parsed, cap);
    }

    #[test]
    fn empty_rebuild_is_valid_pcap() {
        let vocab = Vocabulary::new(["a"]).unwrap();
        let (cap, report) = rebuild_pcap(&[257, 1, 2, 256], &vocab);
        assert!(cap.is_empty());
        assert_eq!(report.malformed, 1);
        assert!(parse_pcap(&write_pcap(&cap).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn oversized_segments_dropped() {
        let vocab = Vocabulary::new(["a"]).unwrap();
        let mut ts = vec![257];
        ts.extend(std::iter::repeat(7).take(MAX_PACKET_LEN + 1));
        ts.push(PKT_TOKEN);
        let (cap, report) = rebuild_pcap(&ts, &vocab);
        assert!(cap.is_empty());
        assert_eq!(report.oversized, 1);
    }
}
