//! Byte-level tokenization of flows.
//!
//! Token ids `0..=255` are the byte values themselves, `256` is the packet
//! delimiter `<|pkt|>`, and ids from `257` on are the traffic labels
//! `<|label|>` in vocabulary order. A training sample is
//!
//! ```text
//! <|label|> b b b ... <|pkt|> b b ... <|pkt|> ...
//! ```
//!
//! with every packet, including the last, closed by `<|pkt|>`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowRecord;
use crate::headers::{ETH_HEADER_LEN, IPV4_MIN_HEADER_LEN};

pub type TokenId = u16;

pub const PKT_TOKEN: TokenId = 256;
pub const FIRST_LABEL_TOKEN: TokenId = 257;
/// Ethernet + minimal IPv4 header; shorter decoded segments are malformed.
pub const MIN_PACKET_LEN: usize = ETH_HEADER_LEN + IPV4_MIN_HEADER_LEN;

pub const DEFAULT_LABELS: [&str; 10] = [
    "twitch", "youtube", "netflix", "amazon", "zoom", "teams", "meet", "webex", "facebook", "instagram",
];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("label {0:?} is not in the vocabulary")]
    UnknownLabel(String),
    #[error("vocabulary needs at least one label")]
    NoLabels,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: TokenId, size: usize },
    #[error("bad corpus file: {0}")]
    BadCorpus(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Fixed byte vocabulary extended with the delimiter and label tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    labels: Vec<String>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = TokenizerError;
    fn try_from(f: VocabularyFile) -> Result<Self, Self::Error> {
        Vocabulary::new(f.labels)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile { labels: v.labels }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new(DEFAULT_LABELS.iter().map(|s| s.to_string())).expect("default labels are valid")
    }
}

impl Vocabulary {
    pub fn new<I, S>(labels: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(TokenizerError::NoLabels);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), FIRST_LABEL_TOKEN + i as TokenId).is_some() {
                return Err(TokenizerError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Vocabulary { labels, index })
    }

    pub fn size(&self) -> usize {
        FIRST_LABEL_TOKEN as usize + self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_id(&self, label: &str) -> Result<TokenId, TokenizerError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| TokenizerError::UnknownLabel(label.to_string()))
    }

    pub fn label_name(&self, id: TokenId) -> Option<&str> {
        id.checked_sub(FIRST_LABEL_TOKEN)
            .and_then(|i| self.labels.get(i as usize))
            .map(String::as_str)
    }

    pub fn is_label(&self, id: TokenId) -> bool {
        self.label_name(id).is_some()
    }

    /// Human-readable rendering: bytes in decimal, specials as `<|name|>`.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match t {
                0..=255 => write!(out, "{t}").unwrap(),
                PKT_TOKEN => out.push_str("<|pkt|>"),
                _ => match self.label_name(t) {
                    Some(name) => write!(out, "<|{name}|>").unwrap(),
                    None => write!(out, "<|?{t}|>").unwrap(),
                },
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(pub Vec<TokenId>);

impl TokenStream {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.0
    }
}

/// Token count of `encode_flow` without building the stream.
pub fn encoded_len(flow: &FlowRecord) -> usize {
    1 + flow.packets.iter().map(|p| p.data.len() + 1).sum::<usize>()
}

pub fn encode_packets<'a>(label: TokenId, packets: impl IntoIterator<Item = &'a [u8]>) -> TokenStream {
    let mut tokens = vec![label];
    for data in packets {
        tokens.extend(data.iter().map(|&b| TokenId::from(b)));
        tokens.push(PKT_TOKEN);
    }
    TokenStream(tokens)
}

pub fn encode_flow(flow: &FlowRecord, vocab: &Vocabulary) -> Result<TokenStream, TokenizerError> {
    let label = vocab.label_id(&flow.label)?;
    Ok(encode_packets(label, flow.packets.iter().map(|p| p.data.as_slice())))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub packets: Vec<Vec<u8>>,
    /// Delimited segments shorter than [`MIN_PACKET_LEN`].
    pub malformed: usize,
    /// Bytes after the last delimiter (or after a stray label token).
    pub dropped_tail_tokens: usize,
    /// True when decoding stopped at a label token after position 0.
    pub stopped_at_label: bool,
}

/// Split a token stream back into packets. Never fails: unterminated
/// tails and short segments are dropped and counted.
pub fn decode_tokens(ts: &[TokenId], vocab: &Vocabulary) -> Decoded {
    let mut out = Decoded::default();
    let body = match ts.first() {
        Some(&t) if vocab.is_label(t) => &ts[1..],
        _ => ts,
    };
    let mut current: Vec<u8> = Vec::new();
    for (i, &t) in body.iter().enumerate() {
        match t {
            0..=255 => current.push(t as u8),
            PKT_TOKEN => {
                let seg = std::mem::take(&mut current);
                if seg.len() < MIN_PACKET_LEN {
                    out.malformed += 1;
                } else {
                    out.packets.push(seg);
                }
            }
            _ => {
                out.stopped_at_label = vocab.is_label(t);
                out.dropped_tail_tokens = body.len() - i;
                return out;
            }
        }
    }
    out.dropped_tail_tokens = current.len();
    out
}

const CORPUS_MAGIC: &[u8; 4] = b"NTGC";

/// Write token streams as an `NTGC` corpus: magic, u32 sample count, then
/// per sample a u32 token count and u16 ids, all little-endian.
pub fn write_corpus<W: Write>(mut w: W, samples: &[TokenStream]) -> Result<(), TokenizerError> {
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    for s in samples {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(2 * s.len());
        for t in &s.0 {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_corpus<R: Read>(mut r: R) -> Result<Vec<TokenStream>, TokenizerError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_corpus(&bytes)
}

pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<TokenStream>, TokenizerError> {
    let bad = |what: &str| TokenizerError::BadCorpus(what.to_string());
    if bytes.len() < 8 || &bytes[..4] != CORPUS_MAGIC {
        return Err(bad("missing NTGC header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut pos = 8;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let len_bytes = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| bad(&format!("sample {i} header truncated")))?;
        let n = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 4;
        let body = bytes
            .get(pos..pos + 2 * n)
            .ok_or_else(|| bad(&format!("sample {i} body truncated")))?;
        samples.push(TokenStream(
            body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
        ));
        pos += 2 * n;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last sample"));
    }
    Ok(samples)
}

/// Check that every id fits `vocab`.
pub fn check_ids(ts: &TokenStream, vocab: &Vocabulary) -> Result<(), TokenizerError> {
    match ts.0.iter().find(|&&t| t as usize >= vocab.size()) {
        Some(&id) => Err(TokenizerError::TokenOutOfRange { id, size: vocab.size() }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::Packet;
    use crate::traffic::Workload;

    fn flow_of(label: &str, packets: Vec<Vec<u8>>) -> FlowRecord {
        // Token-level tests do not care about the key.
        FlowRecord {
            key: crate::flow::FlowKey::canonical([0; 4].into(), 0, [0; 4].into(), 0, 0),
            packets: packets.into_iter().map(|d| Packet::new(d, 0, 0)).collect(),
            label: label.to_string(),
        }
    }

    #[test]
    fn layout_of_tiny_flow() {
        let vocab = Vocabulary::default();
        let ts = encode_flow(&flow_of("twitch", vec![vec![69, 0]]), &vocab).unwrap();
        assert_eq!(ts.0, vec![257, 69, 0, 256]);
        let d = decode_tokens(&ts.0, &vocab);
        assert!(d.packets.is_empty());
        assert_eq!(d.malformed, 1);
    }

    #[test]
    fn stream_length_formula() {
        let vocab = Vocabulary::default();
        let f = flow_of("zoom", vec![vec![1; 60], vec![2; 52]]);
        let ts = encode_flow(&f, &vocab).unwrap();
        assert_eq!(ts.len(), 115);
        assert_eq!(encoded_len(&f), 115);
    }

    #[test]
    fn seed_renders_like_training_text() {
        let vocab = Vocabulary::default();
        let f = flow_of("twitch", vec![vec![160, 206, 7]]);
        let ts = encode_flow(&f, &vocab).unwrap();
        assert_eq!(vocab.render(&ts.0), "<|twitch|> 160 206 7 <|pkt|>");
    }

    #[test]
    fn unknown_label() {
        let vocab = Vocabulary::new(["a"]).unwrap();
        assert!(matches!(
            encode_flow(&flow_of("b", vec![]), &vocab),
            Err(TokenizerError::UnknownLabel(_))
        ));
    }

    #[test]
    fn unterminated_tail_is_dropped() {
        let vocab = Vocabulary::default();
        let mut ts = vec![257];
        ts.extend(std::iter::repeat(7).take(60));
        ts.push(PKT_TOKEN);
        ts.extend(std::iter::repeat(9).take(10));
        let d = decode_tokens(&ts, &vocab);
        assert_eq!(d.packets, vec![vec![7u8; 60]]);
        assert_eq!(d.dropped_tail_tokens, 10);
    }

    #[test]
    fn label_mid_stream_stops_decoding() {
        let vocab = Vocabulary::default();
        let mut ts = vec![257];
        ts.extend(std::iter::repeat(7).take(40));
        ts.push(PKT_TOKEN);
        ts.push(258);
        ts.extend(std::iter::repeat(7).take(40));
        ts.push(PKT_TOKEN);
        let d = decode_tokens(&ts, &vocab);
        assert_eq!(d.packets.len(), 1);
        assert!(d.stopped_at_label);
    }

    #[test]
    fn vocabulary_json_shape() {
        let v = Vocabulary::new(["twitch", "zoom"]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"labels":["twitch","zoom"]}"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.label_id("zoom").unwrap(), 258);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"labels":[]}"#).is_err());
    }

    #[test]
    fn corpus_bytes_are_little_endian() {
        let samples = vec![TokenStream(vec![257, 1, 256]), TokenStream(vec![])];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &samples).unwrap();
        assert_eq!(&buf[..4], b"NTGC");
        assert_eq!(&buf[4..8], &[2, 0, 0, 0]);
        assert_eq!(&buf[8..12], &[3, 0, 0, 0]);
        assert_eq!(&buf[12..18], &[1, 1, 1, 0, 0, 1]);
        assert_eq!(parse_corpus(&buf).unwrap(), samples);
        assert!(parse_corpus(&buf[..buf.len() - 5]).is_err());
    }

    #[test]
    fn generated_flows_round_trip() {
        let vocab = Vocabulary::default();
        for f in Workload::new(11).flows(&["youtube", "zoom"], 6, (4, 12)) {
            let ts = encode_flow(&f, &vocab).unwrap();
            check_ids(&ts, &vocab).unwrap();
            let d = decode_tokens(&ts.0, &vocab);
            let expect: Vec<Vec<u8>> = f.packets.iter().map(|p| p.data.clone()).collect();
            assert_eq!(d.packets, expect);
            assert_eq!(d.malformed + d.dropped_tail_tokens, 0);
        }
    }
}
