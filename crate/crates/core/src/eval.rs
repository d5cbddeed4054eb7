//! Similarity of header-bit distributions, the random baseline, and the
//! byte/field memorization comparison.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nprint::{encode_bits, extract_fields, layout, BIT_COUNT};
use crate::pcap::{CaptureFile, Packet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{0} side has no encodable packets")]
    EmptyInput(&'static str),
    #[error("{real} real flows but {synth} synthetic captures")]
    PairCountMismatch { real: usize, synth: usize },
    #[error("packet limit must be at least 1")]
    InvalidLimit,
}

fn check(p: &[f64], q: &[f64]) {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
}

/// Jensen-Shannon divergence in bits.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    check(p, q);
    let kl_to_mid = |x: f64, y: f64| {
        let m = 0.5 * (x + y);
        if x > 0.0 {
            x * (x / m).log2()
        } else {
            0.0
        }
    };
    let v: f64 = p.iter().zip(q).map(|(&x, &y)| 0.5 * kl_to_mid(x, y) + 0.5 * kl_to_mid(y, x)).sum();
    v.clamp(0.0, 1.0)
}

/// Total variation distance.
pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    check(p, q);
    let v: f64 = p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum();
    (0.5 * v).clamp(0.0, 1.0)
}

/// Hellinger distance `√(1 − Σ√(pq))`, evaluated as `√(½Σ(√p − √q)²)`
/// (equal for normalized inputs, and exactly 0 when `p == q`).
pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    check(p, q);
    let v: f64 = p.iter().zip(q).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
    (0.5 * v).sqrt().clamp(0.0, 1.0)
}

/// How absent (−1) positions enter a bit's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentPolicy {
    /// Distribution over {−1, 0, 1}; a bit is skipped only when both sides
    /// are entirely −1.
    #[default]
    AsValue,
    /// Distribution over {0, 1} with −1 dropped; a bit is skipped when
    /// either side has no 0/1 entries.
    Exclude,
}

/// Per-position counts of −1, 0 and 1 over a set of packets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldDistributionTable {
    /// `counts[bit] = [n(−1), n(0), n(1)]`.
    pub counts: Vec<[u64; 3]>,
    pub packets: u64,
    /// Frames too short to encode, left out of the counts.
    pub unencodable: u64,
}

impl Default for FieldDistributionTable {
    fn default() -> Self {
        FieldDistributionTable {
            counts: vec![[0; 3]; BIT_COUNT],
            packets: 0,
            unencodable: 0,
        }
    }
}

impl FieldDistributionTable {
    pub fn from_packets<'a>(packets: impl IntoIterator<Item = &'a Packet>) -> Self {
        let mut t = Self::default();
        for p in packets {
            t.add(&p.data);
        }
        t
    }

    pub fn from_captures(caps: &[CaptureFile]) -> Self {
        Self::from_packets(caps.iter().flat_map(|c| &c.packets))
    }

    pub fn add(&mut self, frame: &[u8]) {
        match encode_bits(frame) {
            Ok(bits) => {
                for (c, b) in self.counts.iter_mut().zip(bits) {
                    c[(b + 1) as usize] += 1;
                }
                self.packets += 1;
            }
            Err(_) => self.unencodable += 1,
        }
    }

    /// Merge counts from another table.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
        self.packets += other.packets;
        self.unencodable += other.unencodable;
    }

    /// Entries that count toward the distribution at `bit`.
    pub fn support(&self, bit: usize, policy: AbsentPolicy) -> u64 {
        let [a, z, o] = self.counts[bit];
        match policy {
            AbsentPolicy::AsValue => a + z + o,
            AbsentPolicy::Exclude => z + o,
        }
    }

    /// Normalized distribution at `bit`, or `None` without support.
    pub fn distribution(&self, bit: usize, policy: AbsentPolicy) -> Option<Vec<f64>> {
        let n = self.support(bit, policy);
        if n == 0 {
            return None;
        }
        let [a, z, o] = self.counts[bit];
        let f = |c: u64| c as f64 / n as f64;
        Some(match policy {
            AbsentPolicy::AsValue => vec![f(a), f(z), f(o)],
            AbsentPolicy::Exclude => vec![f(z), f(o)],
        })
    }

    fn all_absent(&self, bit: usize) -> bool {
        let [a, z, o] = self.counts[bit];
        z + o == 0 && a > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub jsd: f64,
    pub tvd: f64,
    pub hd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitScore {
    pub bit: usize,
    /// `proto.field.bitN`.
    pub column: String,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub absent_policy: AbsentPolicy,
    pub real_packets: u64,
    pub synth_packets: u64,
    pub unencodable_packets: u64,
    pub scored_bits: usize,
    /// Mean over scored bits.
    pub mean: Scores,
    pub skipped_bits: Vec<usize>,
    pub per_bit: Vec<BitScore>,
}

pub fn similarity(real: &[CaptureFile], synth: &[CaptureFile]) -> Result<SimilarityReport, EvalError> {
    similarity_with(real, synth, AbsentPolicy::default())
}

pub fn similarity_with(
    real: &[CaptureFile],
    synth: &[CaptureFile],
    policy: AbsentPolicy,
) -> Result<SimilarityReport, EvalError> {
    let r = FieldDistributionTable::from_captures(real);
    let s = FieldDistributionTable::from_captures(synth);
    compare_tables(&r, &s, policy)
}

pub fn compare_tables(
    real: &FieldDistributionTable,
    synth: &FieldDistributionTable,
    policy: AbsentPolicy,
) -> Result<SimilarityReport, EvalError> {
    if real.packets == 0 {
        return Err(EvalError::EmptyInput("real"));
    }
    if synth.packets == 0 {
        return Err(EvalError::EmptyInput("synthetic"));
    }
    let columns = layout().column_names();
    let mut per_bit = Vec::new();
    let mut skipped_bits = Vec::new();
    let mut sum = Scores { jsd: 0.0, tvd: 0.0, hd: 0.0 };
    for bit in 0..BIT_COUNT {
        let pair = match policy {
            AbsentPolicy::AsValue if real.all_absent(bit) && synth.all_absent(bit) => None,
            _ => real.distribution(bit, policy).zip(synth.distribution(bit, policy)),
        };
        let Some((p, q)) = pair else {
            skipped_bits.push(bit);
            continue;
        };
        let scores = Scores {
            jsd: jsd(&p, &q),
            tvd: tvd(&p, &q),
            hd: hellinger(&p, &q),
        };
        sum.jsd += scores.jsd;
        sum.tvd += scores.tvd;
        sum.hd += scores.hd;
        per_bit.push(BitScore {
            bit,
            column: columns[bit].clone(),
            scores,
        });
    }
    let n = per_bit.len().max(1) as f64;
    Ok(SimilarityReport {
        absent_policy: policy,
        real_packets: real.packets,
        synth_packets: synth.packets,
        unencodable_packets: real.unencodable + synth.unencodable,
        scored_bits: per_bit.len(),
        mean: Scores {
            jsd: sum.jsd / n,
            tvd: sum.tvd / n,
            hd: sum.hd / n,
        },
        skipped_bits,
        per_bit,
    })
}

/// Uniform random bytes with the template's packet lengths and timestamps.
pub fn random_baseline(template: &[CaptureFile], rng_seed: u64) -> Vec<CaptureFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    template
        .iter()
        .map(|cap| {
            let packets = cap
                .packets
                .iter()
                .map(|p| {
                    let mut data = vec![0u8; p.data.len()];
                    rng.fill(&mut data[..]);
                    Packet {
                        data,
                        ..p.clone()
                    }
                })
                .collect();
            CaptureFile {
                packets,
                ..cap.clone()
            }
        })
        .collect()
}

/// Memorization results for one real/synthetic pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub index: usize,
    /// Aligned packets compared: `min(K, real, synth)`.
    pub compared: usize,
    pub identical: usize,
    /// Mean differing-byte percentage over the non-identical compared
    /// packets; `None` if all were identical.
    pub mean_differing_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub packet_limit: usize,
    pub pairs: Vec<PairReport>,
    pub total_compared: usize,
    pub total_identical: usize,
    /// Unweighted mean of the per-pair `mean_differing_pct` values that
    /// exist.
    pub mean_differing_pct: Option<f64>,
    pub aggregation: String,
    /// Mean absolute change per header field over aligned packets where
    /// both sides parse and carry the field.
    pub field_changes: BTreeMap<String, f64>,
}

/// Percentage of differing byte positions, over the longer length; missing
/// bytes of the shorter packet count as different.
pub fn differing_pct(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        return 0.0;
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    100.0 * (n - same) as f64 / n as f64
}

pub const DEFAULT_PACKET_LIMIT: usize = 100;

pub fn memorization(
    real: &[CaptureFile],
    synth: &[CaptureFile],
    packet_limit: usize,
) -> Result<MemorizationReport, EvalError> {
    if packet_limit == 0 {
        return Err(EvalError::InvalidLimit);
    }
    if real.len() != synth.len() {
        return Err(EvalError::PairCountMismatch {
            real: real.len(),
            synth: synth.len(),
        });
    }
    let mut pairs = Vec::with_capacity(real.len());
    let mut sums: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for (index, (r, s)) in real.iter().zip(synth).enumerate() {
        let mut identical = 0;
        let mut diffs = Vec::new();
        let aligned = r.packets.iter().zip(&s.packets).take(packet_limit);
        let compared = aligned.len();
        for (a, b) in aligned {
            if a.data == b.data {
                identical += 1;
            } else {
                diffs.push(differing_pct(&a.data, &b.data));
            }
            if let (Ok(fa), Ok(fb)) = (extract_fields(&a.data), extract_fields(&b.data)) {
                for (name, &va) in &fa {
                    if let Some(&vb) = fb.get(name) {
                        let e = sums.entry(name.clone()).or_default();
                        e.0 += va.abs_diff(vb) as f64;
                        e.1 += 1;
                    }
                }
            }
        }
        let mean_differing_pct = (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64);
        pairs.push(PairReport {
            index,
            compared,
            identical,
            mean_differing_pct,
        });
    }
    let pct: Vec<f64> = pairs.iter().filter_map(|p| p.mean_differing_pct).collect();
    Ok(MemorizationReport {
        packet_limit,
        total_compared: pairs.iter().map(|p| p.compared).sum(),
        total_identical: pairs.iter().map(|p| p.identical).sum(),
        mean_differing_pct: (!pct.is_empty()).then(|| pct.iter().sum::<f64>() / pct.len() as f64),
        aggregation: "per-packet percentages averaged within each pair over non-identical packets, \
                      then an unweighted mean over pairs; field changes pooled over all aligned packets"
            .into(),
        pairs,
        field_changes: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
    })
}

/// `Field,Average Change` table, two decimals.
pub fn write_field_changes_csv<W: Write>(mut w: W, report: &MemorizationReport) -> std::io::Result<()> {
    writeln!(w, "Field,Average Change")?;
    for (k, v) in &report.field_changes {
        writeln!(w, "{k},{v:.2}")?;
    }
    Ok(())
}
