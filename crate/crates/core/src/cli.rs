//! Command-line pipeline: split, dnsfilter, tokenize, train, generate,
//! nprint, similarity and memcheck.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::eval::{self, AbsentPolicy, EvalError};
use crate::flow::{dns_filter, split_flows_with, FlowDirection, FlowError, FlowRecord, Manifest, ManifestEntry};
use crate::generate::{
    default_length, make_seed, rebuild_pcap, GenerateError, GenerationReport, GenerationRequest, Generator, Sampling,
    DEFAULT_MAX_TOKENS,
};
use crate::model::{read_model, write_model, ModelConfig, ModelError, ModelParameters};
use crate::nprint;
use crate::pcap::{parse_pcap, write_pcap, CaptureFile, PcapError};
use crate::tokenizer::{check_ids, encode_flow, read_corpus, write_corpus, TokenizerError, Vocabulary, DEFAULT_LABELS};
use crate::train::{train_from, write_loss_csv, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Pcap(#[from] PcapError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Large,
}

impl Preset {
    pub fn model(self, vocab_size: usize) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(vocab_size),
            Preset::Large => ModelConfig::large(vocab_size),
        }
    }
}

/// Settings shared by all subcommands. Loaded from `--config` (JSON) and
/// then overridden by flags; the result is written next to each run's
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preset: Preset,
    /// Explicit model shape; replaces the preset when present.
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub labels: Vec<String>,
    pub sampling: Sampling,
    pub max_generation_tokens: usize,
    pub absent_policy: AbsentPolicy,
    pub memcheck_packets: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: Preset::Desk,
            model: None,
            train: TrainConfig::default(),
            labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
            sampling: Sampling::default(),
            max_generation_tokens: DEFAULT_MAX_TOKENS,
            absent_policy: AbsentPolicy::AsValue,
            memcheck_packets: eval::DEFAULT_PACKET_LIMIT,
        }
    }
}

impl PipelineConfig {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Ok(Vocabulary::new(self.labels.iter().cloned())?)
    }

    pub fn model_config(&self, vocab: &Vocabulary) -> Result<ModelConfig> {
        let mut cfg = self.model.clone().unwrap_or_else(|| self.preset.model(vocab.size()));
        if cfg.vocab_size != vocab.size() {
            if self.model.is_some() {
                return Err(CliError::Data(format!(
                    "model vocab_size {} does not match {} labels ({} tokens)",
                    cfg.vocab_size,
                    vocab.labels().len(),
                    vocab.size()
                )));
            }
            cfg.vocab_size = vocab.size();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ssm-tracegen", version, about = "Synthetic packet traces from a byte-level selective SSM")]
pub struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a capture into one PCAP per flow, plus a manifest.
    Split(SplitArgs),
    /// Keep traffic to addresses resolved for the given domains.
    Dnsfilter(DnsFilterArgs),
    /// Encode manifest flows into a token corpus.
    Tokenize(TokenizeArgs),
    /// Train a model on a token corpus.
    Train(TrainArgs),
    /// Generate a synthetic flow seeded from a real one.
    Generate(GenerateArgs),
    /// Per-bit header encoding of every packet, as CSV.
    Nprint(NprintArgs),
    /// Header-bit similarity of synthetic against real traffic.
    Similarity(SimilarityArgs),
    /// Byte and header-field comparison of paired flows.
    Memcheck(MemcheckArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Label recorded in the manifest for every flow.
    #[arg(long, default_value = DEFAULT_LABELS[0])]
    pub label: String,
    /// Keep the two directions of a connection apart.
    #[arg(long)]
    pub unidirectional: bool,
}

#[derive(Debug, Args)]
pub struct DnsFilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Domain suffix to keep (repeatable).
    #[arg(long = "domain", required = true)]
    pub domains: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// Manifest JSON listing `{pcap, label}` entries, one flow per PCAP.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output corpus (`NTGC`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output model (`NTGM`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Write a model file after every epoch into this directory.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Capture holding the real flow whose first packet seeds generation.
    #[arg(long)]
    pub seed_pcap: PathBuf,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Which flow of the seed capture, in order of first appearance.
    #[arg(long, default_value_t = 0)]
    pub flow_index: usize,
    /// Total token budget; defaults to the real flow's length plus 10.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, conflicts_with = "temperature")]
    pub greedy: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct NprintArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbsentArg {
    AsValue,
    Exclude,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub real: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub synth: Vec<PathBuf>,
    /// Also score a uniform-random baseline built from the real side.
    #[arg(long, value_name = "RNG_SEED")]
    pub random_baseline: Option<u64>,
    #[arg(long, value_enum)]
    pub absent: Option<AbsentArg>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MemcheckArgs {
    /// Real flows, paired by position with `--synth`.
    #[arg(long, num_args = 1.., required = true)]
    pub real: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub synth: Vec<PathBuf>,
    /// Packets compared per pair.
    #[arg(long)]
    pub packets: Option<usize>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-field `Field,Average Change` table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn read_pcap(path: &Path) -> Result<CaptureFile> {
    parse_pcap(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_pcaps(paths: &[PathBuf]) -> Result<Vec<CaptureFile>> {
    paths.iter().map(|p| read_pcap(p)).collect()
}

/// `out.ext` → `out.ext.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => serde_json::from_slice(&read(p)?).map_err(|source| CliError::Json {
            path: p.to_owned(),
            source,
        }),
    }
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(summary) => {
            if json {
                println!("{summary}");
            } else if let Some(msg) = summary.get("message").and_then(Value::as_str) {
                println!("{msg}");
            }
            EXIT_OK
        }
        Err(e) => {
            if json {
                println!("{}", json!({"ok": false, "error": e.to_string(), "exit_code": e.exit_code()}));
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command and return its JSON summary.
pub fn execute(cli: Cli) -> Result<Value> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let mut summary = match cli.command {
        Command::Split(a) => split(&cfg, a)?,
        Command::Dnsfilter(a) => dnsfilter(&cfg, a)?,
        Command::Tokenize(a) => tokenize(&cfg, a)?,
        Command::Train(a) => {
            apply_train_flags(&mut cfg, &a);
            train(&cfg, a)?
        }
        Command::Generate(a) => {
            apply_generate_flags(&mut cfg, &a);
            generate(&cfg, a)?
        }
        Command::Nprint(a) => nprint_cmd(&cfg, a)?,
        Command::Similarity(a) => {
            if let Some(p) = a.absent {
                cfg.absent_policy = match p {
                    AbsentArg::AsValue => AbsentPolicy::AsValue,
                    AbsentArg::Exclude => AbsentPolicy::Exclude,
                };
            }
            similarity(&cfg, a)?
        }
        Command::Memcheck(a) => {
            if let Some(k) = a.packets {
                cfg.memcheck_packets = k;
            }
            memcheck(&cfg, a)?
        }
    };
    summary["ok"] = json!(true);
    Ok(summary)
}

fn snapshot(cfg: &PipelineConfig, path: PathBuf) -> Result<()> {
    write_json(&path, cfg)
}

fn split(cfg: &PipelineConfig, a: SplitArgs) -> Result<Value> {
    let cap = read_pcap(&a.input)?;
    let direction = if a.unidirectional {
        FlowDirection::Unidirectional
    } else {
        FlowDirection::Bidirectional
    };
    let outcome = split_flows_with(&cap, &a.label, direction);
    let mut entries = Vec::with_capacity(outcome.flows.len());
    for flow in &outcome.flows {
        let mut name = flow.key.file_stem();
        if a.unidirectional {
            name.push_str("-fwd");
        }
        let path = a.out.join(format!("{name}.pcap"));
        let mut fc = flow.to_capture();
        fc.link_type = cap.link_type;
        fc.resolution = cap.resolution;
        write(&path, &write_pcap(&fc)?)?;
        entries.push(ManifestEntry {
            pcap: path,
            label: flow.label.clone(),
        });
    }
    let manifest = a.out.join("manifest.json");
    write_json(&manifest, &Manifest(entries))?;
    snapshot(cfg, a.out.join("effective-config.json"))?;
    Ok(json!({
        "command": "split",
        "flows": outcome.flows.len(),
        "diverted": outcome.diverted,
        "manifest": manifest,
        "message": format!("{} flows ({} packets diverted) -> {}", outcome.flows.len(), outcome.diverted, a.out.display()),
    }))
}

fn dnsfilter(cfg: &PipelineConfig, a: DnsFilterArgs) -> Result<Value> {
    let cap = read_pcap(&a.input)?;
    let (kept, report) = dns_filter(&cap, &a.domains);
    write(&a.out, &write_pcap(&kept)?)?;
    write_json(&sibling(&a.out, "report.json"), &report)?;
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    Ok(json!({
        "command": "dnsfilter",
        "report": report,
        "message": format!("kept {} of {} packets ({} addresses)", report.kept, cap.len(), report.addresses.len()),
    }))
}

fn tokenize(cfg: &PipelineConfig, a: TokenizeArgs) -> Result<Value> {
    let vocab = cfg.vocabulary()?;
    let manifest: Manifest = serde_json::from_slice(&read(&a.manifest)?).map_err(|source| CliError::Json {
        path: a.manifest.clone(),
        source,
    })?;
    manifest.validate(vocab.labels())?;
    let base = a.manifest.parent().unwrap_or(Path::new(""));
    let mut samples = Vec::with_capacity(manifest.0.len());
    let mut tokens = 0;
    for entry in &manifest.0 {
        let path = if entry.pcap.is_absolute() || entry.pcap.exists() {
            entry.pcap.clone()
        } else {
            base.join(&entry.pcap)
        };
        let cap = read_pcap(&path)?;
        let flow = FlowRecord::from_packets(entry.label.clone(), cap.packets)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let s = encode_flow(&flow, &vocab)?;
        tokens += s.len();
        samples.push(s);
    }
    let mut buf = Vec::new();
    write_corpus(&mut buf, &samples)?;
    write(&a.out, &buf)?;
    let vocab_path = sibling(&a.out, "vocab.json");
    write_json(&vocab_path, &vocab)?;
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    Ok(json!({
        "command": "tokenize",
        "samples": samples.len(),
        "tokens": tokens,
        "vocab": vocab_path,
        "message": format!("{} samples, {} tokens -> {}", samples.len(), tokens, a.out.display()),
    }))
}

fn apply_train_flags(cfg: &mut PipelineConfig, a: &TrainArgs) {
    if let Some(p) = a.preset {
        cfg.preset = p;
        cfg.model = None;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(s) = a.seed {
        cfg.train.rng_seed = s;
    }
    if let Some(m) = a.max_seq_len {
        cfg.train.max_seq_len = m;
    }
}

fn model_bytes(params: &ModelParameters, vocab: &Vocabulary) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(&mut buf, params, vocab)?;
    Ok(buf)
}

fn train(cfg: &PipelineConfig, a: TrainArgs) -> Result<Value> {
    let vocab = cfg.vocabulary()?;
    let corpus = read_corpus(read(&a.corpus)?.as_slice())?;
    for (i, s) in corpus.iter().enumerate() {
        check_ids(s, &vocab).map_err(|e| CliError::Data(format!("sample {i}: {e}")))?;
    }
    let mcfg = cfg.model_config(&vocab)?;
    let params = ModelParameters::init(&mcfg)?;
    let checkpoints = a.checkpoint_dir.clone();
    let outcome = train_from(&corpus, &cfg.train, params, |stats, p| {
        if let Some(dir) = &checkpoints {
            let path = dir.join(format!("epoch-{:04}.ntgm", stats.epoch));
            let bytes = model_bytes(p, &vocab).map_err(|e| e.to_string())?;
            write(&path, &bytes).map_err(|e| e.to_string())?;
        }
        Ok(())
    })?;
    write(&a.out, &model_bytes(&outcome.params, &vocab)?)?;
    let loss_path = sibling(&a.out, "loss.csv");
    let mut csv = Vec::new();
    write_loss_csv(&mut csv, &outcome.losses).map_err(|source| CliError::Io {
        path: loss_path.clone(),
        source,
    })?;
    write(&loss_path, &csv)?;
    let mut effective = cfg.clone();
    effective.model = Some(mcfg.clone());
    snapshot(&effective, sibling(&a.out, "config.json"))?;
    let final_loss = outcome.losses.last().map(|s| s.mean_loss);
    Ok(json!({
        "command": "train",
        "samples": corpus.len(),
        "epochs": outcome.losses.len(),
        "parameters": mcfg.parameter_count(),
        "final_loss_nats": final_loss,
        "loss_csv": loss_path,
        "message": format!(
            "{} epochs, final loss {} nats -> {}",
            outcome.losses.len(),
            final_loss.map_or("n/a".into(), |l| format!("{l:.4}")),
            a.out.display()
        ),
    }))
}

fn apply_generate_flags(cfg: &mut PipelineConfig, a: &GenerateArgs) {
    if a.greedy {
        cfg.sampling = Sampling::Greedy;
    } else if a.temperature.is_some() || a.seed.is_some() {
        let (tau, rng_seed) = match cfg.sampling {
            Sampling::Temperature { tau, rng_seed } => (tau, rng_seed),
            Sampling::Greedy => (1.0, 0),
        };
        cfg.sampling = Sampling::Temperature {
            tau: a.temperature.unwrap_or(tau),
            rng_seed: a.seed.unwrap_or(rng_seed),
        };
    }
}

fn generate(cfg: &PipelineConfig, a: GenerateArgs) -> Result<Value> {
    let saved = read_model(read(&a.model)?.as_slice())?;
    let cap = read_pcap(&a.seed_pcap)?;
    let flows = split_flows_with(&cap, &a.label, FlowDirection::Bidirectional).flows;
    let flow = flows.get(a.flow_index).ok_or_else(|| {
        CliError::Data(format!(
            "{} has {} flows, no index {}",
            a.seed_pcap.display(),
            flows.len(),
            a.flow_index
        ))
    })?;
    let seed = make_seed(flow, &saved.vocab)?;
    let length = a.length.unwrap_or_else(|| default_length(flow));
    let req = GenerationRequest {
        seed,
        length,
        sampling: cfg.sampling,
    };
    let out = Generator::new(&saved.params)
        .with_max_tokens(cfg.max_generation_tokens)
        .generate(&req)?;
    let (synth, rebuild) = rebuild_pcap(out.as_slice(), &saved.vocab);
    write(&a.out, &write_pcap(&synth)?)?;
    let report = GenerationReport {
        label: a.label.clone(),
        seed_tokens: req.seed.len(),
        budget: length,
        generated_tokens: out.len(),
        sampling: cfg.sampling,
        rebuild,
    };
    write_json(&sibling(&a.out, "report.json"), &report)?;
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    Ok(json!({
        "command": "generate",
        "report": report,
        "message": format!(
            "{} tokens -> {} packets ({} dropped) -> {}",
            report.generated_tokens,
            report.rebuild.packets,
            report.rebuild.dropped(),
            a.out.display()
        ),
    }))
}

fn nprint_cmd(cfg: &PipelineConfig, a: NprintArgs) -> Result<Value> {
    let cap = read_pcap(&a.input)?;
    write(&a.out, b"")?;
    let file = fs::File::create(&a.out).map_err(|source| CliError::Io {
        path: a.out.clone(),
        source,
    })?;
    let rows = nprint::write_csv(BufWriter::new(file), cap.packets.iter().map(|p| p.data.as_slice()))
        .map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    Ok(json!({
        "command": "nprint",
        "rows": rows,
        "columns": nprint::BIT_COUNT,
        "message": format!("{rows} packets x {} bits -> {}", nprint::BIT_COUNT, a.out.display()),
    }))
}

fn similarity(cfg: &PipelineConfig, a: SimilarityArgs) -> Result<Value> {
    let real = read_pcaps(&a.real)?;
    let synth = read_pcaps(&a.synth)?;
    let report = eval::similarity_with(&real, &synth, cfg.absent_policy)?;
    let baseline = match a.random_baseline {
        Some(seed) => Some(eval::similarity_with(&real, &eval::random_baseline(&real, seed), cfg.absent_policy)?),
        None => None,
    };
    let mut out = json!({ "synthetic": report });
    if let Some(b) = &baseline {
        out["random_baseline"] = json!(b);
    }
    write_json(&a.out, &out)?;
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    let mut message = format!(
        "JSD {:.4}  TVD {:.4}  HD {:.4} over {} bits",
        report.mean.jsd, report.mean.tvd, report.mean.hd, report.scored_bits
    );
    if let Some(b) = &baseline {
        message.push_str(&format!(
            "; random JSD {:.4}  TVD {:.4}  HD {:.4}",
            b.mean.jsd, b.mean.tvd, b.mean.hd
        ));
    }
    Ok(json!({
        "command": "similarity",
        "mean": report.mean,
        "scored_bits": report.scored_bits,
        "random_baseline_mean": baseline.map(|b| b.mean),
        "message": message,
    }))
}

fn memcheck(cfg: &PipelineConfig, a: MemcheckArgs) -> Result<Value> {
    let real = read_pcaps(&a.real)?;
    let synth = read_pcaps(&a.synth)?;
    let report = eval::memorization(&real, &synth, cfg.memcheck_packets)?;
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        let mut buf = Vec::new();
        eval::write_field_changes_csv(&mut buf, &report).map_err(|source| CliError::Io {
            path: csv.clone(),
            source,
        })?;
        write(csv, &buf)?;
    }
    snapshot(cfg, sibling(&a.out, "config.json"))?;
    Ok(json!({
        "command": "memcheck",
        "total_compared": report.total_compared,
        "total_identical": report.total_identical,
        "mean_differing_pct": report.mean_differing_pct,
        "message": format!(
            "{} of {} compared packets identical; mean differing bytes {}",
            report.total_identical,
            report.total_compared,
            report.mean_differing_pct.map_or("n/a".into(), |p| format!("{p:.2}%"))
        ),
    }))
}
