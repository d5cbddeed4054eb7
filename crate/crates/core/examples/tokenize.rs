//! Encode a flow as byte tokens, render it, and round-trip a corpus file.

use ssm_tracegen::tokenizer::{decode_tokens, encode_flow, parse_corpus, write_corpus, Vocabulary, DEFAULT_LABELS};
use ssm_tracegen::traffic::Workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::new(DEFAULT_LABELS)?;
    println!("vocabulary: {} tokens, labels {:?}", vocab.size(), vocab.labels());

    let mut work = Workload::new(4);
    let flows = [work.flow("twitch", 3), work.flow("meet", 2)];
    let streams = flows.iter().map(|f| encode_flow(f, &vocab)).collect::<Result<Vec<_>, _>>()?;

    let text = vocab.render(&streams[0].0);
    println!("{} ...", &text[..text.len().min(96)]);

    let decoded = decode_tokens(streams[0].as_slice(), &vocab);
    let original: Vec<_> = flows[0].packets.iter().map(|p| p.data.clone()).collect();
    assert_eq!(decoded.packets, original);

    let mut corpus = Vec::new();
    write_corpus(&mut corpus, &streams)?;
    assert_eq!(parse_corpus(&corpus)?, streams);
    println!("corpus: {} samples, {} bytes", streams.len(), corpus.len());
    Ok(())
}
