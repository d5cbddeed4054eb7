use proptest::prelude::*;
use ssm_tracegen::eval::{hellinger, jsd, similarity, tvd};
use ssm_tracegen::flow::split_flows;
use ssm_tracegen::generate::{rebuild_pcap, GenerationRequest, Generator, Sampling};
use ssm_tracegen::model::{ModelConfig, ModelParameters};
use ssm_tracegen::nprint::{encode_bits, extract_fields, layout, read_field, Protocol, BIT_COUNT};
use ssm_tracegen::pcap::{parse_pcap, write_pcap, CaptureFile, Packet, TsResolution};
use ssm_tracegen::tokenizer::{
    decode_tokens, encode_packets, parse_corpus, write_corpus, TokenId, TokenStream, Vocabulary, DEFAULT_LABELS,
    MIN_PACKET_LEN, PKT_TOKEN,
};
use ssm_tracegen::traffic::{interleave, Workload};

fn vocab() -> Vocabulary {
    Vocabulary::new(DEFAULT_LABELS).unwrap()
}

fn packet() -> impl Strategy<Value = Packet> {
    (prop::collection::vec(any::<u8>(), 0..300), any::<u32>(), 0u32..1_000_000)
        .prop_map(|(data, s, f)| Packet::new(data, s, f))
}

fn capture() -> impl Strategy<Value = CaptureFile> {
    (prop::collection::vec(packet(), 0..8), any::<bool>()).prop_map(|(packets, nano)| {
        let mut c = CaptureFile::new(packets);
        if nano {
            c.resolution = TsResolution::Nano;
        }
        c
    })
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn workload_flows() -> impl Strategy<Value = Vec<ssm_tracegen::flow::FlowRecord>> {
    (any::<u64>(), 1usize..6, 1usize..6).prop_map(|(seed, n, max)| {
        Workload::new(seed).flows(&["twitch", "zoom", "netflix"], n, (1, max))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tokens_round_trip(
        label in 257u16..267,
        packets in prop::collection::vec(prop::collection::vec(any::<u8>(), MIN_PACKET_LEN..200), 0..6),
    ) {
        let ts = encode_packets(label as TokenId, packets.iter().map(Vec::as_slice));
        prop_assert_eq!(ts.len(), 1 + packets.iter().map(|p| p.len() + 1).sum::<usize>());
        let d = decode_tokens(ts.as_slice(), &vocab());
        prop_assert_eq!(d.packets, packets);
        prop_assert_eq!(d.malformed + d.dropped_tail_tokens, 0);
    }

    #[test]
    fn decode_never_panics(tokens in prop::collection::vec(0u16..267, 0..400)) {
        let d = decode_tokens(&tokens, &vocab());
        let bytes: usize = d.packets.iter().map(Vec::len).sum();
        prop_assert!(bytes <= tokens.len());
        prop_assert!(d.packets.iter().all(|p| p.len() >= MIN_PACKET_LEN));
    }

    #[test]
    fn corpus_round_trip(samples in prop::collection::vec(prop::collection::vec(0u16..267, 0..50), 0..5)) {
        let samples: Vec<TokenStream> = samples.into_iter().map(TokenStream).collect();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &samples).unwrap();
        prop_assert_eq!(parse_corpus(&buf).unwrap(), samples);
    }

    #[test]
    fn pcap_round_trip(cap in capture()) {
        let bytes = write_pcap(&cap).unwrap();
        prop_assert_eq!(parse_pcap(&bytes).unwrap(), cap);
    }

    #[test]
    fn truncated_pcap_is_an_error_not_a_panic(cap in capture(), cut in any::<prop::sample::Index>()) {
        let bytes = write_pcap(&cap).unwrap();
        let n = cut.index(bytes.len() + 1);
        let r = parse_pcap(&bytes[..n]);
        if n < bytes.len() {
            prop_assert!(r.is_err() || r.unwrap().len() < cap.len());
        }
    }

    #[test]
    fn split_partitions_packets(flows in workload_flows()) {
        let cap = interleave(&flows);
        let out = split_flows(&cap, "x");
        prop_assert_eq!(out.diverted, 0);
        prop_assert_eq!(out.flows.len(), flows.len());
        let total: usize = out.flows.iter().map(|f| f.packets.len()).sum();
        prop_assert_eq!(total, cap.len());
        for f in &flows {
            let got = out.flows.iter().find(|g| g.key == f.key).unwrap();
            prop_assert_eq!(&got.packets, &f.packets);
        }
    }

    #[test]
    fn bits_are_ternary(frame in prop::collection::vec(any::<u8>(), 0..200)) {
        if let Ok(bits) = encode_bits(&frame) {
            prop_assert_eq!(bits.len(), BIT_COUNT);
            prop_assert!(bits.iter().all(|b| (-1..=1).contains(b)));
            let present = |p: Protocol| layout()
                .fields
                .iter()
                .filter(|f| f.protocol == p)
                .any(|f| bits[f.range()].iter().any(|&b| b != -1));
            prop_assert!(!(present(Protocol::Tcp) && present(Protocol::Udp)));
        }
    }

    #[test]
    fn bit_fields_reassemble_to_header_fields(flows in workload_flows()) {
        for p in flows.iter().flat_map(|f| &f.packets) {
            let fields = extract_fields(&p.data).unwrap();
            let bits = encode_bits(&p.data).unwrap();
            for spec in layout().fields.iter() {
                let Some(name) = spec.field_name else { continue };
                prop_assert_eq!(read_field(&bits, spec), fields.get(name).copied(), "{}", name);
            }
        }
    }

    #[test]
    fn metric_axioms(p in distribution(3), q in distribution(3)) {
        for m in [jsd, tvd, hellinger] {
            let v = m(&p, &q);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - m(&q, &p)).abs() < 1e-12);
            prop_assert!(m(&p, &p) < 1e-12);
        }
        let h = hellinger(&p, &q);
        prop_assert!(h * h <= tvd(&p, &q) + 1e-12);
    }

    #[test]
    fn similarity_ignores_capture_order(flows in workload_flows(), seed in any::<u64>()) {
        let caps: Vec<CaptureFile> = flows.iter().map(|f| f.to_capture()).collect();
        let other: Vec<CaptureFile> = Workload::new(seed)
            .flows(&["zoom"], 2, (1, 4))
            .iter()
            .map(|f| f.to_capture())
            .collect();
        let mut reversed = caps.clone();
        reversed.reverse();
        let a = similarity(&caps, &other).unwrap();
        let b = similarity(&reversed, &other).unwrap();
        prop_assert_eq!(a.per_bit, b.per_bit);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_contracts(
        model_seed in any::<u64>(),
        prompt in prop::collection::vec(0u16..256, 0..20),
        label in 257u16..267,
        extra in 1usize..60,
        greedy in any::<bool>(),
        rng_seed in any::<u64>(),
    ) {
        let v = vocab();
        let params = ModelParameters::init(&ModelConfig::new(8, 1, 4, v.size(), 4096).with_seed(model_seed)).unwrap();
        let mut seed = vec![label];
        seed.extend(prompt);
        seed.push(PKT_TOKEN);
        let length = seed.len() + extra;
        let sampling = if greedy { Sampling::Greedy } else { Sampling::Temperature { tau: 0.8, rng_seed } };
        let req = GenerationRequest { seed: TokenStream(seed.clone()), length, sampling };
        let gen = Generator::new(&params);
        let out = gen.generate(&req).unwrap();
        prop_assert_eq!(&out.0[..seed.len()], &seed[..]);
        prop_assert_eq!(out.len(), length);
        prop_assert!(out.0[1..].iter().all(|&t| t <= PKT_TOKEN));
        prop_assert_eq!(&gen.generate(&req).unwrap(), &out);
        let (cap, _) = rebuild_pcap(out.as_slice(), &v);
        prop_assert_eq!(parse_pcap(&write_pcap(&cap).unwrap()).unwrap(), cap);
    }
}
