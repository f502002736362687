use macs::formats::{pool_header, read_examples, read_pools, write_examples, write_pools};
use macs::Error;
use macs_core::attr::AttributeSpace;
use macs_core::editpair::{build_examples, ExampleOptions, PairSampler, PoolMember, SamplerConfig, VariationPool};
use macs_core::eval::{Domain, ScoredSequence};
use macs_core::seed;
use macs_core::synth::{synth_style, StyleSynthConfig};
use proptest::prelude::*;

fn ids() -> Vec<String> {
    vec!["sentiment".into(), "complexity".into()]
}

fn small_pools() -> Vec<VariationPool> {
    let cfg = StyleSynthConfig {
        groups: 6,
        ..StyleSynthConfig::default()
    };
    synth_style(&cfg, 11).unwrap()
}

#[test]
fn pool_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.jsonl");
    let pools = small_pools();
    write_pools(&path, &ids(), Domain::Text, &pools).unwrap();
    let (header, back) = read_pools(&path).unwrap();
    assert_eq!(header.attr_ids, ids());
    assert_eq!(back, pools);
    assert_eq!(pool_header(&path).unwrap(), header);
}

#[test]
fn example_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    let pools = small_pools();
    let space = AttributeSpace::style();
    let sampler = PairSampler::new(&pools, &space, SamplerConfig::default()).unwrap();
    let mut options = ExampleOptions {
        with_anchor: true,
        ..ExampleOptions::default()
    };
    options.meta.insert("gamma".into(), serde_json::json!(0.1));
    let mut rng = seed::rng(5);
    let examples = build_examples(&sampler, 50, &options, None, &mut rng).unwrap();
    write_examples(&path, &ids(), Domain::Text, &examples).unwrap();
    let (_, back) = read_examples(&path).unwrap();
    assert_eq!(back, examples);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_pools(&a, &ids(), Domain::Text, &small_pools()).unwrap();
    write_pools(&b, &ids(), Domain::Text, &small_pools()).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn bad_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let cases = [
        "",
        "{\"format\":\"macs-train\",\"version\":1,\"attr_ids\":[]}\n",
        "{\"format\":\"macs-pool\",\"version\":2,\"attr_ids\":[]}\n",
        "{\"format\":\"macs-pool\",\"version\":1,\"attr_ids\":[\"x\"]}\n{\"group_id\":\"g\",\"seq\":\"s\",\"attrs\":{\"y\":1}}\n",
        "{\"format\":\"macs-pool\",\"version\":1,\"attr_ids\":[\"x\"]}\nnot json\n",
        "{\"format\":\"macs-pool\",\"version\":1,\"attr_ids\":[\"x\"],\"extra\":1}\n",
    ];
    for text in cases {
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_pools(&path), Err(Error::Format { .. })), "{text:?}");
    }
    assert!(matches!(read_pools(&dir.path().join("missing")), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attribute_values_survive_bit_exact(values in prop::collection::vec((any::<f64>().prop_filter("finite", |v| v.is_finite()), any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let members = values
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| PoolMember {
                seq: ScoredSequence::new(format!("seq {i} \"quoted\" \u{e9}"), vec![a, b], Domain::Text),
                origin: "variation".into(),
            })
            .collect();
        let pools = vec![VariationPool::new("g", members)];
        write_pools(&path, &ids(), Domain::Text, &pools).unwrap();
        let (_, back) = read_pools(&path).unwrap();
        for (m, n) in pools[0].members.iter().zip(&back[0].members) {
            for (x, y) in m.seq.attrs.values().iter().zip(n.seq.attrs.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(&m.seq.seq, &n.seq.seq);
        }
    }
}
