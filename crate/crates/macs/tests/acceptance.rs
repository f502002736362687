//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its PASS/FAIL line even when all pass; exits non-zero on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use macs::config::CampaignConfig;
use macs_core::attr::{AttributeSpace, AttributeSpec, AttributeVector, ThresholdWindow};
use macs_core::bench::{
    discovery_budget, run_discovery_combo, run_style_campaign, score_discovery, style_budget, DiscoveryMethod,
    DiscoverySetup, StyleItem,
};
use macs_core::editors::{recombine, EditRequest, Editor, PoolOracle, RandomMutation};
use macs_core::editpair::{delta_histogram, PairSampler, SamplerConfig, SamplerMode};
use macs_core::eval::ScoredSequence;
use macs_core::inference::{EpisodeConfig, EpisodeResult, Strategy};
use macs_core::reward::{attribute_reward, satisfaction_score};
use macs_core::seed;
use macs_core::stats::{entropy, levenshtein, total_variation, two_prop_ztest};
use macs_core::synth::{style_scorer, synth_protein, synth_style, ProteinSynthConfig, StyleSynthConfig};
use macs_core::toy::AMINO_ACIDS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn within(limit: Duration, started: Instant) -> Outcome {
    let t = started.elapsed();
    check!(t < limit, "took {:.2?}, limit {:.0?}", t, limit);
    Ok(format!("{t:.2?}"))
}

/// Straight-line score: linear ramps from the range ends to the window.
fn oracle_score(v: f64, s: f64, e: f64, lo: f64, hi: f64) -> f64 {
    if s <= v && v <= e {
        return 1.0;
    }
    if v < s {
        return (v - lo) / (s - lo);
    }
    (hi - v) / (hi - e)
}

fn reward_oracle() -> Outcome {
    let started = Instant::now();
    // Independent generator so the oracle shares no randomness with the engine.
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let lo = rng.random_range(-100.0..100.0);
        let hi = lo + rng.random_range(0.01..50.0);
        let mut a = rng.random_range(lo..=hi);
        let mut b = rng.random_range(lo..=hi);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        // Some windows touch a range end.
        match i % 5 {
            0 => a = lo,
            1 => b = hi,
            _ => {}
        }
        let spec = AttributeSpec::new("x", lo, hi).map_err(|e| e.to_string())?;
        let window = ThresholdWindow::new(&spec, a, b).map_err(|e| e.to_string())?;
        let new = rng.random_range(lo..=hi);
        let old = rng.random_range(lo..=hi);
        let f = satisfaction_score(new, &window, &spec).map_err(|e| e.to_string())?;
        let r = attribute_reward(new, old, &window, &spec).map_err(|e| e.to_string())?;
        let fo = oracle_score(new, a, b, lo, hi);
        let ro = 2.0 * fo - oracle_score(old, a, b, lo, hi);
        worst = worst.max((f - fo).abs()).max((r - ro).abs());
    }
    check!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("1000 triples, max deviation {worst:e}, {}", within(Duration::from_secs(1), started)?))
}

fn budget_arithmetic() -> Outcome {
    let style = style_budget(250, AttributeSpace::style().combo_count() as u64, 5);
    let discovery = discovery_budget(AttributeSpace::protein().combo_count() as u64, 3000);
    check!(style == 31_250, "style budget {style}");
    check!(discovery == 48_000, "discovery budget {discovery}");
    // The reported audit of a real discovery campaign agrees.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = protein_config(dir.path(), 5, 200);
    let outcome = macs::campaign::run(&cfg, 1).map_err(|e| e.to_string())?;
    let b = &outcome.summary.report.budget();
    check!(b.configured == 48_000 && b.used == 48_000, "audit {} configured, {} used", b.configured, b.used);
    Ok(format!("style {style}, discovery {discovery}, audited {}", b.used))
}

fn ztest_anchor() -> Outcome {
    let t = two_prop_ztest(5344, 6250, 5294, 6250).map_err(|e| e.to_string())?;
    let (p1, p2) = (5344.0 / 6250.0, 5294.0 / 6250.0);
    let pooled: f64 = (5344.0 + 5294.0) / 12500.0;
    let z = (p1 - p2) / (pooled * (1.0 - pooled) * (2.0 / 6250.0)).sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    check!((0.19..=0.23).contains(&t.p), "p = {}", t.p);
    check!((t.z - z).abs() < 1e-3, "z = {} vs oracle {z}", t.z);
    check!((t.p - p).abs() < 1e-6, "p = {} vs oracle {p}", t.p);
    Ok(format!("z = {:.6}, p = {:.6} (oracle p = {p:.6})", t.z, t.p))
}

fn sampler_coverage() -> Outcome {
    let started = Instant::now();
    let space = AttributeSpace::style();
    let mut details = Vec::new();
    for s in 0..5u64 {
        let pools = synth_style(&StyleSynthConfig::default(), 1000 + s).map_err(|e| e.to_string())?;
        let mut stats = Vec::new();
        for mode in [SamplerMode::Random, SamplerMode::Knn] {
            let sampler = PairSampler::new(
                &pools,
                &space,
                SamplerConfig {
                    mode,
                    seed: s,
                    ..SamplerConfig::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let mut rng = seed::rng(seed::derive(s, "coverage"));
            let pairs = (0..10_000)
                .map(|_| sampler.sample(&mut rng).map(|r| sampler.pair(r)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let hist = delta_histogram(&pairs, &space, 10);
            stats.push((hist.iter().filter(|&&c| c > 0).count(), entropy(&hist)));
        }
        let (random, knn) = (stats[0], stats[1]);
        let ratio = knn.0 as f64 / random.0 as f64;
        check!(ratio >= 1.2, "seed {s}: occupancy {} vs {} (ratio {ratio:.3})", knn.0, random.0);
        check!(knn.1 > random.1, "seed {s}: entropy {:.4} vs {:.4}", knn.1, random.1);
        details.push(format!("{ratio:.2}"));
    }
    Ok(format!("occupancy ratios [{}], {}", details.join(", "), within(Duration::from_secs(30), started)?))
}

fn style_run(seed_value: u64, strategy: Strategy) -> Result<(u64, u64, Vec<EpisodeResult>), String> {
    let pools = synth_style(
        &StyleSynthConfig {
            groups: 50,
            ..StyleSynthConfig::default()
        },
        seed_value,
    )
    .map_err(|e| e.to_string())?;
    let items: Vec<StyleItem> = pools.iter().map(StyleItem::from_pool).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let space = AttributeSpace::style();
    let scorer = style_scorer(true);
    let episode = EpisodeConfig::new(strategy, 5);
    let (report, episodes) = run_style_campaign(
        &items,
        &space,
        &scorer,
        |i| Ok(Arc::new(PoolOracle::new(items[i].pool.clone(), space.specs.clone(), 0.5)?) as Arc<dyn Editor>),
        &episode,
        seed_value,
    )
    .map_err(|e| e.to_string())?;
    Ok((report.satisfied, report.episodes, episodes))
}

fn strategy_ordering() -> Outcome {
    let started = Instant::now();
    let (mut sp, mut np, mut sn, mut nn) = (0, 0, 0, 0);
    let mut monotone = 0usize;
    let mut total = 0usize;
    for s in 0..20u64 {
        let (sat, n, episodes) = style_run(s, Strategy::Prioritized)?;
        sp += sat;
        np += n;
        for e in &episodes {
            total += 1;
            if e.accepted_rewards().windows(2).all(|w| w[1] > w[0]) {
                monotone += 1;
            }
        }
        let (sat, n, _) = style_run(s, Strategy::NaiveChain)?;
        sn += sat;
        nn += n;
    }
    check!(np == 50 * 25 * 20 && nn == np, "episode counts {np} / {nn}");
    let t = two_prop_ztest(sp, np, sn, nn).map_err(|e| e.to_string())?;
    let one_sided = t.p_greater();
    check!(monotone == total, "{} of {total} prioritized traces not strictly increasing", total - monotone);
    check!(sp >= sn && one_sided < 0.05, "prioritized {sp}/{np} vs naive {sn}/{nn}, one-sided p = {one_sided:e}");
    Ok(format!(
        "prioritized {:.4} vs naive {:.4}, z = {:.2}, one-sided p = {one_sided:.2e}, {total} monotone traces, {}",
        sp as f64 / np as f64,
        sn as f64 / nn as f64,
        t.z,
        within(Duration::from_secs(120), started)?
    ))
}

/// Forwards to an inner editor, keeping every request.
struct Recording<E> {
    inner: E,
    seen: Mutex<Vec<EditRequest>>,
}

impl<E: Editor> Editor for Recording<E> {
    fn propose(&self, request: &EditRequest) -> macs_core::Result<Vec<String>> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.propose(request)
    }
}

fn anchor_plumbing() -> Outcome {
    let pools = synth_style(
        &StyleSynthConfig {
            groups: 8,
            ..StyleSynthConfig::default()
        },
        77,
    )
    .map_err(|e| e.to_string())?;
    let items: Vec<StyleItem> = pools.iter().map(StyleItem::from_pool).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let space = AttributeSpace::style();
    let scorer = style_scorer(true);
    let mut runs = Vec::new();
    for on in [true, false] {
        let mut episode = EpisodeConfig::new(Strategy::Prioritized, 5);
        episode.anchor_conditioning = on;
        let editors: Vec<Arc<Recording<PoolOracle>>> = items
            .iter()
            .map(|it| {
                Arc::new(Recording {
                    inner: PoolOracle::new(it.pool.clone(), space.specs.clone(), 0.5).unwrap(),
                    seen: Mutex::new(Vec::new()),
                })
            })
            .collect();
        let (_, episodes) = run_style_campaign(
            &items,
            &space,
            &scorer,
            |i| Ok(editors[i].clone() as Arc<dyn Editor>),
            &episode,
            5,
        )
        .map_err(|e| e.to_string())?;
        let requests: Vec<(usize, EditRequest)> = editors
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.seen.lock().unwrap().clone().into_iter().map(move |r| (i, r)))
            .collect();
        runs.push((episodes, requests));
    }
    let (with, without) = (&runs[0], &runs[1]);
    let carrying = with.1.iter().filter(|(i, r)| r.anchor.as_ref() == Some(&items[*i].start)).count();
    check!(carrying == with.1.len(), "{carrying} of {} requests carry the start as anchor", with.1.len());
    check!(without.1.iter().all(|(_, r)| r.anchor.is_none()), "anchor present with conditioning off");
    check!(with.1.len() == without.1.len(), "request counts differ");
    for ((_, a), (_, b)) in with.1.iter().zip(&without.1) {
        let mut a = a.clone();
        a.anchor = None;
        check!(&a == b, "requests differ beyond the anchor in {}", b.episode_id);
    }
    let trace = |e: &[EpisodeResult]| serde_json::to_string(&e.iter().map(|x| &x.trace).collect::<Vec<_>>()).unwrap();
    check!(trace(&with.0) == trace(&without.0), "traces differ");
    Ok(format!("{} requests, all anchored to the start; traces identical", with.1.len()))
}

fn discovery_fixtures() -> Outcome {
    let started = Instant::now();
    let space = AttributeSpace::protein();
    let constraint = space.constraint(5);
    let inside = AttributeVector::new(vec![3.2, 0.25]);
    let outside = AttributeVector::new(vec![1.5, 30.0]);
    let start = "S".repeat(8);
    // 1200 distinct satisfying (150 of them known), 600 repeats of those,
    // 1200 unsatisfying.
    let mut proposals: Vec<(String, AttributeVector)> = Vec::new();
    for i in 0..1200 {
        proposals.push((format!("hit{i:05}"), inside.clone()));
    }
    for i in 0..600 {
        proposals.push((format!("hit{:05}", i % 1200), inside.clone()));
    }
    for i in 0..1200 {
        proposals.push((format!("miss{i:04}"), outside.clone()));
    }
    let reference: BTreeSet<String> = (0..150).map(|i| format!("hit{:05}", i * 8)).collect();
    let reference_refs: BTreeSet<&str> = reference.iter().map(String::as_str).collect();
    let counts = score_discovery(
        proposals.iter().map(|(s, a)| (s.as_str(), Some(a))),
        &constraint,
        &start,
        Some(&reference_refs),
        3000,
    )
    .map_err(|e| e.to_string())?;
    check!(counts.proposals == 3000, "{} proposals", counts.proposals);
    check!(counts.total_rate == 0.40 && counts.unique_rate == Some(0.35), "rates {} / {:?}", counts.total_rate, counts.unique_rate);

    // Unique recombination fills the whole budget with novel sequences.
    let inst = synth_protein(
        &ProteinSynthConfig {
            mutants: 400,
            ..ProteinSynthConfig::default()
        },
        8,
    )
    .map_err(|e| e.to_string())?;
    let scorer = macs_core::synth::protein_scorer(&inst.wild_type, &inst.fluorescence, &inst.ddg).map_err(|e| e.to_string())?;
    let refs: Vec<ScoredSequence> = inst.pool.members.iter().map(|m| m.seq.clone()).collect();
    let episode = EpisodeConfig::new(Strategy::RandomWalk, 3000);
    let method = DiscoveryMethod::UniqueRecombine {
        kappa: 0.5,
        attempt_factor: 1000,
    };
    let setup = DiscoverySetup {
        space: &space,
        scorer: &scorer,
        start: &refs[0],
        reference: Some(&refs),
        episode: &episode,
        method: &method,
        seed: 8,
    };
    let known: BTreeSet<&str> = refs.iter().map(|m| m.seq.as_str()).collect();
    for combo in [0, 9, 15] {
        let run = run_discovery_combo(&setup, combo, None).map_err(|e| e.to_string())?;
        let seqs: BTreeSet<&str> = run.proposals().map(|(s, _)| s).collect();
        check!(run.proposals().count() == 3000 && seqs.len() == 3000, "combo {combo}: {} distinct", seqs.len());
        check!(seqs.is_disjoint(&known), "combo {combo}: reference sequences emitted");
    }

    // Mutation distances follow the reference histogram.
    let wt = &inst.wild_type;
    let distances: Vec<usize> = refs.iter().filter(|m| &m.seq != wt).map(|m| levenshtein(&m.seq, wt)).collect();
    let hist = RandomMutation::histogram_of(&distances).map_err(|e| e.to_string())?;
    let mutator = RandomMutation::new(hist.clone()).map_err(|e| e.to_string())?;
    let max_d = hist.iter().map(|&(d, _)| d).max().unwrap_or(0);
    let mut expected = vec![0.0; max_d + 1];
    for &(d, w) in &hist {
        expected[d] += w;
    }
    let mut observed = vec![0.0; max_d + 1];
    let mut rng = seed::rng(31);
    for _ in 0..10_000 {
        let d = levenshtein(&mutator.mutate(wt, &mut rng), wt);
        check!(d <= max_d, "mutation distance {d} above the histogram");
        observed[d] += 1e-4;
    }
    let tv = total_variation(&expected, &observed);
    check!(tv < 0.05, "mutation TV {tv}");

    // Recombination provenance and the swap rate.
    let mut rng = seed::rng(32);
    let letters: Vec<char> = AMINO_ACIDS.chars().collect();
    let len = 48;
    let (mut from_a, mut positions) = (0u64, 0u64);
    for trial in 0..10_000 {
        let a: String = (0..len).map(|_| letters[rng.random_range(0..20)]).collect();
        let b: String = (0..len).map(|_| letters[rng.random_range(0..20)]).collect();
        let kappa = if trial % 2 == 0 { 0.5 } else { rng.random_range(0.0..=1.0) };
        let (o1, o2) = recombine(&a, &b, kappa, &mut rng).map_err(|e| e.to_string())?;
        for (((x, y), p), q) in a.chars().zip(b.chars()).zip(o1.chars()).zip(o2.chars()) {
            check!((p == x && q == y) || (p == y && q == x), "trial {trial}: position not inherited");
            if kappa == 0.5 && x != y {
                positions += 1;
                from_a += (p == x) as u64;
            }
        }
    }
    let frac = from_a as f64 / positions as f64;
    let sigma = (0.25 / positions as f64).sqrt();
    check!((frac - 0.5).abs() <= 3.0 * sigma, "parent-a fraction {frac} (3 sigma = {})", 3.0 * sigma);
    Ok(format!(
        "0.40 / 0.35 exact; 3x3000 novel; TV {tv:.4}; provenance 10^4 trials; kappa fraction {frac:.4} +- {:.4}; {:.2?}",
        3.0 * sigma,
        started.elapsed()
    ))
}

fn protein_config(dir: &Path, seed_value: u64, mutants: usize) -> CampaignConfig {
    let out = Command::new(env!("CARGO_BIN_EXE_macs"))
        .args(["synth", "protein", "--seed", &seed_value.to_string(), "--mutants", &mutants.to_string(), "--out"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    CampaignConfig::load(&dir.join("config.json")).unwrap()
}

fn campaign_bytes(config: &Path, mode: &str, out: &Path, workers: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_macs"))
        .args(["campaign", mode, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    check!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
    Ok((read("summary.json")?, read("traces.jsonl")?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let style_dir = dir.path().join("style");
    let synth = Command::new(env!("CARGO_BIN_EXE_macs"))
        .args(["synth", "style", "--seed", "12", "--groups", "20", "--out"])
        .arg(&style_dir)
        .output()
        .map_err(|e| e.to_string())?;
    check!(synth.status.success(), "synth failed");
    let protein_dir = dir.path().join("protein");
    protein_config(&protein_dir, 13, 300);
    let mut unique = serde_json::from_slice::<serde_json::Value>(&std::fs::read(protein_dir.join("config.json")).unwrap()).unwrap();
    unique["campaign"]["method"] = serde_json::json!({"kind": "unique-recombine", "kappa": 0.5});
    std::fs::write(protein_dir.join("unique.json"), unique.to_string()).unwrap();
    let cases = [
        (style_dir.join("config.json"), "style"),
        (protein_dir.join("config.json"), "discover"),
        (protein_dir.join("unique.json"), "discover"),
    ];
    let mut lines = BTreeMap::new();
    for (i, (config, mode)) in cases.iter().enumerate() {
        let runs = [1, 1, 4]
            .iter()
            .enumerate()
            .map(|(j, &w)| campaign_bytes(config, mode, &dir.path().join(format!("out-{i}-{j}")), w))
            .collect::<Result<Vec<_>, _>>()?;
        check!(runs[0] == runs[1], "case {i}: repeated run differs");
        check!(runs[0] == runs[2], "case {i}: --workers 1 vs 4 differ");
        lines.insert(i, runs[0].1.iter().filter(|&&b| b == b'\n').count());
    }
    Ok(format!("style, walk discovery and unique-recombine identical across reruns and 1 vs 4 workers ({:?} trace lines)", lines.values().collect::<Vec<_>>()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("reward oracle", reward_oracle),
        ("budget arithmetic", budget_arithmetic),
        ("z-test anchor", ztest_anchor),
        ("sampler coverage", sampler_coverage),
        ("inference strategy ordering", strategy_ordering),
        ("anchor plumbing", anchor_plumbing),
        ("discovery fixtures", discovery_fixtures),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
