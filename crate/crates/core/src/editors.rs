//! The editor contract and the built-in baseline editors.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attr::{AttributeSpec, MultiConstraint};
use crate::error::bail;
use crate::eval::ScoredSequence;
use crate::reward::satisfaction_sum;
use crate::seed::{self, Rng as StdRng};
use crate::toy::AMINO_ACIDS;
use crate::Result;

/// Everything an editor conditions on for one proposal round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub episode_id: String,
    #[serde(default)]
    pub context: String,
    /// Present iff anchor conditioning is on.
    pub anchor: Option<ScoredSequence>,
    pub current: ScoredSequence,
    pub target: MultiConstraint,
    pub n_candidates: usize,
    pub seed: u64,
}

/// Proposes rewrites. Each returned candidate costs one unit of budget;
/// callers check the count.
pub trait Editor: Send + Sync {
    fn propose(&self, request: &EditRequest) -> Result<Vec<String>>;
}

/// Built-in and external editor kinds, as declared in campaign configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EditorConfig {
    PoolOracle {
        p: f64,
    },
    RandomMutation {
        /// `(distance, probability)` entries; distances are substitution
        /// counts. Discovery campaigns derive it from the reference set
        /// when absent.
        #[serde(default)]
        histogram: Option<Vec<(usize, f64)>>,
    },
    Recombine {
        kappa: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default)]
        env: Vec<(String, String)>,
    },
}

impl EditorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PoolOracle { p } if !(0.0..=1.0).contains(p) => bail!(Config, "oracle p = {p} outside [0, 1]"),
            Self::Recombine { kappa } if !(0.0..=1.0).contains(kappa) => {
                bail!(Config, "recombination rate {kappa} outside [0, 1]")
            }
            Self::RandomMutation { histogram: Some(h) } => check_histogram(h),
            Self::External { command, .. } if command.is_empty() => bail!(Config, "external editor needs a command"),
            _ => Ok(()),
        }
    }
}

fn check_histogram(h: &[(usize, f64)]) -> Result<()> {
    if h.is_empty() {
        bail!(Config, "empty edit-distance histogram");
    }
    if h.iter().any(|&(_, w)| !(w >= 0.0)) {
        bail!(Config, "histogram weights must be non-negative");
    }
    let total: f64 = h.iter().map(|&(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-6 {
        bail!(Config, "histogram sums to {total}, not 1");
    }
    Ok(())
}

/// Stand-in for a trained editor: draws from a fixed pool, favouring
/// members that beat the current state on summed satisfaction.
#[derive(Debug, Clone)]
pub struct PoolOracle {
    members: Vec<ScoredSequence>,
    specs: Vec<AttributeSpec>,
    p: f64,
}

impl PoolOracle {
    pub fn new(members: Vec<ScoredSequence>, specs: Vec<AttributeSpec>, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            bail!(Config, "oracle p = {p} outside [0, 1]");
        }
        if members.is_empty() {
            bail!(Config, "oracle pool is empty");
        }
        Ok(Self { members, specs, p })
    }

    pub fn members(&self) -> &[ScoredSequence] {
        &self.members
    }

    /// Members whose summed satisfaction under `target` strictly exceeds
    /// that of `current`.
    pub fn improving(&self, current: &ScoredSequence, target: &MultiConstraint) -> Result<Vec<usize>> {
        let bar = satisfaction_sum(&current.attrs, target, &self.specs)?;
        let mut out = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            if satisfaction_sum(&m.attrs, target, &self.specs)? > bar {
                out.push(i);
            }
        }
        Ok(out)
    }
}

impl Editor for PoolOracle {
    fn propose(&self, request: &EditRequest) -> Result<Vec<String>> {
        let improving = self.improving(&request.current, &request.target)?;
        let mut rng = seed::rng(request.seed);
        Ok((0..request.n_candidates)
            .map(|_| {
                let pick = if rng.random_bool(self.p) && !improving.is_empty() {
                    improving[rng.random_range(0..improving.len())]
                } else {
                    rng.random_range(0..self.members.len())
                };
                self.members[pick].seq.clone()
            })
            .collect())
    }
}

/// Substitutes `d` distinct positions, with `d` drawn from a reference
/// edit-distance histogram.
#[derive(Debug, Clone)]
pub struct RandomMutation {
    histogram: Vec<(usize, f64)>,
    alphabet: Vec<char>,
}

impl RandomMutation {
    pub fn new(histogram: Vec<(usize, f64)>) -> Result<Self> {
        Self::with_alphabet(histogram, AMINO_ACIDS)
    }

    pub fn with_alphabet(histogram: Vec<(usize, f64)>, alphabet: &str) -> Result<Self> {
        check_histogram(&histogram)?;
        let alphabet: Vec<char> = alphabet.chars().collect();
        if alphabet.len() < 2 {
            bail!(Config, "mutation alphabet needs at least two letters");
        }
        Ok(Self { histogram, alphabet })
    }

    /// Normalized histogram of the given distances.
    pub fn histogram_of(distances: &[usize]) -> Result<Vec<(usize, f64)>> {
        if distances.is_empty() {
            bail!(Input, "no distances to build a histogram from");
        }
        let mut counts = alloc::collections::BTreeMap::new();
        for &d in distances {
            *counts.entry(d).or_insert(0usize) += 1;
        }
        let n = distances.len() as f64;
        Ok(counts.into_iter().map(|(d, c)| (d, c as f64 / n)).collect())
    }

    pub fn histogram(&self) -> &[(usize, f64)] {
        &self.histogram
    }

    fn sample_distance(&self, rng: &mut StdRng) -> usize {
        let mut x = rng.random::<f64>();
        for &(d, w) in &self.histogram {
            if x < w {
                return d;
            }
            x -= w;
        }
        self.histogram.iter().rev().find(|&&(_, w)| w > 0.0).map_or(0, |&(d, _)| d)
    }

    pub fn mutate(&self, seq: &str, rng: &mut StdRng) -> String {
        let mut letters: Vec<char> = seq.chars().collect();
        let d = self.sample_distance(rng).min(letters.len());
        for pos in rand::seq::index::sample(rng, letters.len(), d) {
            let old = letters[pos];
            letters[pos] = match self.alphabet.iter().position(|&c| c == old) {
                Some(skip) => {
                    let i = rng.random_range(0..self.alphabet.len() - 1);
                    self.alphabet[if i >= skip { i + 1 } else { i }]
                }
                None => self.alphabet[rng.random_range(0..self.alphabet.len())],
            };
        }
        letters.into_iter().collect()
    }
}

impl Editor for RandomMutation {
    fn propose(&self, request: &EditRequest) -> Result<Vec<String>> {
        let mut rng = seed::rng(request.seed);
        Ok((0..request.n_candidates)
            .map(|_| self.mutate(&request.current.seq, &mut rng))
            .collect())
    }
}

/// Crosses two equal-length parents: each position is swapped between the
/// offspring with probability `kappa`.
pub fn recombine(a: &str, b: &str, kappa: f64, rng: &mut StdRng) -> Result<(String, String)> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len() != b.len() {
        bail!(Contract, "recombining parents of length {} and {}", a.len(), b.len());
    }
    if !(0.0..=1.0).contains(&kappa) {
        bail!(Config, "recombination rate {kappa} outside [0, 1]");
    }
    let mut first = String::with_capacity(a.len());
    let mut second = String::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(&b) {
        if rng.random_bool(kappa) {
            first.push(y);
            second.push(x);
        } else {
            first.push(x);
            second.push(y);
        }
    }
    Ok((first, second))
}

/// Walks a seeded shuffle of a seed set two parents at a time, reshuffling
/// when exhausted, and yields both offspring of each cross.
pub struct RecombineStream {
    seeds: Vec<String>,
    kappa: f64,
    rng: StdRng,
    order: Vec<usize>,
    cursor: usize,
    pending: Option<String>,
}

impl RecombineStream {
    pub fn new(seeds: Vec<String>, kappa: f64, seed: u64) -> Result<Self> {
        if seeds.len() < 2 {
            bail!(Config, "recombination needs at least two seed sequences");
        }
        if !(0.0..=1.0).contains(&kappa) {
            bail!(Config, "recombination rate {kappa} outside [0, 1]");
        }
        let len = seeds[0].chars().count();
        if seeds.iter().any(|s| s.chars().count() != len) {
            bail!(Contract, "seed sequences differ in length");
        }
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..seeds.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            seeds,
            kappa,
            rng,
            order,
            cursor: 0,
            pending: None,
        })
    }

    fn next_parents(&mut self) -> (usize, usize) {
        if self.cursor + 2 > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let pair = (self.order[self.cursor], self.order[self.cursor + 1]);
        self.cursor += 2;
        pair
    }

    /// The next offspring; one unit of budget.
    pub fn next_offspring(&mut self) -> String {
        if let Some(s) = self.pending.take() {
            return s;
        }
        let (a, b) = self.next_parents();
        let (first, second) = recombine(&self.seeds[a], &self.seeds[b], self.kappa, &mut self.rng)
            .expect("seed lengths checked at construction");
        self.pending = Some(second);
        first
    }
}

/// Echoes the current sequence back; useful as a null editor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Editor for Identity {
    fn propose(&self, request: &EditRequest) -> Result<Vec<String>> {
        Ok(alloc::vec![request.current.seq.clone(); request.n_candidates])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attr::AttributeSpace;
    use crate::eval::Domain;
    use crate::stats::{levenshtein, total_variation};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn request(current: ScoredSequence, target: MultiConstraint, n: usize, seed: u64) -> EditRequest {
        EditRequest {
            episode_id: "e".into(),
            context: String::new(),
            anchor: None,
            current,
            target,
            n_candidates: n,
            seed,
        }
    }

    fn style_pool() -> Vec<ScoredSequence> {
        let mut rng = seed::rng(17);
        (0..30)
            .map(|i| {
                ScoredSequence::new(
                    alloc::format!("m{i}"),
                    vec![rng.random_range(1.0..=5.0), rng.random_range(-2.0..=2.0)],
                    Domain::Text,
                )
            })
            .collect()
    }

    #[test]
    fn oracle_improving_matches_brute_force() {
        let space = AttributeSpace::style();
        let pool = style_pool();
        let oracle = PoolOracle::new(pool.clone(), space.specs.clone(), 1.0).unwrap();
        for combo in 0..space.combo_count() {
            let c = space.constraint(combo);
            for current in &pool[..5] {
                let bar = satisfaction_sum(&current.attrs, &c, &space.specs).unwrap();
                let brute: Vec<usize> = (0..pool.len())
                    .filter(|&i| satisfaction_sum(&pool[i].attrs, &c, &space.specs).unwrap() > bar)
                    .collect();
                assert_eq!(oracle.improving(current, &c).unwrap(), brute);
                let out = oracle.propose(&request(current.clone(), c.clone(), 4, combo as u64)).unwrap();
                assert_eq!(out.len(), 4);
                if !brute.is_empty() {
                    for s in out {
                        let m = pool.iter().find(|m| m.seq == s).unwrap();
                        assert!(satisfaction_sum(&m.attrs, &c, &space.specs).unwrap() > bar);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_p0_is_uniform() {
        let space = AttributeSpace::style();
        let pool: Vec<_> = style_pool().into_iter().take(5).collect();
        let oracle = PoolOracle::new(pool.clone(), space.specs.clone(), 0.0).unwrap();
        let out = oracle
            .propose(&request(pool[0].clone(), space.constraint(0), 10_000, 3))
            .unwrap();
        let mut counts = [0f64; 5];
        for s in &out {
            counts[pool.iter().position(|m| &m.seq == s).unwrap()] += 1.0;
        }
        let chi: f64 = counts.iter().map(|c| (c - 2000.0) * (c - 2000.0) / 2000.0).sum();
        // four degrees of freedom, 0.1% critical value
        assert!(chi < 18.47, "{chi}");
    }

    #[test]
    fn oracle_rejects_bad_p() {
        assert!(PoolOracle::new(style_pool(), AttributeSpace::style().specs, 1.5).is_err());
        assert!(PoolOracle::new(Vec::new(), AttributeSpace::style().specs, 0.5).is_err());
    }

    fn protein(seq: &str) -> ScoredSequence {
        ScoredSequence::new(seq, vec![3.0, 0.0], Domain::Protein)
    }

    #[test]
    fn mutation_distance_is_exact_for_fixed_d() {
        let wt = "MSKGEELFTGVVPILVELDGDVNGHKFSVSGEGEGDATYGKLTLKF";
        for d in [1usize, 2, 3] {
            let editor = RandomMutation::new(vec![(d, 1.0)]).unwrap();
            let out = editor
                .propose(&request(protein(wt), AttributeSpace::protein().constraint(0), 200, d as u64))
                .unwrap();
            for s in out {
                assert_eq!(s.len(), wt.len());
                let hamming = s.chars().zip(wt.chars()).filter(|(a, b)| a != b).count();
                assert_eq!(hamming, d);
                if d <= 2 {
                    assert_eq!(levenshtein(&s, wt), d);
                }
            }
        }
    }

    #[test]
    fn mutation_follows_histogram() {
        let wt: String = AMINO_ACIDS.repeat(3);
        let reference = vec![(1, 0.3), (2, 0.3), (3, 0.2), (5, 0.15), (8, 0.05)];
        let editor = RandomMutation::new(reference.clone()).unwrap();
        let out = editor
            .propose(&request(protein(&wt), AttributeSpace::protein().constraint(0), 10_000, 9))
            .unwrap();
        let mut emp = vec![0.0; 9];
        for s in &out {
            emp[levenshtein(s, &wt)] += 1.0 / out.len() as f64;
        }
        let mut refp = vec![0.0; 9];
        for (d, w) in reference {
            refp[d] = w;
        }
        assert!(total_variation(&emp, &refp) < 0.05);
    }

    #[test]
    fn histogram_validation() {
        assert!(RandomMutation::new(vec![(1, 0.5)]).is_err());
        assert!(RandomMutation::new(Vec::new()).is_err());
        assert!(RandomMutation::new(vec![(1, 1.5), (2, -0.5)]).is_err());
        assert_eq!(
            RandomMutation::histogram_of(&[1, 1, 2, 4]).unwrap(),
            vec![(1, 0.5), (2, 0.25), (4, 0.25)]
        );
    }

    #[test]
    fn recombine_extremes() {
        let mut rng = seed::rng(0);
        assert_eq!(
            recombine("AAAA", "CCCC", 0.0, &mut rng).unwrap(),
            ("AAAA".into(), "CCCC".into())
        );
        assert_eq!(
            recombine("AAAA", "CCCC", 1.0, &mut rng).unwrap(),
            ("CCCC".into(), "AAAA".into())
        );
        assert!(recombine("AAA", "CC", 0.5, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn offspring_come_from_parents(a in "[ACDE]{1,40}", s in any::<u64>(), kappa in 0.0f64..=1.0) {
            let b: String = a.chars().rev().collect();
            let mut rng = seed::rng(s);
            let (x, y) = recombine(&a, &b, kappa, &mut rng).unwrap();
            for (((pa, pb), cx), cy) in a.chars().zip(b.chars()).zip(x.chars()).zip(y.chars()) {
                prop_assert!(cx == pa || cx == pb);
                prop_assert!((cx, cy) == (pa, pb) || (cx, cy) == (pb, pa));
            }
        }
    }

    #[test]
    fn stream_cycles_and_repeats() {
        let seeds: Vec<String> = ["AAAA", "CCCC", "DDDD"].iter().map(|s| String::from(*s)).collect();
        let mut a = RecombineStream::new(seeds.clone(), 0.5, 4).unwrap();
        let mut b = RecombineStream::new(seeds, 0.5, 4).unwrap();
        for _ in 0..50 {
            let x = a.next_offspring();
            assert_eq!(x, b.next_offspring());
            assert_eq!(x.len(), 4);
        }
        assert!(RecombineStream::new(vec!["AA".into()], 0.5, 0).is_err());
    }

    #[test]
    fn identity_echoes() {
        let out = Identity
            .propose(&request(protein("ACD"), AttributeSpace::protein().constraint(0), 3, 0))
            .unwrap();
        assert_eq!(out, vec!["ACD", "ACD", "ACD"]);
    }

    #[test]
    fn config_validation() {
        assert!(EditorConfig::PoolOracle { p: 2.0 }.validate().is_err());
        assert!(EditorConfig::Recombine { kappa: 0.5 }.validate().is_ok());
        assert!(EditorConfig::External {
            command: Vec::new(),
            env: Vec::new()
        }
        .validate()
        .is_err());
        let c: EditorConfig = serde_json::from_str(r#"{"kind":"pool-oracle","p":0.5}"#).unwrap();
        assert_eq!(c, EditorConfig::PoolOracle { p: 0.5 });
    }
}
