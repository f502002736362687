//! Deterministic synthetic evaluators for desk-scale runs.
//!
//! Stand-ins for learned regressors: a lexicon sentiment score on `[1, 5]`,
//! a word-length complexity score on `[-2, 2]`, a repetition-based fluency
//! score, token-multiset Jaccard similarity, and seeded additive protein
//! landscapes with pairwise couplings.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::attr::AttributeSpec;
use crate::error::bail;
use crate::eval::{Domain, Evaluator, EvaluatorKind, EvaluatorSpec, PairEvaluator};
use crate::{seed, Result};

/// The 20 standard amino acids in one-letter code.
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

/// Built-in polarity lexicon, grouped by polarity. Words of many lengths
/// sit at every polarity so sentiment and complexity can move
/// independently.
pub const LEXICON: &[(f64, &[&str])] = &[
    (
        1.0,
        &[
            "ace", "wow", "yay", "good", "great", "superb", "amazing", "wonderful", "fantastic",
            "phenomenal", "magnificent", "extraordinary",
        ],
    ),
    (
        0.5,
        &[
            "ok", "fine", "nice", "tasty", "decent", "pleasant", "enjoyable", "satisfying",
            "commendable", "respectable",
        ],
    ),
    (
        -0.5,
        &[
            "meh", "poor", "bland", "soggy", "uneven", "mediocre", "overpriced", "lackluster",
            "underwhelming", "disappointing",
        ],
    ),
    (
        -1.0,
        &[
            "bad", "ugh", "vile", "awful", "gross", "horrid", "terrible", "dreadful", "atrocious",
            "disgusting", "inexcusable", "unforgivable",
        ],
    ),
];

/// Words outside the lexicon, used by the synthesizer for polarity 0.
pub const NEUTRAL_WORDS: &[&str] = &[
    "an", "it", "is", "we", "the", "was", "and", "food", "menu", "place", "staff", "dinner",
    "portion", "service", "waitress", "breakfast", "restaurant", "experience", "atmosphere",
    "reservation", "neighborhood", "presentation", "establishment",
];

fn tokens(seq: &str, domain: Domain) -> Vec<String> {
    match domain {
        Domain::Text => seq.split_whitespace().map(|t| t.to_string()).collect(),
        Domain::Protein => seq.chars().map(|c| c.to_string()).collect(),
    }
}

fn unary_spec(id: &str, attr_id: &str, min: f64, max: f64) -> EvaluatorSpec {
    EvaluatorSpec {
        id: id.to_string(),
        kind: EvaluatorKind::Unary,
        spec: AttributeSpec::new(attr_id, min, max).unwrap(),
        deterministic: true,
    }
}

/// Mean token polarity `mu` mapped to `3 + 2 mu`. Tokens absent from the
/// lexicon count as polarity 0.
pub struct ToySentiment {
    spec: EvaluatorSpec,
    lexicon: BTreeMap<String, f64>,
}

impl ToySentiment {
    pub fn new(attr_id: &str) -> Self {
        let lexicon = LEXICON
            .iter()
            .flat_map(|(p, words)| words.iter().map(move |w| (w.to_string(), *p)))
            .collect();
        Self::with_lexicon(attr_id, lexicon)
    }

    pub fn with_lexicon(attr_id: &str, lexicon: BTreeMap<String, f64>) -> Self {
        Self {
            spec: unary_spec("toy-sentiment", attr_id, 1.0, 5.0),
            lexicon,
        }
    }

    pub fn polarity(&self, token: &str) -> f64 {
        self.lexicon.get(token).copied().unwrap_or(0.0)
    }

    fn score(&self, seq: &str) -> f64 {
        let toks: Vec<&str> = seq.split_whitespace().collect();
        if toks.is_empty() {
            return 3.0;
        }
        let mu = toks.iter().map(|t| self.polarity(t)).sum::<f64>() / toks.len() as f64;
        3.0 + 2.0 * mu.clamp(-1.0, 1.0)
    }
}

impl Evaluator for ToySentiment {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_batch(&self, seqs: &[&str]) -> Result<Vec<f64>> {
        Ok(seqs.iter().map(|s| self.score(s)).collect())
    }
}

/// Mean token length `L` mapped affinely so `L = 2` gives -2 and `L = 10`
/// gives 2, clamped to `[-2, 2]`.
pub struct ToyComplexity {
    spec: EvaluatorSpec,
}

impl ToyComplexity {
    pub fn new(attr_id: &str) -> Self {
        Self {
            spec: unary_spec("toy-complexity", attr_id, -2.0, 2.0),
        }
    }

    fn score(seq: &str) -> f64 {
        let toks: Vec<&str> = seq.split_whitespace().collect();
        if toks.is_empty() {
            return -2.0;
        }
        let mean = toks.iter().map(|t| t.chars().count() as f64).sum::<f64>() / toks.len() as f64;
        (-2.0 + 4.0 * (mean - 2.0) / 8.0).clamp(-2.0, 2.0)
    }
}

impl Evaluator for ToyComplexity {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_batch(&self, seqs: &[&str]) -> Result<Vec<f64>> {
        Ok(seqs.iter().map(|s| Self::score(s)).collect())
    }
}

/// Share of purely alphabetic tokens times one minus the share of
/// immediately repeated tokens. On `[0, 1]`.
pub struct ToyFluency {
    spec: EvaluatorSpec,
}

impl ToyFluency {
    pub fn new() -> Self {
        Self {
            spec: unary_spec("toy-fluency", "fluency", 0.0, 1.0),
        }
    }

    fn score(seq: &str) -> f64 {
        let toks: Vec<&str> = seq.split_whitespace().collect();
        if toks.is_empty() {
            return 0.0;
        }
        let alpha = toks
            .iter()
            .filter(|t| t.chars().all(|c| c.is_ascii_alphabetic()))
            .count() as f64
            / toks.len() as f64;
        let repeats = if toks.len() < 2 {
            0.0
        } else {
            toks.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (toks.len() - 1) as f64
        };
        alpha * (1.0 - repeats)
    }
}

impl Default for ToyFluency {
    fn default() -> Self {
        Self::new()
    }
}

impl Evaluator for ToyFluency {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_batch(&self, seqs: &[&str]) -> Result<Vec<f64>> {
        Ok(seqs.iter().map(|s| Self::score(s)).collect())
    }
}

/// Multiset Jaccard similarity: sum of per-token minimum counts over sum
/// of maximum counts.
pub struct ToySimilarity {
    spec: EvaluatorSpec,
    domain: Domain,
}

impl ToySimilarity {
    pub fn new(domain: Domain) -> Self {
        Self {
            spec: EvaluatorSpec {
                id: "toy-similarity".to_string(),
                kind: EvaluatorKind::Pairwise,
                spec: AttributeSpec::new("similarity", 0.0, 1.0).unwrap(),
                deterministic: true,
            },
            domain,
        }
    }

    pub fn jaccard(&self, a: &str, b: &str) -> f64 {
        let mut counts: BTreeMap<String, (u32, u32)> = BTreeMap::new();
        for t in tokens(a, self.domain) {
            counts.entry(t).or_default().0 += 1;
        }
        for t in tokens(b, self.domain) {
            counts.entry(t).or_default().1 += 1;
        }
        let (mut lo, mut hi) = (0u64, 0u64);
        for (x, y) in counts.values() {
            lo += u64::from(*x.min(y));
            hi += u64::from(*x.max(y));
        }
        if hi == 0 {
            1.0
        } else {
            lo as f64 / hi as f64
        }
    }
}

impl PairEvaluator for ToySimilarity {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(a, b)| self.jaccard(a, b)).collect())
    }
}

/// Generation parameters of a synthetic protein landscape.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeParams {
    pub seed: u64,
    #[serde(default)]
    pub coupling_count: usize,
    /// Value of the wild type.
    pub base: f64,
    /// Mean of the substitution deltas.
    pub bias: f64,
    /// Half-width of the uniform spread around `bias`.
    pub scale: f64,
    #[serde(default)]
    pub coupling_scale: f64,
}

/// Additive per-position substitution table with pairwise product
/// couplings. Substituting the wild-type letter contributes nothing, so
/// the wild type sits exactly at `base`.
pub struct ProteinLandscape {
    spec: EvaluatorSpec,
    wild_type: Vec<usize>,
    table: Vec<[f64; 20]>,
    couplings: Vec<(usize, usize, f64)>,
    base: f64,
}

pub fn residue_index(c: char) -> Option<usize> {
    AMINO_ACIDS.find(c)
}

impl ProteinLandscape {
    pub fn new(attr: AttributeSpec, wild_type: &str, params: &LandscapeParams) -> Result<Self> {
        let wt = encode(wild_type, None)?;
        if params.coupling_count > 0 && wt.len() < 2 {
            bail!(Config, "couplings need a wild type of length two or more");
        }
        let mut rng = seed::rng(params.seed);
        let table = wt
            .iter()
            .map(|&w| {
                let mut row = [0.0; 20];
                for (a, slot) in row.iter_mut().enumerate() {
                    let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    *slot = if a == w { 0.0 } else { params.bias + params.scale * u };
                }
                row
            })
            .collect();
        let couplings = (0..params.coupling_count)
            .map(|_| {
                let p = rng.random_range(0..wt.len());
                let mut q = rng.random_range(0..wt.len() - 1);
                if q >= p {
                    q += 1;
                }
                let w = params.coupling_scale * (rng.random::<f64>() * 2.0 - 1.0);
                (p, q, w)
            })
            .collect();
        Ok(Self {
            spec: EvaluatorSpec {
                id: alloc::format!("toy-protein-{}", attr.id),
                kind: EvaluatorKind::Unary,
                spec: attr,
                deterministic: true,
            },
            wild_type: wt,
            table,
            couplings,
            base: params.base,
        })
    }

    pub fn len(&self) -> usize {
        self.wild_type.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wild_type.is_empty()
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Substitution delta of letter `aa` at `pos`.
    pub fn entry(&self, pos: usize, aa: char) -> f64 {
        self.table[pos][residue_index(aa).expect("amino acid")]
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    /// Unclamped landscape value; summation order is fixed (positions, then
    /// couplings) so results are bit-stable.
    pub fn value(&self, seq: &str) -> Result<f64> {
        let enc = encode(seq, Some(self.wild_type.len()))?;
        let mut sum = self.base;
        for (pos, &a) in enc.iter().enumerate() {
            sum += self.table[pos][a];
        }
        for &(p, q, w) in &self.couplings {
            sum += w * self.table[p][enc[p]] * self.table[q][enc[q]];
        }
        Ok(sum)
    }
}

fn encode(seq: &str, len: Option<usize>) -> Result<Vec<usize>> {
    let enc = seq
        .chars()
        .map(|c| residue_index(c).ok_or_else(|| crate::Error::Input(alloc::format!("invalid residue `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    if enc.is_empty() {
        bail!(Input, "empty protein sequence");
    }
    if let Some(len) = len {
        if enc.len() != len {
            bail!(Input, "protein length {} differs from wild type {}", enc.len(), len);
        }
    }
    Ok(enc)
}

impl Evaluator for ProteinLandscape {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_batch(&self, seqs: &[&str]) -> Result<Vec<f64>> {
        seqs.iter().map(|s| self.value(s)).collect()
    }
}
