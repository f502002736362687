//! Seeded generators for toy task instances.
//!
//! Style pools are groups of one original review plus variations, where
//! each group varies mostly one attribute: sentiment groups swap word
//! polarity at fixed word lengths, complexity groups swap word lengths at
//! fixed polarity. The resulting pair distribution is skewed toward the
//! two axes. Protein pools hold a wild type plus mutants whose distance
//! from it is geometric, so most sit close to the wild type.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attr::AttributeSpace;
use crate::editpair::{PoolMember, VariationPool};
use crate::error::bail;
use crate::eval::{Domain, Scorer};
use crate::seed::{self, Rng as StdRng};
use crate::toy::{
    LandscapeParams, ProteinLandscape, ToyComplexity, ToyFluency, ToySentiment, ToySimilarity, AMINO_ACIDS, LEXICON,
    NEUTRAL_WORDS,
};
use crate::Result;

pub const ORIGIN_ORIGINAL: &str = "original";
pub const ORIGIN_VARIATION: &str = "variation";
pub const ORIGIN_WILD_TYPE: &str = "wild-type";
pub const ORIGIN_MUTANT: &str = "mutant";

const POLARITIES: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleSynthConfig {
    pub groups: usize,
    pub variations: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a variation also redraws the other attribute.
    pub drift: f64,
}

impl Default for StyleSynthConfig {
    fn default() -> Self {
        Self {
            groups: 300,
            variations: 25,
            min_tokens: 6,
            max_tokens: 12,
            drift: 0.01,
        }
    }
}

impl StyleSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            bail!(Config, "token range [{}, {}] is empty", self.min_tokens, self.max_tokens);
        }
        if !(0.0..=1.0).contains(&self.drift) {
            bail!(Config, "drift {} outside [0, 1]", self.drift);
        }
        Ok(())
    }
}

/// Sentiment and complexity evaluators over the style space, optionally
/// with the fluency and similarity bonus evaluators.
pub fn style_scorer(bonuses: bool) -> Scorer {
    let space = AttributeSpace::style();
    let scorer = Scorer::new(
        space.specs,
        alloc::vec![
            Arc::new(ToySentiment::new("sentiment")),
            Arc::new(ToyComplexity::new("complexity"))
        ],
        Domain::Text,
    )
    .expect("style evaluators match the style space");
    if bonuses {
        scorer
            .with_fluency(Arc::new(ToyFluency::new()))
            .with_similarity(Arc::new(ToySimilarity::new(Domain::Text)))
    } else {
        scorer
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Slot {
    polarity: f64,
    length: usize,
}

fn words_with(polarity: f64) -> &'static [&'static str] {
    if polarity == 0.0 {
        return NEUTRAL_WORDS;
    }
    LEXICON
        .iter()
        .find(|(p, _)| *p == polarity)
        .map(|(_, w)| *w)
        .expect("lexicon covers every non-zero polarity")
}

/// A word of the slot's polarity whose length is closest to the target.
fn word_for(slot: Slot, rng: &mut StdRng) -> &'static str {
    let words = words_with(slot.polarity);
    let gap = |w: &str| w.len().abs_diff(slot.length);
    let best = words.iter().map(|w| gap(w)).min().unwrap();
    let closest: Vec<&str> = words.iter().copied().filter(|w| gap(w) == best).collect();
    closest[rng.random_range(0..closest.len())]
}

fn nearest_polarity(x: f64) -> f64 {
    POLARITIES
        .iter()
        .copied()
        .min_by(|a, b| libm::fabs(a - x).total_cmp(&libm::fabs(b - x)))
        .unwrap()
}

fn draw_polarities(slots: &mut [Slot], rng: &mut StdRng) {
    let mu: f64 = rng.random_range(-1.0..=1.0);
    for s in slots {
        s.polarity = nearest_polarity(mu + rng.random_range(-0.6..=0.6));
    }
}

fn draw_lengths(slots: &mut [Slot], rng: &mut StdRng) {
    let mean: f64 = rng.random_range(2.0..=10.0);
    for s in slots {
        let l = libm::round(mean + rng.random_range(-2.0..=2.0));
        s.length = l.clamp(2.0, 13.0) as usize;
    }
}

fn render(slots: &[Slot], previous: Option<(&[Slot], &[&'static str])>, rng: &mut StdRng) -> Vec<&'static str> {
    slots
        .iter()
        .enumerate()
        .map(|(i, &s)| match previous {
            Some((old, words)) if old[i] == s => words[i],
            _ => word_for(s, rng),
        })
        .collect()
}

/// Style pools scored by the toy sentiment and complexity evaluators.
pub fn synth_style(config: &StyleSynthConfig, seed: u64) -> Result<Vec<VariationPool>> {
    config.validate()?;
    let scorer = style_scorer(false);
    (0..config.groups)
        .map(|g| {
            let mut rng = seed::rng(seed::derive_index(seed, g as u64));
            let n = rng.random_range(config.min_tokens..=config.max_tokens);
            let mut base = alloc::vec![Slot { polarity: 0.0, length: 2 }; n];
            draw_polarities(&mut base, &mut rng);
            draw_lengths(&mut base, &mut rng);
            let base_words = render(&base, None, &mut rng);
            let mut texts: Vec<String> = alloc::vec![base_words.join(" ")];
            let sentiment_group = g % 2 == 0;
            for _ in 0..config.variations {
                for attempt in 0.. {
                    let mut slots = base.clone();
                    let drift = rng.random_bool(config.drift);
                    if sentiment_group || drift {
                        draw_polarities(&mut slots, &mut rng);
                    }
                    if !sentiment_group || drift {
                        draw_lengths(&mut slots, &mut rng);
                    }
                    let text = render(&slots, Some((&base, &base_words)), &mut rng).join(" ");
                    if !texts.contains(&text) {
                        texts.push(text);
                        break;
                    }
                    if attempt == 64 {
                        log::warn!("group {g}: could not find a distinct variation");
                        break;
                    }
                }
            }
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let members = scorer
                .score_batch(&refs)?
                .into_iter()
                .enumerate()
                .map(|(i, seq)| PoolMember {
                    seq,
                    origin: String::from(if i == 0 { ORIGIN_ORIGINAL } else { ORIGIN_VARIATION }),
                })
                .collect();
            Ok(VariationPool::new(alloc::format!("review-{g:04}"), members))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProteinSynthConfig {
    pub length: usize,
    pub mutants: usize,
    /// Success probability of the geometric mutant-distance draw.
    pub distance_p: f64,
    pub max_distance: usize,
    pub fluorescence: LandscapeParams,
    pub ddg: LandscapeParams,
}

impl Default for ProteinSynthConfig {
    fn default() -> Self {
        Self {
            length: 48,
            mutants: 2000,
            distance_p: 0.3,
            max_distance: 12,
            fluorescence: LandscapeParams {
                seed: 0,
                coupling_count: 24,
                base: 3.72,
                bias: -0.12,
                scale: 0.3,
                coupling_scale: 0.5,
            },
            ddg: LandscapeParams {
                seed: 0,
                coupling_count: 24,
                base: 0.0,
                bias: 0.4,
                scale: 1.2,
                coupling_scale: 0.2,
            },
        }
    }
}

/// A wild type, the landscapes scoring it, and its mutant pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinInstance {
    pub wild_type: String,
    pub fluorescence: LandscapeParams,
    pub ddg: LandscapeParams,
    pub pool: VariationPool,
}

/// Fluorescence and ddG landscapes over the protein space.
pub fn protein_scorer(wild_type: &str, fluorescence: &LandscapeParams, ddg: &LandscapeParams) -> Result<Scorer> {
    let space = AttributeSpace::protein();
    let fl = ProteinLandscape::new(space.specs[0].clone(), wild_type, fluorescence)?;
    let dg = ProteinLandscape::new(space.specs[1].clone(), wild_type, ddg)?;
    Scorer::new(space.specs, alloc::vec![Arc::new(fl), Arc::new(dg)], Domain::Protein)
}

pub fn synth_protein(config: &ProteinSynthConfig, seed: u64) -> Result<ProteinInstance> {
    if config.length < 2 {
        bail!(Config, "protein length must be at least 2");
    }
    if !(config.distance_p > 0.0 && config.distance_p <= 1.0) {
        bail!(Config, "distance_p {} outside (0, 1]", config.distance_p);
    }
    if config.max_distance == 0 {
        bail!(Config, "max_distance must be at least 1");
    }
    let letters: Vec<char> = AMINO_ACIDS.chars().collect();
    let mut rng = seed::rng(seed::derive(seed, "wild-type"));
    let wild_type: String = (0..config.length).map(|_| letters[rng.random_range(0..20)]).collect();
    let mut fluorescence = config.fluorescence.clone();
    fluorescence.seed = seed::derive(seed, "fluorescence");
    let mut ddg = config.ddg.clone();
    ddg.seed = seed::derive(seed, "ddg");
    let scorer = protein_scorer(&wild_type, &fluorescence, &ddg)?;

    let mut rng = seed::rng(seed::derive(seed, "mutants"));
    let cap = config.max_distance.min(config.length);
    let mut seqs: Vec<String> = alloc::vec![wild_type.clone()];
    let mut seen: alloc::collections::BTreeSet<String> = seqs.iter().cloned().collect();
    let mut attempts = 0usize;
    while seqs.len() <= config.mutants {
        attempts += 1;
        if attempts > 100 * (config.mutants + 1) {
            bail!(Config, "could not draw {} distinct mutants", config.mutants);
        }
        let mut d = 1;
        while d < cap && !rng.random_bool(config.distance_p) {
            d += 1;
        }
        let mut chars: Vec<char> = wild_type.chars().collect();
        for pos in rand::seq::index::sample(&mut rng, config.length, d) {
            let skip = letters.iter().position(|&c| c == chars[pos]).unwrap();
            let i = rng.random_range(0..19);
            chars[pos] = letters[if i >= skip { i + 1 } else { i }];
        }
        let s: String = chars.into_iter().collect();
        if seen.insert(s.clone()) {
            seqs.push(s);
        }
    }
    let refs: Vec<&str> = seqs.iter().map(String::as_str).collect();
    let members = scorer
        .score_batch(&refs)?
        .into_iter()
        .enumerate()
        .map(|(i, seq)| PoolMember {
            seq,
            origin: String::from(if i == 0 { ORIGIN_WILD_TYPE } else { ORIGIN_MUTANT }),
        })
        .collect();
    Ok(ProteinInstance {
        wild_type,
        fluorescence,
        ddg,
        pool: VariationPool::new("mutants", members),
    })
}
