//! Attribute evaluator contract and the scorer that turns raw sequences
//! into attribute-located, reward-comparable states.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attr::{AttributeSpec, AttributeVector, MultiConstraint};
use crate::error::bail;
use crate::{reward, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    Unary,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub id: String,
    pub kind: EvaluatorKind,
    pub spec: AttributeSpec,
    pub deterministic: bool,
}

/// Text is tokenized on whitespace; proteins are one letter per residue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    #[default]
    Text,
    Protein,
}

/// Lowercase hex SHA-256 of the raw UTF-8 sequence. Cache keys and trace
/// digests use this so they stay portable across runs and machines.
pub fn digest(seq: &str) -> String {
    let hash = Sha256::digest(seq.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in hash.iter() {
        out.push(char::from_digit((byte >> 4) as u32, 16).unwrap());
        out.push(char::from_digit((byte & 0xf) as u32, 16).unwrap());
    }
    out
}

/// Maps sequences to scalars. Batches are the primitive; implementors
/// return raw values and the provided methods validate and clamp.
pub trait Evaluator: Send + Sync {
    fn spec(&self) -> &EvaluatorSpec;

    fn raw_batch(&self, seqs: &[&str]) -> Result<Vec<f64>>;

    fn evaluate_batch(&self, seqs: &[&str]) -> Result<Vec<f64>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        if seqs.iter().any(|s| s.is_empty()) {
            bail!(Input, "`{}` cannot score an empty sequence", self.spec().id);
        }
        let raw = self.raw_batch(seqs)?;
        if raw.len() != seqs.len() {
            bail!(
                Protocol,
                "`{}` returned {} values for {} sequences",
                self.spec().id,
                raw.len(),
                seqs.len()
            );
        }
        raw.into_iter().map(|v| self.spec().spec.clamp(v)).collect()
    }

    fn evaluate(&self, seq: &str) -> Result<f64> {
        Ok(self.evaluate_batch(&[seq])?[0])
    }
}

/// Scores pairs of sequences onto `[0, 1]`.
pub trait PairEvaluator: Send + Sync {
    fn spec(&self) -> &EvaluatorSpec;

    fn raw_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;

    fn evaluate_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        if pairs.iter().any(|(a, b)| a.is_empty() || b.is_empty()) {
            bail!(Input, "`{}` cannot score an empty sequence", self.spec().id);
        }
        let raw = self.raw_pairs(pairs)?;
        if raw.len() != pairs.len() {
            bail!(
                Protocol,
                "`{}` returned {} values for {} pairs",
                self.spec().id,
                raw.len(),
                pairs.len()
            );
        }
        raw.into_iter().map(|v| self.spec().spec.clamp(v)).collect()
    }

    fn evaluate_pair(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.evaluate_pairs(&[(a, b)])?[0])
    }
}

/// A sequence plus its cached attribute vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub seq: String,
    pub attrs: AttributeVector,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub context: String,
}

impl ScoredSequence {
    pub fn new(seq: impl Into<String>, attrs: Vec<f64>, domain: Domain) -> Self {
        Self {
            seq: seq.into(),
            attrs: AttributeVector::new(attrs),
            domain,
            context: String::new(),
        }
    }

    pub fn digest(&self) -> String {
        digest(&self.seq)
    }
}

/// Attribute evaluators for one attribute space plus the optional bonus
/// evaluators (unary fluency, pairwise similarity).
#[derive(Clone)]
pub struct Scorer {
    specs: Vec<AttributeSpec>,
    evaluators: Vec<Arc<dyn Evaluator>>,
    fluency: Option<Arc<dyn Evaluator>>,
    similarity: Option<Arc<dyn PairEvaluator>>,
    bonuses_in_reward: bool,
    domain: Domain,
}

impl core::fmt::Debug for Scorer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Scorer")
            .field("specs", &self.specs)
            .field("fluency", &self.fluency.as_ref().map(|e| e.spec().id.clone()))
            .field("similarity", &self.similarity.as_ref().map(|e| e.spec().id.clone()))
            .field("bonuses_in_reward", &self.bonuses_in_reward)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Scorer {
    /// `evaluators[j]` must report on `specs[j]`.
    pub fn new(specs: Vec<AttributeSpec>, evaluators: Vec<Arc<dyn Evaluator>>, domain: Domain) -> Result<Self> {
        if specs.len() != evaluators.len() {
            bail!(
                Config,
                "{} evaluators for {} attributes",
                evaluators.len(),
                specs.len()
            );
        }
        for (spec, ev) in specs.iter().zip(&evaluators) {
            if ev.spec().spec.id != spec.id {
                bail!(
                    Config,
                    "evaluator `{}` reports on `{}`, expected `{}`",
                    ev.spec().id,
                    ev.spec().spec.id,
                    spec.id
                );
            }
        }
        Ok(Self {
            specs,
            evaluators,
            fluency: None,
            similarity: None,
            bonuses_in_reward: true,
            domain,
        })
    }

    pub fn with_fluency(mut self, ev: Arc<dyn Evaluator>) -> Self {
        self.fluency = Some(ev);
        self
    }

    pub fn with_similarity(mut self, ev: Arc<dyn PairEvaluator>) -> Self {
        self.similarity = Some(ev);
        self
    }

    /// Whether bonus scores enter [`Scorer::reward`] (they are still
    /// available for reporting either way).
    pub fn bonuses_in_reward(mut self, on: bool) -> Self {
        self.bonuses_in_reward = on;
        self
    }

    pub fn specs(&self) -> &[AttributeSpec] {
        &self.specs
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn has_bonus_metrics(&self) -> bool {
        self.fluency.is_some() && self.similarity.is_some()
    }

    pub fn score(&self, seq: &str) -> Result<ScoredSequence> {
        Ok(self.score_batch(&[seq])?.pop().unwrap())
    }

    pub fn score_batch(&self, seqs: &[&str]) -> Result<Vec<ScoredSequence>> {
        let columns = self
            .evaluators
            .iter()
            .map(|ev| ev.evaluate_batch(seqs))
            .collect::<Result<Vec<_>>>()?;
        Ok(seqs
            .iter()
            .enumerate()
            .map(|(i, s)| ScoredSequence::new(*s, columns.iter().map(|c| c[i]).collect(), self.domain))
            .collect())
    }

    pub fn fluency(&self, seq: &str) -> Result<Option<f64>> {
        self.fluency.as_ref().map(|ev| ev.evaluate(seq)).transpose()
    }

    pub fn similarity(&self, new: &str, old: &str) -> Result<Option<f64>> {
        self.similarity
            .as_ref()
            .map(|ev| ev.evaluate_pair(new, old))
            .transpose()
    }

    /// Bonus components for moving from `old` to `new`: fluency of `new`
    /// then similarity of the two, for whichever evaluators are present.
    pub fn bonuses(&self, new: &str, old: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(2);
        if let Some(f) = self.fluency(new)? {
            out.push(f);
        }
        if let Some(s) = self.similarity(new, old)? {
            out.push(s);
        }
        Ok(out)
    }

    /// Total reward of `new` relative to `old`.
    pub fn reward(&self, new: &ScoredSequence, old: &ScoredSequence, constraint: &MultiConstraint) -> Result<f64> {
        let bonuses = if self.bonuses_in_reward {
            self.bonuses(&new.seq, &old.seq)?
        } else {
            Vec::new()
        };
        reward::total_reward(&new.attrs, &old.attrs, constraint, &self.specs, &bonuses)
    }

    pub fn satisfies(&self, s: &ScoredSequence, constraint: &MultiConstraint) -> Result<bool> {
        reward::satisfies(&s.attrs, constraint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
