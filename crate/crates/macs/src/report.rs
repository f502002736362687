//! Campaign outputs.
//!
//! `summary.json`, the `matrix_*.csv` files and `traces.jsonl` depend only
//! on the config and seed, never on worker count or wall-clock time; those
//! go to `audit.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use macs_core::attr::AttributeSpace;
use macs_core::bench::{BudgetAudit, DiscoveryReport, StyleReport};
use macs_core::eval::digest;
use macs_core::inference::EpisodeResult;
use macs_core::stats::two_prop_ztest;
use serde::{Deserialize, Serialize};

use crate::config::CampaignConfig;
use crate::error::{Error, Result};

pub const SUMMARY_FORMAT: &str = "macs-summary";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ReportBody {
    Style(StyleReport),
    Discovery(DiscoveryReport),
}

impl ReportBody {
    pub fn budget(&self) -> &BudgetAudit {
        match self {
            Self::Style(r) => &r.budget,
            Self::Discovery(r) => &r.budget,
        }
    }

    /// Per combo: label, successes and trials for rate comparisons.
    pub fn counts(&self) -> Vec<(String, u64, u64)> {
        match self {
            Self::Style(r) => r.combos.iter().map(|c| (c.label.clone(), c.satisfied, c.episodes)).collect(),
            Self::Discovery(r) => r
                .combos
                .iter()
                .map(|c| (c.label.clone(), c.successes, r.per_combo_budget))
                .collect(),
        }
    }

    /// Named per-combo metrics written as matrices.
    pub fn matrices(&self) -> Vec<(&'static str, Vec<Vec<Option<f64>>>)> {
        match self {
            Self::Style(r) => vec![
                ("satisfaction", r.matrix(|c| Some(c.rate))),
                ("fluency", r.matrix(|c| c.fluency)),
                ("similarity", r.matrix(|c| c.similarity)),
            ],
            Self::Discovery(r) => vec![
                ("total_rate", r.matrix(|c| Some(c.total_rate))),
                ("unique_rate", r.matrix(|c| c.unique_rate)),
                ("distance_from_start", r.matrix(|c| c.distance_from_start.map(|m| m.mean))),
                ("distance_all_pairs", r.matrix(|c| c.distance_all_pairs.map(|m| m.mean))),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: CampaignConfig,
    pub report: ReportBody,
}

impl Summary {
    pub fn new(config: &CampaignConfig, report: ReportBody) -> Self {
        let mut config = config.clone();
        // The output location is not part of the experiment.
        config.output.dir = None;
        Self {
            format: SUMMARY_FORMAT.into(),
            version: 1,
            seed: config.seed,
            config,
            report,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if s.format != SUMMARY_FORMAT {
            return Err(Error::format(path, "not a campaign summary"));
        }
        Ok(s)
    }
}

/// Wall-clock and parallelism facts, kept apart from the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub finished_unix: u64,
    pub elapsed_ms: u128,
    pub workers: usize,
    pub budget: BudgetAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLine<'a> {
    pub episode_id: &'a str,
    pub step: usize,
    pub proposal_digest: String,
    pub attrs: Option<&'a [f64]>,
    pub reward: Option<f64>,
    pub accepted: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::format(path, e))?;
    out.write_all(b"\n").and_then(|()| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_traces<'a>(path: &Path, episodes: impl IntoIterator<Item = &'a EpisodeResult>) -> Result<()> {
    let mut out = create(path)?;
    for e in episodes {
        for t in &e.trace {
            let line = TraceLine {
                episode_id: &e.episode_id,
                step: t.step,
                proposal_digest: digest(&t.proposal),
                attrs: t.attrs.as_ref().map(|a| a.values()),
                reward: t.reward,
                accepted: t.accepted,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::format(path, e))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Column labels: the combined labels of every partition after the first.
fn column_labels(space: &AttributeSpace) -> Vec<String> {
    let cols = space.shape().iter().skip(1).product::<usize>().max(1);
    (0..cols)
        .map(|c| {
            let idx = space.combo_indices(c);
            let parts: Vec<String> = idx
                .iter()
                .zip(&space.partitions)
                .skip(1)
                .map(|(&i, p)| p.label(i))
                .collect();
            parts.join("/")
        })
        .collect()
}

/// Rows follow the first partition; empty cells mean "undefined".
pub fn write_matrix(path: &Path, space: &AttributeSpace, matrix: &[Vec<Option<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let first = &space.partitions[0];
    let mut header = vec![first.attr_id.clone()];
    header.extend(column_labels(space));
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    for (r, row) in matrix.iter().enumerate() {
        let mut record = vec![first.label(r)];
        record.extend(row.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        w.write_record(&record).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every deterministic output plus the audit into `dir`.
pub fn write_campaign(
    dir: &Path,
    space: &AttributeSpace,
    summary: &Summary,
    episodes: &[EpisodeResult],
    audit: &Audit,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("summary.json"), summary)?;
    for (name, m) in summary.report.matrices() {
        write_matrix(&dir.join(format!("matrix_{name}.csv")), space, &m)?;
    }
    write_traces(&dir.join("traces.jsonl"), episodes)?;
    write_json(&dir.join("audit.json"), audit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub combo: usize,
    pub label: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub z: Option<f64>,
    /// Two-sided.
    pub p: Option<f64>,
    /// One-sided, for "a is higher".
    pub p_a_greater: Option<f64>,
}

/// Per-combo two-proportion z-tests between two campaigns over the same
/// attribute space.
pub fn compare(a: &Summary, b: &Summary) -> Result<Vec<CompareRow>> {
    let (ca, cb) = (a.report.counts(), b.report.counts());
    if ca.len() != cb.len() {
        return Err(Error::Config(format!("{} combos against {}", ca.len(), cb.len())));
    }
    Ok(ca
        .into_iter()
        .zip(cb)
        .enumerate()
        .map(|(combo, ((label, s1, n1), (_, s2, n2)))| {
            let rate = |s: u64, n: u64| if n == 0 { 0.0 } else { s as f64 / n as f64 };
            let test = two_prop_ztest(s1, n1, s2, n2).ok();
            CompareRow {
                combo,
                label,
                rate_a: rate(s1, n1),
                rate_b: rate(s2, n2),
                z: test.map(|t| t.z),
                p: test.map(|t| t.p),
                p_a_greater: test.map(|t| t.p_greater()),
            }
        })
        .collect())
}

pub fn write_compare(out: impl Write, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))
}
