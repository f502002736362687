//! Campaign bookkeeping for the two task shapes.
//!
//! Style campaigns run one episode per (item, combo) and report per-combo
//! satisfaction rates. Discovery campaigns spend a fixed proposal budget
//! per combo from a single start sequence and report how many distinct
//! proposals satisfy each combo. Episode execution is keyed by index so
//! callers may fan jobs out in any order; every summary here is a pure
//! function of the ordered episode results.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attr::{AttributeSpace, AttributeVector, MultiConstraint};
use crate::editors::{Editor, RandomMutation, RecombineStream};
use crate::editpair::VariationPool;
use crate::error::bail;
use crate::eval::{ScoredSequence, Scorer};
use crate::inference::{run_episode, EpisodeConfig, EpisodeResult, TraceStep};
use crate::reward::satisfies;
use crate::seed;
use crate::stats::{levenshtein, MeanStd};
use crate::{Error, Result};

/// Upper bound on editor calls for a style campaign.
pub fn style_budget(items: u64, combos: u64, rewrites: u64) -> u64 {
    items * combos * rewrites
}

/// Upper bound on proposals for a discovery campaign.
pub fn discovery_budget(combos: u64, per_combo: u64) -> u64 {
    combos * per_combo
}

/// Seed of the `index`-th episode of a campaign.
pub fn episode_seed(campaign_seed: u64, index: u64) -> u64 {
    seed::derive_index(seed::derive(campaign_seed, "episodes"), index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub configured: u64,
    pub used: u64,
    pub per_combo: Vec<u64>,
    /// Episodes that stopped early on satisfaction.
    pub early_stops: u64,
    /// Set for modes allowed to exceed the decode budget.
    pub exempt: bool,
}

/// A test item: the start sequence plus the variation pool an oracle
/// editor may draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleItem {
    pub id: String,
    pub start: ScoredSequence,
    pub pool: Vec<ScoredSequence>,
}

impl StyleItem {
    /// The member tagged `original` (else the first) is the start.
    pub fn from_pool(pool: &VariationPool) -> Result<Self> {
        let start = pool
            .members
            .iter()
            .find(|m| m.origin == crate::synth::ORIGIN_ORIGINAL)
            .or(pool.members.first())
            .ok_or_else(|| Error::Input(format!("pool `{}` is empty", pool.group_id)))?;
        Ok(Self {
            id: pool.group_id.clone(),
            start: start.seq.clone(),
            pool: pool.members.iter().map(|m| m.seq.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleJob {
    pub item: usize,
    pub combo: usize,
}

impl StyleJob {
    pub fn index(&self, combos: usize) -> u64 {
        (self.item * combos + self.combo) as u64
    }

    pub fn episode_id(&self, items: &[StyleItem]) -> String {
        format!("{}/combo-{:02}", items[self.item].id, self.combo)
    }
}

/// All (item, combo) jobs, item-major.
pub fn style_jobs(items: usize, combos: usize) -> Vec<StyleJob> {
    (0..items)
        .flat_map(|item| (0..combos).map(move |combo| StyleJob { item, combo }))
        .collect()
}

pub fn run_style_job(
    job: StyleJob,
    items: &[StyleItem],
    space: &AttributeSpace,
    editor: &dyn Editor,
    scorer: &Scorer,
    episode: &EpisodeConfig,
    campaign_seed: u64,
) -> Result<EpisodeResult> {
    let mut config = episode.clone();
    config.seed = episode_seed(campaign_seed, job.index(space.combo_count()));
    run_episode(
        editor,
        scorer,
        &items[job.item].start,
        &space.constraint(job.combo),
        &config,
        &job.episode_id(items),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboStyle {
    pub combo: usize,
    pub label: String,
    pub episodes: u64,
    pub satisfied: u64,
    pub rate: f64,
    /// Means over satisfying finals; absent when none satisfied.
    pub fluency: Option<f64>,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub strategy: String,
    pub items: usize,
    pub shape: Vec<usize>,
    pub combos: Vec<ComboStyle>,
    /// Mean and population std of the per-combo rates.
    pub satisfaction: Option<MeanStd>,
    pub satisfied: u64,
    pub episodes: u64,
    pub budget: BudgetAudit,
}

impl StyleReport {
    /// Per-combo values of one metric laid out as rows of the first
    /// partition and columns of the second.
    pub fn matrix(&self, metric: impl Fn(&ComboStyle) -> Option<f64>) -> Vec<Vec<Option<f64>>> {
        let cols = self.shape.iter().skip(1).product::<usize>().max(1);
        self.combos.chunks(cols).map(|row| row.iter().map(&metric).collect()).collect()
    }
}

/// Reduces style episode results (in job order) to a report.
pub fn summarize_style(
    space: &AttributeSpace,
    scorer: &Scorer,
    items: usize,
    episode: &EpisodeConfig,
    results: &[(StyleJob, EpisodeResult)],
) -> Result<StyleReport> {
    if !scorer.has_bonus_metrics() {
        bail!(Config, "style reports need fluency and similarity evaluators");
    }
    let n = space.combo_count();
    let mut episodes = alloc::vec![0u64; n];
    let mut satisfied = alloc::vec![0u64; n];
    let mut fluency = alloc::vec![Vec::new(); n];
    let mut similarity = alloc::vec![Vec::new(); n];
    let mut used = alloc::vec![0u64; n];
    let mut early = 0;
    for (job, r) in results {
        let c = job.combo;
        episodes[c] += 1;
        used[c] += r.budget_used as u64;
        if r.budget_used < episode.episode_budget() {
            early += 1;
        }
        if r.satisfied {
            satisfied[c] += 1;
            fluency[c].push(scorer.fluency(&r.final_state.seq)?.unwrap());
            similarity[c].push(scorer.similarity(&r.final_state.seq, &r.start.seq)?.unwrap());
        }
    }
    let mean = |v: &[f64]| MeanStd::of(v).map(|m| m.mean);
    let combos: Vec<ComboStyle> = (0..n)
        .map(|c| ComboStyle {
            combo: c,
            label: space.combo_label(c),
            episodes: episodes[c],
            satisfied: satisfied[c],
            rate: if episodes[c] == 0 {
                0.0
            } else {
                satisfied[c] as f64 / episodes[c] as f64
            },
            fluency: mean(&fluency[c]),
            similarity: mean(&similarity[c]),
        })
        .collect();
    let rates: Vec<f64> = combos.iter().filter(|c| c.episodes > 0).map(|c| c.rate).collect();
    Ok(StyleReport {
        strategy: episode.strategy.name().into(),
        items,
        shape: space.shape(),
        satisfaction: MeanStd::of(&rates),
        satisfied: satisfied.iter().sum(),
        episodes: episodes.iter().sum(),
        combos,
        budget: BudgetAudit {
            configured: style_budget(items as u64, n as u64, episode.episode_budget() as u64),
            used: used.iter().sum(),
            per_combo: used,
            early_stops: early,
            exempt: false,
        },
    })
}

/// Runs a style campaign sequentially. `editor_for` maps an item index to
/// the editor serving it.
pub fn run_style_campaign(
    items: &[StyleItem],
    space: &AttributeSpace,
    scorer: &Scorer,
    editor_for: impl Fn(usize) -> Result<Arc<dyn Editor>>,
    episode: &EpisodeConfig,
    campaign_seed: u64,
) -> Result<(StyleReport, Vec<EpisodeResult>)> {
    let mut results = Vec::new();
    for (item, _) in items.iter().enumerate() {
        let editor = editor_for(item)?;
        for combo in 0..space.combo_count() {
            let job = StyleJob { item, combo };
            let r = run_style_job(job, items, space, editor.as_ref(), scorer, episode, campaign_seed)?;
            results.push((job, r));
        }
    }
    let report = summarize_style(space, scorer, items.len(), episode, &results)?;
    Ok((report, results.into_iter().map(|(_, r)| r).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiscoveryMethod {
    /// Walks (random or priority) with the configured editor.
    Walk,
    Recombine {
        kappa: f64,
    },
    /// Recombination until the budget is filled with distinct sequences
    /// outside the reference set; may exceed the decode budget.
    UniqueRecombine {
        kappa: f64,
        /// Attempts allowed per budget unit before giving up.
        #[serde(default = "default_attempt_factor")]
        attempt_factor: usize,
    },
}

fn default_attempt_factor() -> usize {
    1000
}

impl DiscoveryMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Walk => "walk",
            Self::Recombine { .. } => "recombine",
            Self::UniqueRecombine { .. } => "unique-recombine",
        }
    }

    pub fn budget_exempt(&self) -> bool {
        matches!(self, Self::UniqueRecombine { .. })
    }
}

/// Everything a combo contributed: its episodes in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRun {
    pub combo: usize,
    pub episodes: Vec<EpisodeResult>,
    /// Unique-recombine stopped before filling the budget.
    #[serde(default)]
    pub exhausted: bool,
}

impl ComboRun {
    /// Every proposal with its attributes (absent when invalid).
    pub fn proposals(&self) -> impl Iterator<Item = (&str, Option<&AttributeVector>)> {
        self.episodes
            .iter()
            .flat_map(|e| e.trace.iter().map(|t| (t.proposal.as_str(), t.attrs.as_ref())))
    }

    pub fn budget_used(&self) -> u64 {
        self.episodes.iter().map(|e| e.budget_used as u64).sum()
    }
}

/// Edit-distance histogram from `start` over the reference members in
/// `combo`; all reference members when the combo has none.
pub fn mutation_histogram(
    reference: &[ScoredSequence],
    start: &str,
    space: &AttributeSpace,
    combo: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut in_combo = Vec::new();
    let mut all = Vec::new();
    for m in reference {
        if m.seq == start {
            continue;
        }
        let d = levenshtein(&m.seq, start);
        all.push(d);
        if space.combo_of(&m.attrs)? == combo {
            in_combo.push(d);
        }
    }
    if in_combo.is_empty() {
        log::info!("combo {combo} has no reference members; using the whole reference set");
        in_combo = all;
    }
    RandomMutation::histogram_of(&in_combo)
}

/// Reference members satisfying `constraint`, or the whole set if fewer
/// than two do.
pub fn recombine_seeds(reference: &[ScoredSequence], constraint: &MultiConstraint) -> Result<Vec<String>> {
    let mut seeds = Vec::new();
    for m in reference {
        if satisfies(&m.attrs, constraint)? {
            seeds.push(m.seq.clone());
        }
    }
    if seeds.len() < 2 {
        log::info!("fewer than two satisfying seeds; recombining the whole reference set");
        seeds = reference.iter().map(|m| m.seq.clone()).collect();
    }
    Ok(seeds)
}

/// Parameters shared by every combo of a discovery campaign.
pub struct DiscoverySetup<'a> {
    pub space: &'a AttributeSpace,
    pub scorer: &'a Scorer,
    pub start: &'a ScoredSequence,
    pub reference: Option<&'a [ScoredSequence]>,
    pub episode: &'a EpisodeConfig,
    pub method: &'a DiscoveryMethod,
    pub seed: u64,
}

/// Spends one combo's budget. `editor` is only used by walks.
pub fn run_discovery_combo(setup: &DiscoverySetup<'_>, combo: usize, editor: Option<&dyn Editor>) -> Result<ComboRun> {
    let constraint = setup.space.constraint(combo);
    let combo_seed = seed::derive_index(seed::derive(setup.seed, "combos"), combo as u64);
    match setup.method {
        DiscoveryMethod::Walk => {
            let Some(editor) = editor else {
                bail!(Config, "walks need an editor");
            };
            let mut episodes = Vec::new();
            let walks = setup.episode.episodes_per_combo();
            if setup.episode.budget % setup.episode.hops != 0 {
                log::warn!(
                    "budget {} is not a multiple of {} hops; {} proposals unspent",
                    setup.episode.budget,
                    setup.episode.hops,
                    setup.episode.budget % setup.episode.hops
                );
            }
            for w in 0..walks {
                let mut config = setup.episode.clone();
                config.seed = seed::derive_index(combo_seed, w as u64);
                let id = format!("combo-{combo:02}/walk-{w:04}");
                episodes.push(run_episode(editor, setup.scorer, setup.start, &constraint, &config, &id)?);
            }
            Ok(ComboRun {
                combo,
                episodes,
                exhausted: false,
            })
        }
        DiscoveryMethod::Recombine { kappa } => {
            let reference = setup.reference.ok_or_else(|| Error::Config("recombination needs a reference set".into()))?;
            let mut stream = RecombineStream::new(recombine_seeds(reference, &constraint)?, *kappa, combo_seed)?;
            let offspring: Vec<String> = (0..setup.episode.budget).map(|_| stream.next_offspring()).collect();
            Ok(ComboRun {
                combo,
                episodes: alloc::vec![score_batch_episode(setup, &constraint, combo, offspring)?],
                exhausted: false,
            })
        }
        DiscoveryMethod::UniqueRecombine { kappa, attempt_factor } => {
            let reference = setup.reference.ok_or_else(|| Error::Config("recombination needs a reference set".into()))?;
            let known: BTreeSet<&str> = reference.iter().map(|m| m.seq.as_str()).collect();
            let mut stream = RecombineStream::new(recombine_seeds(reference, &constraint)?, *kappa, combo_seed)?;
            let target = setup.episode.budget;
            let cap = target.saturating_mul(*attempt_factor).max(target);
            let mut seen = BTreeSet::new();
            let mut offspring = Vec::new();
            let mut attempts = 0;
            while offspring.len() < target && attempts < cap {
                attempts += 1;
                let s = stream.next_offspring();
                if !known.contains(s.as_str()) && seen.insert(s.clone()) {
                    offspring.push(s);
                }
            }
            let exhausted = offspring.len() < target;
            if exhausted {
                log::warn!("combo {combo}: only {} unique offspring after {attempts} attempts", offspring.len());
            }
            Ok(ComboRun {
                combo,
                episodes: alloc::vec![score_batch_episode(setup, &constraint, combo, offspring)?],
                exhausted,
            })
        }
    }
}

/// Wraps a batch of generated sequences as one unaccepted trace.
fn score_batch_episode(
    setup: &DiscoverySetup<'_>,
    constraint: &MultiConstraint,
    combo: usize,
    proposals: Vec<String>,
) -> Result<EpisodeResult> {
    let start_reward = setup.scorer.reward(setup.start, setup.start, constraint)?;
    let mut best = (setup.start.clone(), start_reward);
    let mut trace = Vec::with_capacity(proposals.len());
    for (step, proposal) in proposals.into_iter().enumerate() {
        let (attrs, reward) = match setup.scorer.score(&proposal) {
            Ok(s) => {
                let r = setup.scorer.reward(&s, setup.start, constraint)?;
                if r > best.1 {
                    best = (s.clone(), r);
                }
                (Some(s.attrs), Some(r))
            }
            Err(Error::Input(_)) => (None, None),
            Err(e) => return Err(e),
        };
        trace.push(TraceStep {
            step,
            proposal,
            attrs,
            reward,
            accepted: false,
        });
    }
    let satisfied = satisfies(&best.0.attrs, constraint)?;
    Ok(EpisodeResult {
        episode_id: format!("combo-{combo:02}/{}", setup.method.name()),
        start: setup.start.clone(),
        budget_used: trace.len(),
        trace,
        final_state: best.0,
        final_reward: best.1,
        satisfied,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboDiscovery {
    pub combo: usize,
    pub label: String,
    pub proposals: u64,
    pub distinct: u64,
    pub duplicates: u64,
    pub successes: u64,
    pub total_rate: f64,
    pub unique_successes: Option<u64>,
    /// Absent without a reference set.
    pub unique_rate: Option<f64>,
    /// Edit distance of each distinct success from the start.
    pub distance_from_start: Option<MeanStd>,
    /// Edit distance over all pairs of distinct successes.
    pub distance_all_pairs: Option<MeanStd>,
    pub exhausted: bool,
}

/// Counts for one combo. Rates divide by `budget`, the configured number
/// of predictions, not by the number of distinct proposals.
pub fn score_discovery<'a>(
    proposals: impl IntoIterator<Item = (&'a str, Option<&'a AttributeVector>)>,
    constraint: &MultiConstraint,
    start: &str,
    reference: Option<&BTreeSet<&str>>,
    budget: u64,
) -> Result<DiscoveryCounts> {
    if budget == 0 {
        bail!(Config, "discovery budget must be positive");
    }
    let mut distinct = BTreeSet::new();
    let mut successes: BTreeSet<&str> = BTreeSet::new();
    let mut count = 0u64;
    for (seq, attrs) in proposals {
        count += 1;
        distinct.insert(seq);
        if let Some(a) = attrs {
            if satisfies(a, constraint)? {
                successes.insert(seq);
            }
        }
    }
    let unique = reference.map(|r| successes.iter().filter(|s| !r.contains(**s)).count() as u64);
    let succ: Vec<&str> = successes.iter().copied().collect();
    let from_start: Vec<f64> = succ.iter().map(|s| levenshtein(s, start) as f64).collect();
    let mut all_pairs = Vec::new();
    for i in 0..succ.len() {
        for j in i + 1..succ.len() {
            all_pairs.push(levenshtein(succ[i], succ[j]) as f64);
        }
    }
    Ok(DiscoveryCounts {
        proposals: count,
        distinct: distinct.len() as u64,
        successes: succ.len() as u64,
        unique_successes: unique,
        total_rate: succ.len() as f64 / budget as f64,
        unique_rate: unique.map(|u| u as f64 / budget as f64),
        distance_from_start: MeanStd::of(&from_start),
        distance_all_pairs: MeanStd::of(&all_pairs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryCounts {
    pub proposals: u64,
    pub distinct: u64,
    pub successes: u64,
    pub unique_successes: Option<u64>,
    pub total_rate: f64,
    pub unique_rate: Option<f64>,
    pub distance_from_start: Option<MeanStd>,
    pub distance_all_pairs: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub method: String,
    pub strategy: String,
    pub hops: usize,
    pub per_combo_budget: u64,
    pub shape: Vec<usize>,
    pub combos: Vec<ComboDiscovery>,
    pub total_rate: Option<MeanStd>,
    pub unique_rate: Option<MeanStd>,
    pub budget: BudgetAudit,
}

impl DiscoveryReport {
    pub fn matrix(&self, metric: impl Fn(&ComboDiscovery) -> Option<f64>) -> Vec<Vec<Option<f64>>> {
        let cols = self.shape.iter().skip(1).product::<usize>().max(1);
        self.combos.chunks(cols).map(|row| row.iter().map(&metric).collect()).collect()
    }
}

/// Reduces per-combo runs (in combo order) to a report.
pub fn summarize_discovery(setup: &DiscoverySetup<'_>, runs: &[ComboRun]) -> Result<DiscoveryReport> {
    let known: Option<BTreeSet<&str>> = setup.reference.map(|r| r.iter().map(|m| m.seq.as_str()).collect());
    let budget = setup.episode.budget as u64;
    let mut combos = Vec::with_capacity(runs.len());
    for run in runs {
        let c = score_discovery(
            run.proposals(),
            &setup.space.constraint(run.combo),
            &setup.start.seq,
            known.as_ref(),
            budget,
        )?;
        combos.push(ComboDiscovery {
            combo: run.combo,
            label: setup.space.combo_label(run.combo),
            proposals: c.proposals,
            distinct: c.distinct,
            duplicates: c.proposals - c.distinct,
            successes: c.successes,
            total_rate: c.total_rate,
            unique_successes: c.unique_successes,
            unique_rate: c.unique_rate,
            distance_from_start: c.distance_from_start,
            distance_all_pairs: c.distance_all_pairs,
            exhausted: run.exhausted,
        });
    }
    let totals: Vec<f64> = combos.iter().map(|c| c.total_rate).collect();
    let uniques: Option<Vec<f64>> = combos.iter().map(|c| c.unique_rate).collect();
    let per_combo: Vec<u64> = runs.iter().map(ComboRun::budget_used).collect();
    Ok(DiscoveryReport {
        method: setup.method.name().into(),
        strategy: setup.episode.strategy.name().into(),
        hops: setup.episode.hops,
        per_combo_budget: budget,
        shape: setup.space.shape(),
        total_rate: MeanStd::of(&totals),
        unique_rate: uniques.and_then(|u| MeanStd::of(&u)),
        budget: BudgetAudit {
            configured: discovery_budget(setup.space.combo_count() as u64, budget),
            used: per_combo.iter().sum(),
            per_combo,
            early_stops: 0,
            exempt: setup.method.budget_exempt(),
        },
        combos,
    })
}
