//! Runs configured campaigns on a worker pool.
//!
//! Jobs are indexed up front and results collected in job order, and every
//! episode seed derives from the campaign seed and the job index, so the
//! outputs do not depend on how many workers ran them.

use std::sync::Arc;
use std::time::Instant;

use macs_core::attr::AttributeSpace;
use macs_core::bench::{
    mutation_histogram, run_discovery_combo, run_style_job, style_jobs, summarize_discovery, summarize_style,
    DiscoveryMethod, DiscoverySetup, StyleItem,
};
use macs_core::editors::{EditorConfig, Editor, PoolOracle, RandomMutation};
use macs_core::editpair::VariationPool;
use macs_core::eval::{Domain, ScoredSequence, Scorer};
use macs_core::inference::EpisodeResult;
use macs_core::synth::{ORIGIN_ORIGINAL, ORIGIN_WILD_TYPE};
use macs_core::toy::AMINO_ACIDS;
use rayon::prelude::*;

use crate::config::{CampaignConfig, Mode};
use crate::error::{Error, Result};
use crate::formats::read_pool_files;
use crate::protocol::{ExternalEditor, Launch, WorkerPool};
use crate::report::{Audit, ReportBody, Summary};

const TEXT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz";

pub struct Outcome {
    pub space: AttributeSpace,
    pub summary: Summary,
    pub episodes: Vec<EpisodeResult>,
    pub audit: Audit,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn mutation_alphabet(domain: Domain) -> &'static str {
    match domain {
        Domain::Text => TEXT_ALPHABET,
        Domain::Protein => AMINO_ACIDS,
    }
}

fn external_editor(command: &[String], env: &[(String, String)], space: &AttributeSpace, workers: usize) -> Arc<dyn Editor> {
    let launch = Launch::Command {
        command: command.to_vec(),
        env: env.to_vec(),
    };
    Arc::new(ExternalEditor::new(Arc::new(WorkerPool::new(launch, vec!["editor"], space.ids(), workers))))
}

/// Loads pools, builds the scorer and runs the configured campaign.
pub fn run(config: &CampaignConfig, workers: usize) -> Result<Outcome> {
    let started = Instant::now();
    let space = config.space()?;
    let scorer = config.scorer(&space, workers)?;
    let (header, pools) = read_pool_files(&config.pools)?;
    if header.attr_ids != space.ids() {
        return Err(Error::Config(format!(
            "pools carry attributes {:?}, the config declares {:?}",
            header.attr_ids,
            space.ids()
        )));
    }
    let tp = thread_pool(workers)?;
    let (report, episodes) = tp.install(|| match config.campaign.mode {
        Mode::Style => run_style(config, &space, &scorer, &pools, workers),
        Mode::Discovery => run_discovery(config, &space, &scorer, &pools, workers),
    })?;
    let audit = Audit {
        finished_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        elapsed_ms: started.elapsed().as_millis(),
        workers,
        budget: report.budget().clone(),
    };
    Ok(Outcome {
        space,
        summary: Summary::new(config, report),
        episodes,
        audit,
    })
}

fn run_style(
    config: &CampaignConfig,
    space: &AttributeSpace,
    scorer: &Scorer,
    pools: &[VariationPool],
    workers: usize,
) -> Result<(ReportBody, Vec<EpisodeResult>)> {
    let limit = config.campaign.items.unwrap_or(pools.len());
    let items = pools
        .iter()
        .take(limit)
        .map(StyleItem::from_pool)
        .collect::<macs_core::Result<Vec<_>>>()?;
    let editors: Vec<Arc<dyn Editor>> = match &config.editor {
        EditorConfig::PoolOracle { p } => items
            .iter()
            .map(|it| -> Result<Arc<dyn Editor>> {
                Ok(Arc::new(PoolOracle::new(it.pool.clone(), space.specs.clone(), *p)?))
            })
            .collect::<Result<_>>()?,
        EditorConfig::RandomMutation { histogram: Some(h) } => {
            vec![Arc::new(RandomMutation::with_alphabet(h.clone(), mutation_alphabet(scorer.domain()))?)]
        }
        EditorConfig::RandomMutation { histogram: None } => {
            return Err(Error::Config("style campaigns need an explicit mutation histogram".into()))
        }
        EditorConfig::Recombine { .. } => {
            return Err(Error::Config("recombination is a discovery method, not a style editor".into()))
        }
        EditorConfig::External { command, env } => vec![external_editor(command, env, space, workers)],
    };
    let jobs = style_jobs(items.len(), space.combo_count());
    let results = jobs
        .par_iter()
        .map(|&job| {
            let editor = &editors[job.item.min(editors.len().saturating_sub(1))];
            run_style_job(job, &items, space, editor.as_ref(), scorer, &config.episode, config.seed).map(|r| (job, r))
        })
        .collect::<macs_core::Result<Vec<_>>>()?;
    let report = summarize_style(space, scorer, items.len(), &config.episode, &results)?;
    Ok((ReportBody::Style(report), results.into_iter().map(|(_, r)| r).collect()))
}

/// The configured start, else the wild-type or original pool member.
fn discovery_start(config: &CampaignConfig, scorer: &Scorer, pools: &[VariationPool]) -> Result<ScoredSequence> {
    if let Some(seq) = &config.campaign.start {
        return Ok(scorer.score(seq)?);
    }
    let members = || pools.iter().flat_map(|p| &p.members);
    members()
        .find(|m| m.origin == ORIGIN_WILD_TYPE)
        .or_else(|| members().find(|m| m.origin == ORIGIN_ORIGINAL))
        .map(|m| m.seq.clone())
        .ok_or_else(|| Error::Config("no start sequence: set `campaign.start` or tag a pool member wild-type".into()))
}

fn run_discovery(
    config: &CampaignConfig,
    space: &AttributeSpace,
    scorer: &Scorer,
    pools: &[VariationPool],
    workers: usize,
) -> Result<(ReportBody, Vec<EpisodeResult>)> {
    let start = discovery_start(config, scorer, pools)?;
    let reference: Option<Vec<ScoredSequence>> = config
        .campaign
        .reference
        .then(|| pools.iter().flat_map(|p| p.members.iter().map(|m| m.seq.clone())).collect());
    let setup = DiscoverySetup {
        space,
        scorer,
        start: &start,
        reference: reference.as_deref(),
        episode: &config.episode,
        method: &config.campaign.method,
        seed: config.seed,
    };
    let walks = config.campaign.method == DiscoveryMethod::Walk;
    let alphabet = mutation_alphabet(scorer.domain());
    // Shared editor, or None when each combo builds its own.
    let shared: Option<Arc<dyn Editor>> = match (&config.editor, walks) {
        (_, false) => None,
        (EditorConfig::PoolOracle { p }, true) => {
            let members = reference
                .clone()
                .ok_or_else(|| Error::Config("a discovery pool oracle draws from the reference set".into()))?;
            Some(Arc::new(PoolOracle::new(members, space.specs.clone(), *p)?))
        }
        (EditorConfig::RandomMutation { histogram: Some(h) }, true) => {
            Some(Arc::new(RandomMutation::with_alphabet(h.clone(), alphabet)?))
        }
        (EditorConfig::RandomMutation { histogram: None }, true) => {
            if reference.is_none() {
                return Err(Error::Config("mutation histograms come from the reference set".into()));
            }
            None
        }
        (EditorConfig::Recombine { .. }, true) => {
            return Err(Error::Config("use the recombine discovery method instead of a recombine editor".into()))
        }
        (EditorConfig::External { command, env }, true) => Some(external_editor(command, env, space, workers)),
    };
    let runs = (0..space.combo_count())
        .into_par_iter()
        .map(|combo| -> Result<_> {
            let local: Option<Arc<dyn Editor>> = match (&shared, walks) {
                (Some(e), _) => Some(e.clone()),
                (None, false) => None,
                (None, true) => {
                    let reference = reference.as_deref().expect("checked above");
                    let h = mutation_histogram(reference, &start.seq, space, combo)?;
                    Some(Arc::new(RandomMutation::with_alphabet(h, alphabet)?))
                }
            };
            Ok(run_discovery_combo(&setup, combo, local.as_deref())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = summarize_discovery(&setup, &runs)?;
    let episodes = runs.into_iter().flat_map(|r| r.episodes).collect();
    Ok((ReportBody::Discovery(report), episodes))
}
