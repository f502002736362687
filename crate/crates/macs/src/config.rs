//! Campaign configuration documents.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use macs_core::attr::{AttributePartition, AttributeSpace, AttributeSpec};
use macs_core::bench::DiscoveryMethod;
use macs_core::editors::EditorConfig;
use macs_core::eval::{Domain, Evaluator, EvaluatorKind, EvaluatorSpec, Scorer};
use macs_core::inference::EpisodeConfig;
use macs_core::toy::{LandscapeParams, ProteinLandscape, ToyComplexity, ToyFluency, ToySentiment, ToySimilarity};
use serde::{Deserialize, Serialize};

use crate::cache::CachedEvaluator;
use crate::error::{Error, Result};
use crate::protocol::{ExternalEvaluator, Launch, WorkerPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Style,
    Protein,
}

impl Preset {
    pub fn space(self) -> AttributeSpace {
        match self {
            Self::Style => AttributeSpace::style(),
            Self::Protein => AttributeSpace::protein(),
        }
    }

    /// The preset whose attribute ids are exactly `ids`.
    pub fn matching(ids: &[String]) -> Option<Self> {
        [Self::Style, Self::Protein].into_iter().find(|p| p.space().ids() == ids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub attr_id: String,
    /// Interior boundaries, ascending.
    pub boundaries: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum AttributesConfig {
    Preset { preset: Preset },
    Custom { specs: Vec<AttributeSpec>, partitions: Vec<PartitionConfig> },
}

impl AttributesConfig {
    pub fn space(&self) -> Result<AttributeSpace> {
        match self {
            Self::Preset { preset } => Ok(preset.space()),
            Self::Custom { specs, partitions } => {
                if specs.len() != partitions.len() {
                    return Err(Error::Config(format!(
                        "{} attributes but {} partitions",
                        specs.len(),
                        partitions.len()
                    )));
                }
                let parts = specs
                    .iter()
                    .zip(partitions)
                    .map(|(spec, p)| {
                        if p.attr_id != spec.id {
                            return Err(Error::Config(format!(
                                "partition for `{}` listed where `{}` is declared",
                                p.attr_id, spec.id
                            )));
                        }
                        let mut part = AttributePartition::from_boundaries(spec, &p.boundaries)?;
                        part.labels = p.labels.clone();
                        part.validate(spec)?;
                        Ok(part)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AttributeSpace::new(specs.clone(), parts)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvaluatorsConfig {
    /// Lexicon sentiment and word-length complexity.
    ToyStyle {
        #[serde(default = "yes")]
        bonuses: bool,
        #[serde(default = "yes")]
        bonuses_in_reward: bool,
    },
    /// Additive-plus-coupling landscapes around a wild type.
    ToyProtein {
        wild_type: String,
        fluorescence: LandscapeParams,
        ddg: LandscapeParams,
    },
    /// One worker pool serving every attribute.
    External {
        #[serde(default)]
        command: Vec<String>,
        #[serde(default)]
        env: Vec<(String, String)>,
        #[serde(default)]
        address: Option<String>,
        #[serde(default)]
        domain: Domain,
        #[serde(default = "yes")]
        deterministic: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Style,
    Discovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub mode: Mode,
    /// Style: use only the first this many pools.
    #[serde(default)]
    pub items: Option<usize>,
    #[serde(default = "walk")]
    pub method: DiscoveryMethod,
    /// Discovery start; defaults to the wild-type (or original) pool member.
    #[serde(default)]
    pub start: Option<String>,
    /// Discovery: treat the loaded pools as the reference set.
    #[serde(default = "yes")]
    pub reference: bool,
}

fn walk() -> DiscoveryMethod {
    DiscoveryMethod::Walk
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default)]
    pub seed: u64,
    pub attributes: AttributesConfig,
    pub evaluators: EvaluatorsConfig,
    /// Memoize deterministic evaluators.
    #[serde(default = "yes")]
    pub cache: bool,
    /// Pool files, relative to the config file.
    #[serde(default)]
    pub pools: Vec<PathBuf>,
    pub editor: EditorConfig,
    pub episode: EpisodeConfig,
    pub campaign: CampaignSection,
    #[serde(default)]
    pub output: OutputConfig,
}

impl CampaignConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::format(path, e))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut config.pools {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(dir) = config.output.dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.editor.validate()?;
        self.episode.validate()?;
        self.attributes.space()?;
        if let EvaluatorsConfig::External { command, address, .. } = &self.evaluators {
            if command.is_empty() == address.is_none() {
                return Err(Error::Config("external evaluators need exactly one of `command` or `address`".into()));
            }
        }
        if self.campaign.mode == Mode::Style && self.campaign.method != DiscoveryMethod::Walk {
            return Err(Error::Config("style campaigns take no discovery method".into()));
        }
        if self.campaign.mode == Mode::Discovery && self.campaign.method == DiscoveryMethod::Walk && !self.episode.strategy.is_walk() {
            return Err(Error::Config(format!(
                "discovery walks need a walk strategy, not `{}`",
                self.episode.strategy.name()
            )));
        }
        if self.pools.is_empty() {
            return Err(Error::Config("no pool files listed".into()));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<AttributeSpace> {
        self.attributes.space()
    }

    pub fn domain(&self) -> Domain {
        match &self.evaluators {
            EvaluatorsConfig::ToyStyle { .. } => Domain::Text,
            EvaluatorsConfig::ToyProtein { .. } => Domain::Protein,
            EvaluatorsConfig::External { domain, .. } => *domain,
        }
    }

    /// Builds the scorer; external evaluators get `workers` connections.
    pub fn scorer(&self, space: &AttributeSpace, workers: usize) -> Result<Scorer> {
        let wrap = |ev: Arc<dyn Evaluator>| if self.cache { CachedEvaluator::wrap(ev) } else { ev };
        let specs = space.specs.clone();
        let scorer = match &self.evaluators {
            EvaluatorsConfig::ToyStyle {
                bonuses,
                bonuses_in_reward,
            } => {
                require_ids(space, &["sentiment", "complexity"])?;
                let evs: Vec<Arc<dyn Evaluator>> = vec![
                    wrap(Arc::new(ToySentiment::new("sentiment"))),
                    wrap(Arc::new(ToyComplexity::new("complexity"))),
                ];
                let mut s = Scorer::new(specs, evs, Domain::Text)?;
                if *bonuses {
                    s = s
                        .with_fluency(wrap(Arc::new(ToyFluency::new())))
                        .with_similarity(Arc::new(ToySimilarity::new(Domain::Text)));
                }
                s.bonuses_in_reward(*bonuses_in_reward)
            }
            EvaluatorsConfig::ToyProtein {
                wild_type,
                fluorescence,
                ddg,
            } => {
                require_ids(space, &["fluorescence", "ddg"])?;
                let evs: Vec<Arc<dyn Evaluator>> = vec![
                    wrap(Arc::new(ProteinLandscape::new(specs[0].clone(), wild_type, fluorescence)?)),
                    wrap(Arc::new(ProteinLandscape::new(specs[1].clone(), wild_type, ddg)?)),
                ];
                Scorer::new(specs, evs, Domain::Protein)?
            }
            EvaluatorsConfig::External {
                command,
                env,
                address,
                domain,
                deterministic,
            } => {
                let launch = match address {
                    Some(a) => Launch::Tcp { address: a.clone() },
                    None => Launch::Command {
                        command: command.clone(),
                        env: env.clone(),
                    },
                };
                let pool = Arc::new(WorkerPool::new(launch, vec!["evaluator"], space.ids(), workers));
                let evs = specs
                    .iter()
                    .map(|spec| {
                        let ev: Arc<dyn Evaluator> = Arc::new(ExternalEvaluator::new(
                            EvaluatorSpec {
                                id: format!("external-{}", spec.id),
                                kind: EvaluatorKind::Unary,
                                spec: spec.clone(),
                                deterministic: *deterministic,
                            },
                            pool.clone(),
                        ));
                        wrap(ev)
                    })
                    .collect();
                Scorer::new(specs, evs, *domain)?
            }
        };
        Ok(scorer)
    }
}

fn require_ids(space: &AttributeSpace, ids: &[&str]) -> Result<()> {
    if space.ids() != ids {
        return Err(Error::Config(format!(
            "these evaluators score {ids:?}, but the attributes are {:?}",
            space.ids()
        )));
    }
    Ok(())
}
