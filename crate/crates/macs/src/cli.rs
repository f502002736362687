//! The `macs` command line.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use macs_core::attr::AttributeSpace;
use macs_core::editpair::{
    build_examples, delta_histogram, ExampleOptions, PairSampler, SamplerConfig, SamplerMode, VariationPool, WeightMode,
    WindowStrategy,
};
use macs_core::editors::EditorConfig;
use macs_core::eval::Scorer;
use macs_core::inference::{EpisodeConfig, Strategy};
use macs_core::seed;
use macs_core::stats::{entropy, two_prop_ztest};
use macs_core::synth::{synth_protein, synth_style, ProteinSynthConfig, StyleSynthConfig};
use serde_json::json;

use crate::campaign;
use crate::config::{AttributesConfig, CampaignConfig, CampaignSection, EvaluatorsConfig, Mode, OutputConfig, Preset};
use crate::error::{Error, Result};
use crate::formats::{read_pool_files, write_examples, write_pools};
use crate::protocol::{serve_echo, EchoFault};
use crate::report::{compare, write_campaign, write_compare, write_json, Summary};

#[derive(Debug, Parser)]
#[command(name = "macs", version, about = "Multi-attribute constrained rewriting: data, campaigns and reports")]
pub struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> log::LevelFilter {
        match self.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pool file and a matching campaign config.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Mine, sample and inspect edit pairs.
    #[command(subcommand)]
    Pairs(PairsCommand),
    /// Run a campaign from a config file.
    #[command(subcommand)]
    Campaign(CampaignCommand),
    /// Two-proportion z-test.
    Ztest(ZtestArgs),
    /// Compare finished campaigns.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Fixture worker speaking the NDJSON protocol on stdin/stdout.
    #[command(hide = true)]
    EchoWorker(EchoArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    Style {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long)]
        variations: Option<usize>,
    },
    Protein {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mutants: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Random,
    Knn,
    WindowUniform,
}

impl From<ModeArg> for SamplerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Random => Self::Random,
            ModeArg::Knn => Self::Knn,
            ModeArg::WindowUniform => Self::WindowUniform,
        }
    }
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Pool files (JSON lines).
    #[arg(long, required = true, num_args = 1..)]
    pub pools: Vec<PathBuf>,
    /// Campaign config supplying the attribute space and evaluators;
    /// without it the space is inferred from the pool header.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Neighbours per k-NN query.
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Down-weight target combos with fewer members (window-uniform).
    #[arg(long)]
    pub tau: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum PairsCommand {
    /// Write training examples.
    Build {
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long, value_enum, default_value = "knn")]
        mode: ModeArg,
        #[arg(long, default_value = "target-satisfying", value_parser = parse_window_strategy)]
        strategy: WindowStrategy,
        /// Attach an anchor sampled from the pair's pool.
        #[arg(long)]
        anchor: bool,
        #[arg(long, default_value = "wbc", value_parser = parse_weight)]
        weight: WeightMode,
        /// Entropy coefficient recorded in each example's metadata.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print sampled pairs as JSON lines.
    Sample {
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long, value_enum, default_value = "knn")]
        mode: ModeArg,
    },
    /// Attribute-change histograms and their coverage per sampling mode.
    Stats {
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long, value_enum, num_args = 1.., default_values = ["random", "knn"])]
        modes: Vec<ModeArg>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Directory for `delta_<mode>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_window_strategy(s: &str) -> std::result::Result<WindowStrategy, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown window strategy `{s}`"))
}

fn parse_weight(s: &str) -> std::result::Result<WeightMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown weight mode `{s}`"))
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: macs_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum CampaignCommand {
    /// Satisfaction over every (item, combo) pair.
    Style(CampaignArgs),
    /// Per-combo discovery under a fixed budget.
    Discover(CampaignArgs),
}

#[derive(Debug, Args)]
pub struct ZtestArgs {
    #[arg(long)]
    pub s1: u64,
    #[arg(long)]
    pub n1: u64,
    #[arg(long)]
    pub s2: u64,
    #[arg(long)]
    pub n2: u64,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Per-combo z-tests of campaign `a` against `b` (CSV on stdout).
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub fault: EchoFault,
    /// Returned for every evaluation.
    #[arg(long, default_value_t = 0.5)]
    pub value: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(cmd) => synth(cmd),
        Command::Pairs(cmd) => pairs(cmd),
        Command::Campaign(CampaignCommand::Style(args)) => run_campaign(args, Mode::Style),
        Command::Campaign(CampaignCommand::Discover(args)) => run_campaign(args, Mode::Discovery),
        Command::Ztest(a) => {
            let t = two_prop_ztest(a.s1, a.n1, a.s2, a.n2)?;
            println!("{}", json!({"z": t.z, "p": t.p, "p_greater": t.p_greater()}));
            Ok(())
        }
        Command::Report(ReportCommand::Compare { a, b }) => {
            let rows = compare(&load_summary(&a)?, &load_summary(&b)?)?;
            write_compare(io::stdout().lock(), &rows)
        }
        Command::EchoWorker(a) => {
            let stdin = io::stdin().lock();
            serve_echo(stdin, io::stdout().lock(), a.fault, a.value).map_err(|e| Error::io("<stdio>", e))
        }
    }
}

/// Accepts a campaign directory or its `summary.json`.
fn load_summary(path: &Path) -> Result<Summary> {
    if path.is_dir() {
        Summary::load(&path.join("summary.json"))
    } else {
        Summary::load(path)
    }
}

fn synth(cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Style {
            seed,
            out,
            groups,
            variations,
        } => {
            let mut cfg = StyleSynthConfig::default();
            cfg.groups = groups.unwrap_or(cfg.groups);
            cfg.variations = variations.unwrap_or(cfg.variations);
            let pools = synth_style(&cfg, seed)?;
            let space = AttributeSpace::style();
            write_pools(&out.join("pool.jsonl"), &space.ids(), macs_core::eval::Domain::Text, &pools)?;
            let config = CampaignConfig {
                seed,
                attributes: AttributesConfig::Preset { preset: Preset::Style },
                evaluators: EvaluatorsConfig::ToyStyle {
                    bonuses: true,
                    bonuses_in_reward: true,
                },
                cache: true,
                pools: vec![PathBuf::from("pool.jsonl")],
                editor: EditorConfig::PoolOracle { p: 0.5 },
                episode: EpisodeConfig::new(Strategy::Prioritized, 5),
                campaign: CampaignSection {
                    mode: Mode::Style,
                    items: None,
                    method: macs_core::bench::DiscoveryMethod::Walk,
                    start: None,
                    reference: true,
                },
                output: OutputConfig::default(),
            };
            write_json(&out.join("config.json"), &config)?;
            println!("{} pools, {} sequences -> {}", pools.len(), pools.iter().map(VariationPool::len).sum::<usize>(), out.display());
        }
        SynthCommand::Protein {
            seed,
            out,
            mutants,
            length,
        } => {
            let mut cfg = ProteinSynthConfig::default();
            cfg.mutants = mutants.unwrap_or(cfg.mutants);
            cfg.length = length.unwrap_or(cfg.length);
            let inst = synth_protein(&cfg, seed)?;
            let space = AttributeSpace::protein();
            write_pools(
                &out.join("pool.jsonl"),
                &space.ids(),
                macs_core::eval::Domain::Protein,
                std::slice::from_ref(&inst.pool),
            )?;
            let mut episode = EpisodeConfig::new(Strategy::RandomWalk, 3000);
            episode.hops = 5;
            let config = CampaignConfig {
                seed,
                attributes: AttributesConfig::Preset { preset: Preset::Protein },
                evaluators: EvaluatorsConfig::ToyProtein {
                    wild_type: inst.wild_type.clone(),
                    fluorescence: inst.fluorescence.clone(),
                    ddg: inst.ddg.clone(),
                },
                cache: true,
                pools: vec![PathBuf::from("pool.jsonl")],
                editor: EditorConfig::RandomMutation { histogram: None },
                episode,
                campaign: CampaignSection {
                    mode: Mode::Discovery,
                    items: None,
                    method: macs_core::bench::DiscoveryMethod::Walk,
                    start: None,
                    reference: true,
                },
                output: OutputConfig::default(),
            };
            write_json(&out.join("config.json"), &config)?;
            println!("{} sequences -> {}", inst.pool.len(), out.display());
        }
    }
    Ok(())
}

struct PairContext {
    space: AttributeSpace,
    attr_ids: Vec<String>,
    domain: macs_core::eval::Domain,
    pools: Vec<VariationPool>,
    scorer: Option<Scorer>,
}

fn pair_context(args: &PoolArgs) -> Result<PairContext> {
    let (header, pools) = read_pool_files(&args.pools)?;
    let (space, scorer) = match &args.config {
        Some(path) => {
            let config = CampaignConfig::load(path)?;
            let space = config.space()?;
            let scorer = config.scorer(&space, 1)?;
            (space, Some(scorer))
        }
        None => {
            let preset = Preset::matching(&header.attr_ids).ok_or_else(|| {
                Error::Config(format!("no preset scores {:?}; pass --config", header.attr_ids))
            })?;
            (preset.space(), None)
        }
    };
    if space.ids() != header.attr_ids {
        return Err(Error::Config(format!(
            "pools carry attributes {:?}, the space declares {:?}",
            header.attr_ids,
            space.ids()
        )));
    }
    Ok(PairContext {
        space,
        attr_ids: header.attr_ids,
        domain: header.domain,
        pools,
        scorer,
    })
}

fn sampler_config(args: &PoolArgs, mode: ModeArg) -> SamplerConfig {
    SamplerConfig {
        mode: mode.into(),
        k: args.k,
        tau: args.tau,
        seed: args.seed,
    }
}

fn pairs(cmd: PairsCommand) -> Result<()> {
    match cmd {
        PairsCommand::Build {
            pools,
            mode,
            strategy,
            anchor,
            weight,
            gamma,
            out,
        } => {
            let ctx = pair_context(&pools)?;
            let sampler = PairSampler::new(&ctx.pools, &ctx.space, sampler_config(&pools, mode))?;
            let mut meta = serde_json::Map::new();
            if let Some(g) = gamma {
                meta.insert("gamma".into(), json!(g));
            }
            let options = ExampleOptions {
                strategy,
                with_anchor: anchor,
                weight_mode: weight,
                meta,
            };
            let mut rng = seed::rng(seed::derive(pools.seed, "examples"));
            let examples = build_examples(&sampler, pools.count, &options, ctx.scorer.as_ref(), &mut rng)?;
            write_examples(&out, &ctx.attr_ids, ctx.domain, &examples)?;
            println!("{} examples from {} pairs -> {}", examples.len(), sampler.index().len(), out.display());
        }
        PairsCommand::Sample { pools, mode } => {
            let ctx = pair_context(&pools)?;
            let sampler = PairSampler::new(&ctx.pools, &ctx.space, sampler_config(&pools, mode))?;
            let mut rng = seed::rng(seed::derive(pools.seed, "samples"));
            let mut out = io::stdout().lock();
            for _ in 0..pools.count {
                let pair = sampler.pair(sampler.sample(&mut rng)?);
                let line = json!({
                    "group_id": pair.group_id,
                    "source": pair.source.seq,
                    "target": pair.target.seq,
                    "source_attrs": pair.source.attrs.values(),
                    "target_attrs": pair.target.attrs.values(),
                });
                writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
        PairsCommand::Stats {
            pools,
            modes,
            bins,
            out,
        } => {
            if bins == 0 {
                return Err(Error::Config("--bins must be positive".into()));
            }
            let ctx = pair_context(&pools)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            println!("mode,pairs,occupied_cells,entropy");
            for mode in modes {
                let sampler = PairSampler::new(&ctx.pools, &ctx.space, sampler_config(&pools, mode))?;
                let mut rng = seed::rng(seed::derive(pools.seed, "samples"));
                let drawn = (0..pools.count)
                    .map(|_| sampler.sample(&mut rng).map(|r| sampler.pair(r)))
                    .collect::<macs_core::Result<Vec<_>>>()?;
                let hist = delta_histogram(&drawn, &ctx.space, bins);
                let name = mode.to_possible_value().expect("no skipped variants").get_name().to_string();
                let occupied = hist.iter().filter(|&&c| c > 0).count();
                println!("{name},{},{occupied},{:.6}", drawn.len(), entropy(&hist));
                if let Some(dir) = &out {
                    write_histogram(&dir.join(format!("delta_{name}.csv")), &ctx.space, bins, &hist)?;
                }
            }
        }
    }
    Ok(())
}

/// One row per cell: the bin index along each attribute, then the count.
fn write_histogram(path: &Path, space: &AttributeSpace, bins: usize, hist: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut header: Vec<String> = space.ids().iter().map(|id| format!("bin_{id}")).collect();
    header.push("count".into());
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    let k = space.k();
    for (cell, count) in hist.iter().enumerate() {
        let mut rest = cell;
        let mut idx = vec![0usize; k];
        for j in (0..k).rev() {
            idx[j] = rest % bins;
            rest /= bins;
        }
        let mut record: Vec<String> = idx.iter().map(usize::to_string).collect();
        record.push(count.to_string());
        w.write_record(&record).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_campaign(args: CampaignArgs, mode: Mode) -> Result<()> {
    let mut config = CampaignConfig::load(&args.config)?;
    if config.campaign.mode != mode {
        let name = match mode {
            Mode::Style => "style",
            Mode::Discovery => "discovery",
        };
        return Err(Error::Config(format!("{} is not a {name} campaign", args.config.display())));
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.strategy {
        config.episode.strategy = s;
    }
    if args.out.is_some() {
        config.output.dir = args.out.clone();
    }
    config.validate()?;
    let dir = config
        .output
        .dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output.dir".into()))?;
    let outcome = campaign::run(&config, args.workers)?;
    write_campaign(&dir, &outcome.space, &outcome.summary, &outcome.episodes, &outcome.audit)?;
    let b = &outcome.audit.budget;
    eprintln!(
        "{} episodes; budget {} configured, {} used -> {}",
        outcome.episodes.len(),
        b.configured,
        b.used,
        dir.display()
    );
    Ok(())
}
