//! Edit-pair mining from variation pools.
//!
//! Every ordered pair of distinct members of a pool is a candidate training
//! edit. Pairs are drawn uniformly, by k-nearest-neighbour lookup around a
//! randomly sampled start/end transition, or by picking two threshold
//! combos and one member from each. Drawn pairs get target windows, an
//! optional anchor and a reward weight before export.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attr::{AttributeSpace, AttributeVector, MultiConstraint};
use crate::error::bail;
use crate::eval::{ScoredSequence, Scorer};
use crate::reward::{satisfaction_score, total_reward};
use crate::seed::Rng as StdRng;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub seq: ScoredSequence,
    #[serde(default)]
    pub origin: String,
}

/// An original sequence with its variations, or a set of mutual mutants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationPool {
    pub group_id: String,
    pub members: Vec<PoolMember>,
}

impl VariationPool {
    pub fn new(group_id: impl Into<String>, members: Vec<PoolMember>) -> Self {
        Self {
            group_id: group_id.into(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Ordered member index pairs with distinct sequences.
    fn index_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.members.len();
        (0..m).flat_map(move |i| {
            (0..m).filter_map(move |j| (i != j && self.members[i].seq.seq != self.members[j].seq.seq).then_some((i, j)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPair {
    pub source: ScoredSequence,
    pub target: ScoredSequence,
    pub group_id: String,
}

/// All `m (m - 1)` ordered pairs of a pool.
pub fn enumerate_pairs(pool: &VariationPool) -> Vec<EditPair> {
    if pool.len() < 2 {
        log::warn!("pool `{}` has {} member(s); no pairs", pool.group_id, pool.len());
        return Vec::new();
    }
    pool.index_pairs()
        .map(|(i, j)| EditPair {
            source: pool.members[i].seq.clone(),
            target: pool.members[j].seq.clone(),
            group_id: pool.group_id.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowStrategy {
    /// The partition window holding the target's value.
    TargetSatisfying,
    /// Any partition window where the target scores at least as well as
    /// the source, chosen uniformly.
    NonnegGain,
}

/// Training windows for an edit from `source` to `target`.
pub fn assign_windows(
    source: &AttributeVector,
    target: &AttributeVector,
    space: &AttributeSpace,
    strategy: WindowStrategy,
    rng: &mut StdRng,
) -> Result<MultiConstraint> {
    if source.len() != space.k() || target.len() != space.k() {
        bail!(Contract, "attribute vectors do not match the space");
    }
    let mut windows = Vec::with_capacity(space.k());
    for (j, (partition, spec)) in space.partitions.iter().zip(&space.specs).enumerate() {
        let (a, b) = (source.values()[j], target.values()[j]);
        let window = match strategy {
            WindowStrategy::TargetSatisfying => partition.windows[partition.window_of(b)?].clone(),
            WindowStrategy::NonnegGain => {
                let mut gains = Vec::new();
                for w in &partition.windows {
                    if satisfaction_score(b, w, spec)? >= satisfaction_score(a, w, spec)? {
                        gains.push(w);
                    }
                }
                // the window holding b scores 1 for b, so `gains` is never empty
                gains[rng.random_range(0..gains.len())].clone()
            }
        };
        windows.push(window);
    }
    Ok(MultiConstraint::new(windows))
}

/// Location of one pair inside a pool set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairRef {
    pub pool: u32,
    pub source: u32,
    pub target: u32,
}

/// Pair lists above this size use the grid index for k-NN lookups.
pub const SCAN_LIMIT: usize = 100_000;

/// Transition vectors of all pairs: normalized source attributes followed
/// by normalized target attributes, each on `[0, 1]`.
pub struct PairIndex {
    refs: Vec<PairRef>,
    points: Vec<f64>,
    dims: usize,
    grid: Option<Grid>,
}

struct Grid {
    cells_per_dim: usize,
    buckets: BTreeMap<u64, Vec<u32>>,
}

impl PairIndex {
    pub fn build(pools: &[VariationPool], space: &AttributeSpace) -> Result<Self> {
        Self::build_with_limit(pools, space, SCAN_LIMIT)
    }

    /// Like [`PairIndex::build`], with the scan/grid switch point explicit.
    pub fn build_with_limit(pools: &[VariationPool], space: &AttributeSpace, scan_limit: usize) -> Result<Self> {
        let k = space.k();
        let dims = 2 * k;
        let mut refs = Vec::new();
        let mut points = Vec::new();
        for (p, pool) in pools.iter().enumerate() {
            let normalized = pool
                .members
                .iter()
                .map(|m| {
                    if m.seq.attrs.len() != k {
                        bail!(Contract, "pool `{}` member has {} attributes", pool.group_id, m.seq.attrs.len());
                    }
                    Ok(m.seq
                        .attrs
                        .values()
                        .iter()
                        .zip(&space.specs)
                        .map(|(&v, s)| s.normalize(v))
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, j) in pool.index_pairs() {
                refs.push(PairRef {
                    pool: p as u32,
                    source: i as u32,
                    target: j as u32,
                });
                points.extend_from_slice(&normalized[i]);
                points.extend_from_slice(&normalized[j]);
            }
        }
        let mut index = Self {
            refs,
            points,
            dims,
            grid: None,
        };
        if index.len() > scan_limit {
            index.grid = Some(index.build_grid());
        }
        Ok(index)
    }

    fn build_grid(&self) -> Grid {
        let target_per_cell = 8.0;
        let g = libm::ceil(libm::pow(self.len() as f64 / target_per_cell, 1.0 / self.dims as f64)) as usize;
        let cells_per_dim = g.clamp(1, 64);
        let mut buckets: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for i in 0..self.len() {
            let cell = self.cell_of(self.point(i), cells_per_dim);
            buckets.entry(flatten(&cell, cells_per_dim)).or_default().push(i as u32);
        }
        Grid { cells_per_dim, buckets }
    }

    fn cell_of(&self, point: &[f64], g: usize) -> Vec<usize> {
        point
            .iter()
            .map(|&x| ((x * g as f64) as usize).min(g - 1))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn refs(&self) -> &[PairRef] {
        &self.refs
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    fn dist2(&self, i: usize, query: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Indices of the `k` pairs nearest to `query`, closest first; ties go
    /// to the lower index. Fewer than `k` pairs returns all of them.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<usize> {
        match &self.grid {
            Some(grid) if k < self.len() => self.nearest_grid(grid, query, k),
            _ => self.nearest_scan(query, k),
        }
    }

    /// Exhaustive scan.
    pub fn nearest_scan(&self, query: &[f64], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..self.len()).map(|i| (self.dist2(i, query), i)).collect();
        select_smallest(&mut all, k)
    }

    fn nearest_grid(&self, grid: &Grid, query: &[f64], k: usize) -> Vec<usize> {
        let g = grid.cells_per_dim;
        let width = 1.0 / g as f64;
        let center: Vec<i64> = self.cell_of(query, g).into_iter().map(|c| c as i64).collect();
        let mut found: Vec<(f64, usize)> = Vec::new();
        let mut offset = vec![0i64; self.dims];
        for r in 0..=g as i64 {
            // every offset in [-r, r]^d whose largest component is exactly r
            for o in offset.iter_mut() {
                *o = -r;
            }
            loop {
                if offset.iter().any(|o| o.abs() == r) {
                    let cell: Option<Vec<usize>> = center
                        .iter()
                        .zip(&offset)
                        .map(|(c, o)| {
                            let x = c + o;
                            (0..g as i64).contains(&x).then_some(x as usize)
                        })
                        .collect();
                    if let Some(bucket) = cell.and_then(|c| grid.buckets.get(&flatten(&c, g))) {
                        found.extend(bucket.iter().map(|&i| (self.dist2(i as usize, query), i as usize)));
                    }
                }
                if !advance(&mut offset, r) {
                    break;
                }
            }
            if found.len() >= k {
                let kth = select_smallest(&mut found.clone(), k)
                    .last()
                    .map(|&i| self.dist2(i, query))
                    .unwrap_or(0.0);
                // unvisited cells are at least r cell widths away
                let bound = r as f64 * width;
                if kth < bound * bound {
                    break;
                }
            }
        }
        select_smallest(&mut found, k)
    }
}

fn flatten(cell: &[usize], g: usize) -> u64 {
    cell.iter().fold(0u64, |acc, &c| acc * g as u64 + c as u64)
}

fn advance(offset: &mut [i64], r: i64) -> bool {
    for o in offset.iter_mut() {
        if *o < r {
            *o += 1;
            return true;
        }
        *o = -r;
    }
    false
}

fn select_smallest(items: &mut [(f64, usize)], k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(items.len());
    if k == 0 {
        return Vec::new();
    }
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, cmp);
    }
    let head = &mut items[..k];
    head.sort_unstable_by(cmp);
    head.iter().map(|&(_, i)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    Random,
    Knn,
    /// Pick a source and a target combo, then one member from each.
    WindowUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Target combos with fewer members than this are down-weighted to
    /// `n / tau` (window-uniform mode).
    #[serde(default)]
    pub tau: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    30
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Knn,
            k: 30,
            tau: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!(Config, "k must be at least 1");
        }
        if self.tau == Some(0) {
            bail!(Config, "tau must be at least 1");
        }
        Ok(())
    }
}

/// Per-combo sampling weights: 1 for combos with at least `tau` members,
/// `n / tau` otherwise.
pub fn window_weights(pools: &[VariationPool], space: &AttributeSpace, tau: usize) -> Result<Vec<f64>> {
    if tau == 0 {
        bail!(Config, "tau must be at least 1");
    }
    let counts = combo_counts(pools, space)?;
    Ok(counts.into_iter().map(|n| weight_for(n, tau)).collect())
}

pub fn weight_for(n: usize, tau: usize) -> f64 {
    if n >= tau {
        1.0
    } else {
        n as f64 / tau as f64
    }
}

/// Members per combo across all pools.
pub fn combo_counts(pools: &[VariationPool], space: &AttributeSpace) -> Result<Vec<usize>> {
    let mut counts = vec![0; space.combo_count()];
    for pool in pools {
        for m in &pool.members {
            counts[space.combo_of(&m.seq.attrs)?] += 1;
        }
    }
    Ok(counts)
}

/// Pair sampler over a fixed pool set. Immutable after construction; each
/// caller brings its own seeded stream.
pub struct PairSampler<'a> {
    pools: &'a [VariationPool],
    space: &'a AttributeSpace,
    config: SamplerConfig,
    index: PairIndex,
    /// Per pool, member indices by combo (window-uniform mode).
    by_combo: Vec<Vec<Vec<u32>>>,
    target_weights: Vec<f64>,
    pool_weights: Vec<f64>,
}

impl<'a> PairSampler<'a> {
    pub fn new(pools: &'a [VariationPool], space: &'a AttributeSpace, config: SamplerConfig) -> Result<Self> {
        Self::with_scan_limit(pools, space, config, SCAN_LIMIT)
    }

    pub fn with_scan_limit(
        pools: &'a [VariationPool],
        space: &'a AttributeSpace,
        config: SamplerConfig,
        scan_limit: usize,
    ) -> Result<Self> {
        config.validate()?;
        let index = PairIndex::build_with_limit(pools, space, scan_limit)?;
        if index.is_empty() {
            bail!(Input, "pools contain no edit pairs");
        }
        let mut by_combo = Vec::with_capacity(pools.len());
        for pool in pools {
            let mut cells = vec![Vec::new(); space.combo_count()];
            for (i, m) in pool.members.iter().enumerate() {
                cells[space.combo_of(&m.seq.attrs)?].push(i as u32);
            }
            by_combo.push(cells);
        }
        let counts = combo_counts(pools, space)?;
        let target_weights = counts
            .iter()
            .map(|&n| match config.tau {
                Some(tau) => weight_for(n, tau),
                None => f64::from(u8::from(n > 0)),
            })
            .collect();
        let mut pool_weights = vec![0.0; pools.len()];
        for r in index.refs() {
            pool_weights[r.pool as usize] += 1.0;
        }
        if config.k > index.len() && config.mode == SamplerMode::Knn {
            log::info!("k = {} exceeds the {} available pairs; using all pairs", config.k, index.len());
        }
        Ok(Self {
            pools,
            space,
            config,
            index,
            by_combo,
            target_weights,
            pool_weights,
        })
    }

    pub fn index(&self) -> &PairIndex {
        &self.index
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn pools(&self) -> &'a [VariationPool] {
        self.pools
    }

    pub fn space(&self) -> &'a AttributeSpace {
        self.space
    }

    pub fn sample(&self, rng: &mut StdRng) -> Result<PairRef> {
        match self.config.mode {
            SamplerMode::Random => Ok(self.sample_random(rng)),
            SamplerMode::Knn => Ok(self.sample_knn(rng)),
            SamplerMode::WindowUniform => self.sample_window_uniform(rng),
        }
    }

    /// Uniform over every enumerable pair.
    pub fn sample_random(&self, rng: &mut StdRng) -> PairRef {
        self.index.refs()[rng.random_range(0..self.index.len())]
    }

    /// Draws a random transition between two combos and returns one of the
    /// `k` pairs closest to it.
    pub fn sample_knn(&self, rng: &mut StdRng) -> PairRef {
        let query = self.random_transition(rng);
        let near = self.index.nearest(&query, self.config.k);
        self.index.refs()[near[rng.random_range(0..near.len())]]
    }

    /// Normalized (start, end) location drawn uniformly inside two random
    /// combos.
    pub fn random_transition(&self, rng: &mut StdRng) -> Vec<f64> {
        let n = self.space.combo_count();
        let from = self.space.constraint(rng.random_range(0..n));
        let to = self.space.constraint(rng.random_range(0..n));
        let mut query = Vec::with_capacity(2 * self.space.k());
        for c in [&from, &to] {
            for (w, spec) in c.windows.iter().zip(&self.space.specs) {
                let v = w.start + (w.end - w.start) * rng.random::<f64>();
                query.push(spec.normalize(v));
            }
        }
        query
    }

    fn sample_window_uniform(&self, rng: &mut StdRng) -> Result<PairRef> {
        for _ in 0..64 {
            let pool = pick_weighted(&self.pool_weights, rng).expect("pairs exist");
            let cells = &self.by_combo[pool];
            let sources: Vec<f64> = cells.iter().map(|c| f64::from(u8::from(!c.is_empty()))).collect();
            let targets: Vec<f64> = cells
                .iter()
                .zip(&self.target_weights)
                .map(|(c, &w)| if c.is_empty() { 0.0 } else { w })
                .collect();
            let (Some(sc), Some(tc)) = (pick_weighted(&sources, rng), pick_weighted(&targets, rng)) else {
                continue;
            };
            let source = cells[sc][rng.random_range(0..cells[sc].len())];
            let target = cells[tc][rng.random_range(0..cells[tc].len())];
            let members = &self.pools[pool].members;
            if members[source as usize].seq.seq != members[target as usize].seq.seq {
                return Ok(PairRef {
                    pool: pool as u32,
                    source,
                    target,
                });
            }
        }
        log::debug!("window-uniform draw kept colliding; falling back to a uniform pair");
        Ok(self.sample_random(rng))
    }

    pub fn pair(&self, r: PairRef) -> EditPair {
        let pool = &self.pools[r.pool as usize];
        EditPair {
            source: pool.members[r.source as usize].seq.clone(),
            target: pool.members[r.target as usize].seq.clone(),
            group_id: pool.group_id.clone(),
        }
    }
}

fn pick_weighted(weights: &[f64], rng: &mut StdRng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return Some(i);
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Draws an anchor `c` from `pool` with `R(c, source) >= R(target, source)`
/// under `windows`. The target always qualifies.
pub fn sample_anchor(
    pair: &EditPair,
    windows: &MultiConstraint,
    pool: &VariationPool,
    space: &AttributeSpace,
    rng: &mut StdRng,
) -> Result<ScoredSequence> {
    let qualifying = qualifying_anchors(pair, windows, pool, space)?;
    if qualifying.is_empty() {
        return Ok(pair.target.clone());
    }
    Ok(pool.members[qualifying[rng.random_range(0..qualifying.len())]].seq.clone())
}

/// Pool members (other than the source) whose reward from the source is
/// at least the target's.
pub fn qualifying_anchors(
    pair: &EditPair,
    windows: &MultiConstraint,
    pool: &VariationPool,
    space: &AttributeSpace,
) -> Result<Vec<usize>> {
    let bar = total_reward(&pair.target.attrs, &pair.source.attrs, windows, &space.specs, &[])?;
    let mut out = Vec::new();
    for (i, m) in pool.members.iter().enumerate() {
        if m.seq.seq == pair.source.seq {
            continue;
        }
        if total_reward(&m.seq.attrs, &pair.source.attrs, windows, &space.specs, &[])? >= bar {
            out.push(i);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Every example weighs 1.
    Sft,
    /// Each example weighs its reward.
    Wbc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub pair: EditPair,
    pub windows: MultiConstraint,
    pub anchor: Option<ScoredSequence>,
    pub reward: f64,
    pub weight: f64,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleOptions {
    pub strategy: WindowStrategy,
    pub with_anchor: bool,
    pub weight_mode: WeightMode,
    /// Copied onto every example, e.g. an entropy coefficient for trainers.
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        Self {
            strategy: WindowStrategy::TargetSatisfying,
            with_anchor: false,
            weight_mode: WeightMode::Wbc,
            meta: serde_json::Map::new(),
        }
    }
}

/// Draws `count` pairs and turns them into weighted training examples.
/// With a scorer the reward also carries its bonus components.
pub fn build_examples(
    sampler: &PairSampler<'_>,
    count: usize,
    options: &ExampleOptions,
    scorer: Option<&Scorer>,
    rng: &mut StdRng,
) -> Result<Vec<TrainingExample>> {
    let space = sampler.space();
    (0..count)
        .map(|_| {
            let r = sampler.sample(rng)?;
            let pair = sampler.pair(r);
            let windows = assign_windows(&pair.source.attrs, &pair.target.attrs, space, options.strategy, rng)?;
            let anchor = if options.with_anchor {
                Some(sample_anchor(&pair, &windows, &sampler.pools()[r.pool as usize], space, rng)?)
            } else {
                None
            };
            let reward = match scorer {
                Some(s) => s.reward(&pair.target, &pair.source, &windows)?,
                None => total_reward(&pair.target.attrs, &pair.source.attrs, &windows, &space.specs, &[])?,
            };
            let weight = match options.weight_mode {
                WeightMode::Sft => 1.0,
                WeightMode::Wbc => reward,
            };
            Ok(TrainingExample {
                pair,
                windows,
                anchor,
                reward,
                weight,
                meta: options.meta.clone(),
            })
        })
        .collect()
}

/// Histogram of attribute-change vectors `C(target) - C(source)`, with
/// `bins` equal cells per attribute over `[-(max - min), max - min]`,
/// flattened row-major.
pub fn delta_histogram(pairs: &[EditPair], space: &AttributeSpace, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins.pow(space.k() as u32)];
    for pair in pairs {
        let mut cell = 0usize;
        for (j, spec) in space.specs.iter().enumerate() {
            let range = spec.max - spec.min;
            let delta = pair.target.attrs.values()[j] - pair.source.attrs.values()[j];
            let x = (delta + range) / (2.0 * range);
            let b = ((x * bins as f64) as usize).min(bins - 1);
            cell = cell * bins + b;
        }
        counts[cell] += 1;
    }
    counts
}
