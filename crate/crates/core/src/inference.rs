//! Multi-step inference under an exact proposal budget.
//!
//! Rewards are always taken against the episode start `y_0`. Every
//! candidate an editor returns costs one unit of budget, including
//! candidates the scorer rejects as invalid.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attr::{AttributeVector, MultiConstraint};
use crate::editors::{EditRequest, Editor};
use crate::error::bail;
use crate::eval::{ScoredSequence, Scorer};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    BestOfN,
    NaiveChain,
    Prioritized,
    RandomWalk,
    PriorityWalk,
}

impl Strategy {
    pub fn is_walk(self) -> bool {
        matches!(self, Self::RandomWalk | Self::PriorityWalk)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BestOfN => "best-of-n",
            Self::NaiveChain => "naive-chain",
            Self::Prioritized => "prioritized",
            Self::RandomWalk => "random-walk",
            Self::PriorityWalk => "priority-walk",
        }
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "best-of-n" => Self::BestOfN,
            "naive-chain" => Self::NaiveChain,
            "prioritized" => Self::Prioritized,
            "random-walk" => Self::RandomWalk,
            "priority-walk" => Self::PriorityWalk,
            other => bail!(Config, "unknown strategy `{other}`"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub strategy: Strategy,
    /// Proposals per episode; for walks, proposals per combo, spent as
    /// `budget / hops` walks.
    pub budget: usize,
    #[serde(default = "one")]
    pub hops: usize,
    #[serde(default = "one")]
    pub beam: usize,
    #[serde(default)]
    pub anchor_conditioning: bool,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl EpisodeConfig {
    pub fn new(strategy: Strategy, budget: usize) -> Self {
        Self {
            strategy,
            budget,
            hops: 1,
            beam: 1,
            anchor_conditioning: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            bail!(Config, "beam must be at least 1");
        }
        if self.strategy.is_walk() {
            if self.hops == 0 {
                bail!(Config, "walks need at least one hop");
            }
            if self.hops > self.budget {
                bail!(Config, "{} hops exceed the budget of {}", self.hops, self.budget);
            }
        }
        Ok(())
    }

    /// Proposals one episode may spend.
    pub fn episode_budget(&self) -> usize {
        if self.strategy.is_walk() {
            self.hops
        } else {
            self.budget
        }
    }

    /// Episodes per (item, combo): `budget / hops` for walks, else 1.
    pub fn episodes_per_combo(&self) -> usize {
        if self.strategy.is_walk() {
            self.budget / self.hops
        } else {
            1
        }
    }
}

/// One proposal. `attrs` and `reward` are absent for invalid candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub proposal: String,
    pub attrs: Option<AttributeVector>,
    pub reward: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub start: ScoredSequence,
    pub trace: Vec<TraceStep>,
    #[serde(rename = "final")]
    pub final_state: ScoredSequence,
    pub final_reward: f64,
    pub satisfied: bool,
    pub budget_used: usize,
}

impl EpisodeResult {
    pub fn accepted_rewards(&self) -> Vec<f64> {
        self.trace
            .iter()
            .filter(|s| s.accepted)
            .filter_map(|s| s.reward)
            .collect()
    }
}

/// Runs one episode from `start` toward `constraint`.
pub fn run_episode(
    editor: &dyn Editor,
    scorer: &Scorer,
    start: &ScoredSequence,
    constraint: &MultiConstraint,
    config: &EpisodeConfig,
    episode_id: &str,
) -> Result<EpisodeResult> {
    config.validate()?;
    let mut ep = Episode {
        editor,
        scorer,
        start,
        constraint,
        config,
        episode_id,
        calls: 0,
        trace: Vec::new(),
    };
    let start_reward = scorer.reward(start, start, constraint)?;
    let budget = config.episode_budget();
    let (final_state, final_reward) = match config.strategy {
        Strategy::BestOfN => ep.best_of_n(budget, start_reward)?,
        Strategy::NaiveChain => ep.chain(budget, start_reward, false)?,
        Strategy::RandomWalk => ep.chain(budget, start_reward, false)?,
        Strategy::PriorityWalk => ep.chain(budget, start_reward, true)?,
        Strategy::Prioritized => ep.prioritized(budget, start_reward)?,
    };
    let satisfied = scorer.satisfies(&final_state, constraint)?;
    let budget_used = ep.trace.len();
    Ok(EpisodeResult {
        episode_id: episode_id.into(),
        start: start.clone(),
        trace: ep.trace,
        final_state,
        final_reward,
        satisfied,
        budget_used,
    })
}

struct Episode<'a> {
    editor: &'a dyn Editor,
    scorer: &'a Scorer,
    start: &'a ScoredSequence,
    constraint: &'a MultiConstraint,
    config: &'a EpisodeConfig,
    episode_id: &'a str,
    calls: u64,
    trace: Vec<TraceStep>,
}

type Scored = Option<(ScoredSequence, f64)>;

impl Episode<'_> {
    /// One editor call from `current`; appends its candidates to the trace
    /// (unaccepted) and returns their scores.
    fn call(&mut self, current: &ScoredSequence, n: usize) -> Result<Vec<Scored>> {
        let request = EditRequest {
            episode_id: self.episode_id.into(),
            context: self.start.context.clone(),
            anchor: self.config.anchor_conditioning.then(|| self.start.clone()),
            current: current.clone(),
            target: self.constraint.clone(),
            n_candidates: n,
            seed: seed::derive_index(self.config.seed, self.calls),
        };
        self.calls += 1;
        let candidates = self.editor.propose(&request)?;
        if candidates.len() != n {
            bail!(Protocol, "editor returned {} candidates, {} requested", candidates.len(), n);
        }
        let mut out = Vec::with_capacity(n);
        for proposal in candidates {
            let scored = match self.scorer.score(&proposal) {
                Ok(mut s) => {
                    s.context = self.start.context.clone();
                    let r = self.scorer.reward(&s, self.start, self.constraint)?;
                    Some((s, r))
                }
                Err(Error::Input(msg)) => {
                    log::debug!("{}: dropping invalid candidate: {msg}", self.episode_id);
                    None
                }
                Err(e) => return Err(e),
            };
            self.trace.push(TraceStep {
                step: self.trace.len(),
                proposal,
                attrs: scored.as_ref().map(|(s, _)| s.attrs.clone()),
                reward: scored.as_ref().map(|&(_, r)| r),
                accepted: false,
            });
            out.push(scored);
        }
        Ok(out)
    }

    fn accept_last(&mut self, back: usize) {
        let i = self.trace.len() - back;
        self.trace[i].accepted = true;
    }

    fn best_of_n(&mut self, n: usize, start_reward: f64) -> Result<(ScoredSequence, f64)> {
        if n == 0 {
            return Ok((self.start.clone(), start_reward));
        }
        let scored = self.call(self.start, n)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scored.iter().enumerate() {
            if let Some((_, r)) = s {
                if best.is_none_or(|(_, b)| *r > b) {
                    best = Some((i, *r));
                }
            }
        }
        match best {
            Some((i, r)) => {
                self.accept_last(n - i);
                Ok((scored[i].clone().unwrap().0, r))
            }
            None => Ok((self.start.clone(), start_reward)),
        }
    }

    /// Sequential edits from the latest state. With `strict`, a proposal
    /// replaces the state only if its reward is higher.
    fn chain(&mut self, steps: usize, start_reward: f64, strict: bool) -> Result<(ScoredSequence, f64)> {
        let mut current = (self.start.clone(), start_reward);
        for _ in 0..steps {
            let proposal = self.call(&current.0, 1)?.pop().unwrap();
            if let Some((s, r)) = proposal {
                if !strict || r > current.1 {
                    self.accept_last(1);
                    current = (s, r);
                }
            }
        }
        Ok(current)
    }

    fn prioritized(&mut self, budget: usize, start_reward: f64) -> Result<(ScoredSequence, f64)> {
        let mut queue = Queue::new(self.config.beam + 1);
        queue.push(self.start.clone(), start_reward);
        let mut used = 0;
        while used < budget {
            let (state, reward, order) = queue.pop();
            let proposal = self.call(&state, 1)?.pop().unwrap();
            used += 1;
            if let Some((s, r)) = proposal {
                if r > reward {
                    self.accept_last(1);
                    queue.push(s, r);
                }
            }
            queue.restore(state, reward, order);
            if self.scorer.satisfies(queue.peek().0, self.constraint)? {
                break;
            }
        }
        let (best, reward) = queue.peek();
        Ok((best.clone(), reward))
    }
}

/// Max-reward queue; ties go to the earlier insertion. Holds at most
/// `cap` entries.
struct Queue {
    entries: Vec<(ScoredSequence, f64, u64)>,
    next: u64,
    cap: usize,
}

impl Queue {
    fn new(cap: usize) -> Self {
        Self {
            entries: Vec::new(),
            next: 0,
            cap,
        }
    }

    fn push(&mut self, s: ScoredSequence, reward: f64) {
        let order = self.next;
        self.next += 1;
        self.restore(s, reward, order);
    }

    /// Re-inserts with the original insertion order.
    fn restore(&mut self, s: ScoredSequence, reward: f64, order: u64) {
        let at = self
            .entries
            .iter()
            .position(|&(_, r, o)| reward > r || (reward == r && order < o))
            .unwrap_or(self.entries.len());
        self.entries.insert(at, (s, reward, order));
        self.entries.truncate(self.cap);
    }

    fn pop(&mut self) -> (ScoredSequence, f64, u64) {
        self.entries.remove(0)
    }

    fn peek(&self) -> (&ScoredSequence, f64) {
        let (s, r, _) = &self.entries[0];
        (s, *r)
    }
}
