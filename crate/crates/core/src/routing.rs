//! Council routing.
//!
//! Task-aware routing scores every member by the best similarity between the
//! query and its profile, turns the scores into a softmax distribution and
//! samples the acting expert from it. The chosen member's best match is
//! handed to it as an exemplar. The other strategies exist for ablations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::expert::{
    dedup_truncate, propose_actions, ActionProposal, Council, ExpertError, ExpertId,
    ProposalRequest,
};
use crate::memory::{EpisodeId, Retrieval, SegmentId};
use crate::trajectory::Trajectory;

pub const DEFAULT_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingStrategy {
    TaskAware,
    Random,
    RoundRobin,
    Voting,
    Collaborative,
}

impl RoutingStrategy {
    pub const ALL: [RoutingStrategy; 5] = [
        RoutingStrategy::TaskAware,
        RoutingStrategy::Random,
        RoutingStrategy::RoundRobin,
        RoutingStrategy::Voting,
        RoutingStrategy::Collaborative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoutingStrategy::TaskAware => "task-aware",
            RoutingStrategy::Random => "random",
            RoutingStrategy::RoundRobin => "round-robin",
            RoutingStrategy::Voting => "voting",
            RoutingStrategy::Collaborative => "collaborative",
        }
    }
}

impl fmt::Display for RoutingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoutingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::input(format!("unknown routing strategy '{s}'")))
    }
}

/// Best-match similarity per council member, in council order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingScores {
    pub experts: Vec<ExpertId>,
    pub mu: Vec<f64>,
    /// The segment each score came from; `None` for empty profiles.
    pub best_segment: Vec<Option<SegmentId>>,
}

impl RoutingScores {
    pub fn get(&self, id: &ExpertId) -> Option<f64> {
        self.experts
            .iter()
            .position(|e| e == id)
            .map(|i| self.mu[i])
    }
}

pub fn routing_scores(council: &Council, query: &EmbeddingVector) -> Result<RoutingScores> {
    let mut scores = RoutingScores {
        experts: Vec::with_capacity(council.len()),
        mu: Vec::with_capacity(council.len()),
        best_segment: Vec::with_capacity(council.len()),
    };
    for profile in council.profiles() {
        let best = profile.best_match(query)?;
        scores.experts.push(profile.expert_id().clone());
        scores.mu.push(best.map_or(0.0, |(_, s)| s));
        scores.best_segment.push(best.map(|(seg, _)| seg.id()));
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDistribution {
    pub experts: Vec<ExpertId>,
    pub probabilities: Vec<f64>,
    pub temperature: f64,
}

impl RoutingDistribution {
    pub fn probability(&self, id: &ExpertId) -> Option<f64> {
        self.experts
            .iter()
            .position(|e| e == id)
            .map(|i| self.probabilities[i])
    }

    pub fn as_map(&self) -> BTreeMap<ExpertId, f64> {
        self.experts
            .iter()
            .cloned()
            .zip(self.probabilities.iter().copied())
            .collect()
    }

    /// Index drawn from the distribution restricted to `allowed`.
    fn sample_among(&self, allowed: &[usize], rng: &mut dyn RngCore) -> Option<usize> {
        let total: f64 = allowed.iter().map(|&i| self.probabilities[i]).sum();
        let last = *allowed.last()?;
        let mut x = rng.random::<f64>() * total;
        for &i in allowed {
            x -= self.probabilities[i];
            if x < 0.0 {
                return Some(i);
            }
        }
        Some(last)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let all: Vec<usize> = (0..self.probabilities.len()).collect();
        self.sample_among(&all, rng).unwrap_or(0)
    }
}

/// Softmax of `μ / T` with the maximum subtracted first. Probabilities that
/// would underflow are floored at the smallest positive normal number.
pub fn routing_distribution(
    scores: &RoutingScores,
    temperature: f64,
) -> Result<RoutingDistribution> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::input(format!(
            "routing temperature must be positive, got {temperature}"
        )));
    }
    if scores.mu.is_empty() {
        return Err(Error::input("cannot route an empty council"));
    }
    if scores.mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::input("routing scores must be finite"));
    }
    let max = scores.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores
        .mu
        .iter()
        .map(|m| libm::exp((m - max) / temperature))
        .collect();
    let sum: f64 = weights.iter().sum();
    let probabilities = weights
        .iter()
        .map(|w| (w / sum).max(f64::MIN_POSITIVE))
        .collect();
    Ok(RoutingDistribution {
        experts: scores.experts.clone(),
        probabilities,
        temperature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterConfig {
    pub strategy: RoutingStrategy,
    pub temperature: f64,
    /// Council index of the member that merges pooled proposals.
    pub aggregator: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            strategy: RoutingStrategy::TaskAware,
            temperature: DEFAULT_TEMPERATURE,
            aggregator: 0,
        }
    }
}

/// One member's exemplar and proposals under voting or collaboration.
type Answer = (usize, Option<(SegmentId, Trajectory)>, Vec<ActionProposal>);

/// Which member acts, without asking anyone for actions. `excluded` members
/// are skipped; `None` when nobody is left. Voting and collaborative routing
/// pick the member whose proposals are asked first.
pub fn select_member(
    strategy: RoutingStrategy,
    distribution: &RoutingDistribution,
    step_index: usize,
    excluded: &[usize],
    rng: &mut dyn RngCore,
) -> Option<usize> {
    let n = distribution.probabilities.len();
    let allowed: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
    if allowed.is_empty() {
        return None;
    }
    match strategy {
        RoutingStrategy::TaskAware => distribution.sample_among(&allowed, rng),
        RoutingStrategy::Random => Some(allowed[rng.random_range(0..allowed.len())]),
        RoutingStrategy::RoundRobin | RoutingStrategy::Voting | RoutingStrategy::Collaborative => {
            (0..n)
                .map(|o| (step_index + o) % n)
                .find(|i| allowed.contains(i))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub strategy: RoutingStrategy,
    pub chosen: ExpertId,
    #[serde(skip)]
    pub chosen_index: usize,
    pub exemplar: Option<Trajectory>,
    pub exemplar_segment_id: Option<SegmentId>,
    pub scores: Vec<f64>,
    pub distribution: RoutingDistribution,
    /// Members that failed and were routed around.
    pub unavailable: Vec<ExpertId>,
    /// Candidate actions for the expansion, at most `k`, duplicate-free.
    pub proposals: Vec<ActionProposal>,
    #[serde(skip)]
    pub retrievals: Vec<Retrieval>,
}

/// Per-call inputs of [`route`].
#[derive(Debug, Clone, Copy)]
pub struct RouteQuery<'a> {
    pub embedding: &'a EmbeddingVector,
    pub request: ProposalRequest<'a>,
    pub episode: EpisodeId,
    pub step_index: usize,
}

/// Looks up the exemplar of `index` and records the retrieval.
fn take_exemplar(
    council: &mut Council,
    scores: &RoutingScores,
    index: usize,
    episode: EpisodeId,
    retrievals: &mut Vec<Retrieval>,
) -> Result<Option<(SegmentId, Trajectory)>> {
    let Some(seg) = scores.best_segment[index] else {
        return Ok(None);
    };
    let profile = council.profile_mut(index);
    let usage_count = profile.record_retrieval(seg, episode)?;
    retrievals.push(Retrieval {
        expert_id: profile.expert_id().clone(),
        segment_id: seg,
        usage_count,
    });
    let prefix = profile.get(seg).map(|s| s.prefix().clone());
    Ok(prefix.map(|p| (seg, p)))
}

/// Routes one decision point and gathers the candidate actions.
///
/// Single-actor strategies ask the chosen member; when it is unavailable the
/// decision is re-routed once among the rest. Voting asks every member and
/// keeps the list of the first member that proposed the most common action.
/// Collaborative asks every member and lets the aggregator merge the pool.
///
/// Returns `Ok(Err(_))` when no usable member answered; `Err` is reserved
/// for inconsistent input.
pub fn route(
    council: &mut Council,
    config: &RouterConfig,
    query: &RouteQuery<'_>,
    rng: &mut dyn RngCore,
) -> Result<core::result::Result<RoutingDecision, ExpertError>> {
    if config.aggregator >= council.len() {
        return Err(Error::input("aggregator index outside the council"));
    }
    let scores = routing_scores(council, query.embedding)?;
    let distribution = routing_distribution(&scores, config.temperature)?;
    let mut retrievals = Vec::new();
    let mut unavailable = Vec::new();
    let decision = |chosen_index: usize,
                    exemplar: Option<(SegmentId, Trajectory)>,
                    proposals: Vec<ActionProposal>,
                    unavailable: Vec<ExpertId>,
                    retrievals: Vec<Retrieval>| {
        let (exemplar_segment_id, exemplar) = match exemplar {
            Some((id, t)) => (Some(id), Some(t)),
            None => (None, None),
        };
        RoutingDecision {
            strategy: config.strategy,
            chosen: scores.experts[chosen_index].clone(),
            chosen_index,
            exemplar,
            exemplar_segment_id,
            scores: scores.mu.clone(),
            distribution: distribution.clone(),
            unavailable,
            proposals,
            retrievals,
        }
    };

    match config.strategy {
        RoutingStrategy::TaskAware | RoutingStrategy::Random | RoutingStrategy::RoundRobin => {
            let mut excluded = Vec::new();
            let mut last_error = ExpertError::Unavailable("no council member available".into());
            for _ in 0..2 {
                let Some(idx) = select_member(
                    config.strategy,
                    &distribution,
                    query.step_index,
                    &excluded,
                    rng,
                ) else {
                    break;
                };
                let exemplar =
                    take_exemplar(council, &scores, idx, query.episode, &mut retrievals)?;
                let request = ProposalRequest {
                    exemplar: exemplar.as_ref().map(|(_, t)| t),
                    ..query.request
                };
                match propose_actions(council.member(idx), &request) {
                    Ok(proposals) => {
                        return Ok(Ok(decision(
                            idx,
                            exemplar,
                            proposals,
                            unavailable,
                            retrievals,
                        )))
                    }
                    Err(e) => {
                        unavailable.push(scores.experts[idx].clone());
                        excluded.push(idx);
                        last_error = e;
                    }
                }
            }
            Ok(Err(last_error))
        }
        RoutingStrategy::Voting | RoutingStrategy::Collaborative => {
            let mut answers: Vec<Answer> = Vec::new();
            for idx in 0..council.len() {
                let exemplar =
                    take_exemplar(council, &scores, idx, query.episode, &mut retrievals)?;
                let request = ProposalRequest {
                    exemplar: exemplar.as_ref().map(|(_, t)| t),
                    ..query.request
                };
                match propose_actions(council.member(idx), &request) {
                    Ok(p) => answers.push((idx, exemplar, p)),
                    Err(_) => unavailable.push(scores.experts[idx].clone()),
                }
            }
            if answers.is_empty() {
                return Ok(Err(ExpertError::Unavailable(
                    "every council member failed to propose".into(),
                )));
            }
            if config.strategy == RoutingStrategy::Voting {
                let winner = modal_proposer(
                    &answers
                        .iter()
                        .map(|(_, _, p)| p.as_slice())
                        .collect::<Vec<_>>(),
                );
                let (idx, exemplar, proposals) = answers.swap_remove(winner);
                return Ok(Ok(decision(
                    idx,
                    exemplar,
                    proposals,
                    unavailable,
                    retrievals,
                )));
            }
            let pool: Vec<ActionProposal> = answers
                .iter()
                .flat_map(|(_, _, p)| p.iter().cloned())
                .collect();
            let agg = config.aggregator;
            let exemplar = answers
                .iter()
                .find(|(i, _, _)| *i == agg)
                .and_then(|(_, e, _)| e.clone());
            let request = ProposalRequest {
                exemplar: exemplar.as_ref().map(|(_, t)| t),
                ..query.request
            };
            let merged = match council.member(agg).aggregate(&request, &pool) {
                Ok(m) => m,
                Err(e) => {
                    unavailable.push(scores.experts[agg].clone());
                    if pool.is_empty() {
                        return Ok(Err(e));
                    }
                    pool.iter().map(|p| p.action.clone()).collect()
                }
            };
            let aggregator_id = scores.experts[agg].clone();
            let proposals = dedup_truncate(merged, query.request.k)
                .into_iter()
                .map(|action| {
                    let proposer = pool
                        .iter()
                        .find(|p| p.action == action)
                        .map_or_else(|| aggregator_id.clone(), |p| p.proposer.clone());
                    ActionProposal { action, proposer }
                })
                .collect();
            Ok(Ok(decision(
                agg,
                exemplar,
                proposals,
                unavailable,
                retrievals,
            )))
        }
    }
}

/// Index of the first answer containing the action proposed by the most
/// answers. Ties go to the action that appears first.
fn modal_proposer(answers: &[&[ActionProposal]]) -> usize {
    let mut counts: Vec<(&str, usize, usize)> = Vec::new();
    for (i, answer) in answers.iter().enumerate() {
        for p in answer.iter() {
            match counts.iter_mut().find(|(a, _, _)| *a == p.action.as_str()) {
                Some(entry) => entry.1 += 1,
                None => counts.push((p.action.as_str(), 1, i)),
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for &(_, count, first) in &counts {
        if best.map_or(true, |(c, _)| count > c) {
            best = Some((count, first));
        }
    }
    best.map_or(0, |(_, first)| first)
}
