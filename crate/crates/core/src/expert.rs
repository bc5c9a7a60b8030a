//! The expert contract and the council that holds experts with their profiles.
//!
//! An expert proposes candidate next actions for a decision point and scores
//! how plausible a partial trajectory is. [`propose_actions`] and
//! [`evaluate_plausibility`] wrap those two calls with the invariants the
//! planner relies on (bounded, duplicate-free proposals; scores in `[0, 1]`
//! with a neutral fallback).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::env::{Environment, TaskSpec};
use crate::error::{Error, Result};
use crate::memory::ExpertProfile;
use crate::trajectory::{Action, DecisionContext, Trajectory};
use crate::util::keyed_rng;

/// Score used when an evaluation cannot be obtained.
pub const NEUTRAL_SCORE: f64 = 0.5;
pub const DEFAULT_EXPANSION_WIDTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExpertId(String);

impl ExpertId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::input("expert id is empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ExpertId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ExpertId> for String {
    fn from(value: ExpertId) -> String {
        value.0
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertKind {
    Scripted,
    LlmBacked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDescriptor {
    pub expert_id: ExpertId,
    pub display_name: String,
    pub kind: ExpertKind,
}

impl ExpertDescriptor {
    pub fn new(id: &str, kind: ExpertKind) -> Result<Self> {
        Ok(Self {
            expert_id: ExpertId::new(id)?,
            display_name: id.to_string(),
            kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub action: Action,
    pub proposer: ExpertId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpertError {
    /// The backend could not be reached or kept failing after retries.
    #[error("expert unavailable: {0}")]
    Unavailable(String),
    /// The backend answered but the answer could not be used.
    #[error("unusable expert output: {0}")]
    Malformed(String),
}

/// What an expert sees when asked for candidate actions.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRequest<'a> {
    pub task: &'a TaskSpec,
    pub context: &'a DecisionContext,
    /// A stored successful trajectory offered as reference, not continuation.
    pub exemplar: Option<&'a Trajectory>,
    pub k: usize,
    pub seed: u64,
}

pub trait Expert: Send + Sync {
    fn descriptor(&self) -> &ExpertDescriptor;

    fn id(&self) -> &ExpertId {
        &self.descriptor().expert_id
    }

    /// Candidate next actions, best first. May return more or fewer than `k`
    /// and may repeat itself; [`propose_actions`] cleans that up.
    fn propose(
        &self,
        request: &ProposalRequest<'_>,
    ) -> core::result::Result<Vec<Action>, ExpertError>;

    /// Plausibility of the trajectory leading to `context`, nominally in `[0, 1]`.
    fn evaluate(
        &self,
        task: &TaskSpec,
        context: &DecisionContext,
        seed: u64,
    ) -> core::result::Result<f64, ExpertError>;

    /// Merges candidates pooled from several experts into a final list.
    fn aggregate(
        &self,
        request: &ProposalRequest<'_>,
        pool: &[ActionProposal],
    ) -> core::result::Result<Vec<Action>, ExpertError> {
        let _ = request;
        Ok(pool.iter().map(|p| p.action.clone()).collect())
    }
}

/// Up to `k` distinct proposals from one expert, in the expert's order.
pub fn propose_actions(
    expert: &dyn Expert,
    request: &ProposalRequest<'_>,
) -> core::result::Result<Vec<ActionProposal>, ExpertError> {
    if request.k == 0 {
        return Err(ExpertError::Malformed(
            "proposal count k must be at least 1".into(),
        ));
    }
    let raw = expert.propose(request)?;
    Ok(dedup_truncate(raw, request.k)
        .into_iter()
        .map(|action| ActionProposal {
            action,
            proposer: expert.id().clone(),
        })
        .collect())
}

pub(crate) fn dedup_truncate(actions: Vec<Action>, k: usize) -> Vec<Action> {
    let mut out: Vec<Action> = Vec::with_capacity(k.min(actions.len()));
    for a in actions {
        if out.len() == k {
            break;
        }
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

/// The expert's score clamped to `[0, 1]`. A failed or non-finite score is
/// retried once, then replaced by [`NEUTRAL_SCORE`].
pub fn evaluate_plausibility(
    expert: &dyn Expert,
    task: &TaskSpec,
    context: &DecisionContext,
    seed: u64,
) -> f64 {
    for attempt in 0..2u64 {
        if let Ok(score) = expert.evaluate(task, context, seed.wrapping_add(attempt)) {
            if score.is_finite() {
                return score.clamp(0.0, 1.0);
            }
        }
    }
    NEUTRAL_SCORE
}

/// Council members and their success profiles, index-aligned.
pub struct Council {
    members: Vec<Arc<dyn Expert>>,
    profiles: Vec<ExpertProfile>,
}

impl fmt::Debug for Council {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Council")
            .field(
                "members",
                &self
                    .members
                    .iter()
                    .map(|m| m.id().as_str())
                    .collect::<Vec<_>>(),
            )
            .field(
                "segments",
                &self
                    .profiles
                    .iter()
                    .map(ExpertProfile::len)
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Council {
    /// A council whose members start with empty profiles.
    pub fn new(members: Vec<Arc<dyn Expert>>, capacity: usize) -> Result<Self> {
        let profiles = members
            .iter()
            .map(|m| ExpertProfile::new(m.id().clone(), capacity))
            .collect::<Result<Vec<_>>>()?;
        Self::with_profiles(members, profiles)
    }

    pub fn with_profiles(
        members: Vec<Arc<dyn Expert>>,
        profiles: Vec<ExpertProfile>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::input("a council needs at least one member"));
        }
        let mut seen = BTreeMap::new();
        for m in &members {
            if seen.insert(m.id().clone(), ()).is_some() {
                return Err(Error::input(format!("duplicate expert id {}", m.id())));
            }
        }
        if profiles.len() != members.len()
            || members
                .iter()
                .zip(&profiles)
                .any(|(m, p)| m.id() != p.expert_id())
        {
            return Err(Error::input(
                "profiles must match council members one to one, in order",
            ));
        }
        Ok(Self { members, profiles })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Arc<dyn Expert>] {
        &self.members
    }

    pub fn member(&self, index: usize) -> &dyn Expert {
        self.members[index].as_ref()
    }

    pub fn profiles(&self) -> &[ExpertProfile] {
        &self.profiles
    }

    pub fn profiles_mut(&mut self) -> &mut [ExpertProfile] {
        &mut self.profiles
    }

    pub fn profile(&self, index: usize) -> &ExpertProfile {
        &self.profiles[index]
    }

    pub fn profile_mut(&mut self, index: usize) -> &mut ExpertProfile {
        &mut self.profiles[index]
    }

    pub fn index_of(&self, id: &ExpertId) -> Option<usize> {
        self.members.iter().position(|m| m.id() == id)
    }

    pub fn total_segments(&self) -> usize {
        self.profiles.iter().map(ExpertProfile::len).sum()
    }

    pub fn into_parts(self) -> (Vec<Arc<dyn Expert>>, Vec<ExpertProfile>) {
        (self.members, self.profiles)
    }

    /// Replaces the profiles of members present in `profiles`, keyed by id.
    pub fn load_profiles(&mut self, profiles: Vec<ExpertProfile>) -> Result<()> {
        for p in profiles {
            let idx = self.index_of(p.expert_id()).ok_or_else(|| {
                Error::input(format!(
                    "memory holds a profile for unknown expert {}",
                    p.expert_id()
                ))
            })?;
            self.profiles[idx] = p;
        }
        Ok(())
    }

    /// Re-embeds nothing; exposed so callers can validate provider dimensions.
    pub fn check_embedder(&self, embedder: &dyn Embedder) -> Result<()> {
        for seg in self.profiles.iter().flat_map(ExpertProfile::segments) {
            if seg.embedding.dim() != embedder.dim() {
                return Err(Error::input(
                    "stored embeddings do not match the embedder dimension",
                ));
            }
        }
        Ok(())
    }
}

/// How a scripted expert picks candidate actions.
#[derive(Clone)]
pub enum ProposalScript {
    /// Fixed answers keyed by the serialized history; unknown histories get none.
    Table(BTreeMap<String, Vec<Action>>),
    /// Knows the solution for tasks of `family` (all tasks when `None`) and
    /// hides it among `distractors` uninformed candidates.
    Oracle {
        env: Arc<dyn Environment>,
        family: Option<String>,
        distractors: usize,
        off_family: OffFamily,
    },
    /// Uninformed but well-formed guesses.
    UniformRandom { env: Arc<dyn Environment> },
}

/// What an oracle-backed expert proposes for tasks outside its family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffFamily {
    /// Well-formed but uninformed actions of the task's own family.
    Guess,
    /// Actions from its own family's vocabulary; they never fit the task.
    OwnVocabulary,
}

/// How a scripted expert scores plausibility.
#[derive(Clone)]
pub enum EvaluationScript {
    Constant(f64),
    /// The environment's progress measure on tasks of `family` (all when
    /// `None`), 0.5 elsewhere; both with Gaussian noise of std `noise`.
    Progress {
        env: Arc<dyn Environment>,
        family: Option<String>,
        noise: f64,
    },
    /// A uniform draw keyed by seed and trajectory.
    Uniform,
}

/// A deterministic expert: a pure function of its inputs and the seed.
#[derive(Clone)]
pub struct ScriptedExpert {
    descriptor: ExpertDescriptor,
    proposal: ProposalScript,
    evaluation: EvaluationScript,
}

impl ScriptedExpert {
    pub fn new(id: &str, proposal: ProposalScript, evaluation: EvaluationScript) -> Result<Self> {
        if let EvaluationScript::Progress { noise, .. } = &evaluation {
            if !(noise.is_finite() && *noise >= 0.0) {
                return Err(Error::input(
                    "evaluation noise must be a non-negative number",
                ));
            }
        }
        Ok(Self {
            descriptor: ExpertDescriptor::new(id, ExpertKind::Scripted)?,
            proposal,
            evaluation,
        })
    }

    pub fn table_lookup(
        id: &str,
        table: BTreeMap<String, Vec<Action>>,
        score: f64,
    ) -> Result<Self> {
        Self::new(
            id,
            ProposalScript::Table(table),
            EvaluationScript::Constant(score),
        )
    }

    /// Oracle-backed specialist. Outside its family it only knows its own
    /// vocabulary. Its evaluator reads progress on any task.
    pub fn specialist(
        id: &str,
        env: Arc<dyn Environment>,
        family: Option<&str>,
        distractors: usize,
        noise: f64,
    ) -> Result<Self> {
        Self::new(
            id,
            ProposalScript::Oracle {
                env: env.clone(),
                family: family.map(str::to_string),
                distractors,
                off_family: OffFamily::OwnVocabulary,
            },
            EvaluationScript::Progress {
                env,
                family: None,
                noise,
            },
        )
    }

    pub fn uniform_random(id: &str, env: Arc<dyn Environment>) -> Result<Self> {
        Self::new(
            id,
            ProposalScript::UniformRandom { env },
            EvaluationScript::Uniform,
        )
    }

    pub fn constant_evaluator(id: &str, env: Arc<dyn Environment>, score: f64) -> Result<Self> {
        Self::new(
            id,
            ProposalScript::UniformRandom { env },
            EvaluationScript::Constant(score),
        )
    }

    fn covers(env: &dyn Environment, family: &Option<String>, task: &TaskSpec) -> bool {
        match family {
            None => true,
            Some(f) => env.family(task) == Some(f.as_str()),
        }
    }
}

fn history_actions(context: &DecisionContext) -> Vec<Action> {
    context.history.actions().cloned().collect()
}

fn unavailable(e: Error) -> ExpertError {
    ExpertError::Malformed(e.to_string())
}

impl Expert for ScriptedExpert {
    fn descriptor(&self) -> &ExpertDescriptor {
        &self.descriptor
    }

    fn propose(&self, req: &ProposalRequest<'_>) -> core::result::Result<Vec<Action>, ExpertError> {
        let key = req.context.serialize();
        let mut rng = keyed_rng(req.seed, &key);
        let actions = history_actions(req.context);
        match &self.proposal {
            ProposalScript::Table(table) => Ok(table
                .get(&req.context.history.serialize())
                .cloned()
                .unwrap_or_default()),
            ProposalScript::Oracle {
                env,
                family,
                distractors,
                off_family,
            } => {
                if !Self::covers(env.as_ref(), family, req.task) {
                    return match (off_family, family) {
                        (OffFamily::OwnVocabulary, Some(own)) => {
                            env.family_actions(own, &mut rng, req.k)
                        }
                        _ => env.random_actions(req.task, &actions, &mut rng, req.k),
                    }
                    .map_err(unavailable);
                }
                let mut out = env
                    .oracle_actions(req.task, &actions, req.k)
                    .map_err(unavailable)?;
                if *distractors > 0 && out.len() < req.k {
                    let want = (*distractors).min(req.k - out.len());
                    // over-draw so that overlaps with the oracle answers can be dropped
                    let pool = env
                        .random_actions(req.task, &actions, &mut rng, want + out.len())
                        .map_err(unavailable)?;
                    let extra: Vec<Action> = pool
                        .into_iter()
                        .filter(|a| !out.contains(a))
                        .take(want)
                        .collect();
                    out.extend(extra);
                    out.shuffle(&mut rng);
                }
                Ok(out)
            }
            ProposalScript::UniformRandom { env } => env
                .random_actions(req.task, &actions, &mut rng, req.k)
                .map_err(unavailable),
        }
    }

    fn evaluate(
        &self,
        task: &TaskSpec,
        context: &DecisionContext,
        seed: u64,
    ) -> core::result::Result<f64, ExpertError> {
        let key = context.serialize();
        let mut rng = keyed_rng(seed, &key);
        match &self.evaluation {
            EvaluationScript::Constant(c) => Ok(*c),
            EvaluationScript::Uniform => Ok(rand::Rng::random::<f64>(&mut rng)),
            EvaluationScript::Progress { env, family, noise } => {
                let base = if Self::covers(env.as_ref(), family, task) {
                    env.progress(task, &history_actions(context))
                        .map_err(unavailable)?
                } else {
                    NEUTRAL_SCORE
                };
                let jitter = if *noise > 0.0 {
                    Normal::new(0.0, *noise)
                        .map_err(|e| ExpertError::Malformed(e.to_string()))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                Ok((base + jitter).clamp(0.0, 1.0))
            }
        }
    }

    /// A specialist on its own family puts the solution first when the pool
    /// contains it.
    fn aggregate(
        &self,
        req: &ProposalRequest<'_>,
        pool: &[ActionProposal],
    ) -> core::result::Result<Vec<Action>, ExpertError> {
        let mut merged: Vec<Action> = pool.iter().map(|p| p.action.clone()).collect();
        if let ProposalScript::Oracle { env, family, .. } = &self.proposal {
            if Self::covers(env.as_ref(), family, req.task) {
                let good = env
                    .oracle_actions(req.task, &history_actions(req.context), req.k)
                    .map_err(unavailable)?;
                merged.sort_by_key(|a| !good.contains(a));
            }
        }
        Ok(merged)
    }
}
