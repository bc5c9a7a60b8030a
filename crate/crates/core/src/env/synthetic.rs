//! A synthetic specialization testbed.
//!
//! Every task belongs to a family and hides a sequence of tokens drawn from
//! that family's vocabulary. Emitting the next hidden token advances; a wrong
//! token of the family's vocabulary costs a miss, and running out of misses at
//! one position ends the task with reward 0. Anything outside the vocabulary
//! is rejected without cost. Instances are generated from a seed, so the
//! hidden sequence is a pure function of `(family, instance)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_env, Environment, Payload, Replay, StepOutcome, TaskSpec};
use crate::error::{Error, Result};
use crate::trajectory::{Action, Observation};
use crate::util::keyed_rng;

pub const NAME: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Hidden sequence length.
    pub length: usize,
    /// Wrong tokens tolerated at a single position; the last one ends the task.
    pub miss_budget: usize,
    pub families: Vec<String>,
    pub vocabulary: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            length: 3,
            miss_budget: 2,
            families: ["amber", "cobalt", "jade"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vocabulary: 16,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticEnv {
    config: SyntheticConfig,
}

/// Position in the hidden sequence and misses spent at that position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Progress {
    position: usize,
    misses: usize,
    accepted: usize,
    rejected: usize,
    done: Option<bool>,
}

impl SyntheticEnv {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        if config.length == 0
            || config.miss_budget == 0
            || config.vocabulary < 2
            || config.families.is_empty()
        {
            return Err(Error::input(
                "synthetic environment needs length, miss budget, families and a vocabulary of 2+",
            ));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn token(family: &str, index: usize) -> String {
        format!("{family}-{index:02}")
    }

    fn vocabulary(&self, family: &str) -> Vec<String> {
        (0..self.config.vocabulary)
            .map(|i| Self::token(family, i))
            .collect()
    }

    fn parts<'a>(&self, task: &'a TaskSpec) -> Result<(&'a str, u64)> {
        check_env(self, task)?;
        match &task.payload {
            Payload::Synthetic { family, instance }
                if self.config.families.iter().any(|f| f == family) =>
            {
                Ok((family.as_str(), *instance))
            }
            _ => Err(Error::input(format!(
                "task {}: unknown synthetic family or payload",
                task.task_id
            ))),
        }
    }

    /// The hidden token sequence of a task.
    pub fn hidden_sequence(&self, task: &TaskSpec) -> Result<Vec<String>> {
        let (family, instance) = self.parts(task)?;
        let mut rng = keyed_rng(instance, family);
        Ok((0..self.config.length)
            .map(|_| Self::token(family, rng.random_range(0..self.config.vocabulary)))
            .collect())
    }

    /// `count` tasks with families and instances drawn from `seed`.
    pub fn generate_tasks(&self, count: usize, seed: u64) -> Vec<TaskSpec> {
        let mut rng = keyed_rng(seed, "synthetic-tasks");
        (0..count)
            .map(|i| {
                let family =
                    self.config.families[rng.random_range(0..self.config.families.len())].clone();
                let instance = rng.random_range(0..1_000_000u64);
                TaskSpec {
                    task_id: format!("synth-{i:04}"),
                    environment: NAME.to_string(),
                    payload: Payload::Synthetic { family, instance },
                }
            })
            .collect()
    }

    fn run(&self, task: &TaskSpec, actions: &[Action]) -> Result<(Progress, Vec<StepOutcome>)> {
        let (family, _) = self.parts(task)?;
        let hidden = self.hidden_sequence(task)?;
        let vocab = self.vocabulary(family);
        let d = self.config.length;
        let b = self.config.miss_budget;
        let mut p = Progress {
            position: 0,
            misses: 0,
            accepted: 0,
            rejected: 0,
            done: None,
        };
        let mut outcomes = Vec::with_capacity(actions.len());
        for (k, action) in actions.iter().enumerate() {
            if p.done.is_some() {
                return Err(Error::state(format!(
                    "action {k} comes after a terminal outcome"
                )));
            }
            let text = action.as_str().trim();
            let obs = |s: String| Observation::new(s).expect("non-empty");
            let outcome = if !vocab.iter().any(|t| t == text) {
                StepOutcome::rejected(obs(format!(
                    "'{text}' is not a {family} token; nothing changed. {family} progress {}/{d}.",
                    p.position
                )))
            } else if text == hidden[p.position] {
                p.position += 1;
                p.misses = 0;
                p.accepted += 1;
                if p.position == d {
                    p.done = Some(true);
                    StepOutcome::finished(
                        obs(format!("Correct. The {family} sequence is complete.")),
                        1.0,
                    )
                } else {
                    StepOutcome::running(obs(format!(
                        "Correct. {family} progress {}/{d}.",
                        p.position
                    )))
                }
            } else {
                p.misses += 1;
                p.rejected += 1;
                if p.misses >= b {
                    p.done = Some(false);
                    StepOutcome::finished(
                        obs(format!(
                            "Wrong. Out of misses; the {family} sequence is lost."
                        )),
                        0.0,
                    )
                } else {
                    StepOutcome::running(obs(format!(
                        "Wrong. {family} progress {}/{d}, {} of {b} misses used.",
                        p.position, p.misses
                    )))
                }
            };
            outcomes.push(outcome);
        }
        Ok((p, outcomes))
    }
}

impl Environment for SyntheticEnv {
    fn name(&self) -> &str {
        NAME
    }

    fn success_threshold(&self) -> f64 {
        1.0
    }

    fn instruction(&self, task: &TaskSpec) -> Result<Observation> {
        let (family, instance) = self.parts(task)?;
        Observation::new(format!(
            "Recover the hidden {family} sequence (instance {instance}): {} tokens, one per step, \
             each between {} and {}.",
            self.config.length,
            Self::token(family, 0),
            Self::token(family, self.config.vocabulary - 1)
        ))
    }

    fn replay(&self, task: &TaskSpec, actions: &[Action]) -> Result<Replay> {
        let (_, outcomes) = self.run(task, actions)?;
        Ok(Replay {
            initial: self.instruction(task)?,
            outcomes,
        })
    }

    fn oracle_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        limit: usize,
    ) -> Result<Vec<Action>> {
        let (p, _) = self.run(task, actions)?;
        if p.done.is_some() || limit == 0 {
            return Ok(Vec::new());
        }
        let hidden = self.hidden_sequence(task)?;
        Ok(alloc::vec![Action::new(hidden[p.position].clone())?])
    }

    fn random_actions(
        &self,
        task: &TaskSpec,
        _actions: &[Action],
        rng: &mut dyn RngCore,
        n: usize,
    ) -> Result<Vec<Action>> {
        let (family, _) = self.parts(task)?;
        self.family_actions(family, rng, n)
    }

    fn family_actions(&self, family: &str, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Action>> {
        if !self.config.families.iter().any(|f| f == family) {
            return Err(Error::input(format!("unknown synthetic family {family}")));
        }
        let mut vocab = self.vocabulary(family);
        vocab.shuffle(rng);
        vocab.truncate(n);
        vocab.into_iter().map(Action::new).collect()
    }

    /// Share of accepted tokens among all vocabulary tokens emitted so far.
    fn progress(&self, task: &TaskSpec, actions: &[Action]) -> Result<f64> {
        let (p, _) = self.run(task, actions)?;
        let attempts = p.accepted + p.rejected;
        Ok(if attempts == 0 {
            1.0
        } else {
            p.accepted as f64 / attempts as f64
        })
    }
}
