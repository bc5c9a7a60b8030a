//! Replay-based environments.
//!
//! An environment never hands out a mutable state handle. The state after
//! any action history is obtained by replaying the history from the task's
//! initial observation, which makes every node of a search tree cheap to
//! reconstruct and every run reproducible.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Action, DecisionContext, Observation, Step, Trajectory};

pub mod game24;
pub mod synthetic;

pub use game24::{game24_oracle, Game24, Game24State, OracleResult};
pub use synthetic::{SyntheticConfig, SyntheticEnv};

/// Environment-specific task parameters as they appear in task files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Numbers(Vec<i64>),
    Synthetic { family: String, instance: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub environment: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub terminal: bool,
    /// Present exactly when `terminal` is set.
    pub reward: Option<f64>,
    /// The action was rejected and the state left unchanged.
    pub invalid: bool,
}

impl StepOutcome {
    pub fn running(observation: Observation) -> Self {
        Self {
            observation,
            terminal: false,
            reward: None,
            invalid: false,
        }
    }

    pub fn finished(observation: Observation, reward: f64) -> Self {
        Self {
            observation,
            terminal: true,
            reward: Some(reward),
            invalid: false,
        }
    }

    pub fn rejected(observation: Observation) -> Self {
        Self {
            observation,
            terminal: false,
            reward: None,
            invalid: true,
        }
    }
}

/// The result of replaying an action history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub initial: Observation,
    pub outcomes: Vec<StepOutcome>,
}

impl Replay {
    pub fn current_observation(&self) -> &Observation {
        self.outcomes
            .last()
            .map(|o| &o.observation)
            .unwrap_or(&self.initial)
    }

    pub fn last(&self) -> Option<&StepOutcome> {
        self.outcomes.last()
    }

    pub fn is_terminal(&self) -> bool {
        self.last().is_some_and(|o| o.terminal)
    }

    pub fn reward(&self) -> Option<f64> {
        self.last().and_then(|o| o.reward)
    }

    /// Pairs each action with the observation it answered.
    pub fn trajectory(&self, actions: &[Action]) -> Trajectory {
        let observations =
            core::iter::once(&self.initial).chain(self.outcomes.iter().map(|o| &o.observation));
        Trajectory::from_steps(
            observations
                .zip(actions)
                .map(|(o, a)| Step::new(o.clone(), a.clone()))
                .collect(),
        )
    }

    pub fn context(&self, actions: &[Action]) -> DecisionContext {
        DecisionContext::new(self.trajectory(actions), self.current_observation().clone())
    }
}

/// A deterministic, replayable task environment.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    /// Minimum terminal reward that counts as solving a task.
    fn success_threshold(&self) -> f64;

    fn instruction(&self, task: &TaskSpec) -> Result<Observation>;

    /// Applies `actions` in order from the initial state. Acting after a
    /// terminal outcome is an error.
    fn replay(&self, task: &TaskSpec, actions: &[Action]) -> Result<Replay>;

    /// Next actions known to keep the task solvable, best first.
    fn oracle_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        limit: usize,
    ) -> Result<Vec<Action>>;

    /// Well-formed but uninformed next actions.
    fn random_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        rng: &mut dyn RngCore,
        n: usize,
    ) -> Result<Vec<Action>>;

    /// Well-formed actions of `family`'s own vocabulary, independent of any
    /// task. Environments without families have none.
    fn family_actions(&self, family: &str, rng: &mut dyn RngCore, n: usize) -> Result<Vec<Action>> {
        let _ = (family, rng, n);
        Ok(Vec::new())
    }

    /// Fraction of the task's constraints the history satisfies so far.
    fn progress(&self, task: &TaskSpec, actions: &[Action]) -> Result<f64>;

    /// Task family, for environments whose tasks fall into families.
    fn family<'a>(&self, task: &'a TaskSpec) -> Option<&'a str> {
        match &task.payload {
            Payload::Synthetic { family, .. } => Some(family.as_str()),
            Payload::Numbers(_) => None,
        }
    }
}

pub(crate) fn check_env(env: &dyn Environment, task: &TaskSpec) -> Result<()> {
    if task.environment != env.name() {
        return Err(Error::input(alloc::format!(
            "task {} targets environment {}, not {}",
            task.task_id,
            task.environment,
            env.name()
        )));
    }
    Ok(())
}

/// Built-in environments by name, with default parameters.
pub fn builtin(name: &str) -> Option<Arc<dyn Environment>> {
    match name {
        game24::NAME => Some(Arc::new(Game24)),
        synthetic::NAME => Some(Arc::new(SyntheticEnv::default())),
        _ => None,
    }
}

/// Discount factor of the agent's return objective. The planner optimizes
/// terminal reward and does not consume this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountConfig {
    gamma: f64,
}

impl DiscountConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::input("gamma must lie in [0, 1)"));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `Σ_t γ^t r_t`.
    pub fn discounted_return(&self, rewards: &[f64]) -> f64 {
        rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + self.gamma * acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_range_and_return() {
        assert!(DiscountConfig::new(1.0).is_err());
        assert!(DiscountConfig::new(-0.1).is_err());
        let d = DiscountConfig::new(0.5).unwrap();
        assert_eq!(d.discounted_return(&[1.0, 1.0, 1.0]), 1.75);
        assert_eq!(d.discounted_return(&[]), 0.0);
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin("game24").unwrap().name(), "game24");
        assert_eq!(builtin("synthetic").unwrap().name(), "synthetic");
        assert!(builtin("webshop").is_none());
    }
}
