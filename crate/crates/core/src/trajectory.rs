//! Observations, actions and trajectories, plus the canonical text form used
//! for embedding, prompting and trace logs.
//!
//! A trajectory serializes as one `OBS: ` line and one `ACT: ` line per step.
//! Backslashes and line breaks inside the texts are escaped so the encoding
//! stays injective and can be parsed back exactly.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const OBS_TAG: &str = "OBS: ";
const ACT_TAG: &str = "ACT: ";

macro_rules! text_newtype {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(text: impl Into<String>) -> Result<Self> {
                let text = text.into();
                if text.trim().is_empty() {
                    return Err(Error::input(concat!($what, " text is empty")));
                }
                Ok(Self(text))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;

            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> String {
                value.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

text_newtype!(Observation, "observation");
text_newtype!(Action, "action");

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub observation: Observation,
    pub action: Action,
}

impl Step {
    pub fn new(observation: Observation, action: Action) -> Self {
        Self {
            observation,
            action,
        }
    }
}

/// Ordered `(observation, action)` steps. The depth is the number of steps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    /// Returns a copy extended by one step.
    pub fn extended(&self, step: Step) -> Self {
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.extend_from_slice(&self.steps);
        steps.push(step);
        Self { steps }
    }

    /// The first `len` steps.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            steps: self.steps[..len.min(self.steps.len())].to_vec(),
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    pub fn is_prefix_of(&self, other: &Trajectory) -> bool {
        self.depth() <= other.depth() && other.steps[..self.depth()] == self.steps[..]
    }

    pub fn serialize(&self) -> String {
        serialize_trajectory(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_trajectory(text)
    }
}

/// A decision point: the history so far and the observation awaiting an action.
///
/// At the root the history is empty and the observation is the task
/// instruction, which is what routing queries on before any step exists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionContext {
    pub history: Trajectory,
    pub observation: Observation,
}

impl DecisionContext {
    pub fn root(instruction: Observation) -> Self {
        Self {
            history: Trajectory::new(),
            observation: instruction,
        }
    }

    pub fn new(history: Trajectory, observation: Observation) -> Self {
        Self {
            history,
            observation,
        }
    }

    /// The history followed by a dangling `OBS:` line for the pending observation.
    pub fn serialize(&self) -> String {
        let mut out = serialize_trajectory(&self.history);
        push_line(&mut out, OBS_TAG, self.observation.as_str());
        out
    }

    /// The instruction the episode started from.
    pub fn instruction(&self) -> &Observation {
        self.history
            .steps()
            .first()
            .map(|s| &s.observation)
            .unwrap_or(&self.observation)
    }
}

/// `[τ_1, …, τ_d]`, where `τ_t` holds the first `t` steps.
pub fn decompose_prefixes(traj: &Trajectory) -> Vec<Trajectory> {
    (1..=traj.depth()).map(|t| traj.prefix(t)).collect()
}

pub fn serialize_trajectory(traj: &Trajectory) -> String {
    let mut out = String::new();
    for step in traj.steps() {
        push_line(&mut out, OBS_TAG, step.observation.as_str());
        push_line(&mut out, ACT_TAG, step.action.as_str());
    }
    out
}

/// Inverse of [`serialize_trajectory`].
pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut steps = Vec::new();
    let mut lines = text.split_terminator('\n');
    while let Some(obs_line) = lines.next() {
        let obs = obs_line
            .strip_prefix(OBS_TAG)
            .ok_or_else(|| Error::input("expected an OBS: line"))?;
        let act = lines
            .next()
            .and_then(|l| l.strip_prefix(ACT_TAG))
            .ok_or_else(|| Error::input("OBS: line without a following ACT: line"))?;
        steps.push(Step::new(
            Observation::new(unescape(obs)?)?,
            Action::new(unescape(act)?)?,
        ));
    }
    Ok(Trajectory::from_steps(steps))
}

fn push_line(out: &mut String, tag: &str, text: &str) {
    out.push_str(tag);
    escape_into(out, text);
    out.push('\n');
}

fn escape_into(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn unescape(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                let tail = other.map(|c| c.to_string()).unwrap_or_default();
                return Err(Error::input(alloc::format!("bad escape sequence \\{tail}")));
            }
        }
    }
    Ok(out)
}
