//! The search tree: arena storage, UCT selection and backpropagation.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::ExpertId;
use crate::trajectory::{Action, DecisionContext, Observation, Step, Trajectory};

pub type NodeId = usize;

pub const DEFAULT_EXPLORATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub prefix: Trajectory,
    /// What the environment showed after the last action of `prefix`.
    pub observation: Observation,
    pub incoming_action: Option<Action>,
    pub acting_expert: Option<ExpertId>,
    pub visits: u64,
    pub value: f64,
    pub terminal: bool,
    pub terminal_reward: Option<f64>,
    /// The incoming action was rejected by the environment.
    pub invalid: bool,
    pub children: Vec<NodeId>,
    pub fused_value: Option<f64>,
}

impl SearchNode {
    pub fn depth(&self) -> usize {
        self.prefix.depth()
    }

    pub fn context(&self) -> DecisionContext {
        DecisionContext::new(self.prefix.clone(), self.observation.clone())
    }
}

/// What a child needs besides its position in the tree.
#[derive(Debug, Clone)]
pub struct ChildSpec {
    pub action: Action,
    pub observation: Observation,
    pub expert: ExpertId,
    pub terminal: bool,
    pub reward: Option<f64>,
    pub invalid: bool,
    pub fused_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

/// `Q + c·sqrt(ln N_p / N)`, or `+∞` for an unvisited node.
pub fn uct(q: f64, visits: u64, parent_visits: u64, c: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let explore = if parent_visits > 0 {
        libm::log(parent_visits as f64) / visits as f64
    } else {
        0.0
    };
    q + c * libm::sqrt(explore.max(0.0))
}

impl SearchTree {
    pub fn new(root_observation: Observation) -> Self {
        Self {
            nodes: alloc::vec![SearchNode {
                id: 0,
                parent: None,
                prefix: Trajectory::new(),
                observation: root_observation,
                incoming_action: None,
                acting_expert: None,
                visits: 0,
                value: 0.0,
                terminal: false,
                terminal_reward: None,
                invalid: false,
                children: Vec::new(),
                fused_value: None,
            }],
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Attaches a child with `N = 0` and `Q` initialized to its fused value.
    pub fn add_child(&mut self, parent: NodeId, spec: ChildSpec) -> Result<NodeId> {
        let p = self
            .nodes
            .get(parent)
            .ok_or_else(|| Error::state(format!("no node {parent}")))?;
        if p.terminal {
            return Err(Error::state(format!("node {parent} is terminal")));
        }
        let id = self.nodes.len();
        let prefix = p
            .prefix
            .extended(Step::new(p.observation.clone(), spec.action.clone()));
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            prefix,
            observation: spec.observation,
            incoming_action: Some(spec.action),
            acting_expert: Some(spec.expert),
            visits: 0,
            value: spec.fused_value,
            terminal: spec.terminal,
            terminal_reward: spec.reward,
            invalid: spec.invalid,
            children: Vec::new(),
            fused_value: Some(spec.fused_value),
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Turns a leaf nobody can expand into a failed terminal.
    pub fn close(&mut self, id: NodeId) {
        let node = &mut self.nodes[id];
        if node.children.is_empty() {
            node.terminal = true;
            node.terminal_reward.get_or_insert(0.0);
        }
    }

    /// The child to descend into: highest UCT; among unvisited children the
    /// highest fused value; remaining ties go to the earliest child.
    pub fn best_child(&self, id: NodeId, c: f64) -> Option<NodeId> {
        let parent_visits = self.nodes[id].visits;
        let mut best: Option<(f64, f64, NodeId)> = None;
        for &child in &self.nodes[id].children {
            let n = &self.nodes[child];
            let score = uct(n.value, n.visits, parent_visits, c);
            let fused = n.fused_value.unwrap_or(0.0);
            let better = match best {
                None => true,
                Some((s, f, _)) => score > s || (score == s && score.is_infinite() && fused > f),
            };
            if better {
                best = Some((score, fused, child));
            }
        }
        best.map(|(_, _, id)| id)
    }

    /// Descends from the root until a terminal or childless node.
    pub fn select(&self, c: f64) -> Vec<NodeId> {
        let mut path = alloc::vec![Self::ROOT];
        let mut at = Self::ROOT;
        while !self.nodes[at].terminal {
            match self.best_child(at, c) {
                Some(next) => {
                    path.push(next);
                    at = next;
                }
                None => break,
            }
        }
        path
    }

    /// Incremental-average update of every node on `path`.
    pub fn backpropagate(&mut self, path: &[NodeId], r: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::input(format!("backed-up value {r} outside [0, 1]")));
        }
        if path.first() != Some(&Self::ROOT) {
            return Err(Error::input("backpropagation path must start at the root"));
        }
        for w in path.windows(2) {
            if self.nodes.get(w[1]).and_then(|n| n.parent) != Some(w[0]) {
                return Err(Error::input(format!("{} is not a child of {}", w[1], w[0])));
            }
        }
        for &id in path {
            let node = &mut self.nodes[id];
            node.visits += 1;
            node.value += (r - node.value) / node.visits as f64;
        }
        Ok(())
    }

    /// Node ids from the root to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = alloc::vec![id];
        let mut at = id;
        while let Some(p) = self.nodes[at].parent {
            path.push(p);
            at = p;
        }
        path.reverse();
        path
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(SearchNode::depth).max().unwrap_or(0)
    }
}
