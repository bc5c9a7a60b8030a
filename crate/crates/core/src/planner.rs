//! The search loop.
//!
//! Each iteration selects a leaf by UCT, routes the decision point to a
//! council member, turns its proposals into children, values the children
//! with the dual signals and backs up the value of the best child. Terminal
//! children back up their reward instead, and the first successful terminal
//! ends the search. The finished episode is then handed to memory.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::env::{Environment, TaskSpec};
use crate::error::{Error, Result};
use crate::expert::{Council, ExpertId, ProposalRequest, DEFAULT_EXPANSION_WIDTH};
use crate::mcts::{ChildSpec, NodeId, SearchTree, DEFAULT_EXPLORATION};
use crate::memory::{finalize_episode, EpisodeId, EpisodeRecord, FinalizeReport, Retrieval};
use crate::routing::{route, RouteQuery, RouterConfig, RoutingDecision};
use crate::trace::{Backprop, BatchRecord, IterationTrace, TraceSink};
use crate::trajectory::{Action, Trajectory};
use crate::util::keyed_rng;
use crate::value::{fuse_with_mode, llm_value, sms_value, ValueMode, ValueSignals};

pub const DEFAULT_BUDGET: usize = 10;
pub const DEFAULT_MAX_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Iterations per task.
    pub budget: usize,
    pub max_depth: usize,
    pub expansion_width: usize,
    pub exploration: f64,
    pub router: RouterConfig,
    pub value_mode: ValueMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            max_depth: DEFAULT_MAX_DEPTH,
            expansion_width: DEFAULT_EXPANSION_WIDTH,
            exploration: DEFAULT_EXPLORATION,
            router: RouterConfig::default(),
            value_mode: ValueMode::Full,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.max_depth == 0 || self.expansion_width == 0 {
            return Err(Error::input(
                "budget, max_depth and expansion_width must be positive",
            ));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return Err(Error::input(
                "exploration constant must be finite and non-negative",
            ));
        }
        if !(self.router.temperature > 0.0 && self.router.temperature.is_finite()) {
            return Err(Error::input("routing temperature must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub task_id: String,
    pub episode_id: EpisodeId,
    pub success: bool,
    pub best_trajectory: Trajectory,
    pub reward: f64,
    pub iterations_used: usize,
    /// Children created over the whole search.
    pub nodes_expanded: usize,
    pub max_depth_reached: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub result: PlanResult,
    pub record: EpisodeRecord,
    pub memory: FinalizeReport,
    pub tree: SearchTree,
}

/// The fixed collaborators of a search.
#[derive(Clone, Copy)]
pub struct Planner<'a> {
    pub env: &'a dyn Environment,
    pub embedder: &'a dyn Embedder,
    pub config: SearchConfig,
}

/// Plans one task and files the episode into the council's memory.
pub fn search(
    task: &TaskSpec,
    council: &mut Council,
    planner: &Planner<'_>,
    episode: EpisodeId,
    seed: u64,
    trace: &mut dyn TraceSink,
) -> Result<SearchOutcome> {
    planner.config.validate()?;
    let root = planner.env.instruction(task)?;
    let mut run = Run {
        task,
        planner,
        council,
        rng: keyed_rng(seed, &task.task_id),
        episode,
        tree: SearchTree::new(root),
        retrievals: Vec::new(),
        step_index: 0,
        nodes_expanded: 0,
        diagnostics: Vec::new(),
        found: None,
    };
    let mut iterations_used = 0;
    for iteration in 0..planner.config.budget {
        iterations_used = iteration + 1;
        let event = run.iterate(iteration)?;
        trace.record(event);
        if run.found.is_some() {
            break;
        }
    }
    run.finish(iterations_used)
}

/// A successful trajectory and who produced each of its actions.
struct Found {
    trajectory: Trajectory,
    experts: Vec<ExpertId>,
    reward: f64,
}

struct Run<'a, 'p> {
    task: &'a TaskSpec,
    planner: &'a Planner<'p>,
    council: &'a mut Council,
    rng: ChaCha8Rng,
    episode: EpisodeId,
    tree: SearchTree,
    retrievals: Vec<Retrieval>,
    step_index: usize,
    nodes_expanded: usize,
    diagnostics: Vec<String>,
    found: Option<Found>,
}

enum Expansion {
    Children(Vec<NodeId>, Vec<f64>),
    Empty,
    Unavailable(String),
}

impl Run<'_, '_> {
    fn config(&self) -> &SearchConfig {
        &self.planner.config
    }

    fn threshold(&self) -> f64 {
        self.planner.env.success_threshold()
    }

    fn iterate(&mut self, iteration: usize) -> Result<IterationTrace> {
        let path = self.tree.select(self.config().exploration);
        let leaf = *path.last().expect("path holds the root");
        let mut event = IterationTrace {
            task_id: self.task.task_id.clone(),
            iteration,
            path: path.clone(),
            routing: None,
            batch: None,
            backprop: None,
            note: None,
        };
        let node = self.tree.node(leaf);
        if node.terminal {
            let r = node.terminal_reward.unwrap_or(0.0);
            self.backup(&mut event, path, r)?;
            return Ok(event);
        }
        if node.depth() >= self.config().max_depth {
            self.tree.close(leaf);
            event.note = Some("depth cap reached".into());
            self.backup(&mut event, path, 0.0)?;
            return Ok(event);
        }

        let (children, q) = match self.expand(leaf, &mut event)? {
            Expansion::Children(c, q) => (c, q),
            Expansion::Empty => {
                self.tree.close(leaf);
                event.note = Some("no candidate actions".into());
                self.backup(&mut event, path, 0.0)?;
                return Ok(event);
            }
            Expansion::Unavailable(why) => {
                self.diagnostics
                    .push(format!("iteration {iteration}: {why}"));
                event.note = Some(why);
                return Ok(event);
            }
        };

        let threshold = self.threshold();
        let winner = children.iter().copied().find(|&c| {
            let n = self.tree.node(c);
            n.terminal && n.terminal_reward.is_some_and(|r| r >= threshold)
        });
        if let Some(child) = winner {
            let n = self.tree.node(child);
            let reward = n.terminal_reward.unwrap_or(0.0);
            self.found = Some(Found {
                trajectory: n.prefix.clone(),
                experts: self.experts_on(child),
                reward,
            });
            let mut full = path;
            full.push(child);
            self.backup(&mut event, full, reward)?;
            return Ok(event);
        }

        let mut frontier = 0;
        for (i, v) in q.iter().enumerate() {
            if *v > q[frontier] {
                frontier = i;
            }
        }
        let child = children[frontier];
        let n = self.tree.node(child);
        let r = if n.terminal {
            n.terminal_reward.unwrap_or(0.0)
        } else if self.config().value_mode == ValueMode::EnvOnly {
            self.rollout(child)?
        } else {
            q[frontier]
        };
        let mut full = path;
        full.push(child);
        self.backup(&mut event, full, r)?;
        Ok(event)
    }

    fn backup(&mut self, event: &mut IterationTrace, path: Vec<NodeId>, r: f64) -> Result<()> {
        self.tree.backpropagate(&path, r)?;
        event.backprop = Some(Backprop { path, value: r });
        Ok(())
    }

    fn experts_on(&self, node: NodeId) -> Vec<ExpertId> {
        self.tree
            .path_to(node)
            .iter()
            .filter_map(|&id| self.tree.node(id).acting_expert.clone())
            .collect()
    }

    /// Routes the decision at `context` and returns its candidates.
    fn route_at(
        &mut self,
        history: &Trajectory,
        observation: &crate::trajectory::Observation,
        k: usize,
    ) -> Result<core::result::Result<RoutingDecision, String>> {
        let context = crate::trajectory::DecisionContext::new(history.clone(), observation.clone());
        let embedding = self.planner.embedder.embed(&context.serialize())?;
        let seed = self.rng.next_u64();
        let query = RouteQuery {
            embedding: &embedding,
            request: ProposalRequest {
                task: self.task,
                context: &context,
                exemplar: None,
                k,
                seed,
            },
            episode: self.episode,
            step_index: self.step_index,
        };
        self.step_index += 1;
        let router = self.planner.config.router;
        let decision = route(self.council, &router, &query, &mut self.rng)?;
        Ok(match decision {
            Ok(d) => {
                self.retrievals.extend(d.retrievals.iter().cloned());
                Ok(d)
            }
            Err(e) => Err(e.to_string()),
        })
    }

    fn expand(&mut self, leaf: NodeId, event: &mut IterationTrace) -> Result<Expansion> {
        let node = self.tree.node(leaf);
        let (prefix, observation) = (node.prefix.clone(), node.observation.clone());
        let decision = match self.route_at(&prefix, &observation, self.config().expansion_width)? {
            Ok(d) => d,
            Err(why) => return Ok(Expansion::Unavailable(why)),
        };
        let routed = decision.chosen_index;
        let proposals = decision.proposals.clone();
        event.routing = Some(decision);
        if proposals.is_empty() {
            return Ok(Expansion::Empty);
        }

        let env = self.planner.env;
        let mode = self.config().value_mode;
        let base: Vec<Action> = prefix.actions().cloned().collect();
        let mut staged = Vec::with_capacity(proposals.len());
        let mut signals = Vec::with_capacity(proposals.len());
        for p in &proposals {
            let mut actions = base.clone();
            actions.push(p.action.clone());
            let replay = env.replay(self.task, &actions)?;
            let outcome = replay.last().expect("one action was applied").clone();
            let context = replay.context(&actions);
            let mut s = ValueSignals::neutral();
            if mode.uses_llm() {
                let (v, who) = llm_value(self.council, self.task, &context, &mut self.rng);
                s.v_llm = v;
                s.evaluator_expert = Some(who);
            }
            if mode.uses_sms() {
                let query = self.planner.embedder.embed(&context.history.serialize())?;
                let (v, hit) = sms_value(self.council.profile_mut(routed), &query, self.episode)?;
                s.v_sms = v;
                if let Some(hit) = hit {
                    s.matched_segment = Some(hit.segment_id);
                    self.retrievals.push(hit);
                }
            }
            signals.push(s);
            staged.push((p.clone(), outcome));
        }
        let fusion = fuse_with_mode(&signals, mode)?;
        let mut children = Vec::with_capacity(staged.len());
        for ((p, outcome), &q) in staged.into_iter().zip(&fusion.q) {
            let id = self.tree.add_child(
                leaf,
                ChildSpec {
                    action: p.action,
                    observation: outcome.observation,
                    expert: p.proposer,
                    terminal: outcome.terminal,
                    reward: outcome.reward,
                    invalid: outcome.invalid,
                    fused_value: q,
                },
            )?;
            children.push(id);
        }
        self.nodes_expanded += children.len();
        let q = fusion.q.clone();
        event.batch = Some(BatchRecord {
            parent: leaf,
            children: children.clone(),
            actions: proposals.iter().map(|p| p.action.to_string()).collect(),
            signals,
            fusion,
        });
        Ok(Expansion::Children(children, q))
    }

    /// Greedy single-proposal rollout from `start`; returns the terminal
    /// reward, or 0 when the depth cap or a routing failure stops it.
    fn rollout(&mut self, start: NodeId) -> Result<f64> {
        let node = self.tree.node(start);
        let mut history = node.prefix.clone();
        let mut observation = node.observation.clone();
        let mut experts = self.experts_on(start);
        let mut actions: Vec<Action> = history.actions().cloned().collect();
        while history.depth() < self.config().max_depth {
            let decision = match self.route_at(&history, &observation, 1)? {
                Ok(d) => d,
                Err(why) => {
                    self.diagnostics.push(format!("rollout: {why}"));
                    return Ok(0.0);
                }
            };
            let Some(p) = decision.proposals.into_iter().next() else {
                return Ok(0.0);
            };
            actions.push(p.action.clone());
            let replay = self.planner.env.replay(self.task, &actions)?;
            history = replay.trajectory(&actions);
            observation = replay.current_observation().clone();
            experts.push(p.proposer);
            if let Some(r) = replay.reward() {
                if r >= self.threshold() {
                    self.found = Some(Found {
                        trajectory: history,
                        experts,
                        reward: r,
                    });
                }
                return Ok(r);
            }
        }
        Ok(0.0)
    }

    fn finish(mut self, iterations_used: usize) -> Result<SearchOutcome> {
        let (success, found) = match self.found.take() {
            Some(f) => (true, f),
            None => {
                let mut best: Option<NodeId> = None;
                for n in self.tree.nodes().iter().skip(1).filter(|n| n.visits > 0) {
                    if best.map_or(true, |b| n.value > self.tree.node(b).value) {
                        best = Some(n.id);
                    }
                }
                let found = match best {
                    Some(b) => {
                        let n = self.tree.node(b);
                        Found {
                            trajectory: n.prefix.clone(),
                            experts: self.experts_on(b),
                            reward: if n.terminal {
                                n.terminal_reward.unwrap_or(0.0)
                            } else {
                                0.0
                            },
                        }
                    }
                    None => Found {
                        trajectory: Trajectory::new(),
                        experts: Vec::new(),
                        reward: 0.0,
                    },
                };
                (false, found)
            }
        };
        let record = EpisodeRecord {
            episode_id: self.episode,
            task_id: self.task.task_id.clone(),
            final_trajectory: found.trajectory.clone(),
            reward: found.reward.clamp(0.0, 1.0),
            success,
            per_step_expert: found.experts,
            retrievals: self.retrievals,
        };
        record.validate(self.planner.env.success_threshold())?;
        let memory = finalize_episode(self.council.profiles_mut(), &record, self.planner.embedder)?;
        let result = PlanResult {
            task_id: self.task.task_id.clone(),
            episode_id: self.episode,
            success,
            best_trajectory: found.trajectory,
            reward: record.reward,
            iterations_used,
            nodes_expanded: self.nodes_expanded,
            max_depth_reached: self.tree.max_depth(),
            diagnostics: self.diagnostics,
        };
        Ok(SearchOutcome {
            result,
            record,
            memory,
            tree: self.tree,
        })
    }
}
