//! Runs and ablations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context};
use council_core::env::{Game24, Replay, SyntheticEnv};
use council_core::expert::{EvaluationScript, ProposalScript, ScriptedExpert};
use council_core::planner::{search, Planner};
use council_core::trace::{IterationTrace, NoTrace, TraceSink};
use council_core::{
    Action, Council, Environment, EpisodeId, Expert, ExpertProfile, HashedTrigramEmbedder,
    Observation, RoutingStrategy, TaskSpec, ValueMode,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::{EnvironmentConfig, ExpertSpec, RunConfig};
use crate::gateway::{Gateway, LlmExpert};
use crate::memory_io::{load_memory, save_memory};
use crate::metrics::{RunMetrics, TaskRow};
use crate::tasks::read_tasks;
use crate::trace_io::JsonlTrace;

/// An environment with its success threshold replaced.
struct Thresholded {
    inner: Arc<dyn Environment>,
    threshold: f64,
}

impl Environment for Thresholded {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn success_threshold(&self) -> f64 {
        self.threshold
    }
    fn instruction(&self, task: &TaskSpec) -> council_core::Result<Observation> {
        self.inner.instruction(task)
    }
    fn replay(&self, task: &TaskSpec, actions: &[Action]) -> council_core::Result<Replay> {
        self.inner.replay(task, actions)
    }
    fn oracle_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        limit: usize,
    ) -> council_core::Result<Vec<Action>> {
        self.inner.oracle_actions(task, actions, limit)
    }
    fn random_actions(
        &self,
        task: &TaskSpec,
        actions: &[Action],
        rng: &mut dyn RngCore,
        n: usize,
    ) -> council_core::Result<Vec<Action>> {
        self.inner.random_actions(task, actions, rng, n)
    }
    fn family_actions(
        &self,
        family: &str,
        rng: &mut dyn RngCore,
        n: usize,
    ) -> council_core::Result<Vec<Action>> {
        self.inner.family_actions(family, rng, n)
    }
    fn progress(&self, task: &TaskSpec, actions: &[Action]) -> council_core::Result<f64> {
        self.inner.progress(task, actions)
    }
    fn family<'a>(&self, task: &'a TaskSpec) -> Option<&'a str> {
        self.inner.family(task)
    }
}

pub fn build_environment(cfg: &EnvironmentConfig) -> anyhow::Result<Arc<dyn Environment>> {
    let env: Arc<dyn Environment> = match cfg.name.as_str() {
        "game24" => Arc::new(Game24),
        "synthetic" => Arc::new(SyntheticEnv::new(cfg.synthetic.clone())?),
        other => bail!("config key `environment.name`: unknown environment '{other}'"),
    };
    Ok(match cfg.success_threshold {
        Some(threshold) => Arc::new(Thresholded {
            inner: env,
            threshold,
        }),
        None => env,
    })
}

pub fn build_members(
    cfg: &RunConfig,
    env: &Arc<dyn Environment>,
    gateway: &Arc<Gateway>,
) -> anyhow::Result<Vec<Arc<dyn Expert>>> {
    cfg.council
        .experts
        .iter()
        .map(|spec| -> anyhow::Result<Arc<dyn Expert>> {
            Ok(match spec {
                ExpertSpec::Specialist {
                    id,
                    family,
                    distractors,
                    noise,
                    off_family,
                } => Arc::new(ScriptedExpert::new(
                    id,
                    ProposalScript::Oracle {
                        env: env.clone(),
                        family: family.clone(),
                        distractors: *distractors,
                        off_family: *off_family,
                    },
                    EvaluationScript::Progress {
                        env: env.clone(),
                        family: None,
                        noise: *noise,
                    },
                )?),
                ExpertSpec::UniformRandom { id } => {
                    Arc::new(ScriptedExpert::uniform_random(id, env.clone())?)
                }
                ExpertSpec::Constant { id, score } => {
                    Arc::new(ScriptedExpert::constant_evaluator(id, env.clone(), *score)?)
                }
                ExpertSpec::Llm {
                    id,
                    backend,
                    act_temperature,
                    eval_temperature,
                    max_tokens,
                } => {
                    let b = cfg
                        .backends
                        .iter()
                        .find(|b| &b.backend_id == backend)
                        .with_context(|| format!("expert {id}: no backend '{backend}'"))?;
                    let mut e = LlmExpert::new(id, gateway.clone(), backend, cfg.prompts.clone())?;
                    e.act_temperature = *act_temperature;
                    e.eval_temperature = *eval_temperature;
                    e.max_tokens = *max_tokens;
                    e.timeout = Duration::from_secs(b.timeout_secs);
                    Arc::new(e)
                }
            })
        })
        .collect()
}

/// The task list of a run: the configured file, or tasks generated from `seed`.
pub fn tasks_for(cfg: &RunConfig, seed: u64) -> anyhow::Result<Vec<TaskSpec>> {
    let env = &cfg.environment;
    if let Some(path) = &env.tasks {
        return Ok(read_tasks(path)?);
    }
    let Some(g) = &env.generate else {
        bail!("config key `environment.tasks` is missing")
    };
    Ok(match env.name.as_str() {
        "game24" => Game24.generate_tasks(g.count, seed, g.solvable_only),
        _ => SyntheticEnv::new(env.synthetic.clone())?.generate_tasks(g.count, seed),
    })
}

fn initial_profiles(
    cfg: &RunConfig,
    members: &[Arc<dyn Expert>],
    embedder: &HashedTrigramEmbedder,
) -> anyhow::Result<Vec<ExpertProfile>> {
    let m = &cfg.memory;
    let mut profiles: Vec<ExpertProfile> = members
        .iter()
        .map(|e| {
            ExpertProfile::new(e.id().clone(), m.capacity)
                .and_then(|p| p.with_cold_start(m.cold_start))
        })
        .collect::<council_core::Result<_>>()?;
    if let Some(path) = &m.load {
        for p in load_memory(path, embedder, m.capacity, m.cold_start)? {
            let idx = members
                .iter()
                .position(|e| e.id() == p.expert_id())
                .with_context(|| {
                    format!(
                        "{}: profile for unknown expert {}",
                        path.display(),
                        p.expert_id()
                    )
                })?;
            profiles[idx] = p;
        }
    }
    Ok(profiles)
}

/// Metrics of a finished run and the memory it ended with.
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub profiles: Vec<ExpertProfile>,
}

type Finished = (TaskRow, Vec<IterationTrace>);

/// Plans every task in order. Task-level errors become failed rows.
pub fn execute(
    cfg: &RunConfig,
    seed: u64,
    tasks: &[TaskSpec],
    env: &Arc<dyn Environment>,
    members: Vec<Arc<dyn Expert>>,
    gateway: &Gateway,
    trace: &mut dyn TraceSink,
) -> anyhow::Result<RunOutput> {
    let embedder = HashedTrigramEmbedder::new(cfg.memory.embedding_dim)?;
    let profiles = initial_profiles(cfg, &members, &embedder)?;
    let planner = Planner {
        env: env.as_ref(),
        embedder: &embedder,
        config: cfg.search_config(),
    };
    let warmup = cfg.environment.warmup;
    let row =
        |i: usize, task: &TaskSpec, council: &mut Council, trace: &mut dyn TraceSink| match search(
            task,
            council,
            &planner,
            EpisodeId(i as u64),
            seed,
            trace,
        ) {
            Ok(out) => TaskRow::from_result(&out.result, i < warmup),
            Err(e) => TaskRow::failed(&task.task_id, i < warmup, e.to_string()),
        };

    let mut rows = Vec::with_capacity(tasks.len());
    let final_profiles;
    if cfg.memory.shared {
        let mut council = Council::with_profiles(members, profiles)?;
        for (i, task) in tasks.iter().enumerate() {
            rows.push(row(i, task, &mut council, trace));
        }
        final_profiles = council.into_parts().1;
    } else {
        // every task starts from the same memory; events are buffered per
        // task and replayed in task order so traces stay deterministic
        let slots: Vec<Mutex<Option<Finished>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
        let next = Mutex::new(0usize);
        std::thread::scope(|scope| {
            for _ in 0..cfg.memory.workers.min(tasks.len()).max(1) {
                scope.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("queue lock");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    let Some(task) = tasks.get(i) else { break };
                    let mut council = Council::with_profiles(members.clone(), profiles.clone())
                        .expect("validated council");
                    let mut events = Vec::new();
                    let r = row(i, task, &mut council, &mut events);
                    *slots[i].lock().expect("slot lock") = Some((r, events));
                });
            }
        });
        for slot in slots {
            let (r, events) = slot
                .into_inner()
                .expect("slot lock")
                .expect("every task ran");
            events.into_iter().for_each(|e| trace.record(e));
            rows.push(r);
        }
        final_profiles = profiles;
    }
    Ok(RunOutput {
        metrics: RunMetrics::new(rows, gateway.usage()),
        profiles: final_profiles,
    })
}

/// A full run as configured: reads tasks, writes metrics, trace and memory.
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let env = build_environment(&cfg.environment)?;
    let gateway = Arc::new(Gateway::from_config(&cfg.backends));
    let members = build_members(cfg, &env, &gateway)?;
    let tasks = tasks_for(cfg, seed)?;

    let out = match &cfg.output.trace {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut sink = JsonlTrace::new(BufWriter::new(file));
            let out = execute(cfg, seed, &tasks, &env, members, &gateway, &mut sink)?;
            sink.finish()
                .with_context(|| format!("cannot write {}", path.display()))?;
            out
        }
        None => execute(cfg, seed, &tasks, &env, members, &gateway, &mut NoTrace)?,
    };
    out.metrics.check().map_err(anyhow::Error::msg)?;
    if let Some(path) = &cfg.output.metrics {
        out.metrics.write(path)?;
    }
    if let Some(path) = &cfg.memory.save {
        save_memory(path, &out.profiles)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    CouncilSize,
    Routing,
    ValueSignal,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "council-size" => Ok(Axis::CouncilSize),
            "routing" => Ok(Axis::Routing),
            "value-signal" => Ok(Axis::ValueSignal),
            _ => Err(format!(
                "unknown axis '{s}' (council-size, routing, value-signal)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
}

/// The variants of one axis, in table order.
pub fn variants(cfg: &RunConfig, axis: Axis) -> Vec<Variant> {
    match axis {
        Axis::Routing => RoutingStrategy::ALL
            .into_iter()
            .map(|s| {
                let mut c = cfg.clone();
                c.routing.strategy = s;
                Variant {
                    label: s.name().into(),
                    config: c,
                }
            })
            .collect(),
        Axis::ValueSignal => ValueMode::ALL
            .into_iter()
            .map(|m| {
                let mut c = cfg.clone();
                c.value.mode = m;
                Variant {
                    label: m.name().into(),
                    config: c,
                }
            })
            .collect(),
        Axis::CouncilSize => {
            let experts = &cfg.council.experts;
            let n = experts.len();
            let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
            // by size, then in configuration order
            masks.sort_by_key(|m| {
                (
                    m.count_ones(),
                    (0..n).filter(|i| m & (1 << i) != 0).collect::<Vec<_>>(),
                )
            });
            masks
                .into_iter()
                .map(|mask| {
                    let picked: Vec<ExpertSpec> = experts
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, e)| e.clone())
                        .collect();
                    let label = picked
                        .iter()
                        .map(ExpertSpec::id)
                        .collect::<Vec<_>>()
                        .join("+");
                    let mut c = cfg.clone();
                    c.council.experts = picked;
                    if c.routing.aggregator >= c.council.experts.len() {
                        c.routing.aggregator = 0;
                    }
                    Variant { label, config: c }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub success_rates: Vec<Option<f64>>,
    /// Mean over seeds of each seed's success rate.
    pub mean_success_rate: Option<f64>,
    /// Expanded nodes per solved task, pooled over seeds.
    pub nodes_per_success: Option<f64>,
    pub mean_max_depth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: Axis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let width = self
            .rows
            .iter()
            .map(|r| r.variant.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>10}  {:>9}  per-seed success\n",
            "variant", "success", "nodes/succ", "max depth"
        );
        for r in &self.rows {
            let per: Vec<String> = r.success_rates.iter().map(|v| fmt(*v)).collect();
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>10}  {:>9}  {}",
                r.variant,
                fmt(r.mean_success_rate),
                fmt(r.nodes_per_success),
                fmt(r.mean_max_depth),
                per.join(" ")
            );
        }
        out
    }
}

/// Runs every variant of `axis` on every seed, each with fresh memory (or
/// the configured memory file), in parallel.
pub fn ablation(cfg: &RunConfig, axis: Axis, seeds: &[u64]) -> anyhow::Result<AblationTable> {
    if seeds.is_empty() {
        bail!("an ablation needs at least one seed");
    }
    let variants = variants(cfg, axis);
    for v in &variants {
        let mut c = v.config.clone();
        c.seed = Some(seeds[0]);
        c.validate()
            .with_context(|| format!("variant {}", v.label))?;
    }
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<Mutex<Option<anyhow::Result<RunMetrics>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = {
                    let mut n = next.lock().expect("queue lock");
                    let j = *n;
                    *n += 1;
                    j
                };
                let Some(&(v, seed)) = jobs.get(j) else { break };
                let result = (|| {
                    let mut c = variants[v].config.clone();
                    c.seed = Some(seed);
                    let env = build_environment(&c.environment)?;
                    let gateway = Arc::new(Gateway::from_config(&c.backends));
                    let members = build_members(&c, &env, &gateway)?;
                    let tasks = tasks_for(&c, seed)?;
                    Ok(execute(&c, seed, &tasks, &env, members, &gateway, &mut NoTrace)?.metrics)
                })();
                *results[j].lock().expect("result lock") = Some(result);
            });
        }
    });

    let mut by_variant: BTreeMap<usize, Vec<(u64, RunMetrics)>> = BTreeMap::new();
    for ((v, seed), r) in jobs.into_iter().zip(results) {
        let metrics = r
            .into_inner()
            .expect("result lock")
            .expect("every job ran")?;
        by_variant.entry(v).or_default().push((seed, metrics));
    }
    let rows = by_variant
        .into_iter()
        .map(|(v, runs)| {
            let rates: Vec<Option<f64>> =
                runs.iter().map(|(_, m)| m.summary.success_rate).collect();
            let known: Vec<f64> = rates.iter().flatten().copied().collect();
            let successes: usize = runs.iter().map(|(_, m)| m.summary.successes).sum();
            let success_nodes: usize = runs
                .iter()
                .flat_map(|(_, m)| m.rows.iter())
                .filter(|r| !r.warmup && r.success)
                .map(|r| r.nodes_expanded)
                .sum();
            let scored: Vec<&TaskRow> = runs
                .iter()
                .flat_map(|(_, m)| m.rows.iter())
                .filter(|r| !r.warmup)
                .collect();
            AblationRow {
                variant: variants[v].label.clone(),
                seeds: runs.iter().map(|(s, _)| *s).collect(),
                mean_success_rate: (!known.is_empty())
                    .then(|| known.iter().sum::<f64>() / known.len() as f64),
                success_rates: rates,
                nodes_per_success: (successes > 0).then(|| success_nodes as f64 / successes as f64),
                mean_max_depth: (!scored.is_empty()).then(|| {
                    scored
                        .iter()
                        .map(|r| r.max_depth_reached as f64)
                        .sum::<f64>()
                        / scored.len() as f64
                }),
            }
        })
        .collect();
    Ok(AblationTable { axis, rows })
}
