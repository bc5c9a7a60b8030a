use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use council_core::env::{game24_oracle, Game24, SyntheticConfig, SyntheticEnv};
use council_core::{HashedTrigramEmbedder, Payload, RoutingStrategy, ValueMode};
use council_harness::memory_io::{load_memory, save_memory};
use council_harness::runner::{ablation, run, Axis};
use council_harness::tasks::{read_tasks, write_tasks};
use council_harness::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "council",
    version,
    about = "Plan tasks with a routed council of experts and success memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan every task of the configured task file.
    Run(RunArgs),
    /// Compare the variants of one axis across seeds.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// council-size, routing or value-signal
        #[arg(long)]
        axis: Axis,
        /// Comma-separated seeds; defaults to the run seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check Game of 24 tasks for solvability by exhaustive search.
    Oracle {
        #[arg(long)]
        tasks: PathBuf,
    },
    /// Inspect, load or produce memory files.
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Write a seeded task file.
    GenTasks {
        /// game24 or synthetic
        #[arg(long)]
        env: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Game of 24 only: keep solvable draws.
        #[arg(long)]
        solvable_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum MemoryCommand {
    /// Per-expert segment counts and utilities.
    Inspect {
        file: PathBuf,
        /// Print every segment.
        #[arg(long)]
        segments: bool,
    },
    /// Check that a memory file loads against a configured council.
    Load {
        file: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured tasks and save the memory they produce.
    Save {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its keys.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    environment: Option<String>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    routing: Option<RoutingStrategy>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    value_mode: Option<ValueMode>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    expansion_width: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    exploration: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    cold_start: Option<f64>,
    #[arg(long)]
    memory_load: Option<PathBuf>,
    #[arg(long)]
    memory_save: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            environment: self.environment.clone(),
            tasks: self.tasks.clone(),
            warmup: self.warmup,
            strategy: self.routing,
            temperature: self.temperature,
            value_mode: self.value_mode,
            budget: self.budget,
            expansion_width: self.expansion_width,
            max_depth: self.max_depth,
            exploration: self.exploration,
            capacity: self.capacity,
            cold_start: self.cold_start,
            memory_load: self.memory_load.clone(),
            memory_save: self.memory_save.clone(),
            metrics: self.metrics.clone(),
            trace: self.trace.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(out: &council_harness::runner::RunOutput) {
    let s = &out.metrics.summary;
    let f = |v: Option<f64>| v.map_or("null".to_string(), |v| format!("{v:.4}"));
    println!(
        "tasks {}  successes {}  success_rate {}  mean_reward {}  mean_expanded_nodes {}  mean_reasoning_steps {}  errors {}",
        s.tasks,
        s.successes,
        f(s.success_rate),
        f(s.mean_reward),
        f(s.mean_expanded_nodes),
        f(s.mean_reasoning_steps),
        s.errors
    );
    for (id, u) in &s.backend_usage {
        println!("backend {id}: {} requests, {} tokens", u.requests, u.tokens);
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let out = run(&args.config()?)?;
            print_summary(&out);
        }
        Command::Ablation {
            run,
            axis,
            seeds,
            out,
        } => {
            let cfg = run.config()?;
            let seeds = if seeds.is_empty() {
                vec![cfg.seed()?]
            } else {
                seeds
            };
            let table = ablation(&cfg, axis, &seeds)?;
            print!("{}", table.render());
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&table)? + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
        }
        Command::Oracle { tasks } => {
            let tasks = read_tasks(&tasks)?;
            let mut solvable = 0;
            for t in &tasks {
                let Payload::Numbers(n) = &t.payload else {
                    bail!("task {} is not a Game of 24 task", t.task_id);
                };
                let r = game24_oracle(n)?;
                solvable += usize::from(r.solvable);
                match r.expression {
                    Some(e) => println!("{}\tsolvable\t{e}", t.task_id),
                    None => println!("{}\tunsolvable", t.task_id),
                }
            }
            println!("{solvable} of {} solvable", tasks.len());
        }
        Command::Memory(MemoryCommand::Inspect { file, segments }) => {
            let profiles = load_memory(&file, &HashedTrigramEmbedder::default(), usize::MAX, 0.5)?;
            let total: usize = profiles.iter().map(|p| p.len()).sum();
            println!("{total} segments in {} profiles", profiles.len());
            for p in &profiles {
                let mean = p.segments().map(|s| s.utility()).sum::<f64>() / p.len().max(1) as f64;
                println!(
                    "{}: {} segments, mean utility {mean:.3}",
                    p.expert_id(),
                    p.len()
                );
                if segments {
                    for s in p.segments() {
                        let last = s
                            .prefix()
                            .steps()
                            .last()
                            .map_or("", |st| st.action.as_str());
                        println!(
                            "  #{} depth {} utility {:.3} retrievals {} last action {last}",
                            s.id().0,
                            s.prefix().depth(),
                            s.utility(),
                            s.ledger().len()
                        );
                    }
                }
            }
        }
        Command::Memory(MemoryCommand::Load { file, config }) => {
            let cfg = RunConfig::load(&config)?;
            let embedder = HashedTrigramEmbedder::new(cfg.memory.embedding_dim)?;
            let profiles =
                load_memory(&file, &embedder, cfg.memory.capacity, cfg.memory.cold_start)?;
            for p in &profiles {
                if !cfg
                    .council
                    .experts
                    .iter()
                    .any(|e| e.id() == p.expert_id().as_str())
                {
                    bail!(
                        "{}: profile for {} matches no configured expert",
                        file.display(),
                        p.expert_id()
                    );
                }
            }
            let total: usize = profiles.iter().map(|p| p.len()).sum();
            println!("{total} segments loaded");
        }
        Command::Memory(MemoryCommand::Save { run: args, out }) => {
            let cfg = args.config()?;
            let result = run(&cfg)?;
            let n = save_memory(&out, &result.profiles)?;
            print_summary(&result);
            println!("{n} segments saved to {}", out.display());
        }
        Command::GenTasks {
            env,
            count,
            seed,
            solvable_only,
            out,
        } => {
            let tasks = match env.as_str() {
                "game24" => Game24.generate_tasks(count, seed, solvable_only),
                "synthetic" => {
                    SyntheticEnv::new(SyntheticConfig::default())?.generate_tasks(count, seed)
                }
                other => bail!("unknown environment '{other}'"),
            };
            write_tasks(&out, &tasks)?;
            println!("{} tasks written to {}", tasks.len(), out.display());
        }
    }
    Ok(())
}
