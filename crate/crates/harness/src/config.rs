//! Run configuration: a TOML file supplies defaults, command-line flags
//! override individual keys.

use std::path::{Path, PathBuf};

use council_core::env::SyntheticConfig;
use council_core::expert::OffFamily;
use council_core::prompt::PromptTemplates;
use council_core::{RoutingStrategy, ValueMode};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required; there is deliberately no default.
    pub seed: Option<u64>,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub council: CouncilConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub value: ValueConfig,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub prompts: PromptTemplates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    /// `game24` or `synthetic`.
    pub name: String,
    /// Task file, one JSON task per line.
    pub tasks: Option<PathBuf>,
    /// Generate tasks from the run seed instead of reading a file.
    pub generate: Option<GenerateConfig>,
    /// Leading tasks that only warm memory and are left out of the summary.
    pub warmup: usize,
    /// Overrides the environment's own success threshold.
    pub success_threshold: Option<f64>,
    pub synthetic: SyntheticConfig,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            name: "game24".into(),
            tasks: None,
            generate: None,
            warmup: 0,
            success_threshold: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
    #[serde(default)]
    pub solvable_only: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouncilConfig {
    #[serde(default)]
    pub experts: Vec<ExpertSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExpertSpec {
    /// Oracle-backed scripted expert, optionally restricted to one family.
    Specialist {
        id: String,
        family: Option<String>,
        #[serde(default)]
        distractors: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default = "own_vocabulary")]
        off_family: OffFamily,
    },
    UniformRandom {
        id: String,
    },
    Constant {
        id: String,
        score: f64,
    },
    Llm {
        id: String,
        backend: String,
        #[serde(default = "act_temperature")]
        act_temperature: f64,
        #[serde(default)]
        eval_temperature: f64,
        #[serde(default = "max_tokens")]
        max_tokens: u32,
    },
}

fn own_vocabulary() -> OffFamily {
    OffFamily::OwnVocabulary
}

fn act_temperature() -> f64 {
    0.7
}

fn max_tokens() -> u32 {
    256
}

impl ExpertSpec {
    pub fn id(&self) -> &str {
        match self {
            ExpertSpec::Specialist { id, .. }
            | ExpertSpec::UniformRandom { id }
            | ExpertSpec::Constant { id, .. }
            | ExpertSpec::Llm { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub strategy: RoutingStrategy,
    pub temperature: f64,
    /// Council index of the member that merges pooled proposals.
    pub aggregator: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        let d = council_core::routing::RouterConfig::default();
        Self {
            strategy: d.strategy,
            temperature: d.temperature,
            aggregator: d.aggregator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueConfig {
    pub mode: ValueMode,
}

impl Default for ValueConfig {
    fn default() -> Self {
        Self {
            mode: ValueMode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub budget: usize,
    pub expansion_width: usize,
    pub max_depth: usize,
    pub exploration: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = council_core::SearchConfig::default();
        Self {
            budget: d.budget,
            expansion_width: d.expansion_width,
            max_depth: d.max_depth,
            exploration: d.exploration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub cold_start: f64,
    pub embedding_dim: usize,
    /// Memory file to start from. Without it every run starts empty.
    pub load: Option<PathBuf>,
    /// Where to write memory when the run ends.
    pub save: Option<PathBuf>,
    /// Share memory across the tasks of a run. When off, every task starts
    /// from the loaded (or empty) memory and tasks may run in parallel.
    pub shared: bool,
    /// Parallel tasks; only allowed with `shared = false`.
    pub workers: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            capacity: council_core::memory::DEFAULT_CAPACITY,
            cold_start: council_core::memory::COLD_START_UTILITY,
            embedding_dim: council_core::embedding::DEFAULT_EMBEDDING_DIM,
            load: None,
            save: None,
            shared: true,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub metrics: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// An OpenAI-compatible chat endpoint. The credential itself never appears
/// in configuration, only the name of the variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_id: String,
    /// Base address, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    pub credential_env: Option<String>,
    #[serde(default = "request_cap")]
    pub request_cap: usize,
    #[serde(default = "timeout_secs")]
    pub timeout_secs: u64,
}

fn request_cap() -> usize {
    4
}

fn timeout_secs() -> u64 {
    60
}

/// Command-line overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub environment: Option<String>,
    pub tasks: Option<PathBuf>,
    pub warmup: Option<usize>,
    pub strategy: Option<RoutingStrategy>,
    pub temperature: Option<f64>,
    pub value_mode: Option<ValueMode>,
    pub budget: Option<usize>,
    pub expansion_width: Option<usize>,
    pub max_depth: Option<usize>,
    pub exploration: Option<f64>,
    pub capacity: Option<usize>,
    pub cold_start: Option<f64>,
    pub memory_load: Option<PathBuf>,
    pub memory_save: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set_opt(&mut self.seed, &o.seed);
        set(&mut self.environment.name, &o.environment);
        if o.tasks.is_some() {
            self.environment.tasks = o.tasks.clone();
            self.environment.generate = None;
        }
        set(&mut self.environment.warmup, &o.warmup);
        set(&mut self.routing.strategy, &o.strategy);
        set(&mut self.routing.temperature, &o.temperature);
        set(&mut self.value.mode, &o.value_mode);
        set(&mut self.search.budget, &o.budget);
        set(&mut self.search.expansion_width, &o.expansion_width);
        set(&mut self.search.max_depth, &o.max_depth);
        set(&mut self.search.exploration, &o.exploration);
        set(&mut self.memory.capacity, &o.capacity);
        set(&mut self.memory.cold_start, &o.cold_start);
        set_opt(&mut self.memory.load, &o.memory_load);
        set_opt(&mut self.memory.save, &o.memory_save);
        set_opt(&mut self.output.metrics, &o.metrics);
        set_opt(&mut self.output.trace, &o.trace);
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError::key("seed", "is required for reproducibility"))
    }

    /// Range checks; each failure names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.seed()?;
        let env = &self.environment;
        if !matches!(env.name.as_str(), "game24" | "synthetic") {
            return Err(ConfigError::key(
                "environment.name",
                format!("unknown environment '{}'", env.name),
            ));
        }
        match (&env.tasks, &env.generate) {
            (None, None) => {
                return Err(ConfigError::key(
                    "environment.tasks",
                    "give a task file or an [environment.generate] table",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::key(
                    "environment.generate",
                    "cannot be combined with environment.tasks",
                ))
            }
            _ => {}
        }
        if let Some(t) = env.success_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::key(
                    "environment.success_threshold",
                    "must lie in [0, 1]",
                ));
            }
        }
        let s = &env.synthetic;
        if s.length == 0 || s.miss_budget == 0 || s.vocabulary == 0 || s.families.is_empty() {
            return Err(ConfigError::key(
                "environment.synthetic",
                "length, miss_budget and vocabulary must be positive and families non-empty",
            ));
        }

        if self.council.experts.is_empty() {
            return Err(ConfigError::key(
                "council.experts",
                "must list at least one expert",
            ));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, e) in self.council.experts.iter().enumerate() {
            let key = |field: &str| format!("council.experts[{i}].{field}");
            if e.id().trim().is_empty() {
                return Err(ConfigError::key(&key("id"), "must not be empty"));
            }
            if !ids.insert(e.id()) {
                return Err(ConfigError::key(
                    &key("id"),
                    format!("duplicate expert id '{}'", e.id()),
                ));
            }
            match e {
                ExpertSpec::Specialist { noise, family, .. } => {
                    if !(noise.is_finite() && *noise >= 0.0) {
                        return Err(ConfigError::key(
                            &key("noise"),
                            "must be a non-negative number",
                        ));
                    }
                    if let Some(f) = family {
                        if env.name == "synthetic" && !s.families.contains(f) {
                            return Err(ConfigError::key(
                                &key("family"),
                                format!("unknown family '{f}'"),
                            ));
                        }
                    }
                }
                ExpertSpec::Constant { score, .. } => {
                    if !(0.0..=1.0).contains(score) {
                        return Err(ConfigError::key(&key("score"), "must lie in [0, 1]"));
                    }
                }
                ExpertSpec::Llm {
                    backend,
                    act_temperature,
                    eval_temperature,
                    ..
                } => {
                    if !self.backends.iter().any(|b| &b.backend_id == backend) {
                        return Err(ConfigError::key(
                            &key("backend"),
                            format!("no backend '{backend}' is configured"),
                        ));
                    }
                    if !(*act_temperature >= 0.0 && *eval_temperature >= 0.0) {
                        return Err(ConfigError::key(
                            &key("act_temperature"),
                            "temperatures must be non-negative",
                        ));
                    }
                }
                ExpertSpec::UniformRandom { .. } => {}
            }
        }

        let r = &self.routing;
        if !(r.temperature > 0.0 && r.temperature.is_finite()) {
            return Err(ConfigError::key(
                "routing.temperature",
                "must be a positive number",
            ));
        }
        if r.aggregator >= self.council.experts.len() {
            return Err(ConfigError::key(
                "routing.aggregator",
                "must index a council member",
            ));
        }
        let sc = &self.search;
        for (k, v) in [
            ("search.budget", sc.budget),
            ("search.expansion_width", sc.expansion_width),
            ("search.max_depth", sc.max_depth),
        ] {
            if v == 0 {
                return Err(ConfigError::key(k, "must be at least 1"));
            }
        }
        if !(sc.exploration >= 0.0 && sc.exploration.is_finite()) {
            return Err(ConfigError::key(
                "search.exploration",
                "must be a non-negative number",
            ));
        }
        let m = &self.memory;
        if m.capacity == 0 {
            return Err(ConfigError::key("memory.capacity", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&m.cold_start) {
            return Err(ConfigError::key("memory.cold_start", "must lie in [0, 1]"));
        }
        if m.embedding_dim == 0 {
            return Err(ConfigError::key(
                "memory.embedding_dim",
                "must be at least 1",
            ));
        }
        if m.workers == 0 {
            return Err(ConfigError::key("memory.workers", "must be at least 1"));
        }
        if m.workers > 1 && m.shared {
            return Err(ConfigError::key(
                "memory.workers",
                "parallel tasks need memory.shared = false",
            ));
        }
        let mut backend_ids = std::collections::BTreeSet::new();
        for (i, b) in self.backends.iter().enumerate() {
            if !backend_ids.insert(&b.backend_id) {
                return Err(ConfigError::key(
                    &format!("backends[{i}].backend_id"),
                    "duplicate backend id",
                ));
            }
            if b.request_cap == 0 {
                return Err(ConfigError::key(
                    &format!("backends[{i}].request_cap"),
                    "must be at least 1",
                ));
            }
            if b.timeout_secs == 0 {
                return Err(ConfigError::key(
                    &format!("backends[{i}].timeout_secs"),
                    "must be at least 1",
                ));
            }
        }
        Ok(())
    }

    pub fn search_config(&self) -> council_core::SearchConfig {
        council_core::SearchConfig {
            budget: self.search.budget,
            max_depth: self.search.max_depth,
            expansion_width: self.search.expansion_width,
            exploration: self.search.exploration,
            router: council_core::routing::RouterConfig {
                strategy: self.routing.strategy,
                temperature: self.routing.temperature,
                aggregator: self.routing.aggregator,
            },
            value_mode: self.value.mode,
        }
    }
}
