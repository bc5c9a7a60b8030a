//! Planning with a council of expert policies.
//!
//! Each expert keeps a profile of *success memory segments*: prefixes of
//! trajectories that ended in success. At every decision point the council
//! is routed by softmax over each profile's best-match similarity, the
//! chosen expert proposes candidate actions (optionally guided by its most
//! similar stored segment), and every candidate child is valued by fusing a
//! sampled expert's plausibility judgment with the retrieval utility of the
//! matched memory. Fused values drive a UCT tree search whose depth adapts
//! to how confidently the signals separate siblings.
//!
//! The crate is `#![no_std]` and needs only `alloc`. Environments are
//! replay-based: the state of any node is rebuilt by re-applying its action
//! history, so the planner never holds mutable environment handles. File
//! formats, LLM backends and the command line live in the companion
//! `council-harness` crate.

#![no_std]

extern crate alloc;

pub mod embedding;
pub mod env;
pub mod error;
pub mod expert;
pub mod mcts;
pub mod memory;
pub mod planner;
pub mod prompt;
pub mod routing;
pub mod trace;
pub mod trajectory;
pub mod value;

mod util;

pub use embedding::{cosine_similarity, Embedder, EmbeddingVector, HashedTrigramEmbedder};
pub use env::{Environment, Payload, StepOutcome, TaskSpec};
pub use error::{Error, Result};
pub use expert::{
    ActionProposal, Council, Expert, ExpertDescriptor, ExpertError, ExpertId, ExpertKind,
};
pub use memory::{EpisodeId, EpisodeRecord, ExpertProfile, LedgerEntry, SegmentId, SmSegment};
pub use planner::{search, PlanResult, SearchConfig};
pub use routing::{RoutingDecision, RoutingDistribution, RoutingScores, RoutingStrategy};
pub use trajectory::{Action, DecisionContext, Observation, Step, Trajectory};
pub use value::{ValueMode, ValueSignals};
