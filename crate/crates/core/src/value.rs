//! Dual-signal valuation of sibling nodes.
//!
//! Every child of an expansion gets two raw scores: a plausibility judgment
//! from a randomly sampled council member and the utility of the routed
//! expert's best-matching memory segment. Both lists are min-max normalized
//! over the siblings and mixed with a weight proportional to each signal's
//! spread, so the signal that separates the siblings more gets more say.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::expert::{evaluate_plausibility, Council, ExpertId};
use crate::memory::{EpisodeId, ExpertProfile, Retrieval, SegmentId, COLD_START_UTILITY};
use crate::trajectory::DecisionContext;
use crate::util::population_std;

/// Which signals value a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    /// Both signals with variance-based weighting.
    Full,
    LlmOnly,
    SmsOnly,
    /// No per-node signal; terminal rewards of greedy rollouts only.
    EnvOnly,
}

impl ValueMode {
    pub const ALL: [ValueMode; 4] = [
        ValueMode::Full,
        ValueMode::LlmOnly,
        ValueMode::SmsOnly,
        ValueMode::EnvOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ValueMode::Full => "full",
            ValueMode::LlmOnly => "llm-only",
            ValueMode::SmsOnly => "sms-only",
            ValueMode::EnvOnly => "env-only",
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, ValueMode::Full | ValueMode::LlmOnly)
    }

    pub fn uses_sms(self) -> bool {
        matches!(self, ValueMode::Full | ValueMode::SmsOnly)
    }
}

impl fmt::Display for ValueMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValueMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown value mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSignals {
    pub v_llm: f64,
    pub v_sms: f64,
    pub evaluator_expert: Option<ExpertId>,
    pub matched_segment: Option<SegmentId>,
}

impl ValueSignals {
    pub fn neutral() -> Self {
        Self {
            v_llm: COLD_START_UTILITY,
            v_sms: COLD_START_UTILITY,
            evaluator_expert: None,
            matched_segment: None,
        }
    }
}

/// Min-max normalization; an all-equal list maps to 0.5 everywhere.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span.is_nan() || span <= 0.0 {
        return alloc::vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - min) / span).clamp(0.0, 1.0))
        .collect()
}

/// `σ_llm / (σ_llm + σ_sms)`, or 0.5 when both are zero.
pub fn fusion_weight(sigma_llm: f64, sigma_sms: f64) -> Result<f64> {
    if !(sigma_llm >= 0.0 && sigma_sms >= 0.0) || !sigma_llm.is_finite() || !sigma_sms.is_finite() {
        return Err(Error::input(format!(
            "spreads must be finite and non-negative, got {sigma_llm} and {sigma_sms}"
        )));
    }
    let total = sigma_llm + sigma_sms;
    Ok(if total > 0.0 { sigma_llm / total } else { 0.5 })
}

/// The fused values of one sibling set with everything that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFusion {
    pub sigma_llm: f64,
    pub sigma_sms: f64,
    pub alpha: f64,
    pub llm_normalized: Vec<f64>,
    pub sms_normalized: Vec<f64>,
    pub q: Vec<f64>,
}

/// Fuses the signals of a complete sibling set.
pub fn fuse_batch(children: &[ValueSignals]) -> Result<BatchFusion> {
    fuse_with_mode(children, ValueMode::Full)
}

/// Like [`fuse_batch`], with the weight pinned to 1 for `LlmOnly` and 0 for
/// `SmsOnly`. `EnvOnly` carries no node signal and yields 0.5 everywhere.
pub fn fuse_with_mode(children: &[ValueSignals], mode: ValueMode) -> Result<BatchFusion> {
    if children.is_empty() {
        return Err(Error::input("cannot fuse an empty sibling set"));
    }
    let llm: Vec<f64> = children.iter().map(|c| c.v_llm).collect();
    let sms: Vec<f64> = children.iter().map(|c| c.v_sms).collect();
    if llm.iter().chain(&sms).any(|v| !v.is_finite()) {
        return Err(Error::input("value signals must be finite"));
    }
    let sigma_llm = population_std(&llm);
    let sigma_sms = population_std(&sms);
    let alpha = match mode {
        ValueMode::Full => fusion_weight(sigma_llm, sigma_sms)?,
        ValueMode::LlmOnly => 1.0,
        ValueMode::SmsOnly => 0.0,
        ValueMode::EnvOnly => 0.5,
    };
    let (llm_normalized, sms_normalized) = if mode == ValueMode::EnvOnly {
        (alloc::vec![0.5; llm.len()], alloc::vec![0.5; sms.len()])
    } else {
        (normalize(&llm), normalize(&sms))
    };
    let q = llm_normalized
        .iter()
        .zip(&sms_normalized)
        .map(|(l, s)| (alpha * l + (1.0 - alpha) * s).clamp(0.0, 1.0))
        .collect();
    Ok(BatchFusion {
        sigma_llm,
        sigma_sms,
        alpha,
        llm_normalized,
        sms_normalized,
        q,
    })
}

/// Plausibility from a uniformly sampled council member.
pub fn llm_value(
    council: &Council,
    task: &TaskSpec,
    context: &DecisionContext,
    rng: &mut dyn RngCore,
) -> (f64, ExpertId) {
    let idx = rng.random_range(0..council.len());
    let seed = rng.next_u64();
    let member = council.member(idx);
    (
        evaluate_plausibility(member, task, context, seed),
        member.id().clone(),
    )
}

/// Utility of the best match in `profile`, recording the retrieval.
/// An empty profile yields its cold-start prior and no match.
pub fn sms_value(
    profile: &mut ExpertProfile,
    query: &EmbeddingVector,
    episode: EpisodeId,
) -> Result<(f64, Option<Retrieval>)> {
    let Some((seg, _)) = profile.best_match(query)? else {
        return Ok((profile.cold_start(), None));
    };
    let (id, utility) = (seg.id(), profile.utility_of(seg));
    let usage_count = profile.record_retrieval(id, episode)?;
    Ok((
        utility,
        Some(Retrieval {
            expert_id: profile.expert_id().clone(),
            segment_id: id,
            usage_count,
        }),
    ))
}
