//! Per-expert success memory.
//!
//! A profile stores prefixes of successful trajectories (segments) together
//! with a retrieval ledger. The ledger records, per episode, how often the
//! segment was matched and whether that episode succeeded; the segment's
//! utility is the usage-weighted success rate over finalized episodes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::expert::ExpertId;
use crate::trajectory::{decompose_prefixes, Trajectory};

/// Utility of a segment that has no finalized retrievals yet.
pub const COLD_START_UTILITY: f64 = 0.5;
pub const DEFAULT_CAPACITY: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpisodeId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub episode_id: EpisodeId,
    pub usage_count: u32,
    pub outcome: Option<bool>,
}

/// The persisted part of a segment: everything except the embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment_id: SegmentId,
    pub prefix: Trajectory,
    pub created_at: u64,
    pub ledger: Vec<LedgerEntry>,
}

#[derive(Debug, Clone)]
pub struct SmSegment {
    pub record: SegmentRecord,
    pub embedding: EmbeddingVector,
}

impl SmSegment {
    pub fn id(&self) -> SegmentId {
        self.record.segment_id
    }

    pub fn prefix(&self) -> &Trajectory {
        &self.record.prefix
    }

    pub fn created_at(&self) -> u64 {
        self.record.created_at
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.record.ledger
    }

    pub fn utility(&self) -> f64 {
        sms_utility(&self.record.ledger)
    }
}

/// `Σ y·u / Σ u` over entries whose outcome is known; [`COLD_START_UTILITY`]
/// when none are.
pub fn sms_utility(ledger: &[LedgerEntry]) -> f64 {
    sms_utility_with_prior(ledger, COLD_START_UTILITY)
}

/// [`sms_utility`] with a caller-chosen value for segments without outcomes.
pub fn sms_utility_with_prior(ledger: &[LedgerEntry], prior: f64) -> f64 {
    let (mut hits, mut total) = (0u64, 0u64);
    for entry in ledger {
        if let Some(outcome) = entry.outcome {
            total += u64::from(entry.usage_count);
            if outcome {
                hits += u64::from(entry.usage_count);
            }
        }
    }
    if total == 0 {
        prior
    } else {
        hits as f64 / total as f64
    }
}

/// One expert's capacity-bounded segment store.
#[derive(Debug, Clone)]
pub struct ExpertProfile {
    expert_id: ExpertId,
    capacity: usize,
    segments: BTreeMap<SegmentId, SmSegment>,
    by_text: BTreeMap<String, SegmentId>,
    next_counter: u64,
    cold_start: f64,
}

impl ExpertProfile {
    pub fn new(expert_id: ExpertId, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::input("profile capacity must be positive"));
        }
        Ok(Self {
            expert_id,
            capacity,
            segments: BTreeMap::new(),
            by_text: BTreeMap::new(),
            next_counter: 0,
            cold_start: COLD_START_UTILITY,
        })
    }

    /// Sets the utility of segments without finalized retrievals, and the
    /// memory value reported when the profile is empty.
    pub fn with_cold_start(mut self, prior: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::input(format!(
                "cold-start prior {prior} outside [0, 1]"
            )));
        }
        self.cold_start = prior;
        Ok(self)
    }

    pub fn cold_start(&self) -> f64 {
        self.cold_start
    }

    pub fn utility_of(&self, segment: &SmSegment) -> f64 {
        sms_utility_with_prior(segment.ledger(), self.cold_start)
    }

    /// Rebuilds a profile from persisted records, recomputing embeddings.
    pub fn restore(
        expert_id: ExpertId,
        capacity: usize,
        records: Vec<SegmentRecord>,
        embedder: &dyn Embedder,
    ) -> Result<Self> {
        let mut profile = Self::new(expert_id, capacity)?;
        for record in records {
            let text = record.prefix.serialize();
            if profile.segments.contains_key(&record.segment_id)
                || profile.by_text.contains_key(&text)
            {
                return Err(Error::input(format!(
                    "duplicate segment {} in profile {}",
                    record.segment_id.0, profile.expert_id
                )));
            }
            let mut seen = BTreeMap::new();
            for entry in &record.ledger {
                if seen.insert(entry.episode_id, ()).is_some() {
                    return Err(Error::input(format!(
                        "segment {} lists episode {} twice",
                        record.segment_id.0, entry.episode_id.0
                    )));
                }
            }
            let embedding = embedder.embed(&text)?;
            profile.next_counter = profile
                .next_counter
                .max(record.created_at + 1)
                .max(record.segment_id.0 + 1);
            profile.by_text.insert(text, record.segment_id);
            profile
                .segments
                .insert(record.segment_id, SmSegment { record, embedding });
        }
        Ok(profile)
    }

    pub fn expert_id(&self) -> &ExpertId {
        &self.expert_id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments in creation order.
    pub fn segments(&self) -> impl Iterator<Item = &SmSegment> {
        self.segments.values()
    }

    pub fn get(&self, id: SegmentId) -> Option<&SmSegment> {
        self.segments.get(&id)
    }

    pub fn find_by_prefix(&self, prefix: &Trajectory) -> Option<&SmSegment> {
        self.by_text
            .get(&prefix.serialize())
            .and_then(|id| self.segments.get(id))
    }

    /// Stores a prefix. A prefix already present merges into the existing
    /// segment; the flag reports whether a new segment was created.
    pub fn insert(
        &mut self,
        prefix: Trajectory,
        embedder: &dyn Embedder,
    ) -> Result<(SegmentId, bool)> {
        let text = prefix.serialize();
        if let Some(&id) = self.by_text.get(&text) {
            return Ok((id, false));
        }
        let embedding = embedder.embed(&text)?;
        let counter = self.next_counter;
        self.next_counter += 1;
        let id = SegmentId(counter);
        let record = SegmentRecord {
            segment_id: id,
            prefix,
            created_at: counter,
            ledger: Vec::new(),
        };
        self.by_text.insert(text, id);
        self.segments.insert(id, SmSegment { record, embedding });
        Ok((id, true))
    }

    /// The most similar segment. Exact score ties go to the higher utility,
    /// then to the older segment.
    pub fn best_match(&self, query: &EmbeddingVector) -> Result<Option<(&SmSegment, f64)>> {
        let mut best: Option<(&SmSegment, f64)> = None;
        for seg in self.segments.values() {
            let score = cosine_similarity(query, &seg.embedding)?;
            let better = match best {
                None => true,
                Some((cur, cur_score)) => {
                    score > cur_score
                        || (score == cur_score && {
                            let (u, cu) = (self.utility_of(seg), self.utility_of(cur));
                            u > cu || (u == cu && seg.created_at() < cur.created_at())
                        })
                }
            };
            if better {
                best = Some((seg, score));
            }
        }
        Ok(best)
    }

    /// Counts one more use of a segment by an episode. Returns the new count.
    pub fn record_retrieval(&mut self, segment: SegmentId, episode: EpisodeId) -> Result<u32> {
        let seg = self
            .segments
            .get_mut(&segment)
            .ok_or_else(|| Error::UnknownSegment {
                expert: String::from(self.expert_id.as_str()),
                segment: segment.0,
            })?;
        let ledger = &mut seg.record.ledger;
        match ledger.iter_mut().find(|e| e.episode_id == episode) {
            Some(entry) => {
                entry.usage_count += 1;
                Ok(entry.usage_count)
            }
            None => {
                ledger.push(LedgerEntry {
                    episode_id: episode,
                    usage_count: 1,
                    outcome: None,
                });
                Ok(1)
            }
        }
    }

    /// Sets the outcome of every still-open ledger entry of `episode`.
    fn settle(&mut self, episode: EpisodeId, success: bool) {
        for seg in self.segments.values_mut() {
            for entry in seg.record.ledger.iter_mut() {
                if entry.episode_id == episode && entry.outcome.is_none() {
                    entry.outcome = Some(success);
                }
            }
        }
    }

    /// Evicts lowest-utility segments (oldest first among equals) until the
    /// profile fits its capacity.
    pub fn prune(&mut self) -> Vec<SegmentId> {
        let excess = self.segments.len().saturating_sub(self.capacity);
        if excess == 0 {
            return Vec::new();
        }
        let mut ranked: Vec<(f64, u64, SegmentId)> = self
            .segments
            .values()
            .map(|s| (self.utility_of(s), s.created_at(), s.id()))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let evicted: Vec<SegmentId> = ranked.iter().take(excess).map(|r| r.2).collect();
        for id in &evicted {
            if let Some(seg) = self.segments.remove(id) {
                self.by_text.remove(&seg.record.prefix.serialize());
            }
        }
        evicted
    }

    pub fn records(&self) -> impl Iterator<Item = &SegmentRecord> {
        self.segments.values().map(|s| &s.record)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retrieval {
    pub expert_id: ExpertId,
    pub segment_id: SegmentId,
    pub usage_count: u32,
}

/// Everything memory needs to learn from one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: EpisodeId,
    pub task_id: String,
    pub final_trajectory: Trajectory,
    pub reward: f64,
    pub success: bool,
    /// The expert that emitted each action of `final_trajectory`.
    pub per_step_expert: Vec<ExpertId>,
    pub retrievals: Vec<Retrieval>,
}

impl EpisodeRecord {
    pub fn validate(&self, success_threshold: f64) -> Result<()> {
        if self.per_step_expert.len() != self.final_trajectory.depth() {
            return Err(Error::input(format!(
                "episode {}: {} step attributions for depth {}",
                self.episode_id.0,
                self.per_step_expert.len(),
                self.final_trajectory.depth()
            )));
        }
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::input(format!(
                "episode {}: reward {} outside [0,1]",
                self.episode_id.0, self.reward
            )));
        }
        if self.success && self.reward < success_threshold {
            return Err(Error::input(format!(
                "episode {}: marked successful with reward {} below threshold {}",
                self.episode_id.0, self.reward, success_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FinalizeReport {
    pub inserted: Vec<(ExpertId, SegmentId)>,
    pub merged: Vec<(ExpertId, SegmentId)>,
    pub evicted: Vec<(ExpertId, SegmentId)>,
}

/// Settles the episode's ledger entries and, on success, files every prefix
/// of the final trajectory under the expert that produced its last action.
pub fn finalize_episode(
    profiles: &mut [ExpertProfile],
    record: &EpisodeRecord,
    embedder: &dyn Embedder,
) -> Result<FinalizeReport> {
    let index_of = |id: &ExpertId| profiles.iter().position(|p| p.expert_id() == id);
    for r in &record.retrievals {
        let known = index_of(&r.expert_id).is_some_and(|i| profiles[i].get(r.segment_id).is_some());
        if !known {
            return Err(Error::state(format!(
                "episode {} references missing segment {} of {}",
                record.episode_id.0, r.segment_id.0, r.expert_id
            )));
        }
    }
    if record.per_step_expert.len() != record.final_trajectory.depth() {
        return Err(Error::state(format!(
            "episode {}: {} step attributions for depth {}",
            record.episode_id.0,
            record.per_step_expert.len(),
            record.final_trajectory.depth()
        )));
    }
    let mut targets = Vec::with_capacity(record.per_step_expert.len());
    for expert in &record.per_step_expert {
        let idx = index_of(expert).ok_or_else(|| {
            Error::state(format!(
                "episode {} attributes a step to unknown expert {}",
                record.episode_id.0, expert
            ))
        })?;
        targets.push(idx);
    }

    for profile in profiles.iter_mut() {
        profile.settle(record.episode_id, record.success);
    }

    let mut report = FinalizeReport::default();
    if record.success {
        for (prefix, &idx) in decompose_prefixes(&record.final_trajectory)
            .into_iter()
            .zip(&targets)
        {
            let profile = &mut profiles[idx];
            let (id, fresh) = profile.insert(prefix, embedder)?;
            let entry = (profile.expert_id().clone(), id);
            if fresh {
                report.inserted.push(entry);
            } else {
                report.merged.push(entry);
            }
        }
    }
    for profile in profiles.iter_mut() {
        for id in profile.prune() {
            report.evicted.push((profile.expert_id().clone(), id));
        }
    }
    Ok(report)
}
