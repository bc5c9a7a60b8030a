//! Memory files: one segment per line,
//! `{expert_id, segment_id, prefix_steps, created_at, ledger}`.
//! Embeddings are not stored; they are recomputed on load.

use std::path::Path;

use council_core::memory::SegmentRecord;
use council_core::{Embedder, ExpertId, ExpertProfile, LedgerEntry, SegmentId, Step, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::FileError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryLine {
    pub expert_id: ExpertId,
    pub segment_id: SegmentId,
    pub prefix_steps: Vec<Step>,
    pub created_at: u64,
    pub ledger: Vec<LedgerEntry>,
}

/// Segments of every profile, profile by profile, oldest id first.
pub fn format_memory(profiles: &[ExpertProfile]) -> String {
    let mut out = String::new();
    for p in profiles {
        for r in p.records() {
            let line = MemoryLine {
                expert_id: p.expert_id().clone(),
                segment_id: r.segment_id,
                prefix_steps: r.prefix.steps().to_vec(),
                created_at: r.created_at,
                ledger: r.ledger.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("memory lines serialize"));
            out.push('\n');
        }
    }
    out
}

pub fn save_memory(path: &Path, profiles: &[ExpertProfile]) -> Result<usize, FileError> {
    std::fs::write(path, format_memory(profiles)).map_err(|e| FileError::io(path, e))?;
    Ok(profiles.iter().map(ExpertProfile::len).sum())
}

/// Profiles in order of first appearance in the file.
pub fn parse_memory(
    text: &str,
    path: &Path,
    embedder: &dyn Embedder,
    capacity: usize,
    cold_start: f64,
) -> Result<Vec<ExpertProfile>, FileError> {
    let mut grouped: Vec<(ExpertId, Vec<SegmentRecord>, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FileError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let m: MemoryLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if m.prefix_steps.is_empty() {
            return Err(err("a segment needs at least one step".into()));
        }
        let record = SegmentRecord {
            segment_id: m.segment_id,
            prefix: Trajectory::from_steps(m.prefix_steps),
            created_at: m.created_at,
            ledger: m.ledger,
        };
        match grouped.iter_mut().find(|g| g.0 == m.expert_id) {
            Some(g) => g.1.push(record),
            None => grouped.push((m.expert_id, vec![record], i + 1)),
        }
    }
    grouped
        .into_iter()
        .map(|(id, records, first_line)| {
            ExpertProfile::restore(id, capacity, records, embedder)
                .and_then(|p| p.with_cold_start(cold_start))
                .map_err(|e| FileError::Line {
                    path: path.to_path_buf(),
                    line: first_line,
                    message: e.to_string(),
                })
        })
        .collect()
}

pub fn load_memory(
    path: &Path,
    embedder: &dyn Embedder,
    capacity: usize,
    cold_start: f64,
) -> Result<Vec<ExpertProfile>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    parse_memory(&text, path, embedder, capacity, cold_start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use council_core::{Action, EpisodeId, HashedTrigramEmbedder, Observation};

    fn step(o: &str, a: &str) -> Step {
        Step::new(Observation::new(o).unwrap(), Action::new(a).unwrap())
    }

    fn sample() -> Vec<ExpertProfile> {
        let e = HashedTrigramEmbedder::default();
        let mut a = ExpertProfile::new(ExpertId::new("a").unwrap(), 8).unwrap();
        let (s1, _) = a
            .insert(
                Trajectory::from_steps(vec![step("Numbers: 1 2 3 4", "1+2=3")]),
                &e,
            )
            .unwrap();
        a.insert(
            Trajectory::from_steps(vec![
                step("Numbers: 1 2 3 4", "1+2=3"),
                step("Left: 3 3 4", "3*4=12"),
            ]),
            &e,
        )
        .unwrap();
        a.record_retrieval(s1, EpisodeId(4)).unwrap();
        let mut b = ExpertProfile::new(ExpertId::new("b").unwrap(), 8).unwrap();
        b.insert(Trajectory::from_steps(vec![step("x", "y")]), &e)
            .unwrap();
        vec![a, b]
    }

    #[test]
    fn empty_memory_is_an_empty_file() {
        let e = HashedTrigramEmbedder::default();
        assert_eq!(format_memory(&[]), "");
        assert!(parse_memory("", Path::new("m"), &e, 8, 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let e = HashedTrigramEmbedder::default();
        let profiles = sample();
        let text = format_memory(&profiles);
        assert_eq!(text.lines().count(), 3);
        let back = parse_memory(&text, Path::new("m"), &e, 8, 0.5).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in profiles.iter().zip(&back) {
            assert_eq!(
                x.records().collect::<Vec<_>>(),
                y.records().collect::<Vec<_>>()
            );
        }
        assert_eq!(format_memory(&back), text);
    }

    #[test]
    fn corrupt_line_is_named() {
        let e = HashedTrigramEmbedder::default();
        let text = format_memory(&sample());
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{\"expert_id\": 3}";
        let err = parse_memory(&lines.join("\n"), Path::new("m"), &e, 8, 0.5).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().starts_with("m:2:"));
    }
}
