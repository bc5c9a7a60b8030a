//! Trace files: one JSON line per search iteration.

use std::io::Write;

use council_core::trace::{IterationTrace, TraceSink};

/// Writes events as they arrive. The first write error is kept and every
/// later event is dropped; check [`JsonlTrace::finish`].
pub struct JsonlTrace<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> JsonlTrace<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for JsonlTrace<W> {
    fn record(&mut self, event: IterationTrace) {
        if self.error.is_some() {
            return;
        }
        let mut line = serde_json::to_vec(&event).expect("trace events serialize");
        line.push(b'\n');
        if let Err(e) = self.out.write_all(&line) {
            self.error = Some(e);
        }
    }
}
