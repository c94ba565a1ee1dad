//! One event per line, serialized canonically so a parse and re-serialize
//! reproduces the file byte for byte.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::SessionEvent;

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub fn to_jsonl(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&event.to_json_line());
        out.push('\n');
    }
    out
}

pub fn parse_transcript(text: &str) -> Result<Vec<SessionEvent>, TranscriptError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| TranscriptError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_transcript(path: &Path) -> Result<Vec<SessionEvent>, TranscriptError> {
    parse_transcript(&std::fs::read_to_string(path)?)
}

/// Appends events to a transcript file.
#[derive(Debug)]
pub struct TranscriptWriter {
    file: File,
}

impl TranscriptWriter {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    /// `sync` forces the data to disk before returning.
    pub fn append(&mut self, events: &[SessionEvent], sync: bool) -> std::io::Result<()> {
        self.file.write_all(to_jsonl(events).as_bytes())?;
        if sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}
