use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::policy::Outcome;

/// One line of the decision log; exactly one per proxied request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub timestamp_micros: u64,
    pub server_id: String,
    pub method: String,
    pub path: String,
    /// b64url subject key, absent when no token could be decoded.
    pub subject_pk: Option<String>,
    pub outcome: Outcome,
    /// Deny rule name or parse-error kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub attestations: usize,
    pub score: u32,
    /// Time spent verifying attestations.
    pub verify_micros: u64,
    /// Arrival to response ready, including any upstream round trip.
    pub processing_micros: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upstream_status: Option<u16>,
    pub granted: bool,
}

/// Writes records as JSON lines and optionally keeps the most recent ones in
/// memory for in-process inspection.
pub struct DecisionLog {
    file: Option<Mutex<File>>,
    recent: Mutex<VecDeque<DecisionRecord>>,
    capacity: usize,
}

impl DecisionLog {
    pub fn new(path: Option<&Path>, capacity: usize) -> io::Result<Self> {
        let file = match path {
            Some(p) => Some(Mutex::new(OpenOptions::new().append(true).create(true).open(p)?)),
            None => None,
        };
        Ok(DecisionLog { file, recent: Mutex::new(VecDeque::with_capacity(capacity.min(4096))), capacity })
    }

    pub fn push(&self, record: DecisionRecord) {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            if let Err(e) = file.lock().write_all(line.as_bytes()) {
                tracing::error!(error = %e, "decision log write failed");
            }
        }
        if self.capacity > 0 {
            let mut recent = self.recent.lock();
            if recent.len() == self.capacity {
                recent.pop_front();
            }
            recent.push_back(record);
        }
    }

    pub fn recent(&self) -> Vec<DecisionRecord> {
        self.recent.lock().iter().cloned().collect()
    }

    pub fn clear_recent(&self) {
        self.recent.lock().clear();
    }
}
