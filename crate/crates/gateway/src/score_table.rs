//! Last computed trust score per subject key, persisted as an append log.
//!
//! Each update appends `b64url(pk) score unix_micros` to the log. On open the
//! log is replayed (later lines win) and rewritten with one line per key.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use trustzero_core::b64url;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreEntry {
    pub score: u32,
    pub last_seen_micros: u64,
}

#[derive(Default)]
struct Inner {
    entries: HashMap<Vec<u8>, ScoreEntry>,
    log: Option<File>,
}

pub struct ScoreTable {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl ScoreTable {
    pub fn in_memory() -> Self {
        ScoreTable { inner: Mutex::new(Inner::default()), path: None }
    }

    /// Replays and compacts the log at `path`, creating it if absent.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        match File::open(&path) {
            Ok(f) => {
                for (lineno, line) in BufReader::new(f).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match parse_line(&line) {
                        Some((pk, entry)) => {
                            entries.insert(pk, entry);
                        }
                        // a torn final write after a crash lands here
                        None => tracing::warn!(path = %path.display(), line = lineno + 1, "skipping malformed score-table line"),
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        compact(&path, &entries)?;
        let log = OpenOptions::new().append(true).create(true).open(&path)?;
        Ok(ScoreTable { inner: Mutex::new(Inner { entries, log: Some(log) }), path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Stores `score` for `pk`. The in-memory table is always updated; the
    /// returned error only concerns the persistent log.
    pub fn record(&self, pk: &[u8], score: u32, now_micros: u64) -> io::Result<()> {
        let mut inner = self.inner.lock();
        let entry = ScoreEntry { score, last_seen_micros: now_micros };
        inner.entries.insert(pk.to_vec(), entry);
        match inner.log.as_mut() {
            Some(log) => log.write_all(format_line(pk, &entry).as_bytes()),
            None => Ok(()),
        }
    }

    pub fn get(&self, pk: &[u8]) -> Option<ScoreEntry> {
        self.inner.lock().entries.get(pk).copied()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point-in-time listing sorted by descending score, then key bytes.
    pub fn snapshot(&self) -> Vec<(Vec<u8>, u32)> {
        let mut rows: Vec<_> = self.inner.lock().entries.iter().map(|(k, e)| (k.clone(), e.score)).collect();
        sort_snapshot(&mut rows);
        rows
    }
}

pub fn sort_snapshot(rows: &mut [(Vec<u8>, u32)]) {
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Text form of a snapshot: one `b64url(pk) score` line per entry.
pub fn render_snapshot(rows: &[(Vec<u8>, u32)]) -> String {
    rows.iter().map(|(pk, score)| format!("{} {}\n", b64url::encode(pk), score)).collect()
}

fn format_line(pk: &[u8], e: &ScoreEntry) -> String {
    format!("{} {} {}\n", b64url::encode(pk), e.score, e.last_seen_micros)
}

fn parse_line(line: &str) -> Option<(Vec<u8>, ScoreEntry)> {
    let mut parts = line.split(' ');
    let pk = b64url::decode(parts.next()?).ok()?;
    let score = parts.next()?.parse().ok()?;
    let last_seen_micros = parts.next()?.parse().ok()?;
    if parts.next().is_some() || pk.is_empty() {
        return None;
    }
    Some((pk, ScoreEntry { score, last_seen_micros }))
}

fn compact(path: &Path, entries: &HashMap<Vec<u8>, ScoreEntry>) -> io::Result<()> {
    let mut rows: Vec<_> = entries.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let tmp = path.with_extension("compact.tmp");
    {
        let mut f = File::create(&tmp)?;
        for (pk, e) in rows {
            f.write_all(format_line(pk, e).as_bytes())?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
