//! Append-only event log with periodic snapshots.
//!
//! Layout of a state directory:
//! - `events.jsonl`: one event per line, never rewritten
//! - `snapshot.json`: folded state plus the sequence number it covers
//! - `lock`: present while a writer holds the directory

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{AnswerDelta, AnswerSample, ServerRecord, ZoneCounts};

pub const FORMAT_VERSION: u32 = 1;
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const LOCK_FILE: &str = "lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("state directory {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("{file} line {line}: {msg}")]
    Corrupt { file: String, line: usize, msg: String },
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    ServerChanged { record: ServerRecord },
    ServerSeen { server_id: u64 },
    IdUnallocated { server_id: u64 },
    Progress { next_id: u64, high_water: u64, next_poll_at: Option<DateTime<Utc>> },
    Answers { sample: AnswerSample },
    ZoneCounts { counts: ZoneCounts },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub format_version: u32,
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrapeState {
    pub servers: BTreeMap<u64, ServerRecord>,
    /// First ID the enumerator has not yet finished.
    pub next_id: u64,
    /// Highest allocated ID seen so far.
    pub high_water: u64,
    pub next_poll_at: Option<DateTime<Utc>>,
    /// Latest answer sample per address, then zone.
    pub answers: BTreeMap<String, BTreeMap<String, AnswerSample>>,
    pub answer_resets: u64,
    pub zone_counts: BTreeMap<String, ZoneCounts>,
}

impl Default for ScrapeState {
    fn default() -> Self {
        Self {
            servers: BTreeMap::new(),
            next_id: 1,
            high_water: 0,
            next_poll_at: None,
            answers: BTreeMap::new(),
            answer_resets: 0,
            zone_counts: BTreeMap::new(),
        }
    }
}

impl ScrapeState {
    pub fn apply(&mut self, at: DateTime<Utc>, event: &Event) {
        match event {
            Event::ServerChanged { record } => {
                let mut rec = record.clone();
                if let Some(old) = self.servers.get(&rec.server_id) {
                    rec.first_seen = rec.first_seen.min(old.first_seen);
                    rec.last_seen = rec.last_seen.max(old.last_seen);
                }
                rec.last_seen = rec.last_seen.max(at);
                self.servers.insert(rec.server_id, rec);
            }
            Event::ServerSeen { server_id } => {
                if let Some(rec) = self.servers.get_mut(server_id) {
                    rec.last_seen = rec.last_seen.max(at);
                }
            }
            Event::IdUnallocated { .. } => {}
            Event::Progress { next_id, high_water, next_poll_at } => {
                self.next_id = *next_id;
                self.high_water = self.high_water.max(*high_water);
                self.next_poll_at = *next_poll_at;
            }
            Event::Answers { sample } => {
                let per_addr = self.answers.entry(sample.address.to_string()).or_default();
                if per_addr.get(&sample.zone).is_some_and(|prev| sample.answer_count < prev.answer_count) {
                    self.answer_resets += 1;
                }
                per_addr.insert(sample.zone.clone(), sample.clone());
            }
            Event::ZoneCounts { counts } => {
                self.zone_counts.insert(counts.zone.clone(), counts.clone());
            }
        }
    }

    pub fn last_answer(&self, sample: &AnswerSample) -> Option<&AnswerSample> {
        self.answers.get(&sample.address.to_string()).and_then(|m| m.get(&sample.zone))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    seq: u64,
    state: ScrapeState,
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Reads every complete entry of an event log. A torn final line, left by
/// a crash mid-write, is reported by byte offset so the writer can cut it.
fn read_log(path: &Path) -> Result<(Vec<LogEntry>, Option<u64>), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), None)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut entries = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            return Ok((entries, None));
        }
        n += 1;
        if !line.ends_with('\n') {
            return Ok((entries, Some(offset)));
        }
        let e: LogEntry = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
            file: EVENTS_FILE.into(),
            line: n,
            msg: e.to_string(),
        })?;
        if e.format_version != FORMAT_VERSION {
            return Err(StoreError::FormatVersion(e.format_version));
        }
        entries.push(e);
        offset += read as u64;
    }
}

/// Folds the whole event log, ignoring any snapshot.
pub fn replay(dir: &Path) -> Result<ScrapeState, StoreError> {
    let (entries, _) = read_log(&dir.join(EVENTS_FILE))?;
    let mut state = ScrapeState::default();
    for e in &entries {
        state.apply(e.at, &e.event);
    }
    Ok(state)
}

/// Single-writer persistent scrape state.
pub struct Store {
    dir: PathBuf,
    log: File,
    state: ScrapeState,
    seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
    _lock: LockGuard,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let lock = LockGuard::acquire(&dir)?;

        let (mut state, mut seq) = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    file: SNAPSHOT_FILE.into(),
                    line: e.line(),
                    msg: e.to_string(),
                })?;
                if snap.format_version != FORMAT_VERSION {
                    return Err(StoreError::FormatVersion(snap.format_version));
                }
                (snap.state, snap.seq)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (ScrapeState::default(), 0),
            Err(e) => return Err(e.into()),
        };

        let log_path = dir.join(EVENTS_FILE);
        let (entries, torn_at) = read_log(&log_path)?;
        let covered = seq;
        for e in entries.iter().filter(|e| e.seq > covered) {
            state.apply(e.at, &e.event);
            seq = e.seq;
        }
        let mut log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        if let Some(off) = torn_at {
            log::warn!("cutting torn event at byte {off} of {}", log_path.display());
            log.set_len(off)?;
            log.seek(SeekFrom::End(0))?;
        }
        Ok(Self { dir, log, state, seq, snapshot_every: 256, since_snapshot: 0, _lock: lock })
    }

    pub fn with_snapshot_every(mut self, n: u64) -> Self {
        self.snapshot_every = n.max(1);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &ScrapeState {
        &self.state
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn append(&mut self, at: DateTime<Utc>, event: Event) -> Result<(), StoreError> {
        let entry = LogEntry { format_version: FORMAT_VERSION, seq: self.seq + 1, at, event };
        let mut line = serde_json::to_string(&entry).expect("log entries serialize");
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        self.seq += 1;
        self.state.apply(at, &entry.event);
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        self.log.sync_data()?;
        let snap = Snapshot { format_version: FORMAT_VERSION, seq: self.seq, state: self.state.clone() };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&snap).expect("snapshot serializes"))?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }

    /// Logs a fetched record: a full record when anything changed, otherwise
    /// only the sighting.
    pub fn record_server(&mut self, at: DateTime<Utc>, record: ServerRecord) -> Result<(), StoreError> {
        let event = match self.state.servers.get(&record.server_id) {
            Some(old) if old.same_state(&record) => Event::ServerSeen { server_id: record.server_id },
            _ => Event::ServerChanged { record },
        };
        self.append(at, event)
    }

    /// Logs answer samples and returns the delta against each previous
    /// sample of the same (address, zone).
    pub fn record_answers(&mut self, samples: Vec<AnswerSample>) -> Result<Vec<AnswerDelta>, StoreError> {
        let mut deltas = Vec::new();
        for s in samples {
            if let Some(prev) = self.state.last_answer(&s) {
                let d = AnswerDelta::between(prev, &s);
                if d.reset {
                    log::info!("answer counter reset for {} zone {}", s.address, s.zone);
                }
                deltas.push(d);
            }
            self.append(s.fetched_at, Event::Answers { sample: s })?;
        }
        Ok(deltas)
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if self.since_snapshot > 0 {
            if let Err(e) = self.snapshot() {
                log::warn!("final snapshot of {} failed: {e}", self.dir.display());
            }
        }
    }
}
