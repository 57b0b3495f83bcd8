use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::Serialize;

use super::session::Session;
use crate::error::{Error, Result};
use crate::stats::ReviewRecord;

const SESSIONS: &str = "sessions.jsonl";
const EVENTS: &str = "events.jsonl";

/// Outcome of appending a review.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Appended {
    Recorded,
    Duplicate,
}

#[derive(Default)]
struct Snapshot {
    sessions: HashMap<String, Session>,
    events: Vec<ReviewRecord>,
    keys: HashSet<(String, String)>,
}

struct Files {
    sessions: File,
    events: File,
}

/// Append-only session manifest and event log in one directory. Appends go
/// through a single writer; the in-memory snapshot serves reads.
pub struct Store {
    dir: PathBuf,
    files: Mutex<Files>,
    snapshot: RwLock<Snapshot>,
}

fn append_line(f: &mut File, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads logged reviews from a store directory without opening it for
/// writing. A missing log reads as empty.
pub fn read_records(dir: impl AsRef<Path>, session: Option<&str>) -> Result<Vec<ReviewRecord>> {
    let all: Vec<ReviewRecord> = read_lines(&dir.as_ref().join(EVENTS))?;
    Ok(all
        .into_iter()
        .filter(|r| session.is_none_or(|s| r.session_id == s))
        .collect())
}

impl Store {
    /// Opens or creates the store, replaying any existing logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_owned();
        fs::create_dir_all(&dir)?;
        let mut snap = Snapshot::default();
        for s in read_lines::<Session>(&dir.join(SESSIONS))? {
            snap.sessions.insert(s.session_id.clone(), s);
        }
        for r in read_lines::<ReviewRecord>(&dir.join(EVENTS))? {
            snap.keys.insert((r.session_id.clone(), r.sentence_id.clone()));
            snap.events.push(r);
        }
        let open = |name| OpenOptions::new().create(true).append(true).open(dir.join(name));
        let files = Files {
            sessions: open(SESSIONS)?,
            events: open(EVENTS)?,
        };
        Ok(Self {
            dir,
            files: Mutex::new(files),
            snapshot: RwLock::new(snap),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add_session(&self, session: Session) -> Result<()> {
        let mut files = self.files.lock().expect("writer lock");
        if self.session(&session.session_id).is_some() {
            return Err(Error::invalid(format!("session `{}` already exists", session.session_id)));
        }
        append_line(&mut files.sessions, &session)?;
        let mut snap = self.snapshot.write().expect("snapshot lock");
        snap.sessions.insert(session.session_id.clone(), session);
        Ok(())
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.snapshot.read().expect("snapshot lock").sessions.get(id).cloned()
    }

    /// Logs a review unless one already exists for its (session, sentence).
    pub fn append_event(&self, record: ReviewRecord) -> Result<Appended> {
        let mut files = self.files.lock().expect("writer lock");
        let key = (record.session_id.clone(), record.sentence_id.clone());
        if self.snapshot.read().expect("snapshot lock").keys.contains(&key) {
            return Ok(Appended::Duplicate);
        }
        append_line(&mut files.events, &record)?;
        let mut snap = self.snapshot.write().expect("snapshot lock");
        snap.keys.insert(key);
        snap.events.push(record);
        Ok(Appended::Recorded)
    }

    /// Logged reviews in append order, optionally for one session.
    pub fn export(&self, session: Option<&str>) -> Vec<ReviewRecord> {
        let snap = self.snapshot.read().expect("snapshot lock");
        snap.events
            .iter()
            .filter(|r| session.is_none_or(|s| r.session_id == s))
            .cloned()
            .collect()
    }
}
