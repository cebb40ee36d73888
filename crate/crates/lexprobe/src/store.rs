//! Live sessions backed by their logs.
//!
//! Every mutation is computed on a copy, appended to the session's log and
//! synced, and only then committed in memory. A failed append leaves the
//! session as it was.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use lexprobe_core::{EigReport, Feedback, KnowledgeGraph, SessionConfig, SessionTrace};

use crate::log::{self, LogWriter, Quarantined};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown knowledge graph `{0}`")]
    UnknownKg(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Engine(#[from] lexprobe_core::Error),
    #[error("session log: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug)]
struct Live {
    trace: SessionTrace,
    log: LogWriter,
}

pub struct SessionStore {
    kgs: BTreeMap<String, Arc<KnowledgeGraph>>,
    log_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
    quarantined: Vec<Quarantined>,
}

impl SessionStore {
    /// Recovers every session logged in `log_dir` (created if missing) and
    /// completes logs that stopped between a transition and its follow-up.
    pub fn open(kgs: BTreeMap<String, Arc<KnowledgeGraph>>, log_dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let log_dir = log_dir.into();
        fs::create_dir_all(&log_dir)?;
        let recovery = log::recover(&log_dir, &kgs)?;
        let mut sessions = HashMap::new();
        for s in recovery.sessions {
            let mut writer = LogWriter::open(&s.path)?;
            if !s.missing.is_empty() {
                writer.append(&s.missing)?;
            }
            sessions.insert(
                s.trace.session_id().to_string(),
                Arc::new(Mutex::new(Live {
                    trace: s.trace,
                    log: writer,
                })),
            );
        }
        Ok(Self {
            kgs,
            log_dir,
            sessions: RwLock::new(sessions),
            quarantined: recovery.quarantined,
        })
    }

    pub fn log_dir(&self) -> &Path {
        &self.log_dir
    }

    pub fn kgs(&self) -> &BTreeMap<String, Arc<KnowledgeGraph>> {
        &self.kgs
    }

    pub fn kg(&self, id: &str) -> Result<&Arc<KnowledgeGraph>, StoreError> {
        self.kgs.get(id).ok_or_else(|| StoreError::UnknownKg(id.to_string()))
    }

    /// Logs that could not be recovered at open time.
    pub fn quarantined(&self) -> &[Quarantined] {
        &self.quarantined
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn live(&self, id: &str) -> Result<Arc<Mutex<Live>>, StoreError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    /// Starts a session under a fresh id and returns its initial state.
    pub fn create(&self, kg_id: &str, query: &str, config: SessionConfig) -> Result<SessionTrace, StoreError> {
        let kg = self.kg(kg_id)?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let trace = SessionTrace::start(kg, session_id.as_str(), query, config)?;
        let mut writer = LogWriter::create(&self.log_dir, &session_id)?;
        if let Err(e) = writer.append(&log::start_records(&trace)) {
            // never leave a half-written log behind for a session nobody saw
            let _ = fs::remove_file(writer.path());
            return Err(e.into());
        }
        self.sessions.write().unwrap().insert(
            session_id,
            Arc::new(Mutex::new(Live {
                trace: trace.clone(),
                log: writer,
            })),
        );
        Ok(trace)
    }

    pub fn feedback(&self, id: &str, y: Feedback) -> Result<SessionTrace, StoreError> {
        let live = self.live(id)?;
        let mut live = live.lock().unwrap();
        let kg = self.kg(live.trace.kg_id())?.clone();
        let mut next = live.trace.clone();
        next.submit_feedback(&kg, y)?;
        live.log.append(&log::feedback_records(&next))?;
        live.trace = next.clone();
        Ok(next)
    }

    pub fn get(&self, id: &str) -> Result<SessionTrace, StoreError> {
        Ok(self.live(id)?.lock().unwrap().trace.clone())
    }

    /// Gain table for the session's current belief.
    pub fn eig(&self, id: &str) -> Result<Vec<EigReport>, StoreError> {
        let trace = self.get(id)?;
        let kg = self.kg(trace.kg_id())?;
        Ok(trace.eig_table(kg)?)
    }
}
