//! Append-only JSONL session logs and recovery from them.
//!
//! One file per session, `{session_id}.jsonl`. Records carry the bundles and
//! answers; beliefs are included for readers but recovery recomputes them
//! from the prior and only uses the recorded ones as a consistency check.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use lexprobe_core::{KnowledgeGraph, SessionConfig, SessionTrace, Status};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::wire::{self, BeliefJson, ConfigJson, FeedbackJson};

/// Recorded beliefs may differ from recomputed ones by at most this much.
const BELIEF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    BundleShown,
    Feedback,
    Converged,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLogRecord {
    pub session_id: String,
    pub step: usize,
    pub timestamp: String,
    pub event: EventKind,
    pub payload: Value,
}

#[derive(Deserialize)]
struct StartedPayload {
    kg: String,
    query: String,
    config: ConfigJson,
}

#[derive(Deserialize)]
struct BundlePayload {
    bundle: Vec<String>,
}

#[derive(Deserialize)]
struct FeedbackPayload {
    #[serde(flatten)]
    feedback: FeedbackJson,
    belief: BeliefJson,
}

#[derive(Deserialize)]
struct ConvergedPayload {
    node: String,
}

fn record(trace: &SessionTrace, step: usize, event: EventKind, payload: Value) -> SessionLogRecord {
    SessionLogRecord {
        session_id: trace.session_id().to_string(),
        step,
        timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
        event,
        payload,
    }
}

/// What follows once the trace's current state was reached: the next
/// bundle, or the terminal record.
fn follow_up(trace: &SessionTrace) -> Option<SessionLogRecord> {
    let last = trace.steps().len().saturating_sub(1);
    match trace.status() {
        Status::Active => trace.pending_bundle().map(|b| {
            record(trace, last, EventKind::BundleShown, json!({ "bundle": wire::bundle_json(b) }))
        }),
        Status::Converged(node) => Some(record(
            trace,
            last,
            EventKind::Converged,
            json!({ "node": node.as_str(), "confidence": trace.belief().mass(node.as_str()) }),
        )),
        Status::Exhausted => Some(record(
            trace,
            last,
            EventKind::Exhausted,
            json!({ "belief": wire::belief_json(trace.belief()) }),
        )),
    }
}

/// Records for a freshly started session.
pub fn start_records(trace: &SessionTrace) -> Vec<SessionLogRecord> {
    let started = record(
        trace,
        0,
        EventKind::Started,
        json!({
            "kg": trace.kg_id(),
            "query": trace.query(),
            "config": ConfigJson::from(trace.config()),
            "prior": wire::belief_json(trace.prior()),
        }),
    );
    std::iter::once(started).chain(follow_up(trace)).collect()
}

/// Records for the step that `trace` has just answered.
pub fn feedback_records(trace: &SessionTrace) -> Vec<SessionLogRecord> {
    let answered = trace
        .steps()
        .iter()
        .rev()
        .find(|s| s.feedback.is_some())
        .expect("a step has been answered");
    let mut payload = serde_json::to_value(FeedbackJson::from(answered.feedback.as_ref().unwrap())).unwrap();
    payload["belief"] = json!(wire::belief_json(answered.belief.as_ref().unwrap()));
    let fb = record(trace, answered.index, EventKind::Feedback, payload);
    std::iter::once(fb).chain(follow_up(trace)).collect()
}

/// An open log file. Every append is flushed to stable storage before it
/// returns.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
    path: PathBuf,
}

impl LogWriter {
    pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    /// Creates the log for a new session; fails if it already exists.
    pub fn create(dir: &Path, session_id: &str) -> io::Result<Self> {
        let path = Self::log_path(dir, session_id);
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        Ok(Self { file, path })
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, records: &[SessionLogRecord]) -> io::Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let len = self.file.metadata()?.len();
        let written = self.file.write_all(&buf).and_then(|()| self.file.sync_data());
        if written.is_err() {
            // drop any torn tail so later appends start on a line boundary
            let _ = self.file.set_len(len);
        }
        written
    }
}

/// Why a log could not be fully recovered.
#[derive(Debug, Clone, PartialEq)]
pub struct Quarantined {
    pub session_id: String,
    pub path: PathBuf,
    /// 1-based line of the first bad record, when the problem is local to one.
    pub line: Option<usize>,
    pub reason: String,
    /// Session rebuilt from the records before the bad one, if that much is consistent.
    pub prefix: Option<SessionTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSession {
    pub trace: SessionTrace,
    pub path: PathBuf,
    /// Records the state implies but the log lacks, because the process
    /// stopped between a transition and its follow-up.
    pub missing: Vec<SessionLogRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recovery {
    pub sessions: Vec<RecoveredSession>,
    pub quarantined: Vec<Quarantined>,
}

struct BadRecord {
    line: Option<usize>,
    reason: String,
}

fn bad(line: usize, reason: impl Into<String>) -> BadRecord {
    BadRecord {
        line: Some(line),
        reason: reason.into(),
    }
}

/// Splits a log into parsed records and the first unreadable line, if any.
/// A final line without its newline counts as unreadable.
fn parse_lines(bytes: &[u8]) -> (Vec<SessionLogRecord>, Option<BadRecord>) {
    let mut out = Vec::new();
    let mut rest = bytes;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return (out, Some(bad(line_no, "truncated record (no trailing newline)")));
        };
        match serde_json::from_slice::<SessionLogRecord>(&rest[..end]) {
            Ok(r) => out.push(r),
            Err(e) => return (out, Some(bad(line_no, format!("unreadable record: {e}")))),
        }
        rest = &rest[end + 1..];
    }
    (out, None)
}

fn close_enough(recorded: &BeliefJson, trace_belief: &BeliefJson) -> bool {
    recorded.len() == trace_belief.len()
        && recorded
            .iter()
            .zip(trace_belief)
            .all(|((a, pa), (b, pb))| a == b && (pa - pb).abs() <= BELIEF_TOLERANCE)
}

/// Rebuilds one session from well-formed records.
fn rebuild(
    session_id: &str,
    records: &[SessionLogRecord],
    kgs: &BTreeMap<String, Arc<KnowledgeGraph>>,
) -> Result<(SessionTrace, bool, bool), BadRecord> {
    let first = records.first().ok_or(BadRecord {
        line: None,
        reason: "log is empty".into(),
    })?;
    if first.event != EventKind::Started || first.step != 0 {
        return Err(bad(1, "log does not begin with a `started` record"));
    }
    let started: StartedPayload =
        serde_json::from_value(first.payload.clone()).map_err(|e| bad(1, format!("bad started payload: {e}")))?;
    let kg = kgs
        .get(&started.kg)
        .ok_or_else(|| bad(1, format!("unknown graph `{}`", started.kg)))?;
    let config = SessionConfig::try_from(&started.config).map_err(|e| bad(1, e.to_string()))?;

    let mut steps: Vec<(lexprobe_core::Bundle, Option<lexprobe_core::Feedback>)> = Vec::new();
    let mut beliefs: Vec<(usize, BeliefJson)> = Vec::new();
    let mut terminal: Option<(usize, Status)> = None;
    let mut prev = (first.step, first.event);
    for (i, r) in records.iter().enumerate().skip(1) {
        let line = i + 1;
        if r.session_id != session_id {
            return Err(bad(line, format!("record belongs to session `{}`", r.session_id)));
        }
        if (r.step, r.event) <= prev {
            return Err(bad(line, "records out of order"));
        }
        prev = (r.step, r.event);
        if terminal.is_some() {
            return Err(bad(line, "record after the terminal record"));
        }
        match r.event {
            EventKind::Started => return Err(bad(line, "second `started` record")),
            EventKind::BundleShown => {
                if r.step != steps.len() || steps.last().is_some_and(|s| s.1.is_none()) {
                    return Err(bad(line, "bundle shown out of sequence"));
                }
                let p: BundlePayload =
                    serde_json::from_value(r.payload.clone()).map_err(|e| bad(line, format!("bad payload: {e}")))?;
                let bundle = wire::parse_bundle(&p.bundle).map_err(|e| bad(line, e.to_string()))?;
                steps.push((bundle, None));
            }
            EventKind::Feedback => {
                let pending = steps.len().checked_sub(1).filter(|&k| k == r.step && steps[k].1.is_none());
                let Some(k) = pending else {
                    return Err(bad(line, "feedback without a pending bundle"));
                };
                let p: FeedbackPayload =
                    serde_json::from_value(r.payload.clone()).map_err(|e| bad(line, format!("bad payload: {e}")))?;
                steps[k].1 = Some(p.feedback.into());
                beliefs.push((k, p.belief));
            }
            EventKind::Converged => {
                let p: ConvergedPayload =
                    serde_json::from_value(r.payload.clone()).map_err(|e| bad(line, format!("bad payload: {e}")))?;
                terminal = Some((line, Status::Converged(p.node.into())));
            }
            EventKind::Exhausted => terminal = Some((line, Status::Exhausted)),
        }
    }

    let (trace, opened) = SessionTrace::replay(kg, session_id, started.query, config, &steps)
        .map_err(|e| BadRecord {
            line: None,
            reason: format!("replay failed: {e}"),
        })?;
    for (step, recorded) in &beliefs {
        let replayed = trace.steps()[*step].belief.as_ref().map(wire::belief_json);
        if replayed.as_ref().is_none_or(|b| !close_enough(recorded, b)) {
            return Err(BadRecord {
                line: None,
                reason: format!("recorded belief at step {step} disagrees with replay"),
            });
        }
    }
    let missing_terminal = match terminal {
        Some((line, status)) if &status != trace.status() => {
            return Err(bad(line, "terminal record disagrees with replay"));
        }
        Some(_) => false,
        None => trace.status().is_terminal(),
    };
    Ok((trace, opened, missing_terminal))
}

/// Reads every `*.jsonl` log in `dir` and rebuilds the sessions they hold.
/// Damaged logs are quarantined (left on disk as they are) without
/// affecting the others.
pub fn recover(dir: &Path, kgs: &BTreeMap<String, Arc<KnowledgeGraph>>) -> io::Result<Recovery> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();

    let mut out = Recovery::default();
    for path in paths {
        let session_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let bytes = fs::read(&path)?;
        let (records, damage) = parse_lines(&bytes);
        match (rebuild(&session_id, &records, kgs), damage) {
            (Ok((trace, opened, missing_terminal)), None) => {
                let missing = if opened || missing_terminal {
                    follow_up(&trace).into_iter().collect()
                } else {
                    Vec::new()
                };
                out.sessions.push(RecoveredSession { trace, path, missing });
            }
            (prefix, Some(damage)) => out.quarantined.push(Quarantined {
                session_id,
                path,
                line: damage.line,
                reason: damage.reason,
                prefix: prefix.ok().map(|(t, _, _)| t),
            }),
            (Err(err), None) => out.quarantined.push(Quarantined {
                session_id,
                path,
                line: err.line,
                reason: err.reason,
                prefix: None,
            }),
        }
    }
    Ok(out)
}
