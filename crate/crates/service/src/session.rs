//! Session lifecycle: creation, label submission, replay after restart and
//! expiry. Each session wraps a [`LeapRun`] and an append-only event log; a
//! label is written to disk before the run advances, so replaying the log
//! rebuilds the exact same run.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use leapfactual::transport::{CeMode, LeapFactualConfig, LeapRun, Stage};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::models::ModelSet;
use crate::store::{Event, OracleKind, SessionLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingLabel,
    Running,
    Done,
    Expired,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Index into the served source catalogue.
    #[serde(default)]
    pub source_id: Option<usize>,
    /// Raw input values, row-major for images.
    #[serde(default)]
    pub source_inline: Option<Vec<f32>>,
    pub target_label: usize,
    #[serde(default)]
    pub config: Option<LeapFactualConfig>,
    #[serde(default)]
    pub mode: Option<CeMode>,
    #[serde(default)]
    pub oracle: Option<OracleKind>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub status: SessionStatus,
    pub stage: Stage,
    pub oracle: OracleKind,
    pub target: usize,
    pub queries: usize,
    pub blend_leaps: usize,
    pub inject_leaps: usize,
    pub current_label: Option<usize>,
    pub final_label: Option<usize>,
    pub stopped_early: bool,
    pub created_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The latent currently awaiting a label.
#[derive(Debug, Clone)]
pub struct PendingQuery {
    pub seq: u64,
    pub z: Vec<f32>,
}

struct Session {
    id: String,
    created_ms: u64,
    oracle: OracleKind,
    run: LeapRun<f32>,
    log: SessionLog,
    /// Creation time plus the offset of the latest label.
    last_activity_ms: u64,
    running: bool,
    error: Option<String>,
}

impl Session {
    fn expired(&self, ttl: Option<Duration>, now: u64) -> bool {
        match ttl {
            Some(ttl) => !self.run.is_done() && now.saturating_sub(self.last_activity_ms) >= ttl.as_millis() as u64,
            None => false,
        }
    }

    fn status(&self, ttl: Option<Duration>, now: u64) -> SessionStatus {
        if self.run.is_done() {
            SessionStatus::Done
        } else if self.expired(ttl, now) {
            SessionStatus::Expired
        } else if self.running || self.oracle == OracleKind::Local {
            SessionStatus::Running
        } else {
            SessionStatus::AwaitingLabel
        }
    }

    fn summary(&self, ttl: Option<Duration>, now: u64) -> SessionSummary {
        let trajectory = self.run.trajectory();
        SessionSummary {
            session_id: self.id.clone(),
            status: self.status(ttl, now),
            stage: self.run.stage(),
            oracle: self.oracle,
            target: self.run.target(),
            queries: self.run.queries(),
            blend_leaps: self.run.blend_leaps(),
            inject_leaps: self.run.inject_leaps(),
            current_label: self.run.current_label(),
            final_label: trajectory.final_label,
            stopped_early: trajectory.stopped_early,
            created_ms: self.created_ms,
            error: self.error.clone(),
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub struct SessionManager {
    models: Arc<ModelSet>,
    dir: PathBuf,
    ttl: Option<Duration>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

type Shared = Arc<Mutex<Session>>;

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, Session> {
    // A panic mid-update leaves the previous run in place, which is still valid.
    s.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionManager {
    /// Opens the session directory and replays every log found in it.
    /// `ttl` bounds the idle time of unfinished sessions.
    pub fn open(models: Arc<ModelSet>, dir: impl AsRef<Path>, ttl: Option<Duration>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let manager = Self {
            models,
            dir,
            ttl,
            sessions: RwLock::new(HashMap::new()),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&manager.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for path in paths {
            let session = manager.replay(&path)?;
            tracing::info!(id = %session.id, queries = session.run.queries(), "restored session");
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        *manager.sessions.write().unwrap_or_else(|p| p.into_inner()) = sessions;
        Ok(manager)
    }

    fn replay(&self, path: &Path) -> Result<Session> {
        let (log, events) = SessionLog::open(path)?;
        let mut events = events.into_iter();
        let Some(Event::Created {
            id,
            created_ms,
            source,
            target,
            config,
            oracle,
        }) = events.next()
        else {
            return Err(ServiceError::Setup(format!("{} does not start with a creation event", path.display())));
        };
        let mut run = LeapRun::new(source, target, self.models.n_classes(), config)?;
        let mut last_activity_ms = created_ms;
        for event in events {
            let Event::Label { seq, label, at_ms } = event else {
                return Err(ServiceError::Setup(format!("{}: repeated creation event", path.display())));
            };
            if seq != run.queries() as u64 {
                return Err(ServiceError::Setup(format!(
                    "{}: label seq {seq} out of order (expected {})",
                    path.display(),
                    run.queries()
                )));
            }
            run.supply_label(label, &self.models.field, at_ms)?;
            last_activity_ms = created_ms + at_ms;
        }
        Ok(Session {
            id,
            created_ms,
            oracle,
            run,
            log,
            last_activity_ms,
            running: false,
            error: None,
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn get(&self, id: &str) -> Result<Shared> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Unfinished sessions answered by the local oracle, e.g. after a restart.
    pub fn local_unfinished(&self) -> Vec<String> {
        let now = now_ms();
        self.ids()
            .into_iter()
            .filter(|id| {
                self.get(id).is_ok_and(|s| {
                    let s = lock(&s);
                    s.oracle == OracleKind::Local && !s.run.is_done() && !s.expired(self.ttl, now)
                })
            })
            .collect()
    }

    fn source_input(&self, req: &CreateSession) -> Result<Vec<f32>> {
        match (req.source_id, &req.source_inline) {
            (Some(_), Some(_)) => Err(ServiceError::Validation("give either source_id or source_inline, not both".into())),
            (None, None) => Err(ServiceError::Validation("one of source_id or source_inline is required".into())),
            (Some(i), None) => {
                let set = self
                    .models
                    .sources
                    .as_ref()
                    .ok_or_else(|| ServiceError::Validation("this server has no source catalogue".into()))?;
                if i >= set.len() {
                    return Err(ServiceError::Validation(format!("source_id {i} out of range (catalogue has {})", set.len())));
                }
                Ok(set.samples.row(i).to_vec())
            }
            (None, Some(x)) => {
                let want = self.models.input_shape().len();
                if x.len() != want {
                    return Err(ServiceError::Validation(format!("source_inline has {} values, expected {want}", x.len())));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(ServiceError::Validation("source_inline contains non-finite values".into()));
                }
                Ok(x.clone())
            }
        }
    }

    /// Encodes the source, writes the creation event and registers the session.
    pub fn create(&self, req: CreateSession) -> Result<CreatedSession> {
        let n = self.models.n_classes();
        if req.target_label >= n {
            return Err(ServiceError::Validation(format!("target_label {} out of range for {n} classes", req.target_label)));
        }
        let oracle = req.oracle.unwrap_or(self.models.default_oracle);
        if oracle == OracleKind::Local && self.models.local_oracle.is_none() {
            return Err(ServiceError::Validation("this server has no local oracle".into()));
        }
        let mut config = req.config.clone().unwrap_or_else(|| self.models.default_config.clone());
        if let Some(mode) = req.mode {
            config = config.for_mode(mode);
        }
        let warnings = config.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        let x = self.source_input(&req)?;
        let z = self.models.codec.encode_one(&x)?;
        let run = LeapRun::new(z.clone(), req.target_label, n, config.clone())?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_ms = now_ms();
        let log = SessionLog::create(
            &self.dir,
            &Event::Created {
                id: id.clone(),
                created_ms,
                source: z,
                target: req.target_label,
                config,
                oracle,
            },
        )?;
        let session = Session {
            id: id.clone(),
            created_ms,
            oracle,
            run,
            log,
            last_activity_ms: created_ms,
            running: false,
            error: None,
        };
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        tracing::info!(%id, target = req.target_label, ?oracle, "created session");
        Ok(CreatedSession {
            session_id: id,
            warnings,
        })
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        let s = self.get(id)?;
        let s = lock(&s);
        Ok(s.summary(self.ttl, now_ms()))
    }

    pub fn pending(&self, id: &str) -> Result<PendingQuery> {
        let s = self.get(id)?;
        let s = lock(&s);
        if s.expired(self.ttl, now_ms()) {
            return Err(ServiceError::Expired(id.to_string()));
        }
        match s.run.pending_latent() {
            Some(z) if !s.running => Ok(PendingQuery {
                seq: s.run.queries() as u64,
                z: z.to_vec(),
            }),
            _ => Err(ServiceError::NoPending(id.to_string())),
        }
    }

    pub fn trajectory_jsonl(&self, id: &str) -> Result<String> {
        let s = self.get(id)?;
        let s = lock(&s);
        Ok(s.run.trajectory().to_jsonl())
    }

    /// Checks and logs a label, marks the session running and hands back a
    /// copy of the run to advance outside the lock.
    fn accept(&self, shared: &Shared, seq: u64, label: usize, from: OracleKind) -> Result<(LeapRun<f32>, u64)> {
        let mut s = lock(shared);
        let now = now_ms();
        if s.expired(self.ttl, now) {
            return Err(ServiceError::Expired(s.id.clone()));
        }
        if s.oracle != from {
            return Err(ServiceError::Validation(format!("session {} is answered by the {:?} oracle", s.id, s.oracle)));
        }
        if s.running || s.run.pending_latent().is_none() {
            return Err(ServiceError::NoPending(s.id.clone()));
        }
        let current = s.run.queries() as u64;
        if seq != current {
            return Err(ServiceError::StaleSeq { submitted: seq, current });
        }
        let n = self.models.n_classes();
        if label >= n {
            return Err(ServiceError::Validation(format!("label {label} out of range for {n} classes")));
        }
        let at_ms = now.saturating_sub(s.created_ms);
        s.log.append(&Event::Label { seq, label, at_ms })?;
        s.last_activity_ms = s.created_ms + at_ms;
        s.running = true;
        Ok((s.run.clone(), at_ms))
    }

    fn advance(&self, shared: &Shared, mut run: LeapRun<f32>, label: usize, at_ms: u64) -> Result<SessionSummary> {
        let result = run.supply_label(label, &self.models.field, at_ms);
        let mut s = lock(shared);
        s.running = false;
        match result {
            Ok(_) => {
                s.run = run;
                Ok(s.summary(self.ttl, now_ms()))
            }
            Err(e) => {
                s.error = Some(e.to_string());
                Err(e.into())
            }
        }
    }

    /// Records a human label for query `seq` and advances the run to the
    /// next query. Blocks for the duration of one leap.
    pub fn submit_label(&self, id: &str, seq: u64, label: usize) -> Result<SessionSummary> {
        let shared = self.get(id)?;
        let (run, at_ms) = self.accept(&shared, seq, label, OracleKind::Human)?;
        self.advance(&shared, run, label, at_ms)
    }

    /// Answers every query of a local-oracle session until it finishes.
    pub fn run_local(&self, id: &str) -> Result<SessionSummary> {
        let shared = self.get(id)?;
        let oracle = self
            .models
            .local_oracle
            .as_ref()
            .ok_or_else(|| ServiceError::Validation("this server has no local oracle".into()))?;
        loop {
            let (seq, z) = {
                let s = lock(&shared);
                match s.run.pending_latent() {
                    Some(z) => (s.run.queries() as u64, z.to_vec()),
                    None => return Ok(s.summary(self.ttl, now_ms())),
                }
            };
            let x = self.models.codec.decode_one(&z)?;
            let label = oracle.predict(&x).map_err(|e| ServiceError::Setup(format!("local oracle: {e}")))?;
            let (run, at_ms) = self.accept(&shared, seq, label, OracleKind::Local)?;
            self.advance(&shared, run, label, at_ms)?;
        }
    }
}
