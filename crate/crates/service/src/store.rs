//! Append-only JSON Lines event logs, one file per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use leapfactual::transport::LeapFactualConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Human,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase", deny_unknown_fields)]
pub enum Event {
    Created {
        id: String,
        /// Unix epoch milliseconds.
        created_ms: u64,
        source: Vec<f32>,
        target: usize,
        config: LeapFactualConfig,
        oracle: OracleKind,
    },
    Label {
        seq: u64,
        label: usize,
        /// Milliseconds since creation.
        at_ms: u64,
    },
}

pub struct SessionLog {
    path: PathBuf,
    file: File,
}

impl SessionLog {
    pub fn path_for(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    pub fn create(dir: &Path, created: &Event) -> Result<Self> {
        let Event::Created { id, .. } = created else {
            return Err(ServiceError::Setup("a session log must start with its creation event".into()));
        };
        let path = Self::path_for(dir, id);
        let file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        let mut log = Self { path, file };
        log.append(created)?;
        Ok(log)
    }

    pub fn open(path: &Path) -> Result<(Self, Vec<Event>)> {
        let reader = BufReader::new(File::open(path)?);
        let mut events = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(e) => events.push(e),
                // A crash mid-write can leave a torn final line; everything
                // before it was flushed and is kept.
                Err(e) if e.is_eof() => break,
                Err(e) => return Err(e.into()),
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    /// Writes one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_roundtrip_through_a_log() {
        let dir = tempfile::tempdir().unwrap();
        let created = Event::Created {
            id: "abc".into(),
            created_ms: 5,
            source: vec![0.1, -0.2],
            target: 3,
            config: LeapFactualConfig::default(),
            oracle: OracleKind::Human,
        };
        let label = Event::Label {
            seq: 0,
            label: 1,
            at_ms: 40,
        };
        let mut log = SessionLog::create(dir.path(), &created).unwrap();
        log.append(&label).unwrap();
        let (_, events) = SessionLog::open(log.path()).unwrap();
        assert_eq!(events, vec![created.clone(), label]);
        assert!(SessionLog::create(dir.path(), &created).is_err());
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"event\":\"label\",\"seq\":0,\"label\":1,\"at_ms\":2}\n{\"event\":\"lab").unwrap();
        let (_, events) = SessionLog::open(&path).unwrap();
        assert_eq!(events.len(), 1);
    }
}
