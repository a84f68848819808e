use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Observation, RunManifest, StoreError};

/// Destination for completed observations.
pub trait ObservationSink {
    /// Trial ids already recorded; the runner skips these.
    fn completed(&self) -> HashSet<String>;
    /// Persist one observation. Must be durable when this returns `Ok`.
    fn append(&mut self, obs: Observation) -> Result<(), StoreError>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub observations: Vec<Observation>,
    ids: HashSet<String>,
}

impl ObservationSink for MemorySink {
    fn completed(&self) -> HashSet<String> {
        self.observations.iter().map(|o| o.trial_id.clone()).collect()
    }

    fn append(&mut self, obs: Observation) -> Result<(), StoreError> {
        obs.validate()?;
        if !self.ids.insert(obs.trial_id.clone()) {
            return Err(StoreError::Duplicate(obs.trial_id));
        }
        self.observations.push(obs);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord {
    Manifest(RunManifest),
    Observation(Observation),
}

/// JSON-lines log: a manifest record followed by one record per trial.
pub struct RunLog {
    path: PathBuf,
    file: File,
    manifest: RunManifest,
    ids: HashSet<String>,
}

impl RunLog {
    /// Open an existing log for the same plan, or start a new one.
    /// A torn final line left by a crash is discarded.
    pub fn open_or_create(path: impl AsRef<Path>, manifest: RunManifest) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        if !exists {
            let mut file = File::create(&path).map_err(io_err(&path))?;
            write_line(&mut file, &LogRecord::Manifest(manifest.clone()), &path)?;
            return Ok(RunLog {
                path,
                file,
                manifest,
                ids: HashSet::new(),
            });
        }
        repair_torn_tail(&path)?;
        let (found, observations) = Self::read(&path)?;
        if found.plan_digest != manifest.plan_digest {
            return Err(StoreError::ManifestMismatch {
                path,
                expected: manifest.plan_digest,
                found: found.plan_digest,
            });
        }
        if found != manifest {
            log::warn!(
                "{}: resuming with a different provider configuration ({} -> {})",
                path.display(),
                found.config_digest,
                manifest.config_digest
            );
        }
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(RunLog {
            ids: observations.into_iter().map(|o| o.trial_id).collect(),
            path,
            file,
            manifest: found,
        })
    }

    /// Read a closed or in-progress log.
    pub fn read(path: impl AsRef<Path>) -> Result<(RunManifest, Vec<Observation>), StoreError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        let schema = |line: usize, message: String| StoreError::Schema {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut manifest = None;
        let mut observations = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord =
                serde_json::from_str(&line).map_err(|e| schema(i + 1, e.to_string()))?;
            match record {
                LogRecord::Manifest(m) if manifest.is_none() && observations.is_empty() => {
                    manifest = Some(m)
                }
                LogRecord::Manifest(_) => {
                    return Err(schema(i + 1, "manifest must be the first record".into()))
                }
                LogRecord::Observation(o) => {
                    if manifest.is_none() {
                        return Err(schema(i + 1, "observation before manifest".into()));
                    }
                    o.validate().map_err(|e| schema(i + 1, e.to_string()))?;
                    if !ids.insert(o.trial_id.clone()) {
                        return Err(schema(i + 1, format!("duplicate trial {}", o.trial_id)));
                    }
                    observations.push(o);
                }
            }
        }
        let manifest = manifest.ok_or_else(|| schema(0, "missing manifest record".into()))?;
        Ok((manifest, observations))
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl ObservationSink for RunLog {
    fn completed(&self) -> HashSet<String> {
        self.ids.clone()
    }

    fn append(&mut self, obs: Observation) -> Result<(), StoreError> {
        obs.validate()?;
        if self.ids.contains(&obs.trial_id) {
            return Err(StoreError::Duplicate(obs.trial_id));
        }
        let id = obs.trial_id.clone();
        write_line(&mut self.file, &LogRecord::Observation(obs), &self.path)?;
        self.ids.insert(id);
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_line(file: &mut File, record: &LogRecord, path: &Path) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(record).expect("log records serialize");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

fn repair_torn_tail(path: &Path) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!(
        "{}: discarding {} bytes of an incomplete final record",
        path.display(),
        bytes.len() - keep
    );
    file.set_len(keep as u64).map_err(io_err(path))?;
    file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::TemperatureScheme;
    use crate::store::tests::obs;

    fn manifest(plan: &str) -> RunManifest {
        RunManifest {
            plan_digest: plan.into(),
            scheme: TemperatureScheme::default(),
            config_digest: "c".into(),
            model_id: "m".into(),
        }
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let mut log = RunLog::open_or_create(&path, manifest("p")).unwrap();
        log.append(obs("a", Some(70))).unwrap();
        log.append(obs("b", None)).unwrap();
        drop(log);
        let (m, all) = RunLog::read(&path).unwrap();
        assert_eq!(m, manifest("p"));
        assert_eq!(all, vec![obs("a", Some(70)), obs("b", None)]);
    }

    #[test]
    fn duplicate_rejected_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let mut log = RunLog::open_or_create(&path, manifest("p")).unwrap();
        log.append(obs("a", Some(70))).unwrap();
        assert!(matches!(log.append(obs("a", Some(71))), Err(StoreError::Duplicate(_))));
        drop(log);
        let mut log = RunLog::open_or_create(&path, manifest("p")).unwrap();
        assert_eq!(log.completed(), HashSet::from(["a".to_string()]));
        assert!(matches!(log.append(obs("a", Some(71))), Err(StoreError::Duplicate(_))));
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        let mut log = RunLog::open_or_create(&path, manifest("p")).unwrap();
        log.append(obs("a", Some(70))).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"record":"observation","trial_id":"b","#).unwrap();
        drop(f);
        let mut log = RunLog::open_or_create(&path, manifest("p")).unwrap();
        assert_eq!(log.len(), 1);
        log.append(obs("b", Some(60))).unwrap();
        drop(log);
        assert_eq!(RunLog::read(&path).unwrap().1.len(), 2);
    }

    #[test]
    fn other_plan_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.jsonl");
        drop(RunLog::open_or_create(&path, manifest("p")).unwrap());
        assert!(matches!(
            RunLog::open_or_create(&path, manifest("q")),
            Err(StoreError::ManifestMismatch { .. })
        ));
    }

    #[test]
    fn memory_sink_dedupes() {
        let mut sink = MemorySink::default();
        sink.append(obs("a", Some(1))).unwrap();
        assert!(sink.append(obs("a", Some(1))).is_err());
    }
}
