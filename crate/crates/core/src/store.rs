//! Filesystem persistence with strict raw/structured separation.
//!
//! Layout per run:
//! ```text
//! runs/<run_id>/raw/<stage>[_<qid>]_attempt<N>.txt
//! runs/<run_id>/artifacts/<stage>[_<qid>].json
//! runs/<run_id>/manifest.json
//! ```
//! Raw model text is written before any extraction or validation, one file per
//! attempt, never overwritten. Structured files exist only for accepted
//! artifacts, so the artifact key set is always a subset of the raw key set.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{RunManifest, RunState};
use crate::schema::{canonical_serialize, ArtifactDocument, StageKind, ValidationReport};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("attempt file already exists: {0}")]
    DuplicateAttempt(String),
    #[error("structured artifact already persisted: {0}")]
    AlreadyPersisted(String),
    #[error("run not found: {0}")]
    NotFound(String),
    #[error("corrupt artifact {path}: {detail}")]
    CorruptArtifact {
        path: String,
        report: Box<ValidationReport>,
        detail: String,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// Record of one persisted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub stage: StageKind,
    pub quest_id: Option<String>,
    pub path: PathBuf,
    /// SHA-256 of the file bytes, hex-encoded.
    pub content_hash: String,
    pub written_at: DateTime<Utc>,
}

/// Append-only run directory store rooted at `<root>/runs/`.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

fn file_key(stage: StageKind, quest_id: Option<&str>) -> String {
    match quest_id {
        Some(qid) => format!("{}_{qid}", stage.slug()),
        None => stage.slug().to_string(),
    }
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join("manifest.json")
    }

    fn io_err(path: &Path, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Create the directory skeleton for a run. Idempotent.
    pub fn init_run(&self, run_id: &str) -> Result<(), StoreError> {
        let dir = self.run_dir(run_id);
        for sub in ["raw", "artifacts"] {
            let path = dir.join(sub);
            fs::create_dir_all(&path).map_err(|e| Self::io_err(&path, e))?;
        }
        Ok(())
    }

    fn write_new(&self, path: &Path, bytes: &[u8]) -> Result<ArtifactRecord, StoreError> {
        let mut file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| Self::io_err(path, e))?;
        file.write_all(bytes).map_err(|e| Self::io_err(path, e))?;
        Ok(ArtifactRecord {
            stage: StageKind::World, // overwritten by callers
            quest_id: None,
            path: path.to_path_buf(),
            content_hash: hex::encode(Sha256::digest(bytes)),
            written_at: Utc::now(),
        })
    }

    /// Persist one attempt's raw model text, verbatim. Never overwrites.
    pub fn persist_raw(
        &self,
        run_id: &str,
        stage: StageKind,
        quest_id: Option<&str>,
        attempt: u32,
        text: &str,
    ) -> Result<ArtifactRecord, StoreError> {
        let path = self.run_dir(run_id).join("raw").join(format!(
            "{}_attempt{attempt}.txt",
            file_key(stage, quest_id)
        ));
        if path.exists() {
            return Err(StoreError::DuplicateAttempt(path.display().to_string()));
        }
        let mut record = self.write_new(&path, text.as_bytes())?;
        record.stage = stage;
        record.quest_id = quest_id.map(str::to_string);
        Ok(record)
    }

    /// Persist a validated artifact in canonical form. One file per
    /// (stage, quest_id).
    pub fn persist_structured(
        &self,
        run_id: &str,
        quest_id: Option<&str>,
        doc: &ArtifactDocument,
    ) -> Result<ArtifactRecord, StoreError> {
        let stage = doc.kind();
        let path = self
            .run_dir(run_id)
            .join("artifacts")
            .join(format!("{}.json", file_key(stage, quest_id)));
        if path.exists() {
            return Err(StoreError::AlreadyPersisted(path.display().to_string()));
        }
        let mut record = self.write_new(&path, canonical_serialize(doc).as_bytes())?;
        record.stage = stage;
        record.quest_id = quest_id.map(str::to_string);
        Ok(record)
    }

    /// Write the run manifest. Exactly once per run.
    pub fn persist_manifest(&self, manifest: &RunManifest) -> Result<ArtifactRecord, StoreError> {
        let path = self.manifest_path(&manifest.run_id);
        if path.exists() {
            return Err(StoreError::AlreadyPersisted(path.display().to_string()));
        }
        let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        self.write_new(&path, json.as_bytes())
    }

    fn keys_in(&self, dir: &Path, strip_attempt: bool) -> Result<BTreeSet<String>, StoreError> {
        let mut keys = BTreeSet::new();
        let entries = fs::read_dir(dir).map_err(|e| Self::io_err(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Self::io_err(dir, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            let stem = name
                .rsplit_once('.')
                .map(|(stem, _)| stem.to_string())
                .unwrap_or(name);
            let key = if strip_attempt {
                match stem.rsplit_once("_attempt") {
                    Some((key, _)) => key.to_string(),
                    None => stem,
                }
            } else {
                stem
            };
            keys.insert(key);
        }
        Ok(keys)
    }

    /// The (stage, quest_id) keys present under `raw/`.
    pub fn raw_keys(&self, run_id: &str) -> Result<BTreeSet<String>, StoreError> {
        self.keys_in(&self.run_dir(run_id).join("raw"), true)
    }

    /// The (stage, quest_id) keys present under `artifacts/`.
    pub fn artifact_keys(&self, run_id: &str) -> Result<BTreeSet<String>, StoreError> {
        self.keys_in(&self.run_dir(run_id).join("artifacts"), false)
    }

    /// Load a run back from disk, re-validating every structured artifact.
    /// Missing downstream artifacts yield a partial [`RunState`].
    pub fn load_run(&self, run_id: &str) -> Result<(RunState, RunManifest), StoreError> {
        let manifest_path = self.manifest_path(run_id);
        if !manifest_path.exists() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let manifest_text =
            fs::read_to_string(&manifest_path).map_err(|e| Self::io_err(&manifest_path, e))?;
        let manifest: RunManifest =
            serde_json::from_str(&manifest_text).map_err(|source| StoreError::Json {
                path: manifest_path.display().to_string(),
                source,
            })?;

        let mut state = RunState::default();
        let artifacts_dir = self.run_dir(run_id).join("artifacts");
        let mut paths: Vec<PathBuf> = fs::read_dir(&artifacts_dir)
            .map_err(|e| Self::io_err(&artifacts_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        paths.sort();

        for path in paths {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
            let (stage, quest_id) = parse_artifact_key(&stem);
            let Some(stage) = stage else { continue };
            let text = fs::read_to_string(&path).map_err(|e| Self::io_err(&path, e))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|source| StoreError::Json {
                    path: path.display().to_string(),
                    source,
                })?;
            let (report, doc) = ArtifactDocument::from_value(stage, &value);
            let doc = doc.map_err(|e| StoreError::CorruptArtifact {
                path: path.display().to_string(),
                report: Box::new(report),
                detail: e.to_string(),
            })?;
            match doc {
                ArtifactDocument::World(d) => state.world = Some(d),
                ArtifactDocument::NpcRoster(d) => state.npcs = Some(d),
                ArtifactDocument::Player(d) => state.player = Some(d),
                ArtifactDocument::QuestSet(d) => state.quests = Some(d),
                ArtifactDocument::ExtendedQuest(d) => {
                    let key = quest_id.unwrap_or_else(|| d.id.clone());
                    state.extended.insert(key, d);
                }
            }
        }
        Ok((state, manifest))
    }
}

/// Split an artifact file stem like `extended_quest_M3` into stage and quest id.
fn parse_artifact_key(stem: &str) -> (Option<StageKind>, Option<String>) {
    if let Some(stage) = StageKind::from_slug(stem) {
        return (Some(stage), None);
    }
    for stage in StageKind::ALL {
        let prefix = format!("{}_", stage.slug());
        if let Some(rest) = stem.strip_prefix(&prefix) {
            return (Some(stage), Some(rest.to_string()));
        }
    }
    (None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;

    fn store() -> (tempfile::TempDir, RunStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        (dir, store)
    }

    #[test]
    fn raw_attempt_written_verbatim() {
        let (_dir, store) = store();
        store.init_run("r1").unwrap();
        let record = store
            .persist_raw("r1", StageKind::World, None, 1, "{}")
            .unwrap();
        assert!(record.path.ends_with("runs/r1/raw/world_attempt1.txt"));
        assert_eq!(fs::read_to_string(&record.path).unwrap(), "{}");
        assert_eq!(record.content_hash, hex::encode(Sha256::digest(b"{}")));
    }

    #[test]
    fn duplicate_attempt_rejected() {
        let (_dir, store) = store();
        store.init_run("r1").unwrap();
        store
            .persist_raw("r1", StageKind::World, None, 1, "{}")
            .unwrap();
        assert!(matches!(
            store.persist_raw("r1", StageKind::World, None, 1, "{}"),
            Err(StoreError::DuplicateAttempt(_))
        ));
    }

    #[test]
    fn empty_raw_text_is_a_valid_record() {
        let (_dir, store) = store();
        store.init_run("r1").unwrap();
        let record = store
            .persist_raw("r1", StageKind::ExtendedQuest, Some("M3"), 2, "")
            .unwrap();
        assert!(record
            .path
            .ends_with("runs/r1/raw/extended_quest_M3_attempt2.txt"));
        assert_eq!(fs::metadata(&record.path).unwrap().len(), 0);
    }

    #[test]
    fn structured_persisted_once() {
        let (_dir, store) = store();
        store.init_run("r1").unwrap();
        let doc = ArtifactDocument::World(sample::world());
        store.persist_structured("r1", None, &doc).unwrap();
        assert!(matches!(
            store.persist_structured("r1", None, &doc),
            Err(StoreError::AlreadyPersisted(_))
        ));
    }

    #[test]
    fn artifact_key_parsing() {
        assert_eq!(parse_artifact_key("world"), (Some(StageKind::World), None));
        assert_eq!(
            parse_artifact_key("extended_quest_M10"),
            (Some(StageKind::ExtendedQuest), Some("M10".to_string()))
        );
        assert_eq!(parse_artifact_key("bogus"), (None, None));
    }

    #[test]
    fn load_missing_run_is_not_found() {
        let (_dir, store) = store();
        assert!(matches!(
            store.load_run("nope"),
            Err(StoreError::NotFound(_))
        ));
    }

    #[test]
    fn tampered_artifact_is_corrupt() {
        let (_dir, store) = store();
        store.init_run("r1").unwrap();
        store
            .persist_raw("r1", StageKind::World, None, 1, "raw")
            .unwrap();
        store
            .persist_structured("r1", None, &ArtifactDocument::World(sample::world()))
            .unwrap();
        let manifest = RunManifest::empty("r1");
        store.persist_manifest(&manifest).unwrap();

        let path = store.run_dir("r1").join("artifacts/world.json");
        fs::write(&path, "{\"city\": \"\"}").unwrap();
        assert!(matches!(
            store.load_run("r1"),
            Err(StoreError::CorruptArtifact { .. })
        ));
    }
}
