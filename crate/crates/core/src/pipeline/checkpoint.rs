use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stages::Dropped;
use crate::model::{
    CaptionSplit, CritiqueVerdict, InstanceFlag, ObservedMedia, ReasoningArtifact, SceneList, SplitDecision,
};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Captioned,
    Events,
    Analyzed,
    Split,
    Reasoned,
    Rewritten,
    Verified,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Captioned,
        Stage::Events,
        Stage::Analyzed,
        Stage::Split,
        Stage::Reasoned,
        Stage::Rewritten,
        Stage::Verified,
    ];
}

/// Everything produced for one video so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoProgress {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<SceneList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<SplitDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<CaptionSplit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_media: Option<ObservedMedia>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningArtifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CritiqueVerdict>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<InstanceFlag>,
    /// Raw model output per stage, kept for auditing.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub raw: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<Dropped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheckpoint {
    pub video_id: String,
    /// Last completed stage; `None` if the video failed before any stage.
    pub stage: Option<Stage>,
    pub artifact_hash: String,
    pub progress: VideoProgress,
}

impl StageCheckpoint {
    pub fn new(video_id: &str, stage: Option<Stage>, progress: VideoProgress) -> Self {
        let bytes = serde_json::to_vec(&progress).expect("progress serializes");
        Self {
            video_id: video_id.to_string(),
            stage,
            artifact_hash: hex::encode(Sha256::digest(bytes)),
            progress,
        }
    }

    pub fn is_final(&self) -> bool {
        self.progress.dropped.is_some() || self.stage == Some(Stage::Verified)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint for `{video_id}` would move back from {from:?} to {to:?}")]
    Regression {
        video_id: String,
        from: Option<Stage>,
        to: Option<Stage>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serialized writer for `checkpoints/<video_id>.json`.
#[derive(Debug)]
pub struct CheckpointStore {
    dir: Option<PathBuf>,
    latest: Mutex<BTreeMap<String, Option<Stage>>>,
}

fn file_name(video_id: &str) -> String {
    let safe: String = video_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

impl CheckpointStore {
    /// A store that only enforces monotonicity in memory.
    pub fn ephemeral() -> Self {
        Self {
            dir: None,
            latest: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            latest: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn load(&self, video_id: &str) -> Option<StageCheckpoint> {
        let path = self.dir.as_ref()?.join(file_name(video_id));
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<StageCheckpoint>(&bytes) {
            Ok(cp) if cp.video_id == video_id => {
                self.latest
                    .lock()
                    .expect("checkpoint lock")
                    .insert(video_id.to_string(), cp.stage);
                Some(cp)
            }
            Ok(_) => None,
            Err(e) => {
                log::warn!("ignoring corrupt checkpoint {}: {e}", path.display());
                None
            }
        }
    }

    pub fn save(&self, cp: &StageCheckpoint) -> Result<(), CheckpointError> {
        let mut latest = self.latest.lock().expect("checkpoint lock");
        if let Some(prev) = latest.get(&cp.video_id) {
            if cp.stage < *prev {
                return Err(CheckpointError::Regression {
                    video_id: cp.video_id.clone(),
                    from: *prev,
                    to: cp.stage,
                });
            }
        }
        if let Some(dir) = &self.dir {
            let mut body = serde_json::to_vec_pretty(cp).map_err(io::Error::other)?;
            body.push(b'\n');
            crate::jsonl::write_atomic(&dir.join(file_name(&cp.video_id)), &body)?;
        }
        latest.insert(cp.video_id.clone(), cp.stage);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_only_advance() {
        let store = CheckpointStore::ephemeral();
        let p = VideoProgress::default();
        store
            .save(&StageCheckpoint::new("v", Some(Stage::Events), p.clone()))
            .unwrap();
        store
            .save(&StageCheckpoint::new("v", Some(Stage::Split), p.clone()))
            .unwrap();
        let err = store
            .save(&StageCheckpoint::new("v", Some(Stage::Analyzed), p))
            .unwrap_err();
        assert!(matches!(err, CheckpointError::Regression { .. }));
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = CheckpointStore::open(dir.path()).unwrap();
        let p = VideoProgress {
            caption: Some("c".into()),
            ..Default::default()
        };
        let cp = StageCheckpoint::new("a/b", Some(Stage::Captioned), p);
        store.save(&cp).unwrap();
        assert!(dir.path().join("a_b.json").is_file());
        let again = CheckpointStore::open(dir.path()).unwrap();
        assert_eq!(again.load("a/b"), Some(cp));
    }
}
