use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nepkit::segment::{load_sidecar_timestamps, probe_duration};
use nepkit::{Source, Validate, VideoRecord};
use serde::Deserialize;

const MEDIA_EXTENSIONS: [&str; 6] = ["mp4", "mkv", "webm", "mov", "avi", "m4v"];

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct Meta {
    source: Option<Source>,
    duration_s: Option<f64>,
}

#[derive(Debug, Default)]
struct Entry {
    media: Option<PathBuf>,
    caption: Option<PathBuf>,
    meta: Option<PathBuf>,
}

/// One record per stem that has media or a caption; records that fail
/// validation are reported separately.
pub fn scan(dir: &Path, default_source: Source, probe_tool: &str) -> Result<(Vec<VideoRecord>, Vec<String>)> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for dirent in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = dirent?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if stem.ends_with(".timestamps") {
            continue;
        }
        let entry = entries.entry(stem.to_string()).or_default();
        match ext.to_ascii_lowercase().as_str() {
            "txt" => entry.caption = Some(path),
            "json" => entry.meta = Some(path),
            e if MEDIA_EXTENSIONS.contains(&e) => entry.media = Some(path),
            _ => {}
        }
    }

    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (id, entry) in entries {
        if entry.media.is_none() && entry.caption.is_none() {
            continue;
        }
        let meta: Meta = match &entry.meta {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => Meta::default(),
        };
        let caption = match &entry.caption {
            Some(p) => std::fs::read_to_string(p)?.trim().to_string(),
            None => String::new(),
        };
        let duration_s = match (meta.duration_s, &entry.media) {
            (Some(d), _) => d,
            (None, Some(media)) => probe_duration(probe_tool, media).unwrap_or_else(|e| {
                log::warn!("{id}: {e}");
                0.0
            }),
            (None, None) => 0.0,
        };
        let record = VideoRecord {
            source: meta.source.unwrap_or(default_source),
            media_uri: entry.media.map(|p| p.display().to_string()).unwrap_or_default(),
            duration_s,
            caption,
            scene_timestamps: load_sidecar_timestamps(dir, &id)?,
            id,
        };
        let violations = record.validate();
        if violations.is_empty() {
            records.push(record);
        } else {
            for v in violations {
                problems.push(format!("{}: {v}", record.id));
            }
        }
    }
    Ok((records, problems))
}
