//! Scene-index → timestamp mapping, frame sampling and clip cutting.
//!
//! When a video has no scene timestamps, durations are allocated to scenes in
//! proportion to the character length of their descriptions. A sidecar
//! `<video_id>.timestamps.json` (a JSON array of `[start, end]` pairs)
//! overrides the inference.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::model::{Coverage, FrameManifest, SceneList, VideoRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("split index {k} out of range for {n} scenes")]
    SplitOutOfRange { k: usize, n: usize },
    #[error("video has non-positive duration {0}")]
    NoDuration(f64),
    #[error("degenerate interval ({0}, {1})")]
    DegenerateInterval(f64, f64),
    #[error("frame count must be at least 1")]
    NoFrames,
    #[error("`{0}` not found on PATH; install it or enable manifest-only mode")]
    ToolMissing(String),
    #[error("`{tool}` exited with {status}: {stderr}")]
    ToolFailed {
        tool: String,
        status: String,
        stderr: String,
    },
    #[error("reading timestamp sidecar {path}: {reason}")]
    Sidecar { path: String, reason: String },
}

/// Scene boundaries `(start, end)` for every scene.
///
/// Recorded timestamps are used when they cover every scene; otherwise
/// `duration_s` is shared out by description length, and the last boundary is
/// clamped to the duration so the allocation sums exactly.
pub fn scene_bounds(video: &VideoRecord, events: &SceneList) -> Result<Vec<(f64, f64)>, SegmentError> {
    let n = events.len();
    if let Some(ts) = &video.scene_timestamps {
        if ts.len() == n {
            return Ok(ts.clone());
        }
        log::warn!(
            "{}: {} scene timestamps for {n} scenes; falling back to proportional allocation",
            video.id,
            ts.len()
        );
    }
    if !(video.duration_s > 0.0) {
        return Err(SegmentError::NoDuration(video.duration_s));
    }
    let lengths: Vec<usize> = events
        .scenes
        .iter()
        .map(|s| s.description.chars().count().max(1))
        .collect();
    let total: usize = lengths.iter().sum();
    let mut bounds = Vec::with_capacity(n);
    let mut cumulative = 0usize;
    for (i, len) in lengths.iter().enumerate() {
        let start = video.duration_s * cumulative as f64 / total as f64;
        cumulative += len;
        let end = if i + 1 == n {
            video.duration_s
        } else {
            video.duration_s * cumulative as f64 / total as f64
        };
        bounds.push((start, end));
    }
    Ok(bounds)
}

/// End time of scene `k`, i.e. the cut between scene k and k+1.
pub fn locate_split_time(video: &VideoRecord, events: &SceneList, k: usize) -> Result<f64, SegmentError> {
    let n = events.len();
    if k == 0 || k >= n {
        return Err(SegmentError::SplitOutOfRange { k, n });
    }
    Ok(scene_bounds(video, events)?[k - 1].1)
}

/// `n` midpoint-uniform timestamps over `interval`.
pub fn sample_frames(
    video: &VideoRecord,
    interval: (f64, f64),
    n: usize,
    covers: Coverage,
) -> Result<FrameManifest, SegmentError> {
    let (start, end) = interval;
    if n == 0 {
        return Err(SegmentError::NoFrames);
    }
    if !(start >= 0.0 && start < end) || (video.duration_s > 0.0 && end > video.duration_s) {
        return Err(SegmentError::DegenerateInterval(start, end));
    }
    let step = (end - start) / n as f64;
    let timestamps_s = (0..n).map(|i| start + (i as f64 + 0.5) * step).collect();
    Ok(FrameManifest {
        video_id: video.id.clone(),
        media_uri: video.media_uri.clone(),
        frame_count: n,
        timestamps_s,
        interval_s: interval,
        covers,
    })
}

/// Reads `<dir>/<video_id>.timestamps.json` if present.
pub fn load_sidecar_timestamps(dir: &Path, video_id: &str) -> Result<Option<Vec<(f64, f64)>>, SegmentError> {
    let path = dir.join(format!("{video_id}.timestamps.json"));
    if !path.is_file() {
        return Ok(None);
    }
    let err = |reason: String| SegmentError::Sidecar {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map(Some).map_err(|e| err(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ClipCutter {
    pub tool: String,
    /// Record intended cuts without running the tool.
    pub manifest_only: bool,
}

impl Default for ClipCutter {
    fn default() -> Self {
        Self {
            tool: "ffmpeg".into(),
            manifest_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClipOutcome {
    Written(PathBuf),
    /// Manifest-only mode: the command that would have run.
    Skipped {
        command: Vec<String>,
    },
}

/// Looks `tool` up on PATH (or accepts it as an explicit path).
pub fn find_tool(tool: &str) -> Option<PathBuf> {
    let candidate = Path::new(tool);
    if candidate.components().count() > 1 {
        return candidate.is_file().then(|| candidate.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(tool))
        .find(|p| p.is_file())
}

impl ClipCutter {
    pub fn command(&self, video: &VideoRecord, interval: (f64, f64), out: &Path) -> Vec<String> {
        vec![
            self.tool.clone(),
            "-y".into(),
            "-loglevel".into(),
            "error".into(),
            "-ss".into(),
            format!("{:.3}", interval.0),
            "-i".into(),
            video.media_uri.clone(),
            "-t".into(),
            format!("{:.3}", interval.1 - interval.0),
            "-c:v".into(),
            "libx264".into(),
            "-an".into(),
            out.display().to_string(),
        ]
    }

    pub fn cut_clip(&self, video: &VideoRecord, interval: (f64, f64), out: &Path) -> Result<ClipOutcome, SegmentError> {
        let (start, end) = interval;
        if !(start >= 0.0 && start < end) {
            return Err(SegmentError::DegenerateInterval(start, end));
        }
        let command = self.command(video, interval, out);
        if self.manifest_only {
            return Ok(ClipOutcome::Skipped { command });
        }
        let tool = find_tool(&self.tool).ok_or_else(|| SegmentError::ToolMissing(self.tool.clone()))?;
        if let Some(parent) = out.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        log::info!("running: {}", command.join(" "));
        let output = Command::new(tool)
            .args(&command[1..])
            .output()
            .map_err(|e| SegmentError::ToolFailed {
                tool: self.tool.clone(),
                status: "spawn failure".into(),
                stderr: e.to_string(),
            })?;
        if !output.status.success() {
            return Err(SegmentError::ToolFailed {
                tool: self.tool.clone(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(ClipOutcome::Written(out.to_path_buf()))
    }
}

/// Duration of a media file in seconds via `ffprobe`.
pub fn probe_duration(probe_tool: &str, path: &Path) -> Result<f64, SegmentError> {
    let tool = find_tool(probe_tool).ok_or_else(|| SegmentError::ToolMissing(probe_tool.to_string()))?;
    let output = Command::new(tool)
        .args([
            "-v",
            "error",
            "-show_entries",
            "format=duration",
            "-of",
            "default=nw=1:nk=1",
        ])
        .arg(path)
        .output()
        .map_err(|e| SegmentError::ToolFailed {
            tool: probe_tool.to_string(),
            status: "spawn failure".into(),
            stderr: e.to_string(),
        })?;
    if !output.status.success() {
        return Err(SegmentError::ToolFailed {
            tool: probe_tool.to_string(),
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    String::from_utf8_lossy(&output.stdout)
        .trim()
        .parse()
        .map_err(|_| SegmentError::ToolFailed {
            tool: probe_tool.to_string(),
            status: "unparseable output".into(),
            stderr: String::from_utf8_lossy(&output.stdout).into_owned(),
        })
}
