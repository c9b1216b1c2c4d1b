//! Review state: a raw item set plus an append-only decision log.
//!
//! Layout of a store directory:
//!
//! ```text
//! items.jsonl      the items under review, as first loaded (never rewritten)
//! decisions.jsonl  one ReviewDecision per line, append-only
//! snapshot.json    folded state after the first `log_len` decisions
//! ```
//!
//! The current state is always `fold(items, decisions)`. The snapshot only
//! shortcuts the replay. A crash can at worst leave a torn final line in the
//! log, which is cut off on the next open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use nepkit::bench::validate_item;
use nepkit::jsonl::{self, JsonlError};
use nepkit::{QaItem, ReviewAction, ReviewDecision, ReviewState, Source, Subtask, Validate, Violation};
use serde::{Deserialize, Serialize};

pub const ITEMS_FILE: &str = "items.jsonl";
pub const LOG_FILE: &str = "decisions.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
/// Decisions between snapshots.
pub const SNAPSHOT_EVERY: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("decision rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("item `{id}` is {actual:?}, expected {expected:?}")]
    Conflict {
        id: String,
        expected: ReviewState,
        actual: ReviewState,
    },
    #[error("{path}:{line}: corrupt decision log entry: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
    #[error(transparent)]
    Items(#[from] JsonlError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One item's derived state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    /// Current content; `review_state` is the folded state.
    pub item: QaItem,
    /// Content before each edit, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<QaItem>,
    pub decisions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewSnapshot {
    pub log_len: usize,
    pub items: BTreeMap<String, ItemView>,
}

impl ReviewSnapshot {
    pub fn initial(items: &[QaItem]) -> Self {
        let items = items
            .iter()
            .map(|item| {
                let item = QaItem {
                    review_state: ReviewState::Pending,
                    ..item.clone()
                };
                (
                    item.id.clone(),
                    ItemView {
                        item,
                        history: Vec::new(),
                        decisions: 0,
                    },
                )
            })
            .collect();
        Self { log_len: 0, items }
    }

    /// Applies one decision; decisions on unknown items are counted but
    /// otherwise ignored.
    pub fn apply(&mut self, d: &ReviewDecision) {
        self.log_len += 1;
        let Some(view) = self.items.get_mut(&d.item_id) else {
            return;
        };
        view.decisions += 1;
        match d.action {
            ReviewAction::Accept => view.item.review_state = ReviewState::Accepted,
            ReviewAction::Discard => view.item.review_state = ReviewState::Discarded,
            ReviewAction::Edit => {
                if let Some(edited) = &d.edited_item {
                    let previous = std::mem::replace(
                        &mut view.item,
                        QaItem {
                            id: d.item_id.clone(),
                            ..edited.clone()
                        },
                    );
                    view.history.push(previous);
                }
                view.item.review_state = ReviewState::Edited;
            }
        }
    }

    pub fn state_of(&self, id: &str) -> Option<ReviewState> {
        self.items.get(id).map(|v| v.item.review_state)
    }

    /// Accepted and edited items in id order.
    pub fn export(&self) -> Vec<QaItem> {
        self.items
            .values()
            .filter(|v| matches!(v.item.review_state, ReviewState::Accepted | ReviewState::Edited))
            .map(|v| v.item.clone())
            .collect()
    }
}

/// Replays a whole log over the raw items.
pub fn fold(items: &[QaItem], log: &[ReviewDecision]) -> ReviewSnapshot {
    let mut snap = ReviewSnapshot::initial(items);
    for d in log {
        snap.apply(d);
    }
    snap
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    #[serde(default)]
    pub state: Option<ReviewState>,
    #[serde(default)]
    pub subtask: Option<Subtask>,
    #[serde(default)]
    pub source: Option<Source>,
}

impl Filter {
    pub fn matches(&self, item: &QaItem) -> bool {
        self.state.map_or(true, |s| s == item.review_state)
            && self.subtask.map_or(true, |s| s == item.subtask)
            && self.source.map_or(true, |s| s == item.source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub id: String,
    pub video_id: String,
    pub source: Source,
    pub subtask: Subtask,
    pub review_state: ReviewState,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub items: Vec<ItemSummary>,
}

pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub total: usize,
    pub decisions: usize,
    pub by_state: BTreeMap<ReviewState, usize>,
    pub by_subtask: BTreeMap<Subtask, BTreeMap<ReviewState, usize>>,
}

pub struct ReviewStore {
    dir: PathBuf,
    state: ArcSwap<ReviewSnapshot>,
    log: Mutex<File>,
}

impl std::fmt::Debug for ReviewStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewStore")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

/// Reads the decision log, cutting off a torn trailing line.
fn read_log(path: &Path) -> Result<Vec<ReviewDecision>, ReviewError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        log::warn!(
            "{}: dropping {} bytes of an incomplete trailing entry",
            path.display(),
            bytes.len() - complete
        );
        OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| ReviewError::Corrupt {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| ReviewError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

impl ReviewStore {
    /// Opens `dir`, seeding it with `items` if it holds no store yet.
    pub fn open_or_init(dir: impl Into<PathBuf>, items: &[QaItem]) -> Result<Self, ReviewError> {
        let dir = dir.into();
        if !dir.join(ITEMS_FILE).is_file() {
            jsonl::write(dir.join(ITEMS_FILE), items)?;
        }
        Self::open(dir)
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ReviewError> {
        let dir = dir.into();
        let items: Vec<QaItem> = jsonl::read(dir.join(ITEMS_FILE))?;
        let log_path = dir.join(LOG_FILE);
        let decisions = read_log(&log_path)?;
        let state = Self::restore(&dir, &items, &decisions);
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Self {
            dir,
            state: ArcSwap::from_pointee(state),
            log: Mutex::new(log),
        })
    }

    fn restore(dir: &Path, items: &[QaItem], decisions: &[ReviewDecision]) -> ReviewSnapshot {
        let snapshot = fs::read(dir.join(SNAPSHOT_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice::<ReviewSnapshot>(&b).ok())
            .filter(|s| s.log_len <= decisions.len() && s.items.len() == items.len());
        match snapshot {
            Some(mut snap) => {
                for d in &decisions[snap.log_len..] {
                    snap.apply(d);
                }
                snap
            }
            None => fold(items, decisions),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// The current immutable state; never blocks on writers.
    pub fn snapshot(&self) -> Arc<ReviewSnapshot> {
        self.state.load_full()
    }

    pub fn get(&self, id: &str) -> Option<ItemView> {
        self.snapshot().items.get(id).cloned()
    }

    /// Appends a decision and returns the updated item. With `expected`,
    /// the decision is refused if the item has moved on since the caller
    /// last looked.
    pub fn submit(&self, d: ReviewDecision, expected: Option<ReviewState>) -> Result<QaItem, ReviewError> {
        let violations = d.validate();
        if !violations.is_empty() {
            return Err(ReviewError::Invalid(violations));
        }
        if let Some(edited) = &d.edited_item {
            let violations = validate_item(edited, None);
            if !violations.is_empty() {
                return Err(ReviewError::Invalid(violations));
            }
        }

        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.state.load_full();
        let actual = current
            .state_of(&d.item_id)
            .ok_or_else(|| ReviewError::UnknownItem(d.item_id.clone()))?;
        if let Some(expected) = expected.filter(|e| *e != actual) {
            return Err(ReviewError::Conflict {
                id: d.item_id.clone(),
                expected,
                actual,
            });
        }

        let mut line = serde_json::to_vec(&d).map_err(io::Error::other)?;
        line.push(b'\n');
        let before = log.metadata()?.len();
        if let Err(e) = log.write_all(&line).and_then(|_| log.sync_data()) {
            // leave no partial line behind for the next append to extend
            let _ = log.set_len(before);
            return Err(e.into());
        }

        let mut next = (*current).clone();
        next.apply(&d);
        let item = next.items[&d.item_id].item.clone();
        if next.log_len % SNAPSHOT_EVERY == 0 {
            if let Err(e) = jsonl::write_json(self.dir.join(SNAPSHOT_FILE), &next) {
                log::warn!("snapshot failed (log still authoritative): {e}");
            }
        }
        self.state.store(Arc::new(next));
        Ok(item)
    }

    pub fn list(&self, filter: &Filter, page: usize, page_size: usize) -> Page {
        let snap = self.snapshot();
        let page_size = page_size.max(1);
        let matching: Vec<&ItemView> = snap.items.values().filter(|v| filter.matches(&v.item)).collect();
        let items = matching
            .iter()
            .skip(page * page_size)
            .take(page_size)
            .map(|v| ItemSummary {
                id: v.item.id.clone(),
                video_id: v.item.video_id.clone(),
                source: v.item.source,
                subtask: v.item.subtask,
                review_state: v.item.review_state,
                question: v.item.question.clone(),
            })
            .collect();
        Page {
            total: matching.len(),
            page,
            page_size,
            items,
        }
    }

    pub fn stats(&self) -> ReviewStats {
        let snap = self.snapshot();
        let mut stats = ReviewStats {
            total: snap.items.len(),
            decisions: snap.log_len,
            ..Default::default()
        };
        for v in snap.items.values() {
            *stats.by_state.entry(v.item.review_state).or_default() += 1;
            *stats
                .by_subtask
                .entry(v.item.subtask)
                .or_default()
                .entry(v.item.review_state)
                .or_default() += 1;
        }
        stats
    }

    pub fn export_accepted(&self) -> Vec<QaItem> {
        self.snapshot().export()
    }

    /// Full decision log as currently on disk.
    pub fn decisions(&self) -> Result<Vec<ReviewDecision>, ReviewError> {
        let _guard = self.log.lock().unwrap_or_else(|e| e.into_inner());
        read_log(&self.dir.join(LOG_FILE))
    }
}
