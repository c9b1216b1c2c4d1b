//! Benchmark statistics.
//!
//! Per-subtask source shares are reported to one decimal place and always sum
//! to exactly 100.0: every source but the last non-empty one (in canonical
//! source order) is rounded half-up, and the last takes the remainder.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{QaItem, Source, Subtask};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub total: usize,
    pub per_subtask: BTreeMap<Subtask, usize>,
    pub per_source: BTreeMap<Source, usize>,
    pub per_subtask_source: BTreeMap<Subtask, BTreeMap<Source, usize>>,
    pub source_percent: BTreeMap<Subtask, BTreeMap<Source, f64>>,
}

/// Shares in tenths of a percent, summing to 1000 when `counts` is non-empty.
pub fn percent_tenths(counts: &[(Source, usize)]) -> Vec<(Source, u64)> {
    let total: usize = counts.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Vec::new();
    }
    let nonzero: Vec<&(Source, usize)> = counts.iter().filter(|(_, c)| *c > 0).collect();
    let mut out = Vec::with_capacity(nonzero.len());
    let mut used = 0u64;
    for (i, (source, count)) in nonzero.iter().enumerate() {
        let tenths = if i + 1 == nonzero.len() {
            1000 - used
        } else {
            // round half up: floor(count * 1000 / total + 1/2)
            ((*count as u64) * 2000 + total as u64) / (2 * total as u64)
        };
        used += tenths;
        out.push((*source, tenths));
    }
    out
}

pub fn compute_stats(items: &[QaItem]) -> BenchStats {
    let mut stats = BenchStats {
        total: items.len(),
        ..Default::default()
    };
    for item in items {
        *stats.per_subtask.entry(item.subtask).or_default() += 1;
        *stats.per_source.entry(item.source).or_default() += 1;
        *stats
            .per_subtask_source
            .entry(item.subtask)
            .or_default()
            .entry(item.source)
            .or_default() += 1;
    }
    for (subtask, by_source) in &stats.per_subtask_source {
        let counts: Vec<(Source, usize)> = Source::ALL
            .iter()
            .map(|s| (*s, by_source.get(s).copied().unwrap_or(0)))
            .collect();
        let pct = percent_tenths(&counts)
            .into_iter()
            .map(|(s, t)| (s, t as f64 / 10.0))
            .collect();
        stats.source_percent.insert(*subtask, pct);
    }
    stats
}

/// Plain-text table: one row per source, one column per subtask, with counts
/// and shares, followed by totals.
pub fn render_table(stats: &BenchStats) -> String {
    let mut out = String::new();
    let subtasks: Vec<Subtask> = Subtask::ALL
        .into_iter()
        .filter(|s| stats.per_subtask.contains_key(s))
        .collect();
    let _ = write!(out, "{:<14}", "source");
    for s in &subtasks {
        let _ = write!(out, "{:>18}", s.as_str());
    }
    out.push('\n');
    for source in Source::ALL {
        if !stats.per_source.contains_key(&source) {
            continue;
        }
        let _ = write!(out, "{:<14}", source.display_name());
        for s in &subtasks {
            let count = stats
                .per_subtask_source
                .get(s)
                .and_then(|m| m.get(&source))
                .copied()
                .unwrap_or(0);
            let pct = stats
                .source_percent
                .get(s)
                .and_then(|m| m.get(&source))
                .copied()
                .unwrap_or(0.0);
            let _ = write!(out, "{:>18}", format!("{count} ({pct:.1}%)"));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<14}", "#Total");
    for s in &subtasks {
        let _ = write!(out, "{:>18}", stats.per_subtask[s]);
    }
    out.push('\n');
    let _ = writeln!(out, "total items: {}", stats.total);
    out
}
