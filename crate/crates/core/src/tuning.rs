//! Tuning-data exporters: SFT, CFT, distillation, the equal mix, and the
//! multiple-choice RL dataset.
//!
//! Every conversation carries only observed-part media. CFT keeps wrong
//! verdicts (critiquing a flawed prediction is the point); distillation keeps
//! only verdict-right traces.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::*;
use crate::prompts::{cft_user_prompt, mcq_prompt, DISTILL_DELIMITER, DISTILL_THINK_OPEN, NEP_INSTRUCTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    #[error("instance has no observed media")]
    MissingMedia,
    #[error("instance has no critique")]
    MissingCritique,
    #[error("instance has no reasoning")]
    MissingReasoning,
    #[error("verdict is not right")]
    NotRight,
}

fn observed_user(inst: &NepInstance, content: String) -> Result<Message, SkipReason> {
    let refs = inst.observed_refs();
    if refs.is_empty() {
        return Err(SkipReason::MissingMedia);
    }
    Ok(Message::user(content).with_media(refs))
}

fn example(strategy: Strategy, inst: &NepInstance, user: Message, target: String) -> TuningExample {
    TuningExample {
        strategy,
        video_id: inst.video_id.clone(),
        messages: vec![user, Message::assistant(target.clone())],
        target,
    }
}

pub fn to_sft(inst: &NepInstance) -> Result<TuningExample, SkipReason> {
    let user = observed_user(inst, NEP_INSTRUCTION.to_string())?;
    Ok(example(Strategy::Sft, inst, user, inst.target.clone()))
}

fn prediction_text(r: &ReasoningArtifact) -> &str {
    if r.rewritten_prediction.trim().is_empty() {
        &r.raw_prediction
    } else {
        &r.rewritten_prediction
    }
}

fn reasoning_text(r: &ReasoningArtifact) -> &str {
    if r.rewritten_reasoning.trim().is_empty() {
        &r.raw_reasoning
    } else {
        &r.rewritten_reasoning
    }
}

pub fn cft_target(verdict: &CritiqueVerdict) -> String {
    format!(
        "{}\n\nConclusion: {}",
        verdict.critique.trim(),
        verdict.conclusion.as_str()
    )
}

pub fn to_cft(inst: &NepInstance) -> Result<TuningExample, SkipReason> {
    let verdict = inst.verdict.as_ref().ok_or(SkipReason::MissingCritique)?;
    let reasoning = inst.reasoning.as_ref().ok_or(SkipReason::MissingReasoning)?;
    let user = observed_user(inst, cft_user_prompt(prediction_text(reasoning)))?;
    Ok(example(Strategy::Cft, inst, user, cft_target(verdict)))
}

pub fn distill_target(r: &ReasoningArtifact) -> String {
    format!(
        "{DISTILL_THINK_OPEN}{}{DISTILL_DELIMITER}{}",
        reasoning_text(r).trim(),
        prediction_text(r).trim()
    )
}

pub fn to_distill(inst: &NepInstance) -> Result<TuningExample, SkipReason> {
    match &inst.verdict {
        Some(v) if v.conclusion == Conclusion::Right => {}
        _ => return Err(SkipReason::NotRight),
    }
    let reasoning = inst.reasoning.as_ref().ok_or(SkipReason::MissingReasoning)?;
    let user = observed_user(inst, NEP_INSTRUCTION.to_string())?;
    Ok(example(Strategy::Distill, inst, user, distill_target(reasoning)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub examples: Vec<TuningExample>,
    pub skipped: BTreeMap<SkipReason, usize>,
}

pub fn export(instances: &[NepInstance], strategy: Strategy) -> Export {
    let convert = match strategy {
        Strategy::Sft => to_sft,
        Strategy::Cft => to_cft,
        Strategy::Distill => to_distill,
    };
    let mut out = Export::default();
    for inst in instances {
        match convert(inst) {
            Ok(ex) => out.examples.push(ex),
            Err(reason) => *out.skipped.entry(reason).or_default() += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mix {
    pub examples: Vec<TuningExample>,
    pub warnings: Vec<String>,
}

/// Strategy order for the round-robin, fixed by `seed`.
pub fn strategy_order(seed: u64) -> [Strategy; 3] {
    let mut order = Strategy::ALL;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// One epoch of the equal mix: `instances.len()` examples, taken round-robin
/// from the three strategies (each seed-shuffled), so every strategy's count
/// in any block stays within one of the others. A strategy that runs dry is
/// skipped and the remaining ones fill in proportionally.
pub fn mix_schedule(instances: &[NepInstance], seed: u64) -> Mix {
    let pools = Strategy::ALL.map(|s| export(instances, s).examples);
    mix_pools(pools, instances.len(), seed)
}

/// [`mix_schedule`] over prebuilt pools, in `Strategy::ALL` order.
pub fn mix_pools(pools: [Vec<TuningExample>; 3], len: usize, seed: u64) -> Mix {
    let mut mix = Mix::default();
    let mut queues: BTreeMap<Strategy, std::vec::IntoIter<TuningExample>> = BTreeMap::new();
    for (i, (strategy, mut pool)) in Strategy::ALL.into_iter().zip(pools).enumerate() {
        if pool.is_empty() {
            mix.warnings.push(format!(
                "{strategy:?} has no examples; mixing the others proportionally"
            ));
        }
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 + 1)));
        queues.insert(strategy, pool.into_iter());
    }
    let order = strategy_order(seed);
    let mut warned_short = false;
    let mut turn = 0usize;
    while mix.examples.len() < len {
        let mut produced = false;
        for offset in 0..order.len() {
            let strategy = order[(turn + offset) % order.len()];
            if let Some(ex) = queues.get_mut(&strategy).and_then(Iterator::next) {
                if offset > 0 && !warned_short {
                    mix.warnings
                        .push(format!("{strategy:?} ran short; block balance degrades"));
                    warned_short = true;
                }
                mix.examples.push(ex);
                produced = true;
                break;
            }
        }
        if !produced {
            break;
        }
        turn += 1;
    }
    for w in &mix.warnings {
        log::warn!("{w}");
    }
    mix
}

/// One RL prompt with its gold letter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoRecord {
    pub id: String,
    pub video_id: String,
    pub subtask: Subtask,
    pub prompt: Vec<Message>,
    pub answer: Letter,
}

pub const GRPO_SUBTASKS: [Subtask; 2] = [Subtask::Extrap1Hop, Subtask::Extrap2Hop];
pub const DEFAULT_GRPO_SIZE: usize = 2000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrpoDataset {
    pub records: Vec<GrpoRecord>,
    pub warnings: Vec<String>,
}

/// Largest-remainder apportionment of `size` over `counts`.
fn apportion(counts: &BTreeMap<Subtask, usize>, size: usize) -> BTreeMap<Subtask, usize> {
    let total: usize = counts.values().sum();
    let mut quota: BTreeMap<Subtask, usize> = counts.iter().map(|(s, c)| (*s, c * size / total)).collect();
    let mut rest: Vec<(usize, Subtask)> = counts.iter().map(|(s, c)| ((c * size) % total, *s)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = size - quota.values().sum::<usize>();
    for (_, s) in rest.into_iter().take(missing) {
        *quota.get_mut(&s).expect("subtask") += 1;
    }
    quota
}

/// Samples up to `size` 1-hop/2-hop items, stratified so the subtask ratio
/// follows the filtered pool. Items from `excluded_videos` (the benchmark)
/// are dropped with a warning.
pub fn to_grpo_dataset(pool: &[QaItem], size: usize, seed: u64, excluded_videos: &BTreeSet<String>) -> GrpoDataset {
    let mut out = GrpoDataset::default();
    let mut leaked = 0usize;
    let mut by_subtask: BTreeMap<Subtask, Vec<&QaItem>> = BTreeMap::new();
    for item in pool {
        if !GRPO_SUBTASKS.contains(&item.subtask) {
            continue;
        }
        if excluded_videos.contains(&item.video_id) {
            leaked += 1;
            continue;
        }
        by_subtask.entry(item.subtask).or_default().push(item);
    }
    if leaked > 0 {
        out.warnings
            .push(format!("{leaked} item(s) from benchmark videos excluded"));
    }
    let available: usize = by_subtask.values().map(Vec::len).sum();
    if available < size {
        out.warnings
            .push(format!("requested {size} items, pool has {available}; exporting all"));
    }
    let counts: BTreeMap<Subtask, usize> = by_subtask.iter().map(|(s, v)| (*s, v.len())).collect();
    let quota = if available == 0 {
        BTreeMap::new()
    } else {
        apportion(&counts, size.min(available))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<&QaItem> = Vec::new();
    for (subtask, mut items) in by_subtask {
        items.sort_by(|a, b| a.id.cmp(&b.id));
        items.shuffle(&mut rng);
        chosen.extend(items.into_iter().take(quota[&subtask]));
    }
    chosen.sort_by(|a, b| a.id.cmp(&b.id));
    out.records = chosen
        .into_iter()
        .map(|item| GrpoRecord {
            id: item.id.clone(),
            video_id: item.video_id.clone(),
            subtask: item.subtask,
            prompt: vec![Message::user(mcq_prompt(item)).with_media(item.media_refs.clone())],
            answer: item.answer,
        })
        .collect();
    for w in &out.warnings {
        log::warn!("{w}");
    }
    out
}

/// Media references in `example` that are not part of the instance's
/// observed media, or that point past the split time.
pub fn leaked_refs(example: &TuningExample, inst: &NepInstance) -> Vec<String> {
    let observed: BTreeSet<String> = inst.observed_refs().into_iter().collect();
    example
        .messages
        .iter()
        .filter_map(|m| m.media_refs.as_ref())
        .flatten()
        .filter(|r| !observed.contains(*r) || past_split(r, inst.split_time_s))
        .cloned()
        .collect()
}

fn past_split(media_ref: &str, split: Option<f64>) -> bool {
    let (Some(split), Some((_, t))) = (split, media_ref.rsplit_once("#t=")) else {
        return false;
    };
    t.parse::<f64>().is_ok_and(|t| t > split)
}
