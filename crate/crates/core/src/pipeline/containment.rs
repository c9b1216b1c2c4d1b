//! Scene-to-part containment.
//!
//! A scene belongs to a caption part when at least `threshold` of its word
//! 4-grams occur in that part. Scenes shorter than four words use their whole
//! word sequence as a single gram.

use std::collections::HashSet;

use crate::model::{CaptionSplit, SceneList};
use crate::text::words;

pub const GRAM: usize = 4;

fn grams(tokens: &[String]) -> Vec<Vec<String>> {
    if tokens.len() < GRAM {
        vec![tokens.to_vec()]
    } else {
        tokens.windows(GRAM).map(<[String]>::to_vec).collect()
    }
}

/// Word n-grams of `text` for every length a scene check might ask for.
struct PartIndex {
    tokens: Vec<String>,
    grams: HashSet<Vec<String>>,
}

impl PartIndex {
    fn new(text: &str) -> Self {
        let tokens = words(text);
        let grams = if tokens.len() >= GRAM {
            tokens.windows(GRAM).map(<[String]>::to_vec).collect()
        } else {
            HashSet::new()
        };
        Self { tokens, grams }
    }

    fn contains(&self, gram: &[String]) -> bool {
        if gram.len() == GRAM {
            self.grams.contains(gram)
        } else {
            !gram.is_empty() && self.tokens.windows(gram.len()).any(|w| w == gram)
        }
    }
}

/// Fraction of the scene's grams found in `part` (0 for an empty scene).
pub fn coverage(scene: &str, part: &str) -> f64 {
    coverage_in(&words(scene), &PartIndex::new(part))
}

fn coverage_in(scene_tokens: &[String], part: &PartIndex) -> f64 {
    if scene_tokens.is_empty() {
        return 0.0;
    }
    let gs = grams(scene_tokens);
    let hits = gs.iter().filter(|g| part.contains(g)).count();
    hits as f64 / gs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misplaced {
    /// 1-based scene index.
    pub scene: usize,
    /// Part (1 or 2) the scene should be in.
    pub expected_part: u8,
    pub coverage_expected: f64,
    pub coverage_other: f64,
}

/// Scenes 1..=k must be contained in part1 and not part2; scenes k+1..=n the
/// reverse. Returns every scene that breaks this.
pub fn misplaced_scenes(events: &SceneList, k: usize, split: &CaptionSplit, threshold: f64) -> Vec<Misplaced> {
    let p1 = PartIndex::new(&split.part1);
    let p2 = PartIndex::new(&split.part2);
    let mut out = Vec::new();
    for (i, scene) in events.scenes.iter().enumerate() {
        let idx = i + 1;
        let tokens = words(&scene.description);
        let (c1, c2) = (coverage_in(&tokens, &p1), coverage_in(&tokens, &p2));
        let (expected_part, ce, co) = if idx <= k { (1, c1, c2) } else { (2, c2, c1) };
        if ce < threshold || co >= threshold {
            out.push(Misplaced {
                scene: idx,
                expected_part,
                coverage_expected: ce,
                coverage_other: co,
            });
        }
    }
    out
}
