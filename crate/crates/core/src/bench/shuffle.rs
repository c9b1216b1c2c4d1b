//! Seeded option shuffling.
//!
//! The permutation applied to an item is `(seed + h(id)) mod 24`, decoded as a
//! Lehmer code over the four letters. Sweeping `seed` over 0..24 therefore
//! visits every permutation exactly once for every item.

use std::collections::BTreeMap;

use crate::model::{Letter, OptionPermutation, QaItem};
use crate::text::stable_hash;

pub const PERMUTATIONS: u64 = 24;

/// The `index`-th permutation of A..D in lexicographic order.
pub fn nth_permutation(index: u64) -> Vec<Letter> {
    let mut pool = Letter::ALL.to_vec();
    let mut rest = index % PERMUTATIONS;
    let mut out = Vec::with_capacity(4);
    for radix in [6u64, 2, 1, 1] {
        let pick = (rest / radix) as usize;
        rest %= radix;
        out.push(pool.remove(pick));
    }
    out
}

pub fn permutation_for(item_id: &str, seed: u64) -> OptionPermutation {
    let index = (seed % PERMUTATIONS + stable_hash(item_id) % PERMUTATIONS) % PERMUTATIONS;
    OptionPermutation {
        seed,
        order: nth_permutation(index),
    }
}

/// Reorders options so that position `i` shows original letter `order[i]`.
/// Items without exactly four options are left unshuffled.
pub fn apply(item: &mut QaItem, perm: OptionPermutation) {
    if item.options.len() != 4 || perm.order.len() != 4 {
        item.option_permutation = OptionPermutation::identity(perm.seed);
        return;
    }
    let original = std::mem::take(&mut item.options);
    let mut shuffled = BTreeMap::new();
    let mut answer = item.answer;
    for (pos, from) in perm.order.iter().enumerate() {
        let to = Letter::from_index(pos).expect("four positions");
        shuffled.insert(to, original[from].clone());
        if *from == item.answer {
            answer = to;
        }
    }
    item.options = shuffled;
    item.answer = answer;
    item.option_permutation = perm;
}

/// Restores the generator's original option order.
pub fn unshuffle(item: &QaItem) -> QaItem {
    let mut out = item.clone();
    let order = &item.option_permutation.order;
    if order.len() == 4 && item.options.len() == 4 {
        let mut original = BTreeMap::new();
        for (pos, from) in order.iter().enumerate() {
            let shown = Letter::from_index(pos).expect("four positions");
            original.insert(*from, item.options[&shown].clone());
            if shown == item.answer {
                out.answer = *from;
            }
        }
        out.options = original;
    }
    out.option_permutation = OptionPermutation::identity(item.option_permutation.seed);
    out
}

/// Re-shuffles an item as if it had been generated with `seed`.
pub fn reshuffle(item: &QaItem, seed: u64) -> QaItem {
    let mut out = unshuffle(item);
    apply(&mut out, permutation_for(&item.id, seed));
    out
}
