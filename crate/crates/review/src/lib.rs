//! Human review of generated benchmark items.
//!
//! [`ReviewStore`] keeps the decision log and the folded per-item state;
//! [`http`] exposes it to the review UI.

pub mod http;
pub mod store;

pub use store::{fold, Filter, ItemView, Page, ReviewError, ReviewSnapshot, ReviewStats, ReviewStore};
