//! Preference aggregation, preference-based reward fitting and impact-mitigation gridworlds.

pub mod aggregation;
pub mod audit;
pub mod gridworld;
pub mod preference;
pub mod profile_file;
pub mod reward;

pub use aggregation::{AggregateOrdering, Rule, Score, TieBreak};
pub use preference::{
    Alternative, PreferenceSet, ProfileError, TallyMatrix, Weight, WeightedProfile,
};
