//! Pairwise comparison aggregation into skill ratings and mapped scores.

mod rating;
mod tournament;

pub use rating::{
    resolve_orderings, update_ratings, Outcome, Preference, SkillRating, UpdateParams,
};
pub use tournament::{
    assign_coarse_bins, default_budget, plackett_luce_map, replay, run_tournament, Comparator,
    ComparisonRecord, HiddenScoreComparator, LogEntry, PairScheduler, RandomScheduler, RatedItem,
    SchedulerView, SlotPreference, TableComparator, TournamentConfig, TournamentItem,
    TournamentResult, UncertaintyScheduler,
};
