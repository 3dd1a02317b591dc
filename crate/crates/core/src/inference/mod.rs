//! Pose search over a satellite map with a pluggable pair scorer.

mod export;
mod scorer;
mod search;
#[cfg(test)]
mod tests;

pub use export::{score_table_csv, search_result_json, write_score_table, write_search_result};
pub use scorer::{MappedScorer, PixelL1Oracle, PreparedScorer, Scorer};
pub use search::{
    exhaustive_pair_count, exhaustive_search, localize, rotation_candidates, stage1_pair_count,
    two_stage_search, ScoreEntry, ScorerKind, SearchConfig, SearchResult, SearchStats,
};
