//! Purity and coverage at top-n, and the one-shot unseen-label protocol.

mod metrics;
mod oneshot;

pub use metrics::{
    evaluate_model, evaluate_rankings, purity_coverage, rank_scores, MetricsReport, DEFAULT_N_MAX,
};
pub use oneshot::{
    build_one_shot_split, encode_pair_set, encode_pairs, holdout_by_utterance, one_shot_evaluate,
    train_one_shot, verify_one_shot_split, EpisodicRanker, NnRanker, OneShotPair, OneShotSplit,
    RandomRanker, SupportRanker, MAX_SPLIT_ATTEMPTS,
};
