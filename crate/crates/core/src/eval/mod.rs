//! Word-analogy evaluation, qualitative introspection of positional models,
//! and numeric checks of the score bounds.
//!
//! Every report is serializable and carries its per-item records next to the
//! aggregates, so aggregates can be recomputed from the records.

mod analogy;
mod bounds;
mod importance;
pub mod kmeans;
mod masked;

pub use analogy::{
    evaluate_analogies, parse_questions, read_questions, AnalogyItem, AnalogyQuestion,
    AnalogyReport, SectionScore, DEFAULT_ANALOGY_VOCAB,
};
pub use bounds::{check_score_bounds, BoundReport};
pub use importance::{
    cluster_positional_features, context_word_importance, position_importance,
    FeatureClustering, PositionImportance, WordImportance, WordImportanceReport,
};
pub use masked::{parse_masked, rank_masked_predictions, MaskedReport, Prediction, MASK};
