//! Evaluation suite: capability metrics, corpus diversity, judge rubrics,
//! and batch-trend aggregation. Perplexity is intentionally absent — it
//! needs an external domain model, so reports only carry externally supplied
//! values.

pub mod diversity;
pub mod judge;
pub mod metrics;
pub mod report;

pub use diversity::{
    grouped_diversity, self_bleu4, tfidf_diversity, tokenize, DiversityError, GroupDiversity,
    GroupedDiversity,
};
pub use judge::{judge_rubric, treatment_alignment, JudgeError, JudgeRubricResult, Rubric};
pub use metrics::{
    alignment_from_scores, canonical_name, diagnostic_accuracy, examination_precision,
    normalize_diagnosis, scale_to_unit, SynonymTable,
};
pub use report::{
    aggregate, emit_trend_report, merge, CaseScores, DiversityBlock, JudgeBlock, MetricReport,
    Phase, ReportError, TREND_CSV_HEADER,
};
