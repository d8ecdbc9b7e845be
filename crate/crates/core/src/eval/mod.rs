//! Pointing metrics (earth mover's distance, rank correlation), text metrics
//! for justifications, answer accuracy and report rendering.

mod emd;
mod pointing;
mod rank;
mod report;
mod text;

pub use emd::{emd, emd_in_frame, emd_plan, Distribution2D, TransportPlan};
pub use pointing::{
    accuracy, consensus_accuracy, consensus_score, evaluate_pointing, random_point_map, uniform_map, ModelMaps,
    PointingReport, PointingRow, BASELINE_GRID,
};
pub use rank::{average_ranks, average_ranks_within, rank_correlation, RankCorrelation, RANK_GRID, TIE_TOL};
pub use report::EvalReport;
pub use text::{
    bleu4, cider, corpus_bleu4, duplicate_rate, evaluate_text, lcs_len, rouge_l, CorpusStats, TextScores,
    BLEU_EPS, BLEU_ORDER, CIDER_SCALE, ROUGE_BETA,
};
