use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pointing::{PointingReport, PointingRow};
use super::text::TextScores;

/// Everything `eval` measures on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub examples: usize,
    pub accuracy: f64,
    pub text: TextScores,
    /// Absent when the split has no ground-truth masks.
    pub pointing: Option<PointingReport>,
}

impl EvalReport {
    /// Plain-text tables: justification scores (B, R, C) and pointing
    /// scores (EMD, rank correlation), one row per method.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let t = &self.text;
        let _ = writeln!(out, "split {} ({} examples), answer accuracy {:.2}%", self.split, self.examples, self.accuracy);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8}", "justification", "B", "R", "C", "exact%", "dup%");
        let _ = writeln!(
            out,
            "{:<24} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            "ours",
            100.0 * t.bleu4,
            100.0 * t.rouge_l,
            100.0 * t.cider,
            t.exact_match,
            t.duplicate_rate
        );
        if let Some(p) = &self.pointing {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<24} {:>10} {:>10}", "pointing", "EMD", "rank-corr");
            let row = |out: &mut String, r: &PointingRow| {
                let _ = writeln!(out, "{:<24} {:>10.4} {:>+10.4}", r.name, r.mean_emd, r.mean_rank_correlation);
            };
            for r in &p.rows {
                row(&mut out, r);
            }
            row(&mut out, &p.between);
        }
        out
    }
}
