use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emd::emd_in_frame;
use super::rank::rank_correlation;
use crate::error::{PjxError, Result};
use crate::model::AttentionMap;

/// Side of the grid the baselines are drawn on.
pub const BASELINE_GRID: usize = 20;

/// A single random cell of the baseline grid.
pub fn random_point_map(rng: &mut impl Rng) -> AttentionMap {
    AttentionMap::one_hot(
        BASELINE_GRID,
        BASELINE_GRID,
        rng.gen_range(0..BASELINE_GRID),
        rng.gen_range(0..BASELINE_GRID),
    )
}

pub fn uniform_map() -> AttentionMap {
    AttentionMap::uniform(BASELINE_GRID, BASELINE_GRID)
}

/// Both attention maps a model produced for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMaps {
    pub id: String,
    pub answer: AttentionMap,
    pub explanation: AttentionMap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointingRow {
    pub name: String,
    pub mean_emd: f64,
    pub mean_rank_correlation: f64,
    /// Examples whose correlation was undefined and counted as 0.
    pub degenerate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointingReport {
    pub count: usize,
    /// EMD unit: one ground-truth grid cell.
    pub rows: Vec<PointingRow>,
    /// Answer map against justification map.
    pub between: PointingRow,
}

impl PointingReport {
    pub fn row(&self, name: &str) -> Option<&PointingRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

struct Acc {
    emd: f64,
    corr: f64,
    degenerate: usize,
}

impl Acc {
    fn new() -> Self {
        Acc {
            emd: 0.0,
            corr: 0.0,
            degenerate: 0,
        }
    }

    fn add(&mut self, a: &AttentionMap, b: &AttentionMap, frame: (f64, f64)) -> Result<()> {
        self.emd += emd_in_frame(a, b, frame.0, frame.1)?.cost;
        let r = rank_correlation(a.values(), (a.height(), a.width()), b.values(), (b.height(), b.width()));
        self.corr += r.value;
        self.degenerate += r.degenerate as usize;
        Ok(())
    }

    fn finish(self, name: &str, n: usize) -> PointingRow {
        let n = n.max(1) as f64;
        PointingRow {
            name: name.to_string(),
            mean_emd: self.emd / n,
            mean_rank_correlation: self.corr / n,
            degenerate: self.degenerate,
        }
    }
}

/// Scores answer and justification maps against ground truth, next to the
/// random-point and uniform baselines. All EMDs are measured with every map
/// stretched over the ground-truth grid, in its cell units.
pub fn evaluate_pointing(model: &[ModelMaps], gt: &[(String, AttentionMap)], seed: u64) -> Result<PointingReport> {
    if model.len() != gt.len() {
        return Err(PjxError::Contract(format!("{} model maps but {} ground-truth maps", model.len(), gt.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: Vec<Acc> = (0..4).map(|_| Acc::new()).collect();
    let mut between = Acc::new();
    let uniform = uniform_map();
    for (m, (id, g)) in model.iter().zip(gt) {
        if &m.id != id {
            return Err(PjxError::Contract(format!("example {} aligned with ground truth {id}", m.id)));
        }
        let frame = (g.height() as f64, g.width() as f64);
        acc[0].add(&m.answer, g, frame)?;
        acc[1].add(&m.explanation, g, frame)?;
        acc[2].add(&random_point_map(&mut rng), g, frame)?;
        acc[3].add(&uniform, g, frame)?;
        between.add(&m.answer, &m.explanation, frame)?;
    }
    let n = model.len();
    let names = ["ans-att", "exp-att", "random-point", "uniform"];
    Ok(PointingReport {
        count: n,
        rows: acc.into_iter().zip(names).map(|(a, name)| a.finish(name, n)).collect(),
        between: between.finish("ans-att vs exp-att", n),
    })
}

/// Top-1 exact-match accuracy in percent.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(PjxError::Contract(format!("{} predictions but {} answers", predictions.len(), golds.len())));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// Consensus score of one prediction against annotator answers:
/// `min(#agreeing / 3, 1)`.
pub fn consensus_score<S: AsRef<str>>(prediction: &str, annotators: &[S]) -> f64 {
    let agree = annotators.iter().filter(|a| a.as_ref() == prediction).count();
    (agree as f64 / 3.0).min(1.0)
}

/// Mean consensus score in percent.
pub fn consensus_accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], annotators: &[Vec<T>]) -> Result<f64> {
    if predictions.len() != annotators.len() {
        return Err(PjxError::Contract(format!(
            "{} predictions but {} annotator sets",
            predictions.len(),
            annotators.len()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions
        .iter()
        .zip(annotators)
        .map(|(p, a)| consensus_score(p.as_ref(), a))
        .sum();
    Ok(100.0 * total / predictions.len() as f64)
}
