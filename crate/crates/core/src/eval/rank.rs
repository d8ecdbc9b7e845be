use serde::{Deserialize, Serialize};

use crate::grid::area_resample;

/// Both maps are area-averaged to this side length before ranking.
pub const RANK_GRID: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub value: f64,
    /// Set when either map is constant after rescaling; `value` is then 0.
    pub degenerate: bool,
}

/// Relative gap below which resampled values count as tied; area averaging
/// of a constant map is only constant up to rounding.
pub const TIE_TOL: f64 = 1e-12;

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    average_ranks_within(values, 0.0)
}

/// As [`average_ranks`], with sorted neighbours closer than `tol` to the
/// first value of their run counted as tied.
pub fn average_ranks_within(values: &[f64], tol: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[start]] <= tol {
            end += 1;
        }
        // positions start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation of two row-major grids after rescaling both to
/// 14 x 14.
pub fn rank_correlation(a: &[f64], a_shape: (usize, usize), b: &[f64], b_shape: (usize, usize)) -> RankCorrelation {
    let ranks = |v: Vec<f64>| {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        average_ranks_within(&v, TIE_TOL * scale)
    };
    let ra = ranks(area_resample(a, a_shape.0, a_shape.1, RANK_GRID, RANK_GRID));
    let rb = ranks(area_resample(b, b_shape.0, b_shape.1, RANK_GRID, RANK_GRID));
    match pearson(&ra, &rb) {
        Some(value) => RankCorrelation {
            value,
            degenerate: false,
        },
        None => RankCorrelation {
            value: 0.0,
            degenerate: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_mean_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identity_and_reversal() {
        let a: Vec<f64> = (0..196).map(|i| ((i * 37) % 196) as f64).collect();
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        let s = (14, 14);
        assert!((rank_correlation(&a, s, &a, s).value - 1.0).abs() < 1e-12);
        assert!((rank_correlation(&a, s, &rev, s).value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map_is_flagged() {
        let a = vec![0.25; 4];
        let b = vec![0.1, 0.2, 0.3, 0.4];
        let r = rank_correlation(&a, (2, 2), &b, (2, 2));
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
        // 20 -> 14 averaging leaves rounding noise in a flat map
        let flat = vec![1.0 / 400.0; 400];
        assert!(rank_correlation(&flat, (20, 20), &b, (2, 2)).degenerate);
    }
}
