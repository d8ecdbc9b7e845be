//! Resampling of row-major 2-D grids.

/// Area-weighted average resampling of an `h x w` grid to `out_h x out_w`.
/// Each output cell averages the source cells it covers, weighted by the
/// overlap area, so both up- and down-scaling preserve the mean.
pub fn area_resample(values: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(values.len(), h * w, "grid size mismatch");
    assert!(out_h > 0 && out_w > 0);
    if (h, w) == (out_h, out_w) {
        return values.to_vec();
    }
    let rows = overlaps(h, out_h);
    let cols = overlaps(w, out_w);
    let mut out = vec![0.0; out_h * out_w];
    for (i, row_span) in rows.iter().enumerate() {
        for (j, col_span) in cols.iter().enumerate() {
            let mut acc = 0.0;
            let mut area = 0.0;
            for &(r, wr) in row_span {
                for &(c, wc) in col_span {
                    acc += values[r * w + c] * wr * wc;
                    area += wr * wc;
                }
            }
            out[i * out_w + j] = acc / area;
        }
    }
    out
}

/// For each output index, the source indices it overlaps and the overlap
/// lengths, measured in source-cell units.
fn overlaps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let len = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (len > 1e-12).then_some((s, len))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_averages_blocks() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0];
        let out = area_resample(&v, 4, 4, 2, 2);
        assert_eq!(out, vec![3.5, 5.5, 11.5, 13.5]);
    }

    #[test]
    fn upscaling_replicates() {
        let out = area_resample(&[1.0, 2.0], 1, 2, 2, 4);
        assert_eq!(out, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn fractional_overlap() {
        // 3 cells onto 2: [a, (a+b)/2... ] weights 1 and 0.5 per output
        let out = area_resample(&[3.0, 6.0, 9.0], 1, 3, 1, 2);
        assert!((out[0] - (3.0 + 0.5 * 6.0) / 1.5).abs() < 1e-12);
        assert!((out[1] - (0.5 * 6.0 + 9.0) / 1.5).abs() < 1e-12);
    }
}
