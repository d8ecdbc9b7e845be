use crate::error::{PjxError, Result};
use crate::model::AttentionMap;

/// Grid distributions share the attention-map invariants.
pub type Distribution2D = AttentionMap;

/// Residual masses below this are treated as exhausted.
const MASS_EPS: f64 = 1e-14;

/// Optimal flow between the supports of two distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    /// Row-major cell indices of the source support.
    pub sources: Vec<usize>,
    /// Row-major cell indices of the sink support.
    pub sinks: Vec<usize>,
    /// `sources.len() x sinks.len()` row-major flow matrix.
    pub flow: Vec<f64>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.sinks.len() + j]
    }
}

/// Cell centers of a `height x width` grid laid over a `frame_h x frame_w`
/// rectangle, as `(x, y)`.
fn centers(height: usize, width: usize, frame_h: f64, frame_w: f64) -> impl Fn(usize) -> (f64, f64) {
    move |cell| {
        let (n, m) = (cell / width, cell % width);
        (
            (m as f64 + 0.5) / width as f64 * frame_w,
            (n as f64 + 0.5) / height as f64 * frame_h,
        )
    }
}

/// Earth mover's distance with Euclidean ground distance between cell
/// centers. Grids of equal size are compared in cell units; otherwise both are
/// mapped to the unit square.
pub fn emd(a: &Distribution2D, b: &Distribution2D) -> Result<f64> {
    Ok(emd_plan(a, b)?.cost)
}

pub fn emd_plan(a: &Distribution2D, b: &Distribution2D) -> Result<TransportPlan> {
    if (a.height(), a.width()) == (b.height(), b.width()) {
        emd_in_frame(a, b, a.height() as f64, a.width() as f64)
    } else {
        emd_in_frame(a, b, 1.0, 1.0)
    }
}

/// EMD with both grids stretched over a common `frame_h x frame_w`
/// rectangle, so maps of different resolution are measured in one unit.
pub fn emd_in_frame(a: &Distribution2D, b: &Distribution2D, frame_h: f64, frame_w: f64) -> Result<TransportPlan> {
    if !(frame_h > 0.0 && frame_w > 0.0) {
        return Err(PjxError::Parameter("frame must have positive size".into()));
    }
    let (sa, ma) = support(a.values())?;
    let (sb, mb) = support(b.values())?;
    let pa = centers(a.height(), a.width(), frame_h, frame_w);
    let pb = centers(b.height(), b.width(), frame_h, frame_w);
    let pb: Vec<(f64, f64)> = sb.iter().map(|&j| pb(j)).collect();
    let mut cost = Vec::with_capacity(sa.len() * sb.len());
    for &i in &sa {
        let (xi, yi) = pa(i);
        cost.extend(pb.iter().map(|&(xj, yj)| (xi - xj).hypot(yi - yj)));
    }
    let flow = min_cost_flow(&ma, &mb, &cost);
    let total = flow.iter().zip(&cost).map(|(f, c)| f * c).sum::<f64>().max(0.0);
    Ok(TransportPlan {
        sources: sa,
        sinks: sb,
        flow,
        cost: total,
    })
}

/// Nonzero cells and their masses rescaled to sum exactly to one.
fn support(values: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
    let total: f64 = values.iter().sum();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(PjxError::Contract(format!("emd needs a normalized distribution, got total {total}")));
    }
    let cells: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    let masses = cells.iter().map(|&i| values[i] / total).collect();
    Ok((cells, masses))
}

/// Successive shortest augmenting paths with node potentials on the
/// complete bipartite graph `supply -> demand`. Costs are non-negative, so
/// zero initial potentials are feasible and every reduced cost stays
/// non-negative. Returns the row-major flow matrix.
pub(crate) fn min_cost_flow(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    let mut flow = vec![0.0; n * m];
    let mut left = supply.to_vec();
    let mut need = demand.to_vec();
    // node layout: 0..n supply side, n..n+m demand side
    let v = n + m;
    let mut pot = vec![0.0f64; v];
    let mut dist = vec![0.0f64; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];

    loop {
        if left.iter().all(|&x| x <= MASS_EPS) || need.iter().all(|&x| x <= MASS_EPS) {
            break;
        }
        // multi-source Dijkstra from every supply node with mass left
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if left[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..v {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for x in 0..v {
                if !done[x] && dist[x] < best {
                    best = dist[x];
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            // finalized nodes are never relaxed again, so rounding in the
            // reduced costs cannot turn the predecessor tree into a cycle
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let w = n + j;
                    if done[w] {
                        continue;
                    }
                    let d = best + cost[u * m + j] + pot[u] - pot[w];
                    if d < dist[w] {
                        dist[w] = d;
                        prev[w] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if !done[i] && flow[i * m + j] > MASS_EPS {
                        let d = best - cost[i * m + j] + pot[u] - pot[i];
                        if d < dist[i] {
                            dist[i] = d;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        // cheapest demand node still short of mass, compared in true cost;
        // active supply nodes always sit at potential zero
        let mut sink = usize::MAX;
        let true_cost = |j: usize| dist[n + j] + pot[n + j];
        for j in 0..m {
            if need[j] > MASS_EPS && (sink == usize::MAX || true_cost(j) < true_cost(sink)) {
                sink = j;
            }
        }
        if sink == usize::MAX || !dist[n + sink].is_finite() {
            break;
        }
        // the residual graph only gains reverse edges of zero reduced cost,
        // so potentials stay valid when unreached nodes keep the cap
        let cap = dist[n + sink];
        for x in 0..v {
            pot[x] += dist[x].min(cap);
        }
        // bottleneck along the path
        let mut amount = need[sink];
        let mut w = n + sink;
        loop {
            let u = prev[w];
            if u == usize::MAX {
                amount = amount.min(left[w]);
                break;
            }
            if u >= n {
                amount = amount.min(flow[w * m + (u - n)]);
            }
            w = u;
        }
        let mut w = n + sink;
        loop {
            let u = prev[w];
            if u == usize::MAX {
                left[w] -= amount;
                break;
            }
            if u < n {
                flow[u * m + (w - n)] += amount;
            } else {
                let f = &mut flow[w * m + (u - n)];
                *f -= amount;
                if *f < MASS_EPS {
                    *f = 0.0;
                }
            }
            w = u;
        }
        need[sink] -= amount;
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, v: &[f64]) -> AttentionMap {
        AttentionMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let p = map(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(emd(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn corner_to_corner() {
        let a = AttentionMap::one_hot(2, 2, 0, 0);
        let b = AttentionMap::one_hot(2, 2, 1, 1);
        assert!((emd(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn uniform_to_hot_cell() {
        let u = AttentionMap::uniform(2, 2);
        let hot = AttentionMap::one_hot(2, 2, 0, 0);
        let expect = (0.0 + 1.0 + 1.0 + 2f64.sqrt()) / 4.0;
        assert!((emd(&u, &hot).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn middle_mass_splits_outward() {
        // the crossing plan would cost 2
        let a = map(1, 4, &[0.0, 0.5, 0.5, 0.0]);
        let b = map(1, 4, &[0.5, 0.0, 0.0, 0.5]);
        let plan = emd_plan(&a, &b).unwrap();
        assert!((plan.cost - 1.0).abs() < 1e-12);
        for (i, &s) in a.values().iter().filter(|v| **v > 0.0).enumerate() {
            let row: f64 = (0..plan.sinks.len()).map(|j| plan.at(i, j)).sum();
            assert!((row - s).abs() < 1e-12);
        }
    }

    #[test]
    fn different_grids_use_unit_square() {
        let a = AttentionMap::one_hot(1, 2, 0, 0);
        let b = AttentionMap::one_hot(1, 4, 0, 3);
        // centers at x = 0.25 and x = 0.875
        assert!((emd(&a, &b).unwrap() - 0.625).abs() < 1e-12);
        let framed = emd_in_frame(&a, &b, 1.0, 4.0).unwrap();
        assert!((framed.cost - 2.5).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_is_rejected() {
        assert!(support(&[0.5, 0.2]).is_err());
        assert!(support(&[1.5, -0.5]).is_err());
    }
}
