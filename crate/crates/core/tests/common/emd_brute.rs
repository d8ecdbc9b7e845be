//! Exhaustive transport on 3x3 grids with masses in eighths.

use std::collections::HashMap;

use pjx_core::model::AttentionMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const UNITS: usize = 8;

/// Eight mass units dropped into random cells of a 3x3 grid.
pub fn random_units(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cells = vec![0; 9];
    for _ in 0..UNITS {
        cells[rng.gen_range(0..9)] += 1;
    }
    cells
}

pub fn to_map(units: &[usize]) -> AttentionMap {
    let v = units.iter().map(|&u| u as f64 / UNITS as f64).collect();
    AttentionMap::new(3, 3, v).unwrap()
}

fn dist(i: usize, j: usize) -> f64 {
    let (ri, ci) = ((i / 3) as f64, (i % 3) as f64);
    let (rj, cj) = ((j / 3) as f64, (j % 3) as f64);
    ((ri - rj).powi(2) + (ci - cj).powi(2)).sqrt()
}

/// Every way of splitting `amount` units over sinks with room left.
fn splits(amount: usize, room: &[usize], from: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if from == room.len() {
        if amount == 0 {
            out.push(current.clone());
        }
        return;
    }
    for k in 0..=amount.min(room[from]) {
        current.push(k);
        splits(amount - k, room, from + 1, current, out);
        current.pop();
    }
}

/// Minimum cost over all integral transport plans, enumerating source by
/// source the ways to ship its units; identical remaining demands are
/// solved once.
pub fn brute_force(supply: &[usize], demand: &[usize]) -> f64 {
    fn go(k: usize, supply: &[usize], room: Vec<usize>, memo: &mut HashMap<(usize, Vec<usize>), f64>) -> f64 {
        if k == supply.len() {
            return if room.iter().all(|&r| r == 0) { 0.0 } else { f64::INFINITY };
        }
        if let Some(&v) = memo.get(&(k, room.clone())) {
            return v;
        }
        let mut options = Vec::new();
        splits(supply[k], &room, 0, &mut Vec::new(), &mut options);
        let mut best = f64::INFINITY;
        for opt in options {
            let cost: f64 = opt.iter().enumerate().map(|(j, &u)| u as f64 * dist(k, j)).sum();
            let rest: Vec<usize> = room.iter().zip(&opt).map(|(r, u)| r - u).collect();
            best = best.min(cost + go(k + 1, supply, rest, memo));
        }
        memo.insert((k, room), best);
        best
    }
    go(0, supply, demand.to_vec(), &mut HashMap::new()) / UNITS as f64
}
