//! Affine and recurrent building blocks over [`Graph`].

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{PjxError, Result};

/// Half-width of the uniform initializer for recurrent weights.
pub const RECURRENT_INIT: f64 = 0.08;

/// Normal weights with standard deviation `1/sqrt(fan_in)`.
pub fn fan_in_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], half_width: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(-half_width, half_width);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("positive dims")
}

/// `x W + b` applied row-wise; a row per spatial location makes this a 1x1
/// convolution.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(format!("{name}.weight"), fan_in_normal(in_dim, out_dim, rng))?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// `x` is `[rows, in_dim]` or a single `[in_dim]` vector; the result has
    /// the matching rank.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (x2, vector) = match shape.as_slice() {
            [d] if *d == self.in_dim => (g.reshape(x, vec![1, *d])?, true),
            [_, d] if *d == self.in_dim => (x, false),
            _ => return Err(PjxError::dim("linear", &shape, &[self.in_dim, self.out_dim])),
        };
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x2, w)?;
        let y = g.add(y, b)?;
        if vector {
            g.reshape(y, vec![self.out_dim])
        } else {
            Ok(y)
        }
    }
}

/// Weights of one LSTM layer. Gate blocks in the `4 * hidden` axis are
/// ordered input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_input = store.insert(
            format!("{name}.w_input"),
            uniform(&[in_dim, 4 * hidden], RECURRENT_INIT, rng),
        )?;
        let w_hidden = store.insert(
            format!("{name}.w_hidden"),
            uniform(&[hidden, 4 * hidden], RECURRENT_INIT, rng),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[4 * hidden]))?;
        Ok(LstmParams {
            w_input,
            w_hidden,
            bias,
            in_dim,
            hidden,
        })
    }

    /// Zero `[1, hidden]` state.
    pub fn zero_state(&self, g: &mut Graph) -> (Var, Var) {
        let h = g.constant(Tensor::zeros(&[1, self.hidden]));
        let c = g.constant(Tensor::zeros(&[1, self.hidden]));
        (h, c)
    }
}

/// One gated recurrent update. `x` is `[1, in_dim]`, states are `[1, hidden]`.
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hd = p.hidden;
    if g.shape(x) != [1, p.in_dim] {
        return Err(PjxError::dim("lstm_step input", g.shape(x), &[1, p.in_dim]));
    }
    if g.shape(h_prev) != [1, hd] || g.shape(c_prev) != [1, hd] {
        return Err(PjxError::dim("lstm_step state", g.shape(h_prev), g.shape(c_prev)));
    }
    let wx = g.param(p.w_input);
    let wh = g.param(p.w_hidden);
    let b = g.param(p.bias);
    let xi = g.matmul(x, wx)?;
    let hh = g.matmul(h_prev, wh)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add(pre, b)?;

    let i = g.narrow_last(pre, 0, hd)?;
    let f = g.narrow_last(pre, hd, hd)?;
    let cand = g.narrow_last(pre, 2 * hd, hd)?;
    let o = g.narrow_last(pre, 3 * hd, hd)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);

    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_params_zero_state_stays_zero() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::new(&mut store, "l", 3, 4, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::new(vec![1, 3], vec![0.3, -1.0, 2.0]).unwrap());
        let (h0, c0) = p.zero_state(&mut g);
        let (h, c) = lstm_step(&mut g, x, h0, c0, &p).unwrap();
        assert_eq!(g.data(h), &[0.0; 4]);
        assert_eq!(g.data(c), &[0.0; 4]);
    }

    #[test]
    fn lstm_step_is_pure() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::new(&mut store, "l", 2, 3, &mut rng).unwrap();
        let run = || {
            let mut g = Graph::with_params(&store);
            let x = g.constant(Tensor::new(vec![1, 2], vec![0.5, -0.25]).unwrap());
            let (h0, c0) = p.zero_state(&mut g);
            let (h, c) = lstm_step(&mut g, x, h0, c0, &p).unwrap();
            (g.value(h), g.value(c))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn lstm_step_rejects_bad_shapes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::new(&mut store, "l", 2, 3, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.constant(Tensor::zeros(&[1, 5]));
        let (h0, c0) = p.zero_state(&mut g);
        assert!(matches!(
            lstm_step(&mut g, x, h0, c0, &p),
            Err(PjxError::Dimension { .. })
        ));
    }

    #[test]
    fn linear_accepts_vectors_and_rows() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(&mut store, "fc", 3, 2, &mut rng).unwrap();
        let mut g = Graph::with_params(&store);
        let v = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = lin.forward(&mut g, v).unwrap();
        assert_eq!(g.shape(y), &[2]);
        let rows = g.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap());
        let z = lin.forward(&mut g, rows).unwrap();
        assert_eq!(&g.data(z)[..2], g.data(y));
        assert_eq!(&g.data(z)[2..], g.data(y));
    }
}
