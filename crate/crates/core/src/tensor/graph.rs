use std::collections::HashMap;

use rand::Rng;

use super::{gemm_acc, gemm_nt_acc, gemm_tn_acc, ParamId, ParamStore, Tensor};
use crate::error::{PjxError, Result};

/// Derivative floor for the signed square root near zero.
pub const SIGNED_SQRT_EPS: f64 = 1e-8;
/// Denominator floor for L2 normalization.
pub const L2_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SignedSqrt(Var),
    L2Normalize(Var),
    Softmax(Var, usize),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    LnFloor(Var, f64),
    Reshape(Var),
    SumAll(Var),
    Pick(Var, usize),
    GatherRows(Var, Vec<usize>),
    NarrowLast(Var, usize),
    ConcatLast(Var, Var),
}

#[derive(Debug)]
enum Storage {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    storage: Storage,
    requires_grad: bool,
    op: Op,
}

/// Records operations in execution order. The record is the tape: node
/// indices are a topological order, so the backward pass walks them from the
/// loss down to zero and visits every node once.
///
/// A graph is meant to be built, differentiated and dropped on one thread.
/// Parameter values are read from the borrowed [`ParamStore`] in place.
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    leaf_grads: HashMap<usize, Vec<f64>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            bound: HashMap::new(),
            leaf_grads: HashMap::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Graph {
            params: Some(params),
            ..Graph::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            storage: Storage::Owned(data),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf holding a constant or an input to differentiate against.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let Tensor { shape, data } = value;
        self.push(shape, data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds a stored parameter. Binding the same id twice returns the same
    /// node, so weights shared across time steps get one gradient slot.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let store = self
            .params
            .expect("graph was built without a parameter store");
        let shape = store.get(id).shape().to_vec();
        self.nodes.push(Node {
            shape,
            storage: Storage::Param(id),
            requires_grad: store.is_trainable(id),
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        v
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].storage {
            Storage::Owned(d) => d,
            Storage::Param(id) => self
                .params
                .expect("parameter node without store")
                .get(*id)
                .data(),
        }
    }

    pub fn value(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.data(v).to_vec(),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.data(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    // ---- forward operations -------------------------------------------

    /// Matrix product of `[m,k]` and `[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(PjxError::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(self.data(a), self.data(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul(a, b)))
    }

    /// Checks the broadcast rule shared by `add` and `mul`: either equal
    /// shapes, or `b`'s shape equals the trailing dims of `a`'s shape, in which
    /// case `b` is repeated over `a`'s leading dims (one copy per spatial
    /// location when `a` is `[locations, features]`).
    fn broadcast_len(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(0);
        }
        if sb.len() < sa.len() && sa[sa.len() - sb.len()..] == *sb {
            return Ok(sb.iter().product());
        }
        Err(PjxError::dim(op, sa, sb))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_len("add", a, b)?;
        let db = self.data(b);
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + db[i % db.len()])
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Add(a, b)))
    }

    /// Elementwise product, with `b` broadcast over `a`'s leading dims when
    /// its shape matches `a`'s trailing dims.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_len("ewise_mul", a, b)?;
        let db = self.data(b);
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x * db[i % db.len()])
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.data(a).iter().map(|x| x * s).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, rg, Op::Scale(a, s))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.data(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, rg, op)
    }

    /// `sign(x) * sqrt(|x|)` per element.
    pub fn signed_sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.signum() * x.abs().sqrt(), Op::SignedSqrt(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, move |x| x.max(floor).ln(), Op::LnFloor(a, floor))
    }

    /// Divides each vector along the last axis by `max(norm, L2_EPS)`.
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().expect("rank >= 1");
        let mut out = self.data(a).to_vec();
        for row in out.chunks_mut(width) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(L2_EPS);
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let rg = self.rg(a);
        self.push(shape, out, rg, Op::L2Normalize(a))
    }

    /// Softmax along `axis`, with the per-slice maximum subtracted first.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(PjxError::Parameter(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let mut out = self.data(a).to_vec();
        for_each_lane(&shape, axis, |idx| {
            let max = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in idx.clone() {
                out[i] = (out[i] - max).exp();
                total += out[i];
            }
            for i in idx {
                out[i] /= total;
            }
        });
        let rg = self.rg(a);
        Ok(self.push(shape, out, rg, Op::Softmax(a, axis)))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
    /// training; evaluation mode is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(PjxError::Parameter(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.data(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.data(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let rg = self.rg(a);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Dropout(a, mask)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.data(a).len() || shape.contains(&0) {
            return Err(PjxError::dim("reshape", self.shape(a), &shape));
        }
        let out = self.data(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, out, rg, Op::Reshape(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.data(a).iter().sum();
        let rg = self.rg(a);
        self.push(vec![1], vec![total], rg, Op::SumAll(a))
    }

    /// Selects one element by flat row-major index as a `[1]` tensor.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let Some(&x) = self.data(a).get(index) else {
            return Err(PjxError::dim("pick", self.shape(a), &[index]));
        };
        let rg = self.rg(a);
        Ok(self.push(vec![1], vec![x], rg, Op::Pick(a, index)))
    }

    /// Row lookup into a `[rows, width]` table (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 || ids.iter().any(|&i| i >= shape[0]) || ids.is_empty() {
            return Err(PjxError::dim("gather_rows", shape, &[ids.len()]));
        }
        let width = shape[1];
        let data = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            out.extend_from_slice(&data[i * width..(i + 1) * width]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), width],
            out,
            rg,
            Op::GatherRows(table, ids.to_vec()),
        ))
    }

    /// Slice `[start, start + len)` of the last axis.
    pub fn narrow_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().expect("rank >= 1");
        if len == 0 || start + len > width {
            return Err(PjxError::dim("narrow_last", &shape, &[start, len]));
        }
        let out: Vec<f64> = self
            .data(a)
            .chunks(width)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut new_shape = shape;
        *new_shape.last_mut().unwrap() = len;
        let rg = self.rg(a);
        Ok(self.push(new_shape, out, rg, Op::NarrowLast(a, start)))
    }

    /// Concatenation along the last axis; leading dims must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(PjxError::dim("concat_last", &sa, &sb));
        }
        let (wa, wb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(da.len() + db.len());
        for (ra, rb) in da.chunks(wa).zip(db.chunks(wb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = wa + wb;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, rg, Op::ConcatLast(a, b)))
    }

    // ---- reverse pass --------------------------------------------------

    /// Propagates d(loss)/d(node) for every node that requires a gradient.
    ///
    /// Leaf and parameter gradients accumulate across calls until
    /// [`Graph::zero_grad`]; use [`Graph::grad`] to read them and
    /// [`Graph::accumulate_param_grads`] to push them into the store.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.data(loss).len() != 1 {
            return Err(PjxError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf | Op::Param) {
                let slot = self
                    .leaf_grads
                    .entry(i)
                    .or_insert_with(|| vec![0.0; g.len()]);
                add_into(slot, &g);
            } else {
                self.backprop_op(&self.nodes[i].op, i, &g, &mut grads);
            }
        }
        Ok(())
    }

    fn backprop_op(&self, op: &Op, out_idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = match &self.nodes[out_idx].storage {
            Storage::Owned(d) => d.as_slice(),
            Storage::Param(_) => unreachable!("parameter nodes are leaves"),
        };
        let mut send = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.data(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match *op {
            Op::Leaf | Op::Param => unreachable!(),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (da, db) = (self.data(a), self.data(b));
                send(a, &|s| gemm_nt_acc(g, db, s, m, k, n));
                send(b, &|s| gemm_tn_acc(da, g, s, m, k, n));
            }
            Op::Add(a, b) => {
                send(a, &|s| add_into(s, g));
                send(b, &|s| {
                    let w = s.len();
                    for (i, gv) in g.iter().enumerate() {
                        s[i % w] += gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                send(a, &|s| {
                    for (i, gv) in g.iter().enumerate() {
                        s[i] += gv * db[i % db.len()];
                    }
                });
                send(b, &|s| {
                    let w = s.len();
                    for (i, gv) in g.iter().enumerate() {
                        s[i % w] += gv * da[i];
                    }
                });
            }
            Op::Scale(a, c) => send(a, &|s| {
                s.iter_mut().zip(g).for_each(|(x, gv)| *x += c * gv)
            }),
            Op::SignedSqrt(a) => {
                let da = self.data(a);
                send(a, &|s| {
                    for i in 0..s.len() {
                        let root = da[i].abs().sqrt().max(SIGNED_SQRT_EPS);
                        s[i] += g[i] / (2.0 * root);
                    }
                })
            }
            Op::Relu(a) => {
                let da = self.data(a);
                send(a, &|s| {
                    for i in 0..s.len() {
                        if da[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                })
            }
            Op::Tanh(a) => send(a, &|s| {
                for i in 0..s.len() {
                    s[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Sigmoid(a) => send(a, &|s| {
                for i in 0..s.len() {
                    s[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::LnFloor(a, floor) => {
                let da = self.data(a);
                send(a, &|s| {
                    for i in 0..s.len() {
                        if da[i] > floor {
                            s[i] += g[i] / da[i];
                        }
                    }
                })
            }
            Op::L2Normalize(a) => {
                let da = self.data(a);
                let width = *self.shape(a).last().unwrap();
                send(a, &|s| {
                    for ((sr, xr), (yr, gr)) in s
                        .chunks_mut(width)
                        .zip(da.chunks(width))
                        .zip(out.chunks(width).zip(g.chunks(width)))
                    {
                        let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > L2_EPS {
                            let dot: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                            for j in 0..width {
                                sr[j] += (gr[j] - yr[j] * dot) / norm;
                            }
                        } else {
                            for j in 0..width {
                                sr[j] += gr[j] / L2_EPS;
                            }
                        }
                    }
                })
            }
            Op::Softmax(a, axis) => {
                let shape = self.shape(a);
                send(a, &|s| {
                    for_each_lane(shape, axis, |idx| {
                        let dot: f64 = idx.clone().map(|i| g[i] * out[i]).sum();
                        for i in idx {
                            s[i] += out[i] * (g[i] - dot);
                        }
                    })
                })
            }
            Op::Dropout(a, ref mask) => send(a, &|s| {
                for i in 0..s.len() {
                    s[i] += g[i] * mask[i];
                }
            }),
            Op::Reshape(a) => send(a, &|s| add_into(s, g)),
            Op::SumAll(a) => send(a, &|s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::Pick(a, index) => send(a, &|s| s[index] += g[0]),
            Op::GatherRows(table, ref ids) => {
                let width = *self.shape(table).last().unwrap();
                send(table, &|s| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(
                            &mut s[id * width..(id + 1) * width],
                            &g[r * width..(r + 1) * width],
                        );
                    }
                })
            }
            Op::NarrowLast(a, start) => {
                let width = *self.shape(a).last().unwrap();
                let len = *self.nodes[out_idx].shape.last().unwrap();
                send(a, &|s| {
                    for (sr, gr) in s.chunks_mut(width).zip(g.chunks(len)) {
                        add_into(&mut sr[start..start + len], gr);
                    }
                })
            }
            Op::ConcatLast(a, b) => {
                let wa = *self.shape(a).last().unwrap();
                let wb = *self.shape(b).last().unwrap();
                send(a, &|s| {
                    for (sr, gr) in s.chunks_mut(wa).zip(g.chunks(wa + wb)) {
                        add_into(sr, &gr[..wa]);
                    }
                });
                send(b, &|s| {
                    for (sr, gr) in s.chunks_mut(wb).zip(g.chunks(wa + wb)) {
                        add_into(sr, &gr[wa..]);
                    }
                });
            }
        }
    }

    /// Accumulated gradient of a leaf or bound parameter.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.leaf_grads.get(&v.0).map(|g| Tensor {
            shape: self.shape(v).to_vec(),
            data: g.clone(),
        })
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    /// Adds this graph's parameter gradients into `store`'s gradient buffers.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (id, g) in self.param_grads() {
            add_into(store.grad_mut(id), g);
        }
    }

    /// Gradients of every bound trainable parameter, in id order.
    pub fn param_grads(&self) -> Vec<(ParamId, &[f64])> {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .filter_map(|(&id, v)| self.leaf_grads.get(&v.0).map(|g| (id, g.as_slice())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Calls `f` once per 1-D lane along `axis`, passing the flat indices of the
/// lane's elements.
fn for_each_lane(
    shape: &[usize],
    axis: usize,
    mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>),
) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            let start = o * len * inner + i;
            f((start..start + len * inner).step_by(inner));
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let mut g = Graph::new();
        let eye = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let p = g.matmul(eye, m).unwrap();
        assert_eq!(g.data(p), &[1., 2., 3., 4.]);
        let ones = g.constant(t(&[2, 1], &[1., 1.]));
        let q = g.matmul(m, ones).unwrap();
        assert_eq!(g.data(q), &[3., 7.]);
        assert_eq!(g.shape(q), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] vs [2, 3]"), "{err}");
    }

    #[test]
    fn ewise_mul_cases() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1., 2., 3.]));
        let z = g.constant(Tensor::vector(vec![0., 0., 0.]));
        let p = g.mul(a, z).unwrap();
        assert_eq!(g.data(p), &[0., 0., 0.]);
        let a = g.constant(Tensor::vector(vec![1., 2.]));
        let b = g.constant(Tensor::vector(vec![3., 4.]));
        let p = g.mul(a, b).unwrap();
        assert_eq!(g.data(p), &[3., 8.]);

        // broadcast over rows
        let grid = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let q = g.constant(Tensor::vector(vec![10., 100.]));
        let p = g.mul(grid, q).unwrap();
        assert_eq!(g.data(p), &[10., 200., 30., 400.]);

        let bad = g.constant(Tensor::vector(vec![1., 2., 3.]));
        assert!(matches!(
            g.mul(grid, bad),
            Err(PjxError::Dimension { .. })
        ));
    }

    #[test]
    fn signed_sqrt_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![4., -9., 0.]));
        let y = g.signed_sqrt(x);
        assert_eq!(g.data(y), &[2., -3., 0.]);
    }

    #[test]
    fn signed_sqrt_guarded_derivative_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 1e-20]), true);
        let y = g.signed_sqrt(x);
        let l = g.sum(y);
        g.backward(l).unwrap();
        let grad = g.grad(x).unwrap();
        let expect = 1.0 / (2.0 * SIGNED_SQRT_EPS);
        assert_eq!(grad.data(), &[expect, expect]);
    }

    #[test]
    fn l2_normalize_cases() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![3., 4.]));
        let y = g.l2_normalize(x);
        assert_eq!(g.data(y), &[0.6, 0.8]);
        let z = g.constant(Tensor::vector(vec![0., 0.]));
        let y = g.l2_normalize(z);
        assert_eq!(g.data(y), &[0., 0.]);
    }

    #[test]
    fn softmax_cases() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.7; 4]));
        let y = g.softmax(x, 0).unwrap();
        assert!(g.data(y).iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let x = g.constant(Tensor::vector(vec![0.0, 2f64.ln()]));
        let y = g.softmax(x, 0).unwrap();
        assert!((g.data(y)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.data(y)[1] - 2.0 / 3.0).abs() < 1e-15);

        let x = g.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.data(y), &[0.5, 0.5]);

        // axis 0 of a matrix normalizes columns
        let x = g.constant(t(&[2, 2], &[0., 5., 0., 5.]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.data(y), &[0.5, 0.5, 0.5, 0.5]);
        assert!(g.softmax(x, 2).is_err());
    }

    #[test]
    fn activations() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![-1., 2., 0.]));
        let r = g.relu(x);
        assert_eq!(g.data(r), &[0., 2., 0.]);
        let z = g.constant(Tensor::scalar(0.0));
        let th = g.tanh(z);
        let sg = g.sigmoid(z);
        assert_eq!(g.data(th), &[0.0]);
        assert_eq!(g.data(sg), &[0.5]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 1.0]), true);
        let r = g.relu(x);
        let l = g.sum(r);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn dropout_identity_cases_and_range_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1., 2., 3.]));
        let e = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(g.data(e), &[1., 2., 3.]);
        let z = g.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(g.data(z), &[1., 2., 3.]);
        assert!(matches!(
            g.dropout(x, 1.0, true, &mut rng),
            Err(PjxError::Parameter(_))
        ));
        assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut g = Graph::new();
        let n = 100_000;
        let x = g.constant(Tensor::full(&[n], 1.0));
        let y = g.dropout(x, 0.5, true, &mut rng).unwrap();
        let d = g.data(y);
        let survivors = d.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let mean = d.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.5).abs() <= 0.01, "{survivors}");
        assert!((mean - 1.0).abs() <= 0.02, "{mean}");
    }

    #[test]
    fn dropout_masks_repeat_under_same_seed() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let x = g.constant(Tensor::full(&[257], 1.0));
            let y = g.dropout(x, 0.3, true, &mut rng).unwrap();
            g.data(y).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn backward_linear_and_square() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.5, -2.0, 0.25]), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.5, -2.0, 0.25]), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_accumulates_until_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 2.0]);
        g.zero_grad();
        assert!(g.grad(x).is_none());
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(g.backward(x), Err(PjxError::Contract(_))));
    }

    #[test]
    fn shared_node_gradient_sums_over_uses() {
        // y = x*x + 3x, used twice through different paths.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let sq = g.mul(x, x).unwrap();
        let lin = g.scale(x, 3.0);
        let y = g.add(sq, lin).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn structural_ops() {
        let mut g = Graph::new();
        let tab = g.constant(t(&[3, 2], &[0., 1., 10., 11., 20., 21.]));
        let rows = g.gather_rows(tab, &[2, 0, 2]).unwrap();
        assert_eq!(g.data(rows), &[20., 21., 0., 1., 20., 21.]);
        assert!(g.gather_rows(tab, &[3]).is_err());
        let n = g.narrow_last(rows, 1, 1).unwrap();
        assert_eq!(g.data(n), &[21., 1., 21.]);
        let c = g.concat_last(n, rows).unwrap();
        assert_eq!(g.shape(c), &[3, 3]);
        assert_eq!(&g.data(c)[..3], &[21., 20., 21.]);
        let p = g.pick(c, 4).unwrap();
        assert_eq!(g.data(p), &[0.]);
        assert!(g.reshape(c, vec![2, 2]).is_err());
    }
}
