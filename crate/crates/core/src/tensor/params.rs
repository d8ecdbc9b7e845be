use std::collections::HashMap;

use super::Tensor;
use crate::error::{PjxError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors with gradient buffers, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    trainable: Vec<bool>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(PjxError::Parameter(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(vec![0.0; value.numel()]);
        self.values.push(value);
        self.trainable.push(true);
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Euclidean norm of all gradients taken together.
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales gradients so their global norm is at most `max_norm`; returns
    /// the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in &mut self.grads {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
        norm
    }

    /// `(name, tensor)` pairs in insertion order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from `(name, tensor)` pairs. Every stored name must
    /// be present with the same shape.
    pub fn load_named(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        let mut incoming: HashMap<String, Tensor> = entries.into_iter().collect();
        for (i, name) in self.names.iter().enumerate() {
            let t = incoming
                .remove(name)
                .ok_or_else(|| PjxError::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != self.values[i].shape() {
                return Err(PjxError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = t;
        }
        if let Some(extra) = incoming.keys().next() {
            return Err(PjxError::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_bounds_global_norm() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::zeros(&[2])).unwrap();
        let b = s.insert("b", Tensor::zeros(&[1])).unwrap();
        s.grad_mut(a).copy_from_slice(&[3.0, 0.0]);
        s.grad_mut(b).copy_from_slice(&[4.0]);
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!(s.grad_norm() <= 1.0 + 1e-9);
        assert!(s.insert("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn load_named_validates_shapes_and_names() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(s
            .load_named(vec![("w".into(), Tensor::zeros(&[4]))])
            .is_err());
        assert!(s.load_named(vec![]).is_err());
        s.load_named(vec![("w".into(), Tensor::full(&[2, 2], 1.5))])
            .unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[1.5; 4]);
    }
}
