use crate::tensor::ParamStore;

/// Adam with bias correction. State is kept per parameter and only
/// trainable parameters are touched.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore) {
        if self.m.is_empty() {
            for id in params.ids() {
                let n = params.get(id).numel();
                self.m.push(vec![0.0; n]);
                self.v.push(vec![0.0; n]);
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if !params.is_trainable(id) {
                continue;
            }
            let i = id.index();
            let grad = params.grad(id).to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = params.get_mut(id).data_mut();
            for k in 0..w.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                w[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![1.0, -1.0])).unwrap();
        s.grad_mut(id).copy_from_slice(&[3.0, -0.5]);
        let mut opt = Adam::new(0.1);
        opt.step(&mut s);
        // bias-corrected first step is lr * sign(grad)
        let w = s.get(id).data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn frozen_and_zero_rate_leave_weights() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::vector(vec![0.3])).unwrap();
        let b = s.insert("b", Tensor::vector(vec![0.7])).unwrap();
        s.set_trainable(a, false);
        s.grad_mut(a)[0] = 1.0;
        s.grad_mut(b)[0] = 1.0;
        let mut opt = Adam::new(0.0);
        opt.step(&mut s);
        assert_eq!(s.get(a).data()[0].to_bits(), 0.3f64.to_bits());
        assert_eq!(s.get(b).data()[0].to_bits(), 0.7f64.to_bits());
    }
}
