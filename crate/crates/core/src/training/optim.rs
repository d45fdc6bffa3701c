use crate::autodiff::Matrix;
use crate::policy::{ModelParams, OptimizerState};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    /// One update at learning rate `lr`.
    pub fn step(&self, params: &mut ModelParams, grads: &[Matrix], state: &mut OptimizerState, lr: f64) {
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = state.m[i].data_mut();
            for (mj, gj) in m.iter_mut().zip(g) {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
            }
            let v = state.v[i].data_mut();
            for (vj, gj) in v.iter_mut().zip(g) {
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
            }
            let (m, v) = (state.m[i].data(), state.v[i].data());
            for (j, p) in tensor.value.data_mut().iter_mut().enumerate() {
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *p -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * *p);
            }
        }
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max`; returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max: f64) -> f64 {
    let n = global_norm(grads);
    if n > max {
        let s = max / n;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ModelConfig;

    fn opt() -> AdamW {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }

    #[test]
    fn pure_decay_shrinks_norms() {
        let mut p = ModelParams::init(&ModelConfig::small(8, 1, 2, 2)).unwrap();
        let before: f64 = p.tensors().iter().map(|t| t.value.norm_sq()).sum();
        let mut st = OptimizerState::zeros_like(&p);
        let zeros = st.m.clone();
        opt().step(&mut p, &zeros, &mut st, 1e-2);
        let after: f64 = p.tensors().iter().map(|t| t.value.norm_sq()).sum();
        assert!((after - before * (1.0 - 1e-4f64).powi(2)).abs() < 1e-9 * before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ModelParams::init(&ModelConfig::small(4, 0, 1, 1)).unwrap();
        let mut st = OptimizerState::zeros_like(&p);
        let grads: Vec<Matrix> = st.m.iter().map(|m| Matrix::filled(m.rows(), m.cols(), 2.0)).collect();
        let before = p.tensors()[0].value.get(0, 0);
        let a = AdamW {
            weight_decay: 0.0,
            ..opt()
        };
        a.step(&mut p, &grads, &mut st, 1e-3);
        let after = p.tensors()[0].value.get(0, 0);
        assert!((before - after - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Matrix::filled(2, 2, 3.0)];
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 6.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    }
}
