use super::params::{ParamId, ParamStore};
use super::{Real, Tensor};

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepReport {
    /// Tensors left untouched because their gradient was not finite.
    pub skipped: usize,
}

pub trait Optimizer<T: Real> {
    fn step(&self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> StepReport;
}

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<T: Real> Optimizer<T> for Adam {
    fn step(&self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> StepReport {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        let mut report = StepReport::default();
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let ids: alloc::vec::Vec<ParamId> = store.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            if !g.is_finite() {
                report.skipped += 1;
                continue;
            }
            let (value, state, frozen) = store.state_mut(id);
            assert_eq!(value.shape(), g.shape(), "gradient shape for parameter");
            state.steps += 1;
            let t = state.steps as i32;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let lr = T::lit(self.lr);
            let eps = T::lit(self.eps);
            let cols = value.cols();
            let data = value.data_mut();
            let (m, v) = (state.m.data_mut(), state.v.data_mut());
            for i in 0..data.len() {
                if frozen == Some(i / cols.max(1)) {
                    continue;
                }
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        report
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Real> Optimizer<T> for Sgd {
    fn step(&self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> StepReport {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        let mut report = StepReport::default();
        let ids: alloc::vec::Vec<ParamId> = store.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            if !g.is_finite() {
                report.skipped += 1;
                continue;
            }
            let frozen = store.frozen_row(id);
            let value = store.get_mut(id);
            let cols = value.cols();
            let lr = T::lit(self.lr);
            for (i, (p, &gi)) in value.data_mut().iter_mut().zip(g.data()).enumerate() {
                if frozen == Some(i / cols.max(1)) {
                    continue;
                }
                *p -= lr * gi;
            }
        }
        report
    }
}
