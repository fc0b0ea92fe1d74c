use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{ParamStore, Tensor};

/// Magnitude floor of the relative-error denominator, so coordinates whose
/// true gradient is ~0 are judged on absolute error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Central-difference check of `f`, which returns the loss and its analytic
/// gradient (one tensor per parameter, in store order).
pub fn grad_check<F>(store: &ParamStore<f64>, eps: f64, f: F) -> GradCheckReport
where
    F: Fn(&ParamStore<f64>) -> (f64, Vec<Tensor<f64>>),
{
    let (_, analytic) = f(store);
    grad_check_against(store, eps, &analytic, |s| f(s).0)
}

/// Compares a supplied `analytic` gradient against central differences of
/// `loss`. Frozen rows are constants and are not probed.
pub fn grad_check_against<F>(
    store: &ParamStore<f64>,
    eps: f64,
    analytic: &[Tensor<f64>],
    loss: F,
) -> GradCheckReport
where
    F: Fn(&ParamStore<f64>) -> f64,
{
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (id, grad) in store.ids().zip(analytic) {
        let cols = store.get(id).cols().max(1);
        for i in 0..store.get(id).len() {
            if store.frozen_row(id) == Some(i / cols) {
                continue;
            }
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    report
}
