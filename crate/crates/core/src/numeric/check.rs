//! Central finite-difference gradient checking.
//!
//! Used by the gradient test suites. Deliberately knows nothing about the
//! tape: it only re-evaluates a black-box loss under parameter nudges, so it
//! stays an independent oracle for whatever backward produced.

use super::store::ParamStore;
use super::NumericError;

/// Worst relative disagreement between analytic gradients already stored in
/// `store` and central finite differences of `loss` with step `eps`.
///
/// The denominator `|g| + |fd| + 1e-6` keeps near-zero gradients from
/// inflating the ratio without hiding real sign errors.
pub fn max_relative_gradient_error<F>(
    store: &mut ParamStore,
    mut loss: F,
    eps: f64,
) -> Result<f64, NumericError>
where
    F: FnMut(&ParamStore) -> Result<f64, NumericError>,
{
    let mut worst: f64 = 0.0;
    for id in store.ids() {
        for k in 0..store.value(id).numel() {
            let original = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = original + eps;
            let up = loss(store)?;
            store.value_mut(id).data_mut()[k] = original - eps;
            let down = loss(store)?;
            store.value_mut(id).data_mut()[k] = original;
            let fd = (up - down) / (2.0 * eps);
            let g = store.grad(id).data()[k];
            let err = (g - fd).abs() / (g.abs() + fd.abs() + 1e-6);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
