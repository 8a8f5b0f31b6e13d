//! Central finite-difference gradient checks.

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Max relative error between the reverse-mode gradient of scalar `f`
/// at `x` and central differences with step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x, true);
    let loss = f(&mut tape, xv)?;
    let grads = tape.backward(loss, None)?;
    let zeros = vec![0.0; x.values().len()];
    let analytic = grads.get(xv).unwrap_or(&zeros).to_vec();

    let eval = |p: &Tensor| -> Result<f64> {
        let mut t = Tape::no_grad();
        let v = t.leaf(p, false);
        let l = f(&mut t, v)?;
        Ok(t.scalar(l))
    };
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = x.values()[i];
        probe.values_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.values_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.values_mut()[i] = orig;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Like [`grad_check`] but over the entries of the listed parameters.
/// `f` builds the loss from the store on the given tape. At most
/// `max_per_param` entries per parameter are probed (evenly spaced).
pub fn grad_check_params<F>(
    f: F,
    store: &mut ParamStore,
    ids: &[ParamId],
    eps: f64,
    max_per_param: usize,
) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, Some(store))?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            let t = store.tensor(id);
            t.grad().map_or_else(|| vec![0.0; t.values().len()], <[f64]>::to_vec)
        })
        .collect();
    store.zero_grad();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::no_grad();
        let l = f(&mut t, s)?;
        Ok(t.scalar(l))
    };
    let mut worst = 0.0f64;
    for (k, &id) in ids.iter().enumerate() {
        let n = analytic[k].len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let orig = store.tensor(id).values()[i];
            store.tensor_mut(id).values_mut()[i] = orig + eps;
            let up = eval(store)?;
            store.tensor_mut(id).values_mut()[i] = orig - eps;
            let down = eval(store)?;
            store.tensor_mut(id).values_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[k][i], (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}
