use super::{Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub autodiff: Vec<f64>,
    pub finite_diff: Vec<f64>,
    pub max_rel_error: f64,
}

/// Compares the tape gradient of `f` at `x` with central differences of step `eps`.
///
/// The relative error of component `i` is `|g_ad − g_fd| / (|g_fd| + 1e−8)`.
/// Finite differences evaluate `f` on untaped constants, so only values flow
/// through that path.
pub fn grad_check<F>(f: F, x: &[f64], eps: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&[Var<'t>]) -> Result<Var<'t>>,
{
    if !(eps > 0.0) {
        return Err(Error::BadSpec(format!("eps must be positive, got {eps}")));
    }
    let tape = Tape::new();
    let leaves = tape.vars(x);
    let out = f(&leaves)?;
    out.check_finite()?;
    let autodiff = tape.backward(out)?.wrt_all(&leaves);

    let eval = |point: &[f64]| -> Result<f64> {
        let consts: Vec<Var<'_>> = point.iter().map(|&v| Var::constant(v)).collect();
        let v = f(&consts)?;
        v.check_finite()?;
        Ok(v.value())
    };
    let mut point = x.to_vec();
    let mut finite_diff = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        point[i] = x[i] + eps;
        let plus = eval(&point)?;
        point[i] = x[i] - eps;
        let minus = eval(&point)?;
        point[i] = x[i];
        finite_diff.push((plus - minus) / (2.0 * eps));
    }
    if let Some(g) = autodiff.iter().chain(&finite_diff).find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {g}")));
    }
    let max_rel_error = autodiff
        .iter()
        .zip(&finite_diff)
        .map(|(a, f)| (a - f).abs() / (f.abs() + 1e-8))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        autodiff,
        finite_diff,
        max_rel_error,
    })
}
