use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::integrators::Trajectory;

/// `w(t) = t^exponent` for step indices `t = 0..k`; exponent 0 gives unit weights.
pub fn time_weights(k: usize, exponent: f64) -> Vec<f64> {
    (0..k)
        .map(|t| if exponent == 0.0 { 1.0 } else { (t as f64).powf(exponent) })
        .collect()
}

fn check_shapes<S: Scalar>(pred: &Trajectory<S>, obs: &Trajectory<f64>) -> Result<()> {
    if pred.len() != obs.len() || pred.dim() != obs.dim() {
        return Err(Error::shape(
            format!("{}×{}", obs.len(), obs.dim()),
            format!("{}×{}", pred.len(), pred.dim()),
        ));
    }
    Ok(())
}

/// `(1/k) Σₜ w(t) Σ_f feature_weights_f (ŷ_{t,f} − y_{t,f})²`.
///
/// Empty `feature_weights` means unit weights.
pub fn weighted_mse_loss<S: Scalar>(
    pred: &Trajectory<S>,
    obs: &Trajectory<f64>,
    time_weights: &[f64],
    feature_weights: &[f64],
) -> Result<S> {
    check_shapes(pred, obs)?;
    let (k, d) = (obs.len(), obs.dim());
    if time_weights.len() != k {
        return Err(Error::shape(format!("{k} time weights"), time_weights.len()));
    }
    if !feature_weights.is_empty() && feature_weights.len() != d {
        return Err(Error::shape(format!("{d} feature weights"), feature_weights.len()));
    }
    if k == 0 {
        return Ok(S::constant(0.0));
    }
    let mut squares = Vec::with_capacity(k * d);
    let mut coef = Vec::with_capacity(k * d);
    for (t, (p, y)) in pred.rows().zip(obs.rows()).enumerate() {
        if time_weights[t] == 0.0 {
            continue;
        }
        for f in 0..d {
            let fw = feature_weights.get(f).copied().unwrap_or(1.0);
            if fw == 0.0 {
                continue;
            }
            let e = p[f] - y[f];
            squares.push(e * e);
            coef.push(time_weights[t] * fw / k as f64);
        }
    }
    Ok(S::linear(&squares, &coef))
}

/// Pinball loss `ρ_τ(e) = max(τe, (τ−1)e)` with `e = y − ŷ`, averaged over
/// quantiles, steps and features. `pred[q]` is the forecast for `quantiles[q]`.
pub fn quantile_loss<S: Scalar>(
    pred: &[Trajectory<S>],
    obs: &Trajectory<f64>,
    quantiles: &[f64],
) -> Result<S> {
    if pred.len() != quantiles.len() {
        return Err(Error::shape(format!("{} quantile forecasts", quantiles.len()), pred.len()));
    }
    if quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::BadSpec(format!("quantiles must lie in (0, 1): {quantiles:?}")));
    }
    let mut terms = Vec::with_capacity(pred.len() * obs.len() * obs.dim());
    for (p, &tau) in pred.iter().zip(quantiles) {
        check_shapes(p, obs)?;
        for (pr, yr) in p.rows().zip(obs.rows()) {
            for (&yhat, &y) in pr.iter().zip(yr) {
                let e = -(yhat - y);
                terms.push((e * tau).max(e * (tau - 1.0)));
            }
        }
    }
    if terms.is_empty() {
        return Ok(S::constant(0.0));
    }
    let n = terms.len() as f64;
    Ok(S::sum(&terms) / n)
}
