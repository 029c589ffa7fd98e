use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{quantile_loss, time_weights, weighted_mse_loss};
use crate::autodiff::{Scalar, Tape};
use crate::dynamics::{DynamicsModel, ParamSet};
use crate::error::{Error, Result};
use crate::integrators::{integrate_sampled, Method, TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    WeightedMse,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lr: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// per observed feature; empty means all ones
    pub feature_weights: Vec<f64>,
    /// `w(t) = t^exponent` over window steps
    pub time_weight_exponent: f64,
    pub quantiles: Vec<f64>,
    pub tol: f64,
    pub patience: usize,
    pub restarts: usize,
    pub method: Method,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 0.01,
            max_iters: 2000,
            seed: 0,
            loss: LossKind::WeightedMse,
            feature_weights: Vec::new(),
            time_weight_exponent: 0.0,
            quantiles: vec![0.1, 0.5, 0.9],
            tol: 1e-7,
            patience: 50,
            restarts: 3,
            method: Method::Rk4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::BadSpec(format!("lr must be positive, got {}", self.lr)));
        }
        if self.restarts == 0 {
            return Err(Error::BadSpec("at least one restart is required".into()));
        }
        if self.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0))
            || self.quantiles.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::BadSpec(format!(
                "quantiles must be strictly increasing in (0, 1): {:?}",
                self.quantiles
            )));
        }
        if self.feature_weights.iter().any(|&w| !(w >= 0.0)) || !(self.tol >= 0.0) {
            return Err(Error::BadSpec("weights and tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamSet,
    /// full estimated initial state, observed and unobserved components
    pub u0_hat: Vec<f64>,
    /// loss per iteration of the winning restart
    pub train_loss_curve: Vec<f64>,
    pub best_loss: f64,
    pub converged: bool,
    pub restarts_used: usize,
    pub restarts_failed: usize,
    /// best loss reached by each restart; `None` if it never produced a finite loss
    pub restart_losses: Vec<Option<f64>>,
    /// fitted observations over the window
    pub fitted: Trajectory<f64>,
    /// state at the last window step with observed components replaced by the data
    pub last_state: Vec<f64>,
}

impl FitResult {
    pub fn t_last(&self) -> f64 {
        self.fitted.time(self.fitted.len() - 1)
    }
}

/// Predicted observations over the window for raw parameters `raw`.
pub fn predict_window<M, S>(
    model: &M,
    raw: &[S],
    obs: &Trajectory<f64>,
    method: Method,
) -> Result<(Trajectory<S>, Trajectory<S>)>
where
    M: DynamicsModel,
    S: Scalar,
{
    let p = model.layout().transform(raw);
    let c = model.coefficients(&p);
    let y0 = model.initial_state(&c, obs.row(0));
    let states = if obs.len() < 2 {
        Trajectory::from_rows(obs.t0, obs.h, &[y0])?
    } else {
        let grid = TimeGrid::new(obs.t0, obs.h, obs.len() - 1)?;
        integrate_sampled(|t, y: &[S]| model.rhs(t, y, &c), &y0, grid, method, model.substeps())?
    };
    let mut pred = Trajectory::new(obs.t0, obs.h, model.obs_dim());
    for row in states.rows() {
        pred.push(&model.observe(row, &c))?;
    }
    Ok((states, pred))
}

/// Training loss of raw parameters `raw` against the observed window.
pub fn window_loss<M, S>(model: &M, raw: &[S], obs: &Trajectory<f64>, config: &FitConfig) -> Result<S>
where
    M: DynamicsModel,
    S: Scalar,
{
    let (_, pred) = predict_window(model, raw, obs, config.method)?;
    match config.loss {
        LossKind::WeightedMse => weighted_mse_loss(
            &pred,
            obs,
            &time_weights(obs.len(), config.time_weight_exponent),
            &config.feature_weights,
        ),
        LossKind::Quantile => {
            let reps = vec![pred; config.quantiles.len()];
            quantile_loss(&reps, obs, &config.quantiles)
        }
    }
}

/// Maps `f` over `items` in parallel, preserving order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

struct RestartOutcome {
    best_raw: Option<Vec<f64>>,
    best_loss: f64,
    curve: Vec<f64>,
    converged: bool,
}

fn run_restart<M: DynamicsModel>(
    model: &M,
    obs: &Trajectory<f64>,
    config: &FitConfig,
    restart: usize,
) -> RestartOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
    let mut raw = model.layout().sample_raw(&mut rng);
    let mut adam = AdamState::new(raw.len());
    let mut tape = Tape::new();
    let mut out = RestartOutcome {
        best_raw: None,
        best_loss: f64::INFINITY,
        curve: Vec::new(),
        converged: false,
    };
    let mut best_history = Vec::new();
    for iter in 0..=config.max_iters {
        tape.reset();
        let x = tape.vars(&raw);
        let loss = match window_loss(model, &x, obs, config) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(_) => {
                debug!("restart {restart}: non-finite loss at iteration {iter}");
                break;
            }
        };
        let value = loss.value();
        out.curve.push(value);
        if value < out.best_loss {
            out.best_loss = value;
            out.best_raw = Some(raw.clone());
        }
        best_history.push(out.best_loss);
        if out.best_loss <= f64::MIN_POSITIVE {
            out.converged = true;
            break;
        }
        if iter >= config.patience {
            let old = best_history[iter - config.patience];
            if (old - out.best_loss) / old.abs().max(f64::MIN_POSITIVE) < config.tol {
                out.converged = true;
                break;
            }
        }
        if iter == config.max_iters {
            break;
        }
        let grads = match tape.backward(loss) {
            Ok(g) => g.wrt_all(&x),
            Err(_) => break,
        };
        drop(x);
        if adam_step(&mut raw, &grads, &mut adam, config.lr).is_err() {
            break;
        }
    }
    debug!(
        "restart {restart}: best loss {:.3e} after {} iterations",
        out.best_loss,
        out.curve.len()
    );
    out
}

/// Fits the model's unknowns to the observed window `obs` (one row per step,
/// at least two rows) by Adam on the differentiable integration loss.
pub fn fit<M: DynamicsModel>(model: &M, obs: &Trajectory<f64>, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if obs.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: obs.len(),
        });
    }
    if obs.dim() != model.obs_dim() {
        return Err(Error::shape(format!("{} observed features", model.obs_dim()), obs.dim()));
    }
    let restarts: Vec<usize> = (0..config.restarts).collect();
    let outcomes = par_map(&restarts, |_, &r| run_restart(model, obs, config, r));

    let mut winner: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.best_raw.is_some() && winner.map_or(true, |w| o.best_loss < outcomes[w].best_loss) {
            winner = Some(i);
        }
    }
    let Some(w) = winner else {
        return Err(Error::AllRestartsFailed {
            restarts: config.restarts,
        });
    };
    let best = &outcomes[w];
    let raw = best.best_raw.clone().expect("winner has parameters");
    let (states, fitted) = predict_window(model, &raw, obs, config.method)?;
    let params = ParamSet::from_raw(model.layout(), raw);
    let c = model.coefficients(&params.params());
    let last = obs.len() - 1;
    let last_state = model.anchor(states.row(last), obs.row(last), &c);
    Ok(FitResult {
        u0_hat: states.row(0).to_vec(),
        train_loss_curve: best.curve.clone(),
        best_loss: best.best_loss,
        converged: best.converged,
        restarts_used: config.restarts,
        restarts_failed: outcomes.iter().filter(|o| o.best_raw.is_none()).count(),
        restart_losses: outcomes
            .iter()
            .map(|o| o.best_raw.as_ref().map(|_| o.best_loss))
            .collect(),
        params,
        fitted,
        last_state,
    })
}

/// Rolled-out states and observations for the `q` steps after the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub states: Trajectory<f64>,
    pub observations: Trajectory<f64>,
}

/// Rolls the fitted model forward `q` steps from the anchored last state.
pub fn forecast<M: DynamicsModel>(model: &M, fit: &FitResult, q: usize, method: Method) -> Result<Forecast> {
    let h = fit.fitted.h;
    let t_last = fit.t_last();
    let mut states = Trajectory::new(t_last + h, h, model.state_dim());
    let mut observations = Trajectory::new(t_last + h, h, model.obs_dim());
    if q == 0 {
        return Ok(Forecast { states, observations });
    }
    let c = model.coefficients(&fit.params.params());
    let grid = TimeGrid::new(t_last, h, q)?;
    let traj = integrate_sampled(
        |t, y: &[f64]| model.rhs(t, y, &c),
        &fit.last_state,
        grid,
        method,
        model.substeps(),
    )?;
    for row in traj.rows().skip(1) {
        states.push(row)?;
        observations.push(&model.observe(row, &c))?;
    }
    Ok(Forecast { states, observations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ParamLayout, ParamSpec, Params, Seir, Transform};
    use crate::integrators::integrate;

    /// `dx/dt = 0` with one free unknown that does not affect the dynamics.
    struct Still {
        layout: ParamLayout,
    }

    impl Still {
        fn new() -> Self {
            Still {
                layout: ParamLayout::new(vec![ParamSpec::scalar("unused", Transform::Free, (-0.5, 0.5))])
                    .unwrap(),
            }
        }
    }

    impl DynamicsModel for Still {
        type Coeffs<S: Scalar> = ();
        fn name(&self) -> &str {
            "still"
        }
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }
        fn state_dim(&self) -> usize {
            2
        }
        fn obs_dim(&self) -> usize {
            2
        }
        fn coefficients<S: Scalar>(&self, _p: &Params<S>) {}
        fn initial_state<S: Scalar>(&self, _c: &(), y0: &[f64]) -> Vec<S> {
            y0.iter().map(|&v| S::constant(v)).collect()
        }
        fn rhs<S: Scalar>(&self, _t: f64, state: &[S], _c: &()) -> Vec<S> {
            vec![S::constant(0.0); state.len()]
        }
        fn observe<S: Scalar>(&self, state: &[S], _c: &()) -> Vec<S> {
            state.to_vec()
        }
        fn anchor(&self, _state: &[f64], observed: &[f64], _c: &()) -> Vec<f64> {
            observed.to_vec()
        }
    }

    fn constant_obs() -> Trajectory<f64> {
        Trajectory::from_rows(0.0, 1.0, &vec![vec![2.0, -1.0]; 5]).unwrap()
    }

    #[test]
    fn exact_data_stops_at_iteration_zero() {
        let r = fit(&Still::new(), &constant_obs(), &FitConfig::default()).unwrap();
        assert_eq!(r.train_loss_curve, vec![0.0]);
        assert!(r.converged);
    }

    #[test]
    fn constant_dynamics_repeat_last_state() {
        let m = Still::new();
        let r = fit(&m, &constant_obs(), &FitConfig::default()).unwrap();
        let f = forecast(&m, &r, 4, Method::Rk4).unwrap();
        assert_eq!(f.observations.len(), 4);
        assert!(f.observations.rows().all(|row| row == [2.0, -1.0]));
        assert_eq!(f.observations.t0, 5.0);
        assert!(forecast(&m, &r, 0, Method::Rk4).unwrap().observations.is_empty());
    }

    #[test]
    fn too_short_window_rejected() {
        let obs = Trajectory::from_rows(0.0, 1.0, &[vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            fit(&Still::new(), &obs, &FitConfig::default()),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = FitConfig {
            quantiles: vec![0.5, 0.1],
            ..FitConfig::default()
        };
        assert!(fit(&Still::new(), &constant_obs(), &bad).is_err());
    }

    #[test]
    fn seir_fit_is_deterministic_and_best_of_restarts() {
        let model = Seir::fully_observed(1000.0);
        let p = crate::dynamics::SeirParams { beta: 0.6, sigma: 0.2, gamma: 0.1, n: 1000.0 };
        let grid = TimeGrid::new(0.0, 1.0, 14).unwrap();
        let truth = integrate(
            |t, y: &[f64]| crate::dynamics::seir_rhs(t, y, &p),
            &[990.0, 0.0, 10.0, 0.0],
            grid,
            Method::Rk4,
        )
        .unwrap();
        let cfg = FitConfig { max_iters: 60, lr: 0.05, ..FitConfig::default() };
        let a = fit(&model, &truth, &cfg).unwrap();
        let b = fit(&model, &truth, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.params.in_domain());
        assert!(a.best_loss <= a.train_loss_curve[0]);
        for l in a.restart_losses.iter().flatten() {
            assert!(a.best_loss <= *l);
        }
    }
}
