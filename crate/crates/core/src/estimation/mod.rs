//! Parameter estimation by gradient descent through the integrator.
//!
//! A fit samples raw parameters, integrates the model over the observed
//! window on a fresh tape, and updates the raw vector with Adam until the
//! best loss plateaus. Several restarts run in parallel and the lowest loss
//! wins.

mod adam;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState};
pub use fit::{
    fit, forecast, par_map, predict_window, window_loss, FitConfig, FitResult, Forecast, LossKind,
};
pub use loss::{quantile_loss, time_weights, weighted_mse_loss};
