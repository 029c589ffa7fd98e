use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::panel::{CovidPanel, FEATURES};
use crate::dynamics::sueir::{SuEirConfig, SuEirCovid};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::estimation::{fit, forecast, FitConfig, FitResult};
use crate::integrators::{Method, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovidConfig {
    /// days of history in the fitting window
    pub k: usize,
    pub rank: usize,
    pub breakpoints: usize,
    /// loss weights of R and D relative to I
    pub alpha1: f64,
    pub alpha2: f64,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub fit: FitConfig,
}

impl Default for CovidConfig {
    fn default() -> Self {
        CovidConfig {
            k: 14,
            rank: 5,
            breakpoints: 1,
            alpha1: 1.0,
            alpha2: 1.0,
            horizon: 7,
            quantiles: vec![0.1, 0.5, 0.9],
            fit: FitConfig {
                lr: 0.03,
                max_iters: 8000,
                patience: 1000,
                restarts: 8,
                time_weight_exponent: 0.5,
                ..FitConfig::default()
            },
        }
    }
}

/// Population-scaled observations for one fitting window.
#[derive(Debug, Clone, PartialEq)]
pub struct CovidWindow {
    pub start: NaiveDate,
    /// first forecast day, the day after the window
    pub target: NaiveDate,
    /// `k × 3n` fractions, `(I, R, D)` per state
    pub obs: Trajectory<f64>,
}

impl CovidWindow {
    pub fn end(&self) -> NaiveDate {
        self.target.pred_opt().expect("date in range")
    }
}

/// The `k` days ending the day before `target_week_start`, divided by population.
pub fn prepare_fit_window(panel: &CovidPanel, target_week_start: NaiveDate, k: usize) -> Result<CovidWindow> {
    let first = *panel.dates.first().ok_or(Error::InsufficientHistory { needed: k, available: 0 })?;
    let available = (target_week_start - first).num_days().max(0) as usize;
    let available = available.min(panel.dates.len());
    if k < 2 || available < k {
        return Err(Error::InsufficientHistory { needed: k.max(2), available });
    }
    let end = available;
    let start = end - k;
    let n = panel.regions();
    let mut obs = Trajectory::new(0.0, 1.0, 3 * n);
    for t in start..end {
        let row: Vec<f64> = (0..n)
            .flat_map(|i| {
                let p = panel.population[i];
                [panel.infected[t][i] / p, panel.recovered[t][i] / p, panel.deaths[t][i] / p]
            })
            .collect();
        obs.push(&row)?;
    }
    Ok(CovidWindow {
        start: panel.dates[start],
        target: target_week_start,
        obs,
    })
}

#[derive(Debug, Clone)]
pub struct CovidFit {
    pub model: SuEirCovid,
    pub result: FitResult,
    pub window: CovidWindow,
    pub method: Method,
}

impl CovidFit {
    fn block(&self, name: &str) -> Vec<f64> {
        self.result.params.get(name).expect("model block").to_vec()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.block("sigma")
    }

    pub fn mu(&self) -> Vec<f64> {
        self.block("mu")
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.block("gamma")
    }

    /// Fitted initial `(S, E, U)` fractions per state.
    pub fn initial_unobserved(&self) -> Vec<[f64; 3]> {
        self.result.u0_hat.chunks(6).map(|x| [x[0], x[1], x[2]]).collect()
    }

    pub fn transmission(&self) -> Vec<Vec<f64>> {
        self.model.coefficients(&self.result.params.params()).dense_transmission()
    }

    /// Piecewise transmission rate of each state at window day `t`.
    pub fn beta_at(&self, t: f64) -> Vec<f64> {
        let c = self.model.coefficients(&self.result.params.params());
        c.beta.iter().map(|b| b.at(t)).collect()
    }
}

/// Jointly fits all states of the panel over the window.
pub fn fit_covid(panel: &CovidPanel, window: &CovidWindow, config: &CovidConfig) -> Result<CovidFit> {
    let n = panel.regions();
    if window.obs.dim() != 3 * n {
        return Err(Error::shape(3 * n, window.obs.dim()));
    }
    let model = SuEirCovid::new(
        panel.adjacency.clone(),
        SuEirConfig {
            rank: config.rank,
            breakpoints: config.breakpoints,
            window: window.obs.len(),
        },
    )?;
    let mut fit_cfg = config.fit.clone();
    fit_cfg.feature_weights = (0..n).flat_map(|_| [1.0, config.alpha1, config.alpha2]).collect();
    let result = fit(&model, &window.obs, &fit_cfg)?;
    Ok(CovidFit {
        model,
        result,
        window: window.clone(),
        method: fit_cfg.method,
    })
}

/// Median and quantile bands per day, state and feature, in persons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovidForecast {
    pub states: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub quantiles: Vec<f64>,
    /// `[day][state][feature]`, flattened
    pub median: Vec<f64>,
    /// `[day][state][feature][quantile]`, flattened
    pub values: Vec<f64>,
}

impl CovidForecast {
    fn cell(&self, day: usize, state: usize, feature: usize) -> usize {
        (day * self.states.len() + state) * 3 + feature
    }

    pub fn median(&self, day: usize, state: usize, feature: usize) -> f64 {
        self.median[self.cell(day, state, feature)]
    }

    pub fn band(&self, day: usize, state: usize, feature: usize) -> &[f64] {
        let q = self.quantiles.len();
        let c = self.cell(day, state, feature);
        &self.values[c * q..(c + 1) * q]
    }
}

/// Linearly interpolated empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = tau * (sorted.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Offsets `Q_τ(r) − Q_½(r)` of in-window residuals `r`.
fn residual_offsets(residuals: &mut [f64], quantiles: &[f64]) -> Vec<f64> {
    residuals.sort_by(f64::total_cmp);
    let mid = quantile_sorted(residuals, 0.5);
    quantiles.iter().map(|&q| quantile_sorted(residuals, q) - mid).collect()
}

/// Rolls the fit forward `horizon` days. Bands widen with `√step` around the
/// median using the empirical spread of in-window residuals, are clamped at
/// zero, and are sorted per cell.
pub fn forecast_covid(
    panel: &CovidPanel,
    fit: &CovidFit,
    horizon: usize,
    quantiles: &[f64],
) -> Result<CovidForecast> {
    if quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::BadSpec(format!("quantiles must lie in (0, 1): {quantiles:?}")));
    }
    let n = panel.regions();
    let f = forecast(&fit.model, &fit.result, horizon, fit.method)?;
    let obs = &fit.window.obs;
    let fitted = &fit.result.fitted;
    let mut offsets = Vec::with_capacity(3 * n);
    for c in 0..3 * n {
        let pop = panel.population[c / 3];
        let mut r: Vec<f64> = obs
            .rows()
            .zip(fitted.rows())
            .map(|(y, yhat)| (y[c] - yhat[c]) * pop)
            .collect();
        offsets.push(residual_offsets(&mut r, quantiles));
    }
    let mut median = Vec::with_capacity(horizon * 3 * n);
    let mut values = Vec::with_capacity(horizon * 3 * n * quantiles.len());
    for (day, row) in f.observations.rows().enumerate() {
        let widen = ((day + 1) as f64).sqrt();
        for c in 0..3 * n {
            let m = row[c] * panel.population[c / 3];
            median.push(m);
            let mut band: Vec<f64> = offsets[c].iter().map(|o| (m + o * widen).max(0.0)).collect();
            band.sort_by(f64::total_cmp);
            values.extend(band);
        }
    }
    let dates = (0..horizon as u64)
        .map(|d| fit.window.target.checked_add_days(Days::new(d)).expect("date in range"))
        .collect();
    Ok(CovidForecast {
        states: panel.states.clone(),
        dates,
        quantiles: quantiles.to_vec(),
        median,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRecord {
    pub week: String,
    pub feature: String,
    pub mae: f64,
}

/// Mean absolute error of the median over all forecast days and states, per feature.
pub fn evaluate_mae(forecast: &CovidForecast, truth: &CovidPanel) -> Result<Vec<MaeRecord>> {
    if forecast.states != truth.states {
        return Err(Error::shape(format!("{:?}", forecast.states), format!("{:?}", truth.states)));
    }
    let rows = forecast
        .dates
        .iter()
        .map(|d| truth.date_index(*d).ok_or_else(|| Error::shape(format!("truth for {d}"), "none")))
        .collect::<Result<Vec<_>>>()?;
    let week = forecast.dates.first().map(|d| d.to_string()).unwrap_or_default();
    let n = truth.regions();
    Ok(FEATURES
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let m = truth.feature(f);
            let mut total = 0.0;
            for (day, &t) in rows.iter().enumerate() {
                for s in 0..n {
                    total += (forecast.median(day, s, f) - m[t][s]).abs();
                }
            }
            let count = (rows.len() * n).max(1) as f64;
            MaeRecord {
                week: week.clone(),
                feature: name.to_string(),
                mae: total / count,
            }
        })
        .collect())
}

/// `state,date,feature,quantile,value` rows; the median is written with quantile `median`.
pub fn write_forecast_csv(forecast: &CovidForecast, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["state", "date", "feature", "quantile", "value"]).map_err(io)?;
    for (day, date) in forecast.dates.iter().enumerate() {
        for (s, state) in forecast.states.iter().enumerate() {
            for (f, feature) in FEATURES.iter().enumerate() {
                let date = date.to_string();
                w.write_record([
                    state.as_str(),
                    &date,
                    feature,
                    "median",
                    &forecast.median(day, s, f).to_string(),
                ])
                .map_err(io)?;
                for (q, v) in forecast.quantiles.iter().zip(forecast.band(day, s, f)) {
                    w.write_record([state.as_str(), &date, feature, &q.to_string(), &v.to_string()])
                        .map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_json(records: &[MaeRecord], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(records)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSnapshot {
    pub name: String,
    pub raw: Vec<f64>,
    pub value: Vec<f64>,
}

/// Fitted parameters in raw and transformed form, with derived per-state rates.
#[derive(Debug, Clone, Serialize)]
pub struct CovidFitSnapshot {
    pub states: Vec<String>,
    pub window_start: String,
    pub window_end: String,
    pub best_loss: f64,
    pub converged: bool,
    pub restart_losses: Vec<Option<f64>>,
    pub iterations: usize,
    pub blocks: Vec<BlockSnapshot>,
    pub initial_state: Vec<f64>,
}

impl CovidFitSnapshot {
    pub fn new(fit: &CovidFit, panel: &CovidPanel) -> Self {
        let params = &fit.result.params;
        let blocks = params
            .layout
            .specs()
            .iter()
            .enumerate()
            .map(|(b, s)| {
                let r = params.layout.range(b);
                BlockSnapshot {
                    name: s.name.clone(),
                    raw: params.raw[r.clone()].to_vec(),
                    value: params.values[r].to_vec(),
                }
            })
            .collect();
        CovidFitSnapshot {
            states: panel.states.clone(),
            window_start: fit.window.start.to_string(),
            window_end: fit.window.end().to_string(),
            best_loss: fit.result.best_loss,
            converged: fit.result.converged,
            restart_losses: fit.result.restart_losses.clone(),
            iterations: fit.result.train_loss_curve.len(),
            blocks,
            initial_state: fit.result.u0_hat.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
