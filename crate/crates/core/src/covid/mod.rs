//! Multi-region COVID-19 forecasting with the SuEIR model.
//!
//! Cumulative infected, removed and death counts per state are loaded from
//! wide CSV files, scaled by population, and fitted jointly through a masked
//! low-rank transmission matrix. Forecasts carry residual-based quantile bands.

mod panel;
mod pipeline;
mod synthetic;

pub use panel::{
    clean_cumulative, default_adjacency, default_population, load_jhu_csv, parse_adjacency,
    parse_population, write_jhu_csv, write_wide_csv, CovidPanel, JhuPaths, ADJACENCY_CSV,
    EXCLUDED_REGIONS, FEATURES, POPULATION_CSV, STATES,
};
pub use pipeline::{
    evaluate_mae, fit_covid, forecast_covid, prepare_fit_window, write_forecast_csv,
    write_metrics_json, BlockSnapshot, CovidConfig, CovidFit, CovidFitSnapshot, CovidForecast,
    CovidWindow, MaeRecord,
};
pub use synthetic::{generate_synthetic_covid, SyntheticCovid, SyntheticCovidConfig};
