use std::path::Path;

use autoode::covid::*;
use autoode::dynamics::sueir::{self, CovidRates, COMPARTMENTS};
use autoode::dynamics::DynamicsModel;
use autoode::estimation::FitConfig;
use autoode::integrators::{integrate, Method, TimeGrid};
use autoode::Error;
use chrono::NaiveDate;
use tempfile::TempDir;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn codes(n: usize) -> Vec<String> {
    STATES[..n].iter().map(|s| s.to_string()).collect()
}

/// States 0 and 1 are adjacent; state 2 is isolated.
fn three_state_mask() -> Vec<Vec<f64>> {
    vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
}

fn synthetic_panel(mask: &[Vec<f64>], days: usize, seed: u64) -> (SyntheticCovid, CovidPanel) {
    let mut cfg = SyntheticCovidConfig::parameter_recovery(seed);
    cfg.days = days;
    let syn = generate_synthetic_covid(mask, &cfg).unwrap();
    let n = mask.len();
    let population: Vec<f64> = (0..n).map(|i| 1e6 * (i + 1) as f64).collect();
    let panel = syn.to_panel(&codes(n), &population, date(2020, 6, 1)).unwrap();
    (syn, panel)
}

fn quick_config(k: usize) -> CovidConfig {
    CovidConfig {
        k,
        fit: FitConfig {
            max_iters: 300,
            restarts: 1,
            patience: 10_000,
            ..CovidConfig::default().fit
        },
        ..CovidConfig::default()
    }
}

fn write_wide(dir: &Path, name: &str, header: &[&str], rows: &[(&str, &[&str])]) -> std::path::PathBuf {
    let mut text = format!("state,{}\n", header.join(","));
    for (s, cells) in rows {
        text.push_str(&format!("{s},{}\n", cells.join(",")));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn two_state_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let pop = dir.join("population.csv");
    std::fs::write(&pop, "state,population\nAL,1000\nAK,2000\n").unwrap();
    let adj = dir.join("adjacency.csv");
    std::fs::write(&adj, "state,AL,AK\nAL,1,0\nAK,0,1\n").unwrap();
    (pop, adj)
}

#[test]
fn all_zero_series_load_as_zero_panel() {
    let dir = TempDir::new().unwrap();
    let days = ["2020-04-14", "2020-04-15", "2020-04-16"];
    let zeros: &[&str] = &["0", "0", "0"];
    let rows = [("AL", zeros), ("AK", zeros)];
    let (population, adjacency) = two_state_files(dir.path());
    let panel = load_jhu_csv(&JhuPaths {
        confirmed: write_wide(dir.path(), "c.csv", &days, &rows),
        recovered: write_wide(dir.path(), "r.csv", &days, &rows),
        deaths: write_wide(dir.path(), "d.csv", &days, &rows),
        population,
        adjacency,
    })
    .unwrap();
    assert_eq!(panel.dates.len(), 3);
    for f in 0..3 {
        assert!(panel.feature(f).iter().flatten().all(|&v| v == 0.0));
    }
    assert_eq!(panel.population, vec![1000.0, 2000.0]);
}

#[test]
fn downward_revision_is_cleaned_on_load() {
    let dir = TempDir::new().unwrap();
    let days = ["2020-04-14", "2020-04-15", "2020-04-16", "2020-04-17"];
    let revised: &[&str] = &["90", "100", "98", "105"];
    let flat: &[&str] = &["1", "1", "1", "1"];
    let (population, adjacency) = two_state_files(dir.path());
    let panel = load_jhu_csv(&JhuPaths {
        confirmed: write_wide(dir.path(), "c.csv", &days, &[("AL", revised), ("AK", flat)]),
        recovered: write_wide(dir.path(), "r.csv", &days, &[("AL", flat), ("AK", flat)]),
        deaths: write_wide(dir.path(), "d.csv", &days, &[("AL", flat), ("AK", flat)]),
        population,
        adjacency,
    })
    .unwrap();
    let al: Vec<f64> = panel.infected.iter().map(|r| r[0]).collect();
    assert_eq!(al, vec![90.0, 100.0, 100.0, 107.0]);
}

#[test]
fn county_rows_are_summed_and_territories_skipped() {
    let dir = TempDir::new().unwrap();
    let days = ["2020-04-14", "2020-04-15"];
    let rows: [(&str, &[&str]); 4] = [("AL", &["1", "2"]), ("AL", &["10", "20"]), ("PR", &["5", "5"]), ("AK", &["0", "0"])];
    let (population, adjacency) = two_state_files(dir.path());
    let panel = load_jhu_csv(&JhuPaths {
        confirmed: write_wide(dir.path(), "c.csv", &days, &rows),
        recovered: write_wide(dir.path(), "r.csv", &days, &rows),
        deaths: write_wide(dir.path(), "d.csv", &days, &rows),
        population,
        adjacency,
    })
    .unwrap();
    assert_eq!(panel.infected, vec![vec![11.0, 0.0], vec![22.0, 0.0]]);
}

#[test]
fn misaligned_dates_restrict_to_common_range() {
    let dir = TempDir::new().unwrap();
    let c_days = ["2020-04-14", "2020-04-15", "2020-04-16", "2020-04-17"];
    let r_days = ["2020-04-15", "2020-04-16", "2020-04-17", "2020-04-18"];
    let d_days = ["2020-04-13", "2020-04-14", "2020-04-15", "2020-04-16"];
    let v: &[&str] = &["1", "2", "3", "4"];
    let (population, adjacency) = two_state_files(dir.path());
    let panel = load_jhu_csv(&JhuPaths {
        confirmed: write_wide(dir.path(), "c.csv", &c_days, &[("AL", v), ("AK", v)]),
        recovered: write_wide(dir.path(), "r.csv", &r_days, &[("AL", v), ("AK", v)]),
        deaths: write_wide(dir.path(), "d.csv", &d_days, &[("AL", v), ("AK", v)]),
        population,
        adjacency,
    })
    .unwrap();
    assert_eq!(panel.dates, vec![date(2020, 4, 15), date(2020, 4, 16)]);
    assert_eq!(panel.infected, vec![vec![2.0, 2.0], vec![3.0, 3.0]]);
    assert_eq!(panel.recovered, vec![vec![1.0, 1.0], vec![2.0, 2.0]]);
    assert_eq!(panel.deaths, vec![vec![3.0, 3.0], vec![4.0, 4.0]]);
}

#[test]
fn loader_errors() {
    let dir = TempDir::new().unwrap();
    let v: &[&str] = &["1", "2"];
    let (population, adjacency) = two_state_files(dir.path());
    let good = write_wide(dir.path(), "g.csv", &["2020-04-14", "2020-04-15"], &[("AL", v), ("AK", v)]);
    let gap = write_wide(dir.path(), "gap.csv", &["2020-04-14", "2020-04-17"], &[("AL", v), ("AK", v)]);
    let paths = |c: &Path, r: &Path| JhuPaths {
        confirmed: c.to_path_buf(),
        recovered: r.to_path_buf(),
        deaths: r.to_path_buf(),
        population: population.clone(),
        adjacency: adjacency.clone(),
    };
    match load_jhu_csv(&paths(&gap, &gap)) {
        Err(Error::DateGap { missing }) => assert_eq!(missing, vec!["2020-04-15", "2020-04-16"]),
        other => panic!("{other:?}"),
    }
    let unknown = write_wide(dir.path(), "u.csv", &["2020-04-14", "2020-04-15"], &[("XX", v)]);
    assert!(matches!(load_jhu_csv(&paths(&unknown, &good)), Err(Error::UnknownState(_))));
    let bad = write_wide(dir.path(), "b.csv", &["2020-04-14", "2020-04-15"], &[("AL", &["1", "x"])]);
    match load_jhu_csv(&paths(&bad, &good)) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn panel_round_trips_through_jhu_files() {
    let (_, panel) = synthetic_panel(&three_state_mask(), 20, 3);
    let dir = TempDir::new().unwrap();
    let paths = write_jhu_csv(&panel, dir.path()).unwrap();
    let loaded = load_jhu_csv(&paths).unwrap();
    assert_eq!(loaded.states, panel.states);
    assert_eq!(loaded.dates, panel.dates);
    assert_eq!(loaded.adjacency, panel.adjacency);
    for f in 0..3 {
        for j in 0..panel.regions() {
            let written: Vec<Option<f64>> = panel.feature(f).iter().map(|r| Some(r[j].round())).collect();
            let got: Vec<f64> = loaded.feature(f).iter().map(|r| r[j]).collect();
            assert_eq!(got, clean_cumulative(&written), "feature {f} state {j}");
        }
    }
}

fn constant_panel(days: usize, infected: f64, population: f64) -> CovidPanel {
    CovidPanel {
        states: codes(1),
        dates: (0..days as i64).map(|d| date(2020, 4, 1) + chrono::Days::new(d as u64)).collect(),
        infected: vec![vec![infected]; days],
        recovered: vec![vec![0.0]; days],
        deaths: vec![vec![0.0]; days],
        population: vec![population],
        adjacency: vec![vec![1.0]],
    }
    .validate()
    .unwrap()
}

#[test]
fn fit_window_scales_by_population_without_leakage() {
    let panel = constant_panel(30, 10_000.0, 1e6);
    let w = prepare_fit_window(&panel, date(2020, 4, 20), 14).unwrap();
    assert_eq!(w.obs.len(), 14);
    assert_eq!(w.obs.row(0)[0], 0.01);
    assert_eq!(w.end(), date(2020, 4, 19));
    assert_eq!(w.start, date(2020, 4, 6));
    assert!(matches!(
        prepare_fit_window(&panel, date(2020, 4, 10), 14),
        Err(Error::InsufficientHistory { needed: 14, available: 9 })
    ));
}

fn state_fingerprint(fit: &CovidFit, i: usize) -> Vec<f64> {
    let mut out = vec![fit.sigma()[i], fit.mu()[i], fit.gamma()[i]];
    out.extend(fit.initial_unobserved()[i]);
    out.extend(fit.transmission()[i].iter().copied());
    for t in 0..fit.window.obs.len() {
        out.push(fit.beta_at(t as f64)[i]);
    }
    out
}

#[test]
fn isolated_state_fit_ignores_other_states() {
    let mask = three_state_mask();
    let (_, panel) = synthetic_panel(&mask, 20, 5);
    let cfg = quick_config(14);
    let target = panel.dates[14];
    let base = fit_covid(&panel, &prepare_fit_window(&panel, target, 14).unwrap(), &cfg).unwrap();

    let mut perturbed = panel.clone();
    for m in [&mut perturbed.infected, &mut perturbed.recovered, &mut perturbed.deaths] {
        for row in m.iter_mut() {
            row[0] *= 1.1;
            row[1] *= 0.9;
        }
    }
    let other = fit_covid(&perturbed, &prepare_fit_window(&perturbed, target, 14).unwrap(), &cfg).unwrap();
    assert_eq!(state_fingerprint(&base, 2), state_fingerprint(&other, 2));
    assert_ne!(state_fingerprint(&base, 0), state_fingerprint(&other, 0));
}

#[test]
fn scaling_population_and_counts_leaves_fractions_unchanged() {
    let mask = three_state_mask();
    let (_, panel) = synthetic_panel(&mask, 20, 6);
    let mut scaled = panel.clone();
    scaled.population[1] *= 4.0;
    for m in [&mut scaled.infected, &mut scaled.recovered, &mut scaled.deaths] {
        for row in m.iter_mut() {
            row[1] *= 4.0;
        }
    }
    let cfg = quick_config(14);
    let target = panel.dates[14];
    let wa = prepare_fit_window(&panel, target, 14).unwrap();
    let wb = prepare_fit_window(&scaled, target, 14).unwrap();
    assert_eq!(wa.obs, wb.obs);
    let fa = fit_covid(&panel, &wa, &cfg).unwrap();
    let fb = fit_covid(&scaled, &wb, &cfg).unwrap();
    assert_eq!(fa.result.params, fb.result.params);
    let qa = forecast_covid(&panel, &fa, 7, &cfg.quantiles).unwrap();
    let qb = forecast_covid(&scaled, &fb, 7, &cfg.quantiles).unwrap();
    for d in 0..7 {
        for f in 0..3 {
            assert_eq!(qa.median(d, 0, f), qb.median(d, 0, f));
            let (a, b) = (qa.median(d, 1, f) / 2e6, qb.median(d, 1, f) / 8e6);
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }
}

fn rollout(mask: &[Vec<f64>], syn: &SyntheticCovid, y0: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let rates = CovidRates::new(&syn.params, mask).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    integrate(|t, y: &[f64]| sueir::sueir_covid_rhs(t, y, &rates), y0, grid, Method::Rk4)
        .unwrap()
        .rows()
        .map(<[f64]>::to_vec)
        .collect()
}

#[test]
fn masked_neighbors_do_not_affect_forecast() {
    let mask = three_state_mask();
    let (syn, _) = synthetic_panel(&mask, 10, 8);
    let y0 = syn.states.row(0).to_vec();
    let mut bumped = y0.clone();
    bumped[2 * COMPARTMENTS + sueir::I] *= 1.5;
    bumped[2 * COMPARTMENTS + sueir::E] *= 1.5;
    let (a, b) = (rollout(&mask, &syn, &y0, 7), rollout(&mask, &syn, &bumped, 7));
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra[..2 * COMPARTMENTS], rb[..2 * COMPARTMENTS]);
    }

    let mut coupled = mask.clone();
    coupled[0][2] = 1.0;
    coupled[2][0] = 1.0;
    let (a, b) = (rollout(&coupled, &syn, &y0, 7), rollout(&coupled, &syn, &bumped, 7));
    assert_ne!(a[7][..COMPARTMENTS], b[7][..COMPARTMENTS]);
}

#[test]
fn fitted_rollout_conserves_population() {
    let mask = three_state_mask();
    let (_, panel) = synthetic_panel(&mask, 20, 9);
    let cfg = quick_config(14);
    let fit = fit_covid(&panel, &prepare_fit_window(&panel, panel.dates[14], 14).unwrap(), &cfg).unwrap();
    let c = fit.model.coefficients(&fit.result.params.params());
    let grid = TimeGrid::new(0.0, 1.0, 21).unwrap();
    let traj = integrate(|t, y: &[f64]| fit.model.rhs(t, y, &c), &fit.result.u0_hat, grid, Method::Rk4).unwrap();
    for row in traj.rows() {
        for x in row.chunks(COMPARTMENTS) {
            assert!((x[..sueir::D].iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn bands_collapse_without_residuals_and_stay_ordered() {
    let mask = three_state_mask();
    let (_, panel) = synthetic_panel(&mask, 20, 10);
    let cfg = quick_config(14);
    let fit = fit_covid(&panel, &prepare_fit_window(&panel, panel.dates[14], 14).unwrap(), &cfg).unwrap();
    let q = [0.05, 0.25, 0.5, 0.75, 0.95];

    let fc = forecast_covid(&panel, &fit, 7, &q).unwrap();
    assert_eq!(fc.dates[0], panel.dates[14]);
    for d in 0..7 {
        for s in 0..3 {
            for f in 0..3 {
                let band = fc.band(d, s, f);
                assert!(band.windows(2).all(|w| w[0] <= w[1]));
                assert!(band.iter().all(|&v| v >= 0.0));
                if f > 0 && d > 0 {
                    assert!(fc.median(d, s, f) >= fc.median(d - 1, s, f));
                }
            }
        }
    }

    let mut exact = fit.clone();
    exact.window.obs = exact.result.fitted.clone();
    let fc = forecast_covid(&panel, &exact, 7, &q).unwrap();
    for d in 0..7 {
        for s in 0..3 {
            for f in 0..3 {
                let m = fc.median(d, s, f);
                assert!(fc.band(d, s, f).iter().all(|&v| v == m.max(0.0)));
            }
        }
    }
}

#[test]
fn median_forecast_tracks_synthetic_truth() {
    let mask = three_state_mask();
    let (_, panel) = synthetic_panel(&mask, 28, 12);
    let cfg = CovidConfig { k: 21, ..CovidConfig::default() };
    let target = panel.dates[21];
    let fit = fit_covid(&panel, &prepare_fit_window(&panel, target, 21).unwrap(), &cfg).unwrap();
    let fc = forecast_covid(&panel, &fit, 7, &cfg.quantiles).unwrap();
    for d in 0..7 {
        for s in 0..3 {
            for f in 0..3 {
                let truth = panel.feature(f)[21 + d][s];
                let m = fc.median(d, s, f);
                assert!((m - truth).abs() <= 0.05 * truth, "day {d} state {s} feature {f}: {m} vs {truth}");
            }
        }
    }
}

fn forecast_from_truth(panel: &CovidPanel, start: usize, bias: f64) -> CovidForecast {
    let n = panel.regions();
    let mut median = Vec::new();
    for d in 0..7 {
        for s in 0..n {
            for f in 0..3 {
                median.push(panel.feature(f)[start + d][s] + bias);
            }
        }
    }
    CovidForecast {
        states: panel.states.clone(),
        dates: panel.dates[start..start + 7].to_vec(),
        quantiles: vec![0.5],
        values: median.clone(),
        median,
    }
}

#[test]
fn mae_of_exact_and_biased_forecasts() {
    let (_, panel) = synthetic_panel(&three_state_mask(), 20, 13);
    for r in evaluate_mae(&forecast_from_truth(&panel, 10, 0.0), &panel).unwrap() {
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.week, "2020-06-11");
    }
    let records = evaluate_mae(&forecast_from_truth(&panel, 10, 10.0), &panel).unwrap();
    assert_eq!(records.iter().map(|r| r.feature.as_str()).collect::<Vec<_>>(), FEATURES);
    for r in records {
        assert!((r.mae - 10.0).abs() < 1e-9, "{r:?}");
    }
    let mut other = panel.clone();
    other.states.swap(0, 1);
    assert!(matches!(
        evaluate_mae(&forecast_from_truth(&panel, 10, 0.0), &other),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn output_files_are_written() {
    let (_, panel) = synthetic_panel(&three_state_mask(), 20, 14);
    let fc = forecast_from_truth(&panel, 10, 0.0);
    let dir = TempDir::new().unwrap();
    let csv_path = dir.path().join("forecast.csv");
    write_forecast_csv(&fc, &csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next(), Some("state,date,feature,quantile,value"));
    assert_eq!(text.lines().count(), 1 + 7 * 3 * 3 * 2);
    let json_path = dir.path().join("metrics.json");
    write_metrics_json(&evaluate_mae(&fc, &panel).unwrap(), &json_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

#[test]
fn short_window_recovers_gamma_on_fifty_states() {
    let mask = default_adjacency();
    let syn = generate_synthetic_covid(&mask, &SyntheticCovidConfig::parameter_recovery(21)).unwrap();
    let panel = syn.to_panel(&codes(50), &default_population(), date(2020, 6, 1)).unwrap();
    let cfg = CovidConfig { k: 10, ..CovidConfig::default() };
    let fit = fit_covid(&panel, &prepare_fit_window(&panel, panel.dates[10], 10).unwrap(), &cfg).unwrap();
    let mae = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let gamma = mae(&fit.gamma(), &syn.params.gamma);
    let e0_fit: Vec<f64> = fit.initial_unobserved().iter().map(|x| x[1]).collect();
    let e0_true: Vec<f64> = syn.states.row(0).chunks(COMPARTMENTS).map(|x| x[sueir::E]).collect();
    let e0 = mae(&e0_fit, &e0_true);
    println!("10-day window: gamma MAE {gamma:.4}, E0 MAE {e0:.4}");
    assert!(gamma <= 0.01);
    assert!(e0 <= 0.25);
}
