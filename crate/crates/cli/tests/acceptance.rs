use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use autoode::autodiff::{grad_check, Var};
use autoode::benchmark::{evaluate_split, generate, AutoOdeBench, BenchmarkSpec, EvalReport, Evaluator, FcBench};
use autoode::covid::{
    default_adjacency, default_population, fit_covid, generate_synthetic_covid, prepare_fit_window,
    write_jhu_csv, CovidConfig, CovidFitSnapshot, CovidPanel, SyntheticCovidConfig, STATES,
};
use autoode::dynamics::sueir::{self, COMPARTMENTS};
use autoode::dynamics::{seir_rhs, Seir, SeirParams};
use autoode::estimation::{fit, forecast, time_weights, weighted_mse_loss, FitConfig};
use autoode::integrators::{integrate, Method, TimeGrid, Trajectory};
use chrono::NaiveDate;
use serde_json::Value;
use tempfile::TempDir;

static SERIAL: Mutex<()> = Mutex::new(());

const ORDER_TOL: f64 = 0.3;
const ORDER_BUDGET: Duration = Duration::from_secs(1);
const GRAD_TOL: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(5);
const CONSERVATION_TOL: f64 = 1e-6;
const CONSERVATION_BUDGET: Duration = Duration::from_secs(5);
const RECOVERY_SEED: u64 = 1;
const RECOVERY_STEPS: usize = 30;
const GAMMA_MAE: f64 = 0.01;
const SIGMA_MU_MAE: f64 = 0.15;
const RECOVERY_BUDGET: Duration = Duration::from_secs(600);
const SEIR_N: f64 = 1000.0;
const SEIR_RATE_TOL: f64 = 0.05;
const SEIR_RMSE_FRACTION: f64 = 0.02;
const SEIR_BUDGET: Duration = Duration::from_secs(60);
const SHIFT_SAMPLES: usize = 2400;
const FC_SINE_RATIO: f64 = 3.0;
const FC_SHIFT_RATIO: f64 = 1.5;
const FC_BUDGET: Duration = Duration::from_secs(1800);
const AUTOODE_SAMPLES: usize = 25;
const AUTOODE_RATIO: (f64, f64) = (0.5, 1.5);
const AUTOODE_BUDGET: Duration = Duration::from_secs(1800);
const COVID_WEEK: &str = "2020-08-23";
const COVID_MAE: f64 = 2000.0;
const COVID_BUDGET: Duration = Duration::from_secs(600);

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, passed: bool, detail: &str) {
    let line = format!("criterion {id} {name}: {} {detail}\n", if passed { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).expect("stderr");
    assert!(passed, "criterion {id} {name}: {detail}");
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn autoode(args: &[&str], cwd: &Path, threads: usize) -> std::process::Output {
    let o = Command::new(env!("CARGO_BIN_EXE_autoode"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env("AUTOODE_THREADS", threads.to_string())
        .output()
        .expect("binary runs");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn criterion_1_integrator_order() {
    let _g = serial();
    let t = Instant::now();
    let order = |method| {
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h: &f64| {
                let steps = (1.0 / h).round() as usize;
                let traj = integrate(|_t, y: &[f64]| vec![y[0]], &[1.0], TimeGrid::new(0.0, h, steps).unwrap(), method)
                    .unwrap();
                (traj.last().unwrap()[0] - std::f64::consts::E).abs()
            })
            .collect();
        ((errs[0] / errs[1]).log2() + (errs[1] / errs[2]).log2()) / 2.0
    };
    let (euler, rk4) = (order(Method::Euler), order(Method::Rk4));
    let elapsed = t.elapsed();
    verdict(
        1,
        "integrator order",
        (euler - 1.0).abs() <= ORDER_TOL && (rk4 - 4.0).abs() <= ORDER_TOL && elapsed < ORDER_BUDGET,
        &format!("euler {euler:.3}, rk4 {rk4:.3}, {elapsed:.2?}"),
    );
}

fn seir_params<S: Copy>(beta: S, sigma: S, gamma: S) -> SeirParams<S> {
    SeirParams {
        beta,
        sigma,
        gamma,
        n: SEIR_N,
    }
}

const SEIR_I0: f64 = 10.0;

fn five_step_grid() -> TimeGrid {
    TimeGrid::new(0.0, 1.0, 5).unwrap()
}

fn five_step_loss<'t>(x: &[Var<'t>]) -> autoode::Result<Var<'t>> {
    let truth = seir_params(0.6, 0.2, 0.1);
    let y0 = [SEIR_N - 5.0 - SEIR_I0, 5.0, SEIR_I0, 0.0];
    let obs = integrate(|t, y: &[f64]| seir_rhs(t, y, &truth), &y0, five_step_grid(), Method::Rk4)?;
    let p = seir_params(x[0], x[1], x[2]);
    let e0 = x[3];
    let y0 = [-e0 + (SEIR_N - SEIR_I0), e0, Var::constant(SEIR_I0), Var::constant(0.0)];
    let pred = integrate(|t, y: &[Var<'t>]| seir_rhs(t, y, &p), &y0, five_step_grid(), Method::Rk4)?;
    weighted_mse_loss(&pred, &obs, &time_weights(obs.len(), 0.5), &[])
}

#[test]
fn criterion_2_gradient_fidelity() {
    let _g = serial();
    let t = Instant::now();
    let check = grad_check(five_step_loss, &[0.5, 0.25, 0.12, 3.0], 1e-5).unwrap();
    let elapsed = t.elapsed();
    verdict(
        2,
        "gradient fidelity",
        check.max_rel_error < GRAD_TOL && elapsed < GRAD_BUDGET,
        &format!("max relative error {:.3e}, {elapsed:.2?}", check.max_rel_error),
    );
}

#[test]
fn criterion_3_conservation() {
    let _g = serial();
    let t = Instant::now();
    let p = seir_params(0.6, 0.2, 0.1);
    let seir = integrate(|t, y: &[f64]| seir_rhs(t, y, &p), &[990.0, 0.0, 10.0, 0.0], TimeGrid::new(0.0, 1.0, 60).unwrap(), Method::Rk4)
        .unwrap();
    let seir_drift = seir
        .rows()
        .map(|r| (r.iter().sum::<f64>() - SEIR_N).abs() / SEIR_N)
        .fold(0.0, f64::max);
    let mut cfg = SyntheticCovidConfig::parameter_recovery(RECOVERY_SEED);
    cfg.days = 61;
    let syn = generate_synthetic_covid(&default_adjacency(), &cfg).unwrap();
    let living = |r: &[f64], i: usize| r[i * COMPARTMENTS..i * COMPARTMENTS + sueir::D].iter().sum::<f64>();
    let first = syn.states.row(0);
    let sueir_drift = syn
        .states
        .rows()
        .flat_map(|r| (0..syn.regions()).map(move |i| (living(r, i) - living(first, i)).abs() / living(first, i)))
        .fold(0.0, f64::max);
    let elapsed = t.elapsed();
    verdict(
        3,
        "conservation",
        seir.len() == 61 && syn.states.len() == 61 && seir_drift.max(sueir_drift) <= CONSERVATION_TOL && elapsed < CONSERVATION_BUDGET,
        &format!("SEIR drift {seir_drift:.2e}, SuEIR drift {sueir_drift:.2e}, {elapsed:.2?}"),
    );
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn fifty_states() -> Vec<String> {
    STATES.iter().map(|s| s.to_string()).collect()
}

fn recovery_panel() -> (autoode::covid::SyntheticCovid, CovidPanel) {
    let syn = generate_synthetic_covid(&default_adjacency(), &SyntheticCovidConfig::parameter_recovery(RECOVERY_SEED))
        .unwrap();
    let panel = syn.to_panel(&fifty_states(), &default_population(), date(2020, 6, 1)).unwrap();
    (syn, panel)
}

fn recovery_fit(panel: &CovidPanel, config: &CovidConfig) -> autoode::covid::CovidFit {
    let window = prepare_fit_window(panel, panel.dates[RECOVERY_STEPS], RECOVERY_STEPS).unwrap();
    fit_covid(panel, &window, config).unwrap()
}

#[test]
fn criterion_4_synthetic_parameter_recovery() {
    let _g = serial();
    let t = Instant::now();
    let (syn, panel) = recovery_panel();
    let fit = recovery_fit(&panel, &CovidConfig { k: RECOVERY_STEPS, ..CovidConfig::default() });
    let elapsed = t.elapsed();
    let gamma = mae(&fit.gamma(), &syn.params.gamma);
    let sigma = mae(&fit.sigma(), &syn.params.sigma);
    let mu = mae(&fit.mu(), &syn.params.mu);
    verdict(
        4,
        "synthetic parameter recovery",
        gamma <= GAMMA_MAE && sigma <= SIGMA_MU_MAE && mu <= SIGMA_MU_MAE && elapsed < RECOVERY_BUDGET,
        &format!("MAE gamma {gamma:.4}, sigma {sigma:.4}, mu {mu:.4}, {elapsed:.1?}"),
    );
}

fn seir_truth() -> Trajectory<f64> {
    let p = seir_params(0.6, 0.2, 0.1);
    integrate(|t, y: &[f64]| seir_rhs(t, y, &p), &[990.0, 0.0, 10.0, 0.0], TimeGrid::new(0.0, 1.0, 59).unwrap(), Method::Rk4)
        .unwrap()
}

fn seir_recovery(config: &FitConfig) -> ([f64; 3], Trajectory<f64>) {
    let data = seir_truth();
    let model = Seir::fully_observed(SEIR_N);
    let r = fit(&model, &data.slice(0, 30), config).unwrap();
    let rates = ["beta", "sigma", "gamma"].map(|n| r.params.get(n).unwrap()[0]);
    (rates, forecast(&model, &r, 30, Method::Rk4).unwrap().observations)
}

#[test]
fn criterion_5_seir_point_recovery() {
    let _g = serial();
    let t = Instant::now();
    let (rates, pred) = seir_recovery(&FitConfig::default());
    let elapsed = t.elapsed();
    let target = seir_truth().slice(30, 60);
    let se: f64 = pred.rows().zip(target.rows()).flat_map(|(p, y)| p.iter().zip(y).map(|(a, b)| (a - b).powi(2))).sum();
    let rmse = (se / (target.len() * target.dim()) as f64).sqrt();
    let rates_ok = rates.iter().zip([0.6, 0.2, 0.1]).all(|(g, t)| (g - t).abs() <= SEIR_RATE_TOL);
    verdict(
        5,
        "SEIR point recovery",
        rates_ok && rmse < SEIR_RMSE_FRACTION * SEIR_N && pred.len() == 30 && elapsed < SEIR_BUDGET,
        &format!("beta {:.4}, sigma {:.4}, gamma {:.4}, forecast RMSE {rmse:.3}, {elapsed:.1?}", rates[0], rates[1], rates[2]),
    );
}

fn shift_specs() -> Vec<BenchmarkSpec> {
    BenchmarkSpec::shift_suite(1).into_iter().map(|s| s.with_samples(SHIFT_SAMPLES)).collect()
}

fn fc_report(spec: &BenchmarkSpec) -> EvalReport {
    let split = generate(spec).unwrap();
    let fc = FcBench::for_spec(spec).train(spec, &split).unwrap();
    evaluate_split(&Evaluator::Fc(fc), spec, &split).unwrap()
}

#[test]
fn criterion_6_fc_extrapolation_gap() {
    let _g = serial();
    let t = Instant::now();
    let mut passed = true;
    let mut detail = Vec::new();
    let sine = fc_report(&BenchmarkSpec::sine(1));
    passed &= sine.gap_ratio >= FC_SINE_RATIO;
    detail.push(format!("sine {:.2}", sine.gap_ratio));
    for spec in shift_specs() {
        let r = fc_report(&spec);
        passed &= r.gap_ratio >= FC_SHIFT_RATIO;
        detail.push(format!("{} {:.2}", spec.label(), r.gap_ratio));
    }
    let elapsed = t.elapsed();
    verdict(
        6,
        "FC extrapolation gap",
        passed && elapsed < FC_BUDGET,
        &format!("ratios {}, {elapsed:.0?}", detail.join(", ")),
    );
}

#[test]
fn criterion_7_autoode_shift_insensitivity() {
    let _g = serial();
    let t = Instant::now();
    let mut passed = true;
    let mut detail = Vec::new();
    for spec in shift_specs() {
        let split = generate(&spec).unwrap();
        let mut bench = AutoOdeBench::for_spec(&spec);
        bench.max_samples = Some(AUTOODE_SAMPLES);
        let r = evaluate_split(&Evaluator::AutoOde(bench), &spec, &split).unwrap();
        passed &= (AUTOODE_RATIO.0..=AUTOODE_RATIO.1).contains(&r.gap_ratio);
        detail.push(format!(
            "{} {:.2} ({:.2e}/{:.2e})",
            spec.label(),
            r.gap_ratio,
            r.extrap.rmse,
            r.interp.rmse
        ));
    }
    let elapsed = t.elapsed();
    verdict(
        7,
        "AutoODE shift insensitivity",
        passed && elapsed < AUTOODE_BUDGET,
        &format!("ratios {}, {elapsed:.0?}", detail.join(", ")),
    );
}

fn write_covid_fixture(dir: &Path) -> PathBuf {
    let start = date(2020, 4, 14);
    let days = (date(2020, 9, 12) - start).num_days() as usize + 1;
    let syn = generate_synthetic_covid(&default_adjacency(), &SyntheticCovidConfig::reported_scale(days, 2020)).unwrap();
    let panel = syn.to_panel(&fifty_states(), &default_population(), start).unwrap();
    let data = dir.join("jhu");
    write_jhu_csv(&panel, &data).unwrap();
    data
}

#[test]
fn criterion_8_covid_pipeline() {
    let _g = serial();
    let dir = TempDir::new().unwrap();
    let data = write_covid_fixture(dir.path());
    let t = Instant::now();
    autoode(&["fit-covid", "--data", data.to_str().unwrap(), "--week", COVID_WEEK, "--out", "covid"], dir.path(), 1);
    let elapsed = t.elapsed();
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("covid/metrics.json")).unwrap()).unwrap();
    let get = |f: &str| {
        metrics
            .as_array()
            .and_then(|a| a.iter().find(|r| r["feature"] == f))
            .and_then(|r| r["mae"].as_f64())
            .unwrap_or(f64::NAN)
    };
    let (i, r, d) = (get("I"), get("R"), get("D"));
    verdict(
        8,
        "COVID pipeline",
        [i, r, d].iter().all(|v| v.is_finite()) && i < COVID_MAE && r < COVID_MAE && elapsed < COVID_BUDGET,
        &format!("MAE I {i:.1}, R {r:.1}, D {d:.1} (reference I 514, R 538, D 41), {elapsed:.1?}"),
    );
}

fn same_files(a: &Path, b: &Path, files: &[&str]) -> Vec<String> {
    files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok() || !a.join(f).exists())
        .map(|f| format!("{}/{f}", a.file_name().unwrap().to_string_lossy()))
        .collect()
}

#[test]
fn criterion_9_determinism() {
    let _g = serial();
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let mut differing = Vec::new();

    let (_, panel) = recovery_panel();
    let quick = CovidConfig {
        k: RECOVERY_STEPS,
        fit: FitConfig {
            max_iters: 150,
            restarts: 2,
            ..CovidConfig::default().fit
        },
        ..CovidConfig::default()
    };
    for run in ["a", "b"] {
        let fit = recovery_fit(&panel, &quick);
        CovidFitSnapshot::new(&fit, &panel).write(&p.join(format!("recovery_{run}.json"))).unwrap();
    }
    if fs::read(p.join("recovery_a.json")).unwrap() != fs::read(p.join("recovery_b.json")).unwrap() {
        differing.push("recovery snapshot".to_string());
    }

    let short = FitConfig {
        max_iters: 300,
        ..FitConfig::default()
    };
    let (ra, fa) = seir_recovery(&short);
    let (rb, fb) = seir_recovery(&short);
    let bits = |r: [f64; 3], f: &Trajectory<f64>| -> Vec<u64> {
        r.iter().chain(f.rows().flatten()).map(|v| v.to_bits()).collect()
    };
    if bits(ra, &fa) != bits(rb, &fb) {
        differing.push("SEIR recovery".to_string());
    }

    let data = write_covid_fixture(p);
    let data = data.to_str().unwrap();
    for (run, threads) in [("a", 1), ("b", 2)] {
        let gen = format!("seir_{run}");
        autoode(&["generate", "--system", "seir", "--samples", "40", "--seed", "3", "--out", &gen], p, threads);
        autoode(&["benchmark", "--model", "fc", "--data", &gen, "--iters", "100", "--out", &format!("fc_{run}")], p, threads);
        autoode(
            &["benchmark", "--model", "autoode", "--data", &gen, "--max-samples", "3", "--iters", "200", "--out", &format!("ao_{run}")],
            p,
            threads,
        );
        autoode(
            &["fit-covid", "--data", data, "--week", COVID_WEEK, "--iters", "100", "--restarts", "2", "--out", &format!("covid_{run}")],
            p,
            threads,
        );
    }
    let archive = ["train.csv", "val.csv", "interp_test.csv", "extrap_test.csv", "params.csv", "spec.json"];
    let bench = ["report.json", "predictions.csv", "resolved_config.json"];
    let covid = ["forecast.csv", "metrics.json", "fit_snapshot.json", "resolved_config.json"];
    differing.extend(same_files(&p.join("seir_a"), &p.join("seir_b"), &archive));
    differing.extend(same_files(&p.join("fc_a"), &p.join("fc_b"), &bench));
    differing.extend(same_files(&p.join("ao_a"), &p.join("ao_b"), &bench));
    differing.extend(same_files(&p.join("covid_a"), &p.join("covid_b"), &covid));
    verdict(
        9,
        "determinism",
        differing.is_empty(),
        &if differing.is_empty() {
            "all reruns byte-identical".to_string()
        } else {
            format!("differing: {}", differing.join(", "))
        },
    );
}
