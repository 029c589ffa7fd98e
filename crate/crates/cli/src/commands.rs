use std::fs;
use std::path::{Path, PathBuf};

use autoode::benchmark::{
    evaluate_split, generate as generate_split, read_archive, shift_data_domain, write_archive,
    write_predictions_csv, AutoOdeBench, BenchmarkSpec, Evaluator, FcBench, ShiftKind, System,
};
use autoode::covid::{
    evaluate_mae, fit_covid as fit_panel, forecast_covid, load_jhu_csv, prepare_fit_window,
    write_forecast_csv, write_metrics_json, CovidConfig, CovidFitSnapshot, JhuPaths,
};
use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{resolve, write_resolved, Overrides};
use crate::gradcheck::{run_suite, SuiteReport, SUITES};
use crate::{BenchmarkArgs, CliError, FitCovidArgs, GenerateArgs, GradcheckArgs, ModelKind};

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn generate(args: &GenerateArgs, file: Option<&Path>) -> Result<(), CliError> {
    let system: System = args.system.parse().map_err(usage)?;
    let shift: ShiftKind = args.shift.parse().map_err(usage)?;
    let shift = if system == System::Sine { ShiftKind::DataDomain } else { shift };
    let defaults = BenchmarkSpec::preset(system, shift, args.seed)?;
    let mut flags = Overrides::default();
    flags.set("n_samples", args.samples);
    let spec: BenchmarkSpec = resolve(&defaults, file, flags)?;
    spec.validate()?;
    info!("generating {} with {} samples", spec.label(), spec.n_samples);
    let split = generate_split(&spec)?;
    write_archive(&args.out, &spec, &split)?;
    write_resolved(&args.out, &spec)?;
    let [a, b, c, d] = split.parts().map(Vec::len);
    println!("{}: train {a}, val {b}, interp_test {c}, extrap_test {d} -> {}", spec.label(), args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct InputPaths {
    confirmed: Option<PathBuf>,
    recovered: Option<PathBuf>,
    deaths: Option<PathBuf>,
    population: Option<PathBuf>,
    adjacency: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct FitCovidRun {
    week: Option<String>,
    inputs: InputPaths,
    covid: CovidConfig,
}

pub fn fit_covid(args: &FitCovidArgs, file: Option<&Path>) -> Result<(), CliError> {
    let mut defaults = FitCovidRun::default();
    if let Some(dir) = &args.data {
        defaults.inputs = InputPaths {
            confirmed: Some(dir.join("confirmed.csv")),
            recovered: Some(dir.join("recovered.csv")),
            deaths: Some(dir.join("deaths.csv")),
            population: Some(dir.join("population.csv")),
            adjacency: Some(dir.join("adjacency.csv")),
        };
    }
    let mut flags = Overrides::default();
    flags
        .set("week", args.week.clone())
        .set("inputs.confirmed", args.confirmed.clone())
        .set("inputs.recovered", args.recovered.clone())
        .set("inputs.deaths", args.deaths.clone())
        .set("inputs.population", args.population.clone())
        .set("inputs.adjacency", args.adjacency.clone())
        .set("covid.k", args.k)
        .set("covid.rank", args.rank)
        .set("covid.breakpoints", args.breakpoints)
        .set("covid.horizon", args.horizon)
        .set("covid.alpha1", args.alpha1)
        .set("covid.alpha2", args.alpha2)
        .set("covid.quantiles", args.quantiles.clone())
        .set("covid.fit.restarts", args.restarts)
        .set("covid.fit.max_iters", args.iters)
        .set("covid.fit.lr", args.lr)
        .set("covid.fit.patience", args.patience)
        .set("covid.fit.seed", args.seed);
    let run: FitCovidRun = resolve(&defaults, file, flags)?;

    let week_text = run.week.as_deref().ok_or_else(|| usage("--week is required"))?;
    let week: NaiveDate = week_text.parse().map_err(|e| usage(format!("--week {week_text}: {e}")))?;
    let missing = |name: &str| usage(format!("no {name} file; pass --data or --{name}"));
    let p = &run.inputs;
    let paths = JhuPaths {
        confirmed: p.confirmed.clone().ok_or_else(|| missing("confirmed"))?,
        recovered: p.recovered.clone().ok_or_else(|| missing("recovered"))?,
        deaths: p.deaths.clone().ok_or_else(|| missing("deaths"))?,
        population: p.population.clone().ok_or_else(|| missing("population"))?,
        adjacency: p.adjacency.clone().ok_or_else(|| missing("adjacency"))?,
    };

    let panel = load_jhu_csv(&paths)?;
    let window = prepare_fit_window(&panel, week, run.covid.k)?;
    info!(
        "fitting {} states on {} to {}",
        panel.regions(),
        window.start,
        window.end()
    );
    let fit = fit_panel(&panel, &window, &run.covid)?;
    let forecast = forecast_covid(&panel, &fit, run.covid.horizon, &run.covid.quantiles)?;

    fs::create_dir_all(&args.out)?;
    write_forecast_csv(&forecast, &args.out.join("forecast.csv"))?;
    let records = if forecast.dates.iter().all(|d| panel.date_index(*d).is_some()) {
        evaluate_mae(&forecast, &panel)?
    } else {
        warn!("data end before the forecast week ends; metrics.json left empty");
        Vec::new()
    };
    write_metrics_json(&records, &args.out.join("metrics.json"))?;
    CovidFitSnapshot::new(&fit, &panel).write(&args.out.join("fit_snapshot.json"))?;
    write_resolved(&args.out, &run)?;
    for r in &records {
        println!("{} {} MAE {:.1}", r.week, r.feature, r.mae);
    }
    println!("forecast written to {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkRun {
    model: ModelKind,
    shift_offset: Option<f64>,
    fc: FcBench,
    autoode: AutoOdeBench,
}

pub fn benchmark(args: &BenchmarkArgs, file: Option<&Path>) -> Result<(), CliError> {
    let (spec, mut split) = read_archive(&args.data)?;
    let defaults = BenchmarkRun {
        model: args.model,
        shift_offset: None,
        fc: FcBench::for_spec(&spec),
        autoode: AutoOdeBench::for_spec(&spec),
    };
    let mut flags = Overrides::default();
    flags.set("model", Some(args.model)).set("shift_offset", args.shift_offset);
    match args.model {
        ModelKind::Fc => {
            flags
                .set("fc.hidden", args.hidden.clone())
                .set("fc.fit.max_iters", args.iters)
                .set("fc.fit.lr", args.lr)
                .set("fc.fit.patience", args.patience)
                .set("fc.fit.seed", args.seed);
        }
        ModelKind::Autoode => {
            flags
                .set("autoode.fit.max_iters", args.iters)
                .set("autoode.fit.lr", args.lr)
                .set("autoode.fit.patience", args.patience)
                .set("autoode.fit.seed", args.seed)
                .set("autoode.fit.restarts", args.restarts)
                .set("autoode.max_samples", args.max_samples);
        }
    }
    let run: BenchmarkRun = resolve(&defaults, file, flags)?;

    if let Some(offset) = run.shift_offset {
        if spec.shift_kind != ShiftKind::DataDomain {
            return Err(usage(format!("--shift-offset needs a data-domain archive, got {}", spec.label())));
        }
        split.extrap_test = shift_data_domain(&split.interp_test, offset);
    }
    let model = match run.model {
        ModelKind::Fc => {
            info!("training FC {:?} on {} samples", run.fc.hidden, split.train.len());
            Evaluator::Fc(run.fc.train(&spec, &split)?)
        }
        ModelKind::Autoode => Evaluator::AutoOde(run.autoode.clone()),
    };
    let report = evaluate_split(&model, &spec, &split)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_predictions_csv(&args.out.join("predictions.csv"), &spec, &split, &report)?;
    write_resolved(&args.out, &run)?;
    println!(
        "{} on {}: interp RMSE {:.4} ({} failed), extrap RMSE {:.4} ({} failed), ratio {:.3}",
        report.model,
        report.experiment,
        report.interp.rmse,
        report.interp.failed,
        report.extrap.rmse,
        report.extrap.failed,
        report.gap_ratio
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct GradcheckRun {
    eps: f64,
    suites: Vec<String>,
    tolerance: Option<f64>,
}

impl Default for GradcheckRun {
    fn default() -> Self {
        GradcheckRun {
            eps: 1e-5,
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            tolerance: None,
        }
    }
}

pub fn gradcheck(args: &GradcheckArgs, file: Option<&Path>) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags
        .set("eps", args.eps)
        .set("tolerance", args.tolerance)
        .set("suites", (!args.suite.is_empty()).then(|| args.suite.clone()));
    let run: GradcheckRun = resolve(&GradcheckRun::default(), file, flags)?;
    let tolerance = run.tolerance.unwrap_or((100.0 * run.eps * run.eps).max(1e-5));
    let mut reports = Vec::new();
    for name in &run.suites {
        let check = run_suite(name, run.eps).ok_or_else(|| {
            usage(format!("unknown suite {name:?}; expected one of {}", SUITES.join(", ")))
        })??;
        let passed = check.max_rel_error < tolerance;
        println!(
            "{name:<10} {:>3} parameters  max relative error {:.3e}  {}",
            check.autodiff.len(),
            check.max_rel_error,
            if passed { "ok" } else { "FAIL" }
        );
        reports.push(SuiteReport {
            suite: name.clone(),
            parameters: check.autodiff.len(),
            max_rel_error: check.max_rel_error,
            passed,
        });
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("gradcheck.json"), &reports)?;
        write_resolved(dir, &run)?;
    }
    match reports.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(CliError::Compute(format!("{n} suite(s) above tolerance {tolerance:.1e}"))),
    }
}
