use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{Sample, SplitResult};
use super::fc::{rmse, train_fc, FcBaseline};
use super::spec::{BenchmarkSpec, System, LV_SPECIES, SEIR_POPULATION};
use crate::dynamics::{DynamicsModel, FitzHughNagumo, LotkaVolterra, Seir, SineOscillator};
use crate::error::{Error, Result};
use crate::estimation::{fit, forecast, par_map, FitConfig};
use crate::integrators::Trajectory;

/// Per-sample AutoODE settings for a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoOdeBench {
    pub fit: FitConfig,
    /// leading test samples fitted per split; `None` fits all of them
    pub max_samples: Option<usize>,
}

impl AutoOdeBench {
    pub fn for_spec(spec: &BenchmarkSpec) -> Self {
        AutoOdeBench {
            fit: FitConfig {
                lr: 0.05,
                max_iters: 4000,
                restarts: 4,
                patience: 100,
                tol: 1e-6,
                seed: spec.seed,
                ..FitConfig::default()
            },
            max_samples: None,
        }
    }
}

/// FC architecture and training settings for a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcBench {
    pub hidden: Vec<usize>,
    /// `max_iters` and `patience` count Adam steps
    pub fit: FitConfig,
}

impl FcBench {
    pub fn for_spec(spec: &BenchmarkSpec) -> Self {
        FcBench {
            hidden: vec![128, 128],
            fit: FitConfig {
                lr: 1e-3,
                max_iters: 4000,
                patience: 2000,
                seed: spec.seed,
                ..FitConfig::default()
            },
        }
    }

    /// Trains a fresh network on `split.train`, standardized on the same set,
    /// with early stopping on `split.val`.
    pub fn train(&self, spec: &BenchmarkSpec, split: &SplitResult) -> Result<FcBaseline> {
        let init = FcBaseline::new(spec.k, spec.system.dim(), spec.q, &self.hidden, self.fit.seed)
            .standardize_on(&split.train);
        train_fc(&init, &split.train, &split.val, &self.fit)
    }
}

#[derive(Debug, Clone)]
pub enum Evaluator {
    Fc(FcBaseline),
    AutoOde(AutoOdeBench),
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Fc(_) => "fc",
            Evaluator::AutoOde(_) => "autoode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: usize,
    /// `q × d` in model space
    pub prediction: Vec<Vec<f64>>,
    /// the fit failed and `prediction` repeats the last input step
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub rmse: f64,
    pub samples: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub experiment: String,
    pub interp: SplitScore,
    pub extrap: SplitScore,
    pub gap_ratio: f64,
    #[serde(skip)]
    pub interp_predictions: Vec<SamplePrediction>,
    #[serde(skip)]
    pub extrap_predictions: Vec<SamplePrediction>,
}

fn run_model<M: DynamicsModel>(model: &M, obs: &Trajectory<f64>, q: usize, config: &FitConfig) -> Result<Vec<Vec<f64>>> {
    let fitted = fit(model, obs, config)?;
    let out = forecast(model, &fitted, q, config.method)?.observations.to_rows();
    if out.iter().flatten().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite("AutoODE forecast".into()))
    }
}

/// Fits the sample's system to its input window in original units and
/// returns the `q`-step forecast in model space.
pub fn autoode_forecast(spec: &BenchmarkSpec, sample: &Sample, config: &FitConfig) -> Result<Vec<Vec<f64>>> {
    let raw = sample.raw_input();
    let obs = Trajectory::from_rows(0.0, spec.h, &raw)?;
    let config = FitConfig {
        seed: config.seed.wrapping_add(1000 * sample.id as u64),
        ..config.clone()
    };
    let q = spec.q;
    let raw_forecast = match spec.system {
        System::Sine => run_model(&SineOscillator::default(), &obs, q, &config),
        System::Lv => run_model(&LotkaVolterra::new(LV_SPECIES, spec.substeps), &obs, q, &config),
        System::Fhn => run_model(&FitzHughNagumo::new(spec.substeps), &obs, q, &config),
        System::Seir => run_model(&Seir::fully_observed(SEIR_POPULATION).with_substeps(spec.substeps), &obs, q, &config),
    }?;
    Ok(sample.to_model_space(&raw_forecast))
}

fn persistence(sample: &Sample, q: usize) -> Vec<Vec<f64>> {
    vec![sample.input.last().cloned().unwrap_or_default(); q]
}

fn score(samples: &[Sample], preds: &[SamplePrediction]) -> SplitScore {
    let truth: Vec<&[Vec<f64>]> = samples.iter().map(|s| s.target.as_slice()).collect();
    let p: Vec<Vec<Vec<f64>>> = preds.iter().map(|p| p.prediction.clone()).collect();
    SplitScore {
        rmse: rmse(&p, &truth),
        samples: samples.len(),
        failed: preds.iter().filter(|p| p.failed).count(),
    }
}

/// Predictions of `model` for every sample of `set`.
pub fn predict_set(model: &Evaluator, spec: &BenchmarkSpec, set: &[Sample]) -> Vec<SamplePrediction> {
    match model {
        Evaluator::Fc(fc) => set
            .iter()
            .map(|s| SamplePrediction {
                id: s.id,
                prediction: fc.predict(&s.input),
                failed: false,
            })
            .collect(),
        Evaluator::AutoOde(bench) => par_map(set, |_, s| match autoode_forecast(spec, s, &bench.fit) {
            Ok(prediction) => SamplePrediction {
                id: s.id,
                prediction,
                failed: false,
            },
            Err(e) => {
                log::warn!("sample {}: {e}; using persistence", s.id);
                SamplePrediction {
                    id: s.id,
                    prediction: persistence(s, spec.q),
                    failed: true,
                }
            }
        }),
    }
}

/// Interpolation and extrapolation RMSE of `model` on `split`. Failed
/// AutoODE fits count at their persistence fallback.
pub fn evaluate_split(model: &Evaluator, spec: &BenchmarkSpec, split: &SplitResult) -> Result<EvalReport> {
    let limit = match model {
        Evaluator::AutoOde(AutoOdeBench {
            max_samples: Some(n), ..
        }) => *n,
        _ => usize::MAX,
    };
    let interp = &split.interp_test[..split.interp_test.len().min(limit)];
    let extrap = &split.extrap_test[..split.extrap_test.len().min(limit)];
    if let Evaluator::Fc(fc) = model {
        if fc.k != spec.k || fc.d != spec.system.dim() || fc.q != spec.q {
            return Err(Error::shape(
                format!("k={} d={} q={}", spec.k, spec.system.dim(), spec.q),
                format!("k={} d={} q={}", fc.k, fc.d, fc.q),
            ));
        }
    }
    let interp_predictions = predict_set(model, spec, interp);
    let extrap_predictions = predict_set(model, spec, extrap);
    let i = score(interp, &interp_predictions);
    let e = score(extrap, &extrap_predictions);
    Ok(EvalReport {
        model: model.name().to_string(),
        experiment: spec.label(),
        gap_ratio: e.rmse / i.rmse,
        interp: i,
        extrap: e,
        interp_predictions,
        extrap_predictions,
    })
}

/// Plot data: one row per sample, split and step with input, target and
/// prediction values.
pub fn write_predictions_csv(path: &Path, spec: &BenchmarkSpec, split: &SplitResult, report: &EvalReport) -> Result<()> {
    let d = spec.system.dim();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header = vec!["split".to_string(), "sample_id".into(), "step".into(), "kind".into()];
    header.extend((0..d).map(|j| format!("feature_{j}")));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    let sets = [
        ("interp_test", &split.interp_test, &report.interp_predictions),
        ("extrap_test", &split.extrap_test, &report.extrap_predictions),
    ];
    for (name, samples, preds) in sets {
        for (s, p) in samples.iter().zip(preds) {
            let rows = s
                .input
                .iter()
                .map(|r| ("input", r))
                .chain(s.target.iter().map(|r| ("target", r)))
                .enumerate()
                .map(|(step, (kind, r))| (step, kind, r))
                .chain(p.prediction.iter().enumerate().map(|(i, r)| (spec.k + i, "prediction", r)));
            for (step, kind, r) in rows {
                let mut rec = vec![name.to_string(), s.id.to_string(), step.to_string(), kind.to_string()];
                rec.extend(r.iter().map(f64::to_string));
                w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
