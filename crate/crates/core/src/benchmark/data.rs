use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{BenchmarkSpec, Detrend, Normalization, ShiftKind, System, LV_SPECIES, SEIR_POPULATION};
use crate::dynamics::{fhn_rhs, lv_rhs, seir_rhs, sine_sample, FhnParams, LvParams, SeirParams};
use crate::error::{Error, Result};
use crate::integrators::{integrate_sampled, Method, TimeGrid};

/// Resampling attempts per sample before generation gives up.
pub const MAX_RETRIES: usize = 1000;

/// Min-max scaling of a whole sample onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let values = rows.iter().flatten();
        MinMax {
            min: values.clone().copied().fold(f64::INFINITY, f64::min),
            max: values.copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn span(&self) -> f64 {
        let s = self.max - self.min;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let span = self.span();
        rows.iter()
            .map(|r| r.iter().map(|&x| (x - self.min) / span).collect())
            .collect()
    }

    pub fn invert(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let span = self.span();
        rows.iter().map(|r| r.iter().map(|&x| x * span + self.min).collect()).collect()
    }
}

/// One input/target pair in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    /// `k × d`
    pub input: Vec<Vec<f64>>,
    /// `q × d`
    pub target: Vec<Vec<f64>>,
    /// generating parameters, vector entries suffixed `_i`
    pub params: BTreeMap<String, f64>,
    pub scaling: Option<MinMax>,
    /// raw state before the first difference
    pub base: Option<Vec<f64>>,
}

impl Sample {
    pub fn dim(&self) -> usize {
        self.input.first().map_or(0, Vec::len)
    }

    /// Observed window in original units; one row longer than `input` when
    /// the sample is differenced.
    pub fn raw_input(&self) -> Vec<Vec<f64>> {
        let rows = match &self.scaling {
            Some(s) => s.invert(&self.input),
            None => self.input.clone(),
        };
        match &self.base {
            Some(base) => integrate_differences(base, &rows),
            None => rows,
        }
    }

    /// Maps rows in original units that follow `raw_input` into model space.
    pub fn to_model_space(&self, raw_forecast: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let rows = match &self.base {
            Some(_) => {
                let window = self.raw_input();
                let mut prev = window.last().cloned().unwrap_or_default();
                raw_forecast
                    .iter()
                    .map(|r| {
                        let d = r.iter().zip(&prev).map(|(a, b)| a - b).collect();
                        prev = r.clone();
                        d
                    })
                    .collect()
            }
            None => raw_forecast.to_vec(),
        };
        match &self.scaling {
            Some(s) => s.apply(&rows),
            None => rows,
        }
    }
}

fn integrate_differences(base: &[f64], diffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![base.to_vec()];
    for d in diffs {
        let next = out.last().expect("nonempty").iter().zip(d).map(|(a, b)| a + b).collect();
        out.push(next);
    }
    out
}

/// Train, validation and the two test partitions of a benchmark dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub interp_test: Vec<Sample>,
    pub extrap_test: Vec<Sample>,
}

pub const SPLIT_NAMES: [&str; 4] = ["train", "val", "interp_test", "extrap_test"];

impl SplitResult {
    pub fn parts(&self) -> [&Vec<Sample>; 4] {
        [&self.train, &self.val, &self.interp_test, &self.extrap_test]
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn draw_params(
    spec: &BenchmarkSpec,
    bounds: &BTreeMap<String, (f64, f64)>,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, Vec<f64>> {
    spec.system
        .parameters()
        .iter()
        .map(|&(name, width)| {
            let range = bounds[name];
            (name.to_string(), (0..width).map(|_| draw(rng, range)).collect())
        })
        .collect()
}

/// Raw `raw_length × d` trajectory, or `None` if it left the valid domain.
fn simulate(spec: &BenchmarkSpec, p: &BTreeMap<String, Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = spec.raw_length();
    let grid = TimeGrid::new(0.0, spec.h, n - 1).ok()?;
    let run = |f: &dyn Fn(f64, &[f64]) -> Vec<f64>, y0: &[f64]| {
        integrate_sampled(f, y0, grid, Method::Rk4, spec.generator_substeps)
            .ok()
            .map(|t| t.to_rows())
    };
    let rows = match spec.system {
        System::Sine => sine_sample(p["w"][0], p["b"][0], n, spec.h)
            .into_iter()
            .map(|v| vec![v])
            .collect(),
        System::Lv => {
            let d = LV_SPECIES;
            let mut off = p["a"].iter();
            let a = (0..d * d)
                .map(|ij| if ij / d == ij % d { 1.0 } else { *off.next().expect("off-diagonal") })
                .collect();
            let params = LvParams {
                r: p["r"].clone(),
                k: p["k"].clone(),
                a,
            };
            run(&|t, y| lv_rhs(t, y, &params), &p["p0"])?
        }
        System::Fhn => {
            let params = FhnParams {
                a: p["a"][0],
                b: p["b"][0],
                c: p["c"][0],
            };
            run(&|t, y| fhn_rhs(t, y, &params), &[p["x0"][0], 0.0])?
        }
        System::Seir => {
            let params = SeirParams {
                beta: p["beta"][0],
                sigma: p["sigma"][0],
                gamma: p["gamma"][0],
                n: SEIR_POPULATION,
            };
            let i0 = p["i0"][0];
            run(&|t, y| seir_rhs(t, y, &params), &[SEIR_POPULATION - i0, 0.0, i0, 0.0])?
        }
    };
    let nonnegative = matches!(spec.system, System::Lv | System::Seir);
    let valid = rows
        .iter()
        .flatten()
        .all(|v| v.is_finite() && (!nonnegative || *v >= 0.0));
    valid.then_some(rows)
}

fn flatten_params(p: &BTreeMap<String, Vec<f64>>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (name, values) in p {
        if values.len() == 1 {
            out.insert(name.clone(), values[0]);
        } else {
            for (i, v) in values.iter().enumerate() {
                out.insert(format!("{name}_{i}"), *v);
            }
        }
    }
    out
}

fn make_sample(
    spec: &BenchmarkSpec,
    bounds: &BTreeMap<String, (f64, f64)>,
    id: usize,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(id as u64);
    for _ in 0..MAX_RETRIES {
        let p = draw_params(spec, bounds, &mut rng);
        let Some(raw) = simulate(spec, &p) else {
            continue;
        };
        let (rows, base) = match spec.detrend {
            Detrend::Difference => {
                let diffs = raw
                    .windows(2)
                    .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
                    .collect::<Vec<Vec<f64>>>();
                (diffs, Some(raw[0].clone()))
            }
            Detrend::None => (raw, None),
        };
        let (rows, scaling) = match spec.normalization {
            Normalization::PerSampleMinmax => {
                let s = MinMax::fit(&rows);
                (s.apply(&rows), Some(s))
            }
            Normalization::None => (rows, None),
        };
        let target = rows[spec.k..].to_vec();
        let mut input = rows;
        input.truncate(spec.k);
        return Ok(Sample {
            id,
            input,
            target,
            params: flatten_params(&p),
            scaling,
            base,
        });
    }
    Err(Error::Diverged { step: 0 })
}

/// Generates the four splits of `spec`. Sample `i` draws from its own ChaCha8
/// stream, so the result does not depend on thread scheduling.
pub fn generate(spec: &BenchmarkSpec) -> Result<SplitResult> {
    spec.validate()?;
    let sizes = spec.split_sizes();
    let interp = spec.interp_range.clone();
    let extrap = spec.extrap_bounds();
    let generated = spec.shift_kind != ShiftKind::DataDomain;
    let mut jobs = Vec::new();
    let mut id = 0;
    for (part, &size) in sizes.iter().enumerate() {
        if part == 3 && !generated {
            break;
        }
        for _ in 0..size {
            jobs.push((part, id));
            id += 1;
        }
    }
    let samples = jobs
        .par_iter()
        .map(|&(part, id)| {
            let bounds = if part == 3 { &extrap } else { &interp };
            make_sample(spec, bounds, id).map(|s| (part, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts: [Vec<Sample>; 4] = Default::default();
    for (part, s) in samples {
        parts[part].push(s);
    }
    let [train, val, interp_test, mut extrap_test] = parts;
    if !generated {
        extrap_test = shift_data_domain(&interp_test, spec.data_offset);
    }
    Ok(SplitResult {
        train,
        val,
        interp_test,
        extrap_test,
    })
}

/// Adds `offset` to every input and target value.
pub fn shift_data_domain(set: &[Sample], offset: f64) -> Vec<Sample> {
    set.iter()
        .map(|s| {
            let shift = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                rows.iter().map(|r| r.iter().map(|v| v + offset).collect()).collect()
            };
            Sample {
                input: shift(&s.input),
                target: shift(&s.target),
                ..s.clone()
            }
        })
        .collect()
}

fn write_split(path: &Path, samples: &[Sample], d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    let mut header = vec!["sample_id".to_string(), "step".to_string()];
    header.extend((0..d).map(|j| format!("feature_{j}")));
    w.write_record(&header).map_err(csv_error(path))?;
    for s in samples {
        for (step, row) in s.input.iter().chain(&s.target).enumerate() {
            let mut rec = vec![s.id.to_string(), step.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_error(path))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse {
            file: path.to_path_buf(),
            line,
            msg: e.to_string(),
        }
    }
}

/// Writes one CSV per split, `params.csv` with generating parameters and
/// scaling columns, and `spec.json`.
pub fn write_archive(dir: &Path, spec: &BenchmarkSpec, split: &SplitResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let d = spec.system.dim();
    for (name, samples) in SPLIT_NAMES.iter().zip(split.parts()) {
        write_split(&dir.join(format!("{name}.csv")), samples, d)?;
    }
    let path = dir.join("params.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_error(&path))?;
    let names: Vec<String> = split
        .train
        .iter()
        .chain(&split.interp_test)
        .next()
        .map(|s| s.params.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["split".to_string(), "sample_id".to_string()];
    header.extend(names.iter().cloned());
    let scaled = spec.normalization == Normalization::PerSampleMinmax;
    let differenced = spec.detrend == Detrend::Difference;
    if scaled {
        header.extend(["scale_min".to_string(), "scale_max".to_string()]);
    }
    if differenced {
        header.extend((0..d).map(|j| format!("base_{j}")));
    }
    w.write_record(&header).map_err(csv_error(&path))?;
    for (name, samples) in SPLIT_NAMES.iter().zip(split.parts()) {
        for s in samples {
            let mut rec = vec![name.to_string(), s.id.to_string()];
            rec.extend(names.iter().map(|n| s.params[n].to_string()));
            if let Some(m) = &s.scaling {
                rec.extend([m.min.to_string(), m.max.to_string()]);
            }
            if let Some(b) = &s.base {
                rec.extend(b.iter().map(f64::to_string));
            }
            w.write_record(&rec).map_err(csv_error(&path))?;
        }
    }
    w.flush()?;
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    Ok(())
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: format!("not a number: {s:?}"),
    })
}

fn read_split(path: &Path, spec: &BenchmarkSpec) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let d = spec.system.dim();
    let mut samples: Vec<Sample> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error(path))?;
        let line = i + 2;
        if rec.len() != d + 2 {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, found {}", d + 2, rec.len()),
            });
        }
        let id = parse_f64(path, line, &rec[0])? as usize;
        let step = parse_f64(path, line, &rec[1])? as usize;
        let row = (0..d).map(|j| parse_f64(path, line, &rec[j + 2])).collect::<Result<Vec<_>>>()?;
        if step == 0 {
            samples.push(Sample {
                id,
                input: Vec::new(),
                target: Vec::new(),
                params: BTreeMap::new(),
                scaling: None,
                base: None,
            });
        }
        let Some(s) = samples.last_mut().filter(|s| s.id == id) else {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line,
                msg: format!("sample {id} does not start at step 0"),
            });
        };
        if s.input.len() + s.target.len() != step {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line,
                msg: format!("sample {id}: step {step} out of order"),
            });
        }
        if step < spec.k {
            s.input.push(row);
        } else {
            s.target.push(row);
        }
    }
    if let Some(s) = samples.iter().find(|s| s.input.len() != spec.k || s.target.len() != spec.q) {
        return Err(Error::Parse {
            file: path.to_path_buf(),
            line: 0,
            msg: format!("sample {} has {} steps, expected {}", s.id, s.input.len() + s.target.len(), spec.length),
        });
    }
    Ok(samples)
}

/// Reads an archive written by [`write_archive`].
pub fn read_archive(dir: &Path) -> Result<(BenchmarkSpec, SplitResult)> {
    let spec: BenchmarkSpec = serde_json::from_str(&fs::read_to_string(dir.join("spec.json"))?)?;
    spec.validate()?;
    let mut parts: [Vec<Sample>; 4] = Default::default();
    for (name, part) in SPLIT_NAMES.iter().zip(parts.iter_mut()) {
        *part = read_split(&dir.join(format!("{name}.csv")), &spec)?;
    }
    let path = dir.join("params.csv");
    let mut r = csv::Reader::from_path(&path).map_err(csv_error(&path))?;
    let header: Vec<String> = r.headers().map_err(csv_error(&path))?.iter().map(String::from).collect();
    let d = spec.system.dim();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error(&path))?;
        let line = i + 2;
        let bad = |msg: String| Error::Parse {
            file: path.clone(),
            line,
            msg,
        };
        if rec.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let part = SPLIT_NAMES
            .iter()
            .position(|n| *n == &rec[0])
            .ok_or_else(|| bad(format!("unknown split {:?}", &rec[0])))?;
        let id = parse_f64(&path, line, &rec[1])? as usize;
        let sample = parts[part]
            .iter_mut()
            .find(|s| s.id == id)
            .ok_or_else(|| bad(format!("no sample {id} in {}", SPLIT_NAMES[part])))?;
        let mut scale = Vec::new();
        let mut base = Vec::new();
        for (name, field) in header.iter().zip(rec.iter()).skip(2) {
            let v = parse_f64(&path, line, field)?;
            if name.starts_with("scale_") {
                scale.push(v);
            } else if name.starts_with("base_") {
                base.push(v);
            } else {
                sample.params.insert(name.clone(), v);
            }
        }
        if let [min, max] = scale[..] {
            sample.scaling = Some(MinMax { min, max });
        }
        if base.len() == d {
            sample.base = Some(base);
        }
    }
    let [train, val, interp_test, extrap_test] = parts;
    Ok((
        spec,
        SplitResult {
            train,
            val,
            interp_test,
            extrap_test,
        },
    ))
}
