use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Sine,
    Lv,
    Fhn,
    Seir,
}

impl System {
    /// Observed features per step.
    pub fn dim(self) -> usize {
        match self {
            System::Sine => 1,
            System::Lv => LV_SPECIES,
            System::Fhn => 2,
            System::Seir => 4,
        }
    }

    /// Names of the sampled quantities, each drawn `width` times.
    pub fn parameters(self) -> &'static [(&'static str, usize)] {
        match self {
            System::Sine => &[("w", 1), ("b", 1)],
            System::Lv => &[
                ("r", LV_SPECIES),
                ("k", LV_SPECIES),
                ("a", LV_SPECIES * (LV_SPECIES - 1)),
                ("p0", LV_SPECIES),
            ],
            System::Fhn => &[("a", 1), ("b", 1), ("c", 1), ("x0", 1)],
            System::Seir => &[("beta", 1), ("sigma", 1), ("gamma", 1), ("i0", 1)],
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(System::Sine),
            "lv" => Ok(System::Lv),
            "fhn" => Ok(System::Fhn),
            "seir" => Ok(System::Seir),
            _ => Err(Error::BadSpec(format!("unknown system {s:?}"))),
        }
    }
}

pub const LV_SPECIES: usize = 4;
pub const SEIR_POPULATION: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    DataDomain,
    Param,
    Init,
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data" | "data_domain" => Ok(ShiftKind::DataDomain),
            "param" => Ok(ShiftKind::Param),
            "init" => Ok(ShiftKind::Init),
            _ => Err(Error::BadSpec(format!("unknown shift kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerSampleMinmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detrend {
    Difference,
    None,
}

/// Recipe for a synthetic dataset with an interpolation and an extrapolation
/// sampling domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub system: System,
    pub n_samples: usize,
    /// steps per sample after detrending
    pub length: usize,
    pub h: f64,
    pub k: usize,
    pub q: usize,
    /// RK4 steps per observation interval of the fitted model
    pub substeps: usize,
    /// RK4 steps per observation interval when generating data
    pub generator_substeps: usize,
    pub shift_kind: ShiftKind,
    /// uniform bounds for every sampled quantity
    pub interp_range: BTreeMap<String, (f64, f64)>,
    /// bounds replacing `interp_range` entries for the extrapolation test set
    pub extrap_range: BTreeMap<String, (f64, f64)>,
    /// added to every value of the extrapolation test set for a data-domain shift
    pub data_offset: f64,
    pub normalization: Normalization,
    pub detrend: Detrend,
    /// train, val, interpolation-test, extrapolation-test
    pub split: [f64; 4],
    pub seed: u64,
}

fn ranges(entries: &[(&str, (f64, f64))]) -> BTreeMap<String, (f64, f64)> {
    entries.iter().map(|&(k, r)| (k.to_string(), r)).collect()
}

impl BenchmarkSpec {
    /// Sine curves shifted up by 1 for extrapolation.
    pub fn sine(seed: u64) -> Self {
        BenchmarkSpec {
            system: System::Sine,
            n_samples: 2000,
            length: 60,
            h: 0.2,
            k: 30,
            q: 30,
            substeps: 1,
            generator_substeps: 1,
            shift_kind: ShiftKind::DataDomain,
            interp_range: ranges(&[("w", (0.5, 1.5)), ("b", (0.0, 5.0))]),
            extrap_range: BTreeMap::new(),
            data_offset: 1.0,
            normalization: Normalization::None,
            detrend: Detrend::None,
            split: [0.6, 0.2, 0.2, 0.0],
            seed,
        }
    }

    /// Four-species LV with a `k` (param) or `p0` (init) shift.
    pub fn lv(shift: ShiftKind, seed: u64) -> Result<Self> {
        let extrap = match shift {
            ShiftKind::Param => ranges(&[("k", (250.0, 300.0))]),
            ShiftKind::Init => ranges(&[("p0", (0.0, 30.0))]),
            ShiftKind::DataDomain => return Err(unsupported(System::Lv)),
        };
        Ok(BenchmarkSpec {
            system: System::Lv,
            n_samples: 6000,
            length: 20,
            h: 0.1,
            k: 10,
            q: 10,
            substeps: 10,
            generator_substeps: 100,
            shift_kind: shift,
            interp_range: ranges(&[
                ("r", (0.5, 1.5)),
                ("k", (0.0, 250.0)),
                ("a", (0.0, 0.5)),
                ("p0", (30.0, 200.0)),
            ]),
            extrap_range: extrap,
            data_offset: 0.0,
            normalization: Normalization::PerSampleMinmax,
            detrend: Detrend::None,
            split: [0.25; 4],
            seed,
        })
    }

    /// FHN with a `c` (param) or `x0` (init) shift.
    pub fn fhn(shift: ShiftKind, seed: u64) -> Result<Self> {
        let extrap = match shift {
            ShiftKind::Param => ranges(&[("c", (0.5, 1.5))]),
            ShiftKind::Init => ranges(&[("x0", (0.0, 2.0))]),
            ShiftKind::DataDomain => return Err(unsupported(System::Fhn)),
        };
        Ok(BenchmarkSpec {
            system: System::Fhn,
            n_samples: 6000,
            length: 50,
            h: 0.1,
            k: 25,
            q: 25,
            substeps: 20,
            generator_substeps: 200,
            shift_kind: shift,
            interp_range: ranges(&[
                ("a", (0.2, 0.8)),
                ("b", (0.2, 0.8)),
                ("c", (1.5, 5.0)),
                ("x0", (2.0, 10.0)),
            ]),
            extrap_range: extrap,
            data_offset: 0.0,
            normalization: Normalization::PerSampleMinmax,
            detrend: Detrend::None,
            split: [0.25; 4],
            seed,
        })
    }

    /// SEIR with a `beta` (param) or `i0` (init) shift, detrended by differencing.
    pub fn seir(shift: ShiftKind, seed: u64) -> Result<Self> {
        let extrap = match shift {
            ShiftKind::Param => ranges(&[("beta", (0.3, 0.45))]),
            ShiftKind::Init => ranges(&[("i0", (10.0, 30.0))]),
            ShiftKind::DataDomain => return Err(unsupported(System::Seir)),
        };
        Ok(BenchmarkSpec {
            system: System::Seir,
            n_samples: 6000,
            length: 60,
            h: 1.0,
            k: 20,
            q: 40,
            substeps: 4,
            generator_substeps: 20,
            shift_kind: shift,
            interp_range: ranges(&[
                ("beta", (0.45, 0.9)),
                ("sigma", (0.1, 0.5)),
                ("gamma", (0.05, 0.3)),
                ("i0", (30.0, 100.0)),
            ]),
            extrap_range: extrap,
            data_offset: 0.0,
            normalization: Normalization::None,
            detrend: Detrend::Difference,
            split: [0.25; 4],
            seed,
        })
    }

    /// Preset for `system` and `shift`.
    pub fn preset(system: System, shift: ShiftKind, seed: u64) -> Result<Self> {
        match system {
            System::Sine if shift == ShiftKind::DataDomain => Ok(Self::sine(seed)),
            System::Sine => Err(Error::BadSpec("sine supports only a data-domain shift".into())),
            System::Lv => Self::lv(shift, seed),
            System::Fhn => Self::fhn(shift, seed),
            System::Seir => Self::seir(shift, seed),
        }
    }

    /// The six parameter and initial-value shift experiments.
    pub fn shift_suite(seed: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for system in [System::Lv, System::Fhn, System::Seir] {
            for shift in [ShiftKind::Param, ShiftKind::Init] {
                out.push(Self::preset(system, shift, seed).expect("preset"));
            }
        }
        out
    }

    /// Same recipe with `n` samples.
    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    /// Short label such as `lv_param`.
    pub fn label(&self) -> String {
        let system = serde_json::to_value(self.system).expect("enum");
        let shift = serde_json::to_value(self.shift_kind).expect("enum");
        format!("{}_{}", system.as_str().unwrap_or(""), shift.as_str().unwrap_or(""))
    }

    /// Sizes of the four splits; the last split absorbs rounding.
    pub fn split_sizes(&self) -> [usize; 4] {
        let total: f64 = self.split.iter().sum();
        let mut sizes = [0; 4];
        let mut used = 0;
        for i in 0..3 {
            sizes[i] = ((self.split[i] / total) * self.n_samples as f64).round() as usize;
            used += sizes[i];
        }
        sizes[3] = self.n_samples.saturating_sub(used);
        if self.shift_kind == ShiftKind::DataDomain {
            sizes[2] += sizes[3];
            sizes[3] = sizes[2];
        }
        sizes
    }

    /// Raw trajectory points per sample before detrending.
    pub fn raw_length(&self) -> usize {
        match self.detrend {
            Detrend::Difference => self.length + 1,
            Detrend::None => self.length,
        }
    }

    /// Bounds used for the extrapolation test set.
    pub fn extrap_bounds(&self) -> BTreeMap<String, (f64, f64)> {
        let mut out = self.interp_range.clone();
        out.extend(self.extrap_range.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        if self.k == 0 || self.q == 0 || self.k + self.q != self.length {
            return bad(format!(
                "k + q must equal the length: {} + {} vs {}",
                self.k, self.q, self.length
            ));
        }
        if !(self.h > 0.0) || self.substeps == 0 || self.generator_substeps == 0 || self.n_samples == 0 {
            return bad("step, substeps and sample count must be positive".into());
        }
        if self.split.iter().any(|&f| !(f >= 0.0)) || !(self.split.iter().sum::<f64>() > 0.0) {
            return bad(format!("invalid split fractions {:?}", self.split));
        }
        for (name, _) in self.system.parameters() {
            if !self.interp_range.contains_key(*name) {
                return bad(format!("missing range for {name}"));
            }
        }
        let known = |k: &String| self.system.parameters().iter().any(|(n, _)| n == k);
        for (name, &(lo, hi)) in self.interp_range.iter().chain(&self.extrap_range) {
            if !known(name) {
                return bad(format!("unknown parameter {name} for {:?}", self.system));
            }
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("range for {name} is not well ordered: ({lo}, {hi})"));
            }
        }
        match self.shift_kind {
            ShiftKind::DataDomain => {
                if !self.extrap_range.is_empty() {
                    return bad("a data-domain shift takes no extrapolation ranges".into());
                }
            }
            ShiftKind::Param | ShiftKind::Init => {
                if self.extrap_range.is_empty() {
                    return bad("a parameter shift needs at least one extrapolation range".into());
                }
                for (name, &(lo, hi)) in &self.extrap_range {
                    let (ilo, ihi) = self.interp_range[name];
                    if lo < ihi && ilo < hi {
                        return bad(format!(
                            "interpolation ({ilo}, {ihi}) and extrapolation ({lo}, {hi}) ranges of {name} overlap"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn unsupported(system: System) -> Error {
    Error::BadSpec(format!("{system:?} supports only parameter and initial-value shifts"))
}
