//! Right-hand sides of the supported dynamical systems and their parameter
//! descriptors.

mod fhn;
mod lv;
mod seir;
mod sine;
pub mod sueir;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

pub use fhn::{fhn_rhs, FhnParams, FitzHughNagumo};
pub use lv::{lv_rhs, LotkaVolterra, LvParams};
pub use seir::{seir_rhs, Seir, SeirParams};
pub use sine::{sine_sample, SineOscillator, SineParams};
pub use sueir::{
    low_rank_transmission, piecewise_beta, sueir_covid_rhs, BetaPieces, CovidParams,
    CovidRates, SuEirCovid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Map from an unconstrained raw value to the parameter's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Free,
    /// softplus, onto (0, ∞)
    Positive,
    /// sigmoid, onto (0, 1)
    UnitInterval,
}

impl Transform {
    pub fn apply<S: Scalar>(self, raw: S) -> S {
        match self {
            Transform::Free => raw,
            Transform::Positive => raw.softplus(),
            Transform::UnitInterval => raw.sigmoid(),
        }
    }

    /// Raw value mapping to `value`; values outside the domain are an error.
    pub fn inverse(self, value: f64) -> Result<f64> {
        match self {
            Transform::Free => Ok(value),
            Transform::Positive if value > 0.0 => Ok(value + (-(-value).exp_m1()).ln()),
            Transform::UnitInterval if value > 0.0 && value < 1.0 => {
                Ok((value / (1.0 - value)).ln())
            }
            _ => Err(Error::BadSpec(format!("{value} is outside the {self:?} domain"))),
        }
    }

    pub fn contains(self, value: f64) -> bool {
        match self {
            Transform::Free => value.is_finite(),
            Transform::Positive => value > 0.0 && value.is_finite(),
            Transform::UnitInterval => value > 0.0 && value < 1.0,
        }
    }
}

/// Descriptor of one named block of unknowns.
///
/// The domain value is `scale · transform(raw)`; raw values are initialized
/// uniformly from `init_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub transform: Transform,
    pub init_range: (f64, f64),
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &str, shape: Shape, transform: Transform, init_range: (f64, f64)) -> Self {
        ParamSpec {
            name: name.to_string(),
            shape,
            transform,
            init_range,
            scale: 1.0,
        }
    }

    pub fn scalar(name: &str, transform: Transform, init_range: (f64, f64)) -> Self {
        Self::new(name, Shape::Scalar, transform, init_range)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn to_value<S: Scalar>(&self, raw: S) -> S {
        let v = self.transform.apply(raw);
        if self.scale == 1.0 {
            v
        } else {
            v * self.scale
        }
    }

    pub fn to_raw(&self, value: f64) -> Result<f64> {
        self.transform.inverse(value / self.scale)
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.init_range;
        if !(lo < hi) {
            return Err(Error::BadSpec(format!(
                "{}: init range ({lo}, {hi}) is not ordered",
                self.name
            )));
        }
        if !(self.scale > 0.0) {
            return Err(Error::BadSpec(format!("{}: scale must be positive", self.name)));
        }
        Ok(())
    }
}

/// Ordered parameter blocks flattened into one raw vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    offsets: Vec<usize>,
}

impl ParamLayout {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(specs.len() + 1);
        let mut total = 0;
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::BadSpec(format!("duplicate parameter {}", s.name)));
            }
            offsets.push(total);
            total += s.shape.len();
        }
        offsets.push(total);
        Ok(ParamLayout { specs, offsets })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Total number of raw scalars.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn sample_raw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut raw = Vec::with_capacity(self.len());
        for s in &self.specs {
            let (lo, hi) = s.init_range;
            raw.extend((0..s.shape.len()).map(|_| rng.gen_range(lo..hi)));
        }
        raw
    }

    pub fn transform<S: Scalar>(&self, raw: &[S]) -> Params<S> {
        assert_eq!(raw.len(), self.len(), "raw vector does not match layout");
        let mut values = Vec::with_capacity(raw.len());
        for (b, s) in self.specs.iter().enumerate() {
            values.extend(raw[self.range(b)].iter().map(|&r| s.to_value(r)));
        }
        Params {
            values,
            offsets: self.offsets.clone(),
        }
    }

    /// Raw vector for the given domain values, block by block in layout order.
    pub fn raw_from_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::shape(self.len(), values.len()));
        }
        let mut raw = Vec::with_capacity(values.len());
        for (b, s) in self.specs.iter().enumerate() {
            for &v in &values[self.range(b)] {
                raw.push(s.to_raw(v)?);
            }
        }
        Ok(raw)
    }
}

/// Domain values of all blocks of a layout.
#[derive(Debug, Clone)]
pub struct Params<S> {
    values: Vec<S>,
    offsets: Vec<usize>,
}

impl<S: Scalar> Params<S> {
    pub fn block(&self, b: usize) -> &[S] {
        &self.values[self.offsets[b]..self.offsets[b + 1]]
    }

    pub fn scalar(&self, b: usize) -> S {
        self.block(b)[0]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }
}

/// Named parameter values, raw and transformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layout: ParamLayout,
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
}

impl ParamSet {
    pub fn from_raw(layout: &ParamLayout, raw: Vec<f64>) -> Self {
        let values = layout.transform(&raw).values;
        ParamSet {
            layout: layout.clone(),
            raw,
            values,
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        let b = self.layout.index_of(name)?;
        Some(&self.values[self.layout.range(b)])
    }

    pub fn params(&self) -> Params<f64> {
        self.layout.transform(&self.raw)
    }

    /// Every value lies in its block's declared domain.
    pub fn in_domain(&self) -> bool {
        self.layout.specs().iter().enumerate().all(|(b, s)| {
            self.values[self.layout.range(b)]
                .iter()
                .all(|v| s.transform.contains(v / s.scale))
        })
    }
}

/// A system `dx/dt = f(t, x; θ)` whose coefficients are estimated from
/// observations of part of the state.
///
/// `Coeffs` is the typed view of the parameters, built once per evaluation
/// pass so that derived quantities (e.g. a transmission matrix) are not
/// recomputed at every right-hand-side call.
pub trait DynamicsModel: Sync {
    type Coeffs<S: Scalar>;

    fn name(&self) -> &str;
    fn layout(&self) -> &ParamLayout;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn coefficients<S: Scalar>(&self, p: &Params<S>) -> Self::Coeffs<S>;

    /// Full initial state from the first observed row and the estimated
    /// unobserved initial values.
    fn initial_state<S: Scalar>(&self, c: &Self::Coeffs<S>, y0: &[f64]) -> Vec<S>;

    fn rhs<S: Scalar>(&self, t: f64, state: &[S], c: &Self::Coeffs<S>) -> Vec<S>;

    fn observe<S: Scalar>(&self, state: &[S], c: &Self::Coeffs<S>) -> Vec<S>;

    /// Replaces the observed components of a fitted state with an actual
    /// observation, keeping the estimated unobserved ones.
    fn anchor(&self, state: &[f64], observed: &[f64], c: &Self::Coeffs<f64>) -> Vec<f64>;

    /// Internal integration steps per observation interval.
    fn substeps(&self) -> usize {
        1
    }
}
