//! Multi-region SuEIR model with unreported cases and deaths.
//!
//! Each region `i` carries six compartments `(S, E, U, I, R, D)` stored
//! contiguously, and regions interact through the masked low-rank
//! transmission matrix `A = (BᵀD) ⊙ M`:
//!
//! ```text
//! dSᵢ = −βᵢ(t) Σⱼ Aᵢⱼ (Iⱼ + Eⱼ) Sᵢ / Nᵢ
//! dEᵢ =  βᵢ(t) Σⱼ Aᵢⱼ (Iⱼ + Eⱼ) Sᵢ / Nᵢ − σᵢ Eᵢ
//! dUᵢ = (1 − μᵢ) σᵢ Eᵢ
//! dIᵢ = μᵢ σᵢ Eᵢ − γᵢ Iᵢ
//! dRᵢ = γᵢ Iᵢ
//! dDᵢ = rᵢ(t) dRᵢ,            Nᵢ = Sᵢ + Eᵢ + Uᵢ + Iᵢ + Rᵢ
//! ```
//!
//! The rate `βᵢ(t)` is continuous piecewise linear and clamped at zero; the
//! death proportion `rᵢ(t) = aᵢ t + bᵢ` is clamped to `[0, 1]`.

use super::{DynamicsModel, ParamLayout, ParamSpec, Params, Shape, Transform};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Compartments per region.
pub const COMPARTMENTS: usize = 6;
pub const S: usize = 0;
pub const E: usize = 1;
pub const U: usize = 2;
pub const I: usize = 3;
pub const R: usize = 4;
pub const D: usize = 5;

/// Continuous piecewise-linear rate: `intercept` at `t = 0`, slope
/// `slopes[j]` on the `j`-th segment between consecutive breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPieces<T> {
    pub breakpoints: Vec<T>,
    pub slopes: Vec<T>,
    pub intercept: T,
}

impl<T: Scalar> BetaPieces<T> {
    pub fn constant(value: T) -> Self {
        BetaPieces {
            breakpoints: Vec::new(),
            slopes: vec![T::constant(0.0)],
            intercept: value,
        }
    }

    /// Unclamped line value; breakpoints are assumed increasing.
    fn line(&self, t: f64) -> T {
        let t = T::constant(t);
        let mut value = self.intercept;
        let mut prev: Option<T> = None;
        for (j, &slope) in self.slopes.iter().enumerate() {
            let end = match self.breakpoints.get(j) {
                Some(&b) => t.min(b),
                None => t,
            };
            let run = match prev {
                None => end,
                Some(p) => (end - p).relu(),
            };
            value = value + slope * run;
            prev = self.breakpoints.get(j).copied();
        }
        value
    }

    pub fn at(&self, t: f64) -> T {
        self.line(t).relu()
    }
}

/// Evaluates a piecewise-linear transmission rate, clamped below at zero.
pub fn piecewise_beta(t: f64, spec: &BetaPieces<f64>) -> Result<f64> {
    if spec.slopes.len() != spec.breakpoints.len() + 1 {
        return Err(Error::BadSpec(format!(
            "{} breakpoints need {} slopes, got {}",
            spec.breakpoints.len(),
            spec.breakpoints.len() + 1,
            spec.slopes.len()
        )));
    }
    if spec.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::BadSpec("breakpoints must be strictly increasing".into()));
    }
    Ok(spec.at(t))
}

/// `A = (BᵀD) ⊙ M` for factors `B, D` of shape `rank × n`.
pub fn low_rank_transmission<T: Scalar>(
    b: &[Vec<T>],
    d: &[Vec<T>],
    mask: &[Vec<f64>],
) -> Result<Vec<Vec<T>>> {
    let rank = b.len();
    if d.len() != rank || rank == 0 {
        return Err(Error::shape(format!("{rank} factor rows"), d.len()));
    }
    let n = b[0].len();
    if let Some(bad) = b.iter().chain(d).find(|row| row.len() != n) {
        return Err(Error::shape(format!("factor rows of {n}"), bad.len()));
    }
    if mask.len() != n || mask.iter().any(|row| row.len() != n) {
        return Err(Error::shape(format!("{n}×{n} mask"), mask.len()));
    }
    let column = |f: &[Vec<T>], j: usize| -> Vec<T> { f.iter().map(|row| row[j]).collect() };
    let b_cols: Vec<Vec<T>> = (0..n).map(|i| column(b, i)).collect();
    let d_cols: Vec<Vec<T>> = (0..n).map(|j| column(d, j)).collect();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let m = mask[i][j];
                    if m == 0.0 {
                        T::constant(0.0)
                    } else {
                        let c = T::dot(&b_cols[i], &d_cols[j]);
                        if m == 1.0 {
                            c
                        } else {
                            c * m
                        }
                    }
                })
                .collect()
        })
        .collect())
}

/// Unpacked parameters of the multi-region model.
#[derive(Debug, Clone)]
pub struct CovidParams<T> {
    /// `rank × n` low-rank factors of the transmission matrix
    pub b: Vec<Vec<T>>,
    pub d: Vec<Vec<T>>,
    pub beta: Vec<BetaPieces<T>>,
    pub sigma: Vec<T>,
    pub mu: Vec<T>,
    pub gamma: Vec<T>,
    /// death proportion `r(t) = death_a·t + death_b`
    pub death_a: Vec<T>,
    pub death_b: Vec<T>,
    /// initial `ln(E₀/S₀)` and `ln(U₀/S₀)` per region
    pub e0_logit: Vec<T>,
    pub u0_logit: Vec<T>,
}

/// Coefficients ready for right-hand-side evaluation: the transmission
/// matrix is precomputed as sparse rows.
#[derive(Debug, Clone)]
pub struct CovidRates<T> {
    pub transmission: Vec<Vec<(usize, T)>>,
    pub beta: Vec<BetaPieces<T>>,
    pub sigma: Vec<T>,
    pub mu: Vec<T>,
    pub gamma: Vec<T>,
    pub death_a: Vec<T>,
    pub death_b: Vec<T>,
    pub e0_logit: Vec<T>,
    pub u0_logit: Vec<T>,
}

impl<T: Scalar> CovidRates<T> {
    pub fn new(p: &CovidParams<T>, mask: &[Vec<f64>]) -> Result<Self> {
        let dense = low_rank_transmission(&p.b, &p.d, mask)?;
        let transmission = dense
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .filter(|&(j, _)| mask[i][j] != 0.0)
                    .collect()
            })
            .collect();
        Ok(CovidRates {
            transmission,
            beta: p.beta.clone(),
            sigma: p.sigma.clone(),
            mu: p.mu.clone(),
            gamma: p.gamma.clone(),
            death_a: p.death_a.clone(),
            death_b: p.death_b.clone(),
            e0_logit: p.e0_logit.clone(),
            u0_logit: p.u0_logit.clone(),
        })
    }

    pub fn regions(&self) -> usize {
        self.transmission.len()
    }

    pub fn death_rate(&self, i: usize, t: f64) -> T {
        (self.death_a[i] * t + self.death_b[i]).clamp(0.0, 1.0)
    }

    /// Dense transmission matrix values.
    pub fn dense_transmission(&self) -> Vec<Vec<f64>> {
        let n = self.regions();
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in self.transmission.iter().enumerate() {
            for (j, v) in row {
                a[i][*j] = v.value();
            }
        }
        a
    }
}

/// Derivatives of all `n × 6` compartments, region-major.
pub fn sueir_covid_rhs<T: Scalar>(t: f64, states: &[T], rates: &CovidRates<T>) -> Vec<T> {
    let n = rates.regions();
    let infectious: Vec<T> = (0..n)
        .map(|j| states[j * COMPARTMENTS + E] + states[j * COMPARTMENTS + I])
        .collect();
    let mut out = Vec::with_capacity(n * COMPARTMENTS);
    for i in 0..n {
        let x = &states[i * COMPARTMENTS..(i + 1) * COMPARTMENTS];
        let total = T::sum(&x[..D]);
        let (coef, src): (Vec<T>, Vec<T>) = rates.transmission[i]
            .iter()
            .map(|&(j, a)| (a, infectious[j]))
            .unzip();
        let pressure = T::dot(&coef, &src);
        let force = rates.beta[i].at(t) * pressure * x[S] / total;
        let incubated = rates.sigma[i] * x[E];
        let reported = rates.mu[i] * incubated;
        let removed = rates.gamma[i] * x[I];
        out.push(-force);
        out.push(force - incubated);
        out.push(incubated - reported);
        out.push(reported - removed);
        out.push(removed);
        out.push(rates.death_rate(i, t) * removed);
    }
    out
}

/// Structure of the multi-region model.
#[derive(Debug, Clone, PartialEq)]
pub struct SuEirConfig {
    pub rank: usize,
    pub breakpoints: usize,
    /// days in the fitting window; used to place the initial breakpoints
    pub window: usize,
}

impl Default for SuEirConfig {
    fn default() -> Self {
        SuEirConfig {
            rank: 5,
            breakpoints: 1,
            window: 14,
        }
    }
}

/// The multi-region SuEIR model observing `(I, R, D)` in each region, as
/// fractions of the region's population.
#[derive(Debug, Clone)]
pub struct SuEirCovid {
    n: usize,
    mask: Vec<Vec<f64>>,
    config: SuEirConfig,
    layout: ParamLayout,
}

const BLOCKS: [&str; 12] = [
    "b",
    "d",
    "beta_intercept",
    "beta_slopes",
    "beta_gaps",
    "sigma",
    "mu",
    "gamma",
    "death_a",
    "death_b",
    "e0_logit",
    "u0_logit",
];

impl SuEirCovid {
    pub fn new(mask: Vec<Vec<f64>>, config: SuEirConfig) -> Result<Self> {
        let n = mask.len();
        if n == 0 || mask.iter().any(|r| r.len() != n) {
            return Err(Error::shape("square non-empty mask", n));
        }
        if config.rank == 0 || config.breakpoints > 3 {
            return Err(Error::BadSpec(format!(
                "rank must be ≥ 1 and breakpoints in 0..=3, got {} / {}",
                config.rank, config.breakpoints
            )));
        }
        let (k, nb) = (config.rank, config.breakpoints);
        let gap_scale = config.window.max(2) as f64 / (nb + 1) as f64;
        let specs = vec![
            ParamSpec::new(BLOCKS[0], Shape::Matrix(k, n), Transform::Positive, (-2.5, -1.0)),
            ParamSpec::new(BLOCKS[1], Shape::Matrix(k, n), Transform::Positive, (-2.5, -1.0)),
            ParamSpec::new(BLOCKS[2], Shape::Vector(n), Transform::Free, (0.5, 5.0)).with_scale(0.1),
            ParamSpec::new(BLOCKS[3], Shape::Matrix(n, nb + 1), Transform::Free, (-1.0, 1.0))
                .with_scale(0.01),
            ParamSpec::new(
                BLOCKS[4],
                Shape::Matrix(n, nb.max(1)),
                Transform::Positive,
                (0.0, 1.0),
            )
            .with_scale(gap_scale),
            ParamSpec::new(BLOCKS[5], Shape::Vector(n), Transform::UnitInterval, (-2.0, 2.0)),
            ParamSpec::new(BLOCKS[6], Shape::Vector(n), Transform::UnitInterval, (-2.0, 2.0)),
            ParamSpec::new(BLOCKS[7], Shape::Vector(n), Transform::UnitInterval, (-2.0, 2.0)),
            ParamSpec::new(BLOCKS[8], Shape::Vector(n), Transform::Free, (-1.0, 1.0))
                .with_scale(0.001),
            ParamSpec::new(BLOCKS[9], Shape::Vector(n), Transform::Free, (0.0, 1.0))
                .with_scale(0.1),
            ParamSpec::new(BLOCKS[10], Shape::Vector(n), Transform::Free, (-5.0, -1.0)),
            ParamSpec::new(BLOCKS[11], Shape::Vector(n), Transform::Free, (-5.0, -1.0)),
        ];
        Ok(SuEirCovid {
            n,
            mask,
            config,
            layout: ParamLayout::new(specs)?,
        })
    }

    pub fn regions(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &[Vec<f64>] {
        &self.mask
    }

    pub fn config(&self) -> &SuEirConfig {
        &self.config
    }

    pub fn block(name: &str) -> usize {
        BLOCKS.iter().position(|b| *b == name).expect("known block")
    }

    /// Unpacks domain values into typed parameters.
    pub fn unpack<T: Scalar>(&self, p: &Params<T>) -> CovidParams<T> {
        let (n, k, nb) = (self.n, self.config.rank, self.config.breakpoints);
        let rows = |blk: &[T], r: usize, c: usize| -> Vec<Vec<T>> {
            (0..r).map(|i| blk[i * c..(i + 1) * c].to_vec()).collect()
        };
        let slopes = p.block(3);
        let gaps = p.block(4);
        let beta = (0..n)
            .map(|i| {
                let mut breakpoints = Vec::with_capacity(nb);
                for j in 0..nb {
                    let g = gaps[i * nb.max(1) + j];
                    let prev: Option<T> = breakpoints.last().copied();
                    breakpoints.push(match prev {
                        Some(prev) => prev + g,
                        None => g,
                    });
                }
                BetaPieces {
                    breakpoints,
                    slopes: slopes[i * (nb + 1)..(i + 1) * (nb + 1)].to_vec(),
                    intercept: p.block(2)[i],
                }
            })
            .collect();
        CovidParams {
            b: rows(p.block(0), k, n),
            d: rows(p.block(1), k, n),
            beta,
            sigma: p.block(5).to_vec(),
            mu: p.block(6).to_vec(),
            gamma: p.block(7).to_vec(),
            death_a: p.block(8).to_vec(),
            death_b: p.block(9).to_vec(),
            e0_logit: p.block(10).to_vec(),
            u0_logit: p.block(11).to_vec(),
        }
    }

    /// Domain values (layout order) reproducing `p`; inverse of [`unpack`](Self::unpack).
    pub fn pack(&self, p: &CovidParams<f64>) -> Result<Vec<f64>> {
        let (n, nb) = (self.n, self.config.breakpoints);
        let mut v = Vec::with_capacity(self.layout.len());
        v.extend(p.b.iter().flatten());
        v.extend(p.d.iter().flatten());
        v.extend(p.beta.iter().map(|b| b.intercept));
        for b in &p.beta {
            if b.slopes.len() != nb + 1 || b.breakpoints.len() != nb {
                return Err(Error::BadSpec("beta pieces do not match the model".into()));
            }
            v.extend(&b.slopes);
        }
        for b in &p.beta {
            let mut prev = 0.0;
            for &bp in &b.breakpoints {
                v.push(bp - prev);
                prev = bp;
            }
            if nb == 0 {
                v.push(1.0);
            }
        }
        for block in [&p.sigma, &p.mu, &p.gamma, &p.death_a, &p.death_b, &p.e0_logit, &p.u0_logit] {
            if block.len() != n {
                return Err(Error::shape(n, block.len()));
            }
            v.extend(block.iter());
        }
        if v.len() != self.layout.len() {
            return Err(Error::shape(self.layout.len(), v.len()));
        }
        Ok(v)
    }

    /// Initial `(S, E, U)` fractions given the remaining mass `1 − I₀ − R₀`.
    pub fn split_susceptible<T: Scalar>(remaining: f64, e_logit: T, u_logit: T) -> [T; 3] {
        let ee = e_logit.exp();
        let eu = u_logit.exp();
        let denom = ee + eu + 1.0;
        let m = T::constant(remaining);
        [m / denom, m * ee / denom, m * eu / denom]
    }
}

impl DynamicsModel for SuEirCovid {
    type Coeffs<T: Scalar> = CovidRates<T>;

    fn name(&self) -> &str {
        "sueir_covid"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn state_dim(&self) -> usize {
        self.n * COMPARTMENTS
    }

    fn obs_dim(&self) -> usize {
        self.n * 3
    }

    fn coefficients<T: Scalar>(&self, p: &Params<T>) -> CovidRates<T> {
        CovidRates::new(&self.unpack(p), &self.mask).expect("mask validated at construction")
    }

    fn initial_state<T: Scalar>(&self, c: &CovidRates<T>, y0: &[f64]) -> Vec<T> {
        let mut x = Vec::with_capacity(self.n * COMPARTMENTS);
        for i in 0..self.n {
            let (i0, r0, d0) = (y0[3 * i], y0[3 * i + 1], y0[3 * i + 2]);
            let [s, e, u] = Self::split_susceptible(1.0 - i0 - r0, c.e0_logit[i], c.u0_logit[i]);
            x.extend([s, e, u, T::constant(i0), T::constant(r0), T::constant(d0)]);
        }
        x
    }

    fn rhs<T: Scalar>(&self, t: f64, state: &[T], c: &CovidRates<T>) -> Vec<T> {
        sueir_covid_rhs(t, state, c)
    }

    fn observe<T: Scalar>(&self, state: &[T], _c: &CovidRates<T>) -> Vec<T> {
        state
            .chunks(COMPARTMENTS)
            .flat_map(|x| [x[I], x[R], x[D]])
            .collect()
    }

    fn anchor(&self, state: &[f64], observed: &[f64], _c: &CovidRates<f64>) -> Vec<f64> {
        let mut out = state.to_vec();
        for i in 0..self.n {
            out[i * COMPARTMENTS + I] = observed[3 * i];
            out[i * COMPARTMENTS + R] = observed[3 * i + 1];
            out[i * COMPARTMENTS + D] = observed[3 * i + 2];
        }
        out
    }
}
