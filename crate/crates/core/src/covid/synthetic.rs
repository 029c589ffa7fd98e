use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::panel::CovidPanel;
use crate::dynamics::sueir::{self, BetaPieces, CovidParams, CovidRates, COMPARTMENTS};
use crate::error::{Error, Result};
use crate::integrators::{integrate, Method, TimeGrid, Trajectory};

/// Sampling ranges of a synthetic multi-region SuEIR panel. All initial
/// values are fractions of each region's population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCovidConfig {
    pub days: usize,
    pub rank: usize,
    pub breakpoints: usize,
    pub seed: u64,
    /// entries of the low-rank factors `B` and `D`
    pub factor_range: (f64, f64),
    /// `βᵢ(0)·Σⱼ Aᵢⱼ`; the intercept is divided by the row sum of `A`
    pub transmission_range: (f64, f64),
    /// slopes, relative to the intercept, per day
    pub slope_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub death_a_range: (f64, f64),
    pub death_b_range: (f64, f64),
    pub e0_range: (f64, f64),
    pub u0_range: (f64, f64),
    pub i0_range: (f64, f64),
    pub r0_range: (f64, f64),
}

impl SyntheticCovidConfig {
    /// Epidemic-scale fractions, as in a parameter-recovery study.
    pub fn parameter_recovery(seed: u64) -> Self {
        SyntheticCovidConfig {
            days: 60,
            rank: 5,
            breakpoints: 1,
            seed,
            factor_range: (0.05, 0.45),
            transmission_range: (0.2, 0.6),
            slope_range: (-0.01, 0.01),
            sigma_range: (0.1, 0.5),
            mu_range: (0.2, 0.8),
            gamma_range: (0.02, 0.2),
            death_a_range: (-0.0005, 0.0005),
            death_b_range: (0.01, 0.1),
            e0_range: (0.005, 0.05),
            u0_range: (0.0, 0.02),
            i0_range: (0.005, 0.05),
            r0_range: (0.0, 0.05),
        }
    }

    /// Early-epidemic fractions resembling reported U.S. state counts.
    pub fn reported_scale(days: usize, seed: u64) -> Self {
        SyntheticCovidConfig {
            days,
            rank: 5,
            breakpoints: 2,
            seed,
            factor_range: (0.05, 0.45),
            transmission_range: (0.04, 0.08),
            slope_range: (-0.004, 0.004),
            sigma_range: (0.15, 0.35),
            mu_range: (0.2, 0.6),
            gamma_range: (0.01, 0.04),
            death_a_range: (-0.0001, 0.0001),
            death_b_range: (0.02, 0.08),
            e0_range: (2e-4, 2e-3),
            u0_range: (1e-4, 1e-3),
            i0_range: (5e-4, 5e-3),
            r0_range: (1e-4, 1e-3),
        }
    }
}

/// A generated panel together with its generating parameters.
#[derive(Debug, Clone)]
pub struct SyntheticCovid {
    pub params: CovidParams<f64>,
    pub mask: Vec<Vec<f64>>,
    /// `days × 6n` compartment fractions
    pub states: Trajectory<f64>,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Samples parameters and integrates the model over `config.days` daily rows.
pub fn generate_synthetic_covid(mask: &[Vec<f64>], config: &SyntheticCovidConfig) -> Result<SyntheticCovid> {
    let n = mask.len();
    if n == 0 || config.days < 2 || config.rank == 0 {
        return Err(Error::BadSpec("synthetic panel needs regions, rank ≥ 1 and ≥ 2 days".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.rank;
    let factor = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..n).map(|_| draw(rng, config.factor_range)).collect()).collect()
    };
    let b = factor(&mut rng);
    let d = factor(&mut rng);
    let a = sueir::low_rank_transmission(&b, &d, mask)?;
    let nb = config.breakpoints;
    let span = config.days as f64;
    let beta = (0..n)
        .map(|i| {
            let row_sum: f64 = a[i].iter().sum();
            let intercept = draw(&mut rng, config.transmission_range) / row_sum;
            let slopes = (0..=nb).map(|_| draw(&mut rng, config.slope_range) * intercept).collect();
            let mut breakpoints: Vec<f64> = (0..nb)
                .map(|_| draw(&mut rng, (0.15 * span, 0.85 * span)))
                .collect();
            breakpoints.sort_by(f64::total_cmp);
            BetaPieces { breakpoints, slopes, intercept }
        })
        .collect();
    let mut vec_of = |range| (0..n).map(|_| draw(&mut rng, range)).collect::<Vec<f64>>();
    let sigma = vec_of(config.sigma_range);
    let mu = vec_of(config.mu_range);
    let gamma = vec_of(config.gamma_range);
    let death_a = vec_of(config.death_a_range);
    let death_b = vec_of(config.death_b_range);
    let e0 = vec_of(config.e0_range);
    let u0 = vec_of(config.u0_range);
    let i0 = vec_of(config.i0_range);
    let r0 = vec_of(config.r0_range);

    let mut initial = Vec::with_capacity(n * COMPARTMENTS);
    let (mut e0_logit, mut u0_logit) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let s0 = 1.0 - e0[i] - u0[i] - i0[i] - r0[i];
        if !(s0 > 0.0) {
            return Err(Error::BadSpec("initial fractions leave no susceptibles".into()));
        }
        e0_logit.push((e0[i] / s0).ln());
        u0_logit.push((u0[i] / s0).ln());
        let d0 = (death_b[i].clamp(0.0, 1.0)) * r0[i];
        initial.extend([s0, e0[i], u0[i], i0[i], r0[i], d0]);
    }
    let params = CovidParams {
        b,
        d,
        beta,
        sigma,
        mu,
        gamma,
        death_a,
        death_b,
        e0_logit,
        u0_logit,
    };
    let rates = CovidRates::new(&params, mask)?;
    let grid = TimeGrid::new(0.0, 1.0, config.days - 1)?;
    let states = integrate(
        |t, y: &[f64]| sueir::sueir_covid_rhs(t, y, &rates),
        &initial,
        grid,
        Method::Rk4,
    )?;
    Ok(SyntheticCovid {
        params,
        mask: mask.to_vec(),
        states,
    })
}

impl SyntheticCovid {
    pub fn regions(&self) -> usize {
        self.mask.len()
    }

    /// Observed `(I, R, D)` fractions per region.
    pub fn observations(&self) -> Trajectory<f64> {
        let mut out = Trajectory::new(self.states.t0, self.states.h, 3 * self.regions());
        for row in self.states.rows() {
            let obs: Vec<f64> = row
                .chunks(COMPARTMENTS)
                .flat_map(|x| [x[sueir::I], x[sueir::R], x[sueir::D]])
                .collect();
            out.push(&obs).expect("fixed width");
        }
        out
    }

    /// Dense transmission matrix of the generating parameters.
    pub fn transmission(&self) -> Vec<Vec<f64>> {
        sueir::low_rank_transmission(&self.params.b, &self.params.d, &self.mask).expect("validated")
    }

    /// Counts in persons for the given populations, starting at `start`.
    pub fn to_panel(&self, states: &[String], population: &[f64], start: NaiveDate) -> Result<CovidPanel> {
        let n = self.regions();
        if states.len() != n || population.len() != n {
            return Err(Error::shape(n, states.len().min(population.len())));
        }
        let obs = self.observations();
        let scaled = |f: usize| -> Vec<Vec<f64>> {
            obs.rows()
                .map(|r| (0..n).map(|i| r[3 * i + f] * population[i]).collect())
                .collect()
        };
        let dates = (0..obs.len() as u64)
            .map(|i| start.checked_add_days(Days::new(i)).expect("date in range"))
            .collect();
        CovidPanel {
            states: states.to_vec(),
            dates,
            infected: scaled(0),
            recovered: scaled(1),
            deaths: scaled(2),
            population: population.to_vec(),
            adjacency: self.mask.clone(),
        }
        .validate()
    }
}
