use super::{DynamicsModel, ParamLayout, ParamSpec, Params, Transform};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SeirParams<S> {
    pub beta: S,
    pub sigma: S,
    pub gamma: S,
    /// total population, constant
    pub n: f64,
}

/// Classical SEIR; the four derivatives sum to zero.
pub fn seir_rhs<S: Scalar>(_t: f64, seir: &[S], p: &SeirParams<S>) -> Vec<S> {
    let (s, e, i) = (seir[0], seir[1], seir[2]);
    let infection = p.beta * s * i / p.n;
    let incubation = p.sigma * e;
    let recovery = p.gamma * i;
    vec![
        -infection,
        infection - incubation,
        incubation - recovery,
        recovery,
    ]
}

const NAMES: [&str; 4] = ["s", "e", "i", "r"];

/// Coefficients of [`Seir`]: rates plus estimated unobserved initial values.
#[derive(Debug, Clone)]
pub struct SeirCoeffs<S> {
    pub rates: SeirParams<S>,
    /// one entry per compartment, `None` when observed or derived
    pub initial: [Option<S>; 4],
}

/// SEIR with population `n` observing a subset of compartments.
///
/// Unobserved E, I, R start from estimated values; an unobserved S closes the
/// population, `S₀ = N − E₀ − I₀ − R₀`.
#[derive(Debug, Clone)]
pub struct Seir {
    n: f64,
    observed: Vec<usize>,
    layout: ParamLayout,
    substeps: usize,
}

impl Seir {
    pub fn fully_observed(n: f64) -> Self {
        Self::observing(n, &[0, 1, 2, 3]).expect("all compartments")
    }

    /// `observed` lists compartment indices (0 = S, 1 = E, 2 = I, 3 = R).
    pub fn observing(n: f64, observed: &[usize]) -> Result<Self> {
        if observed.is_empty() || observed.iter().any(|&c| c > 3) {
            return Err(Error::BadSpec(format!("invalid SEIR observation set {observed:?}")));
        }
        let mut observed = observed.to_vec();
        observed.sort_unstable();
        observed.dedup();
        let mut specs = vec![
            ParamSpec::scalar("beta", Transform::UnitInterval, (-2.0, 2.0)),
            ParamSpec::scalar("sigma", Transform::UnitInterval, (-2.0, 2.0)),
            ParamSpec::scalar("gamma", Transform::UnitInterval, (-2.0, 2.0)),
        ];
        for c in 1..4 {
            if !observed.contains(&c) {
                specs.push(
                    ParamSpec::scalar(&format!("{}0", NAMES[c]), Transform::Free, (-0.5, 0.5))
                        .with_scale(n / 100.0),
                );
            }
        }
        Ok(Seir {
            n,
            observed,
            layout: ParamLayout::new(specs)?,
            substeps: 1,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn population(&self) -> f64 {
        self.n
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }
}

impl DynamicsModel for Seir {
    type Coeffs<S: Scalar> = SeirCoeffs<S>;

    fn name(&self) -> &str {
        "seir"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn obs_dim(&self) -> usize {
        self.observed.len()
    }

    fn substeps(&self) -> usize {
        self.substeps
    }

    fn coefficients<S: Scalar>(&self, p: &Params<S>) -> SeirCoeffs<S> {
        let mut initial = [None; 4];
        let mut block = 3;
        for (c, slot) in initial.iter_mut().enumerate().skip(1) {
            if !self.observed.contains(&c) {
                *slot = Some(p.scalar(block));
                block += 1;
            }
        }
        SeirCoeffs {
            rates: SeirParams {
                beta: p.scalar(0),
                sigma: p.scalar(1),
                gamma: p.scalar(2),
                n: self.n,
            },
            initial,
        }
    }

    fn initial_state<S: Scalar>(&self, c: &SeirCoeffs<S>, y0: &[f64]) -> Vec<S> {
        let mut state: Vec<S> = c
            .initial
            .iter()
            .map(|v| v.unwrap_or(S::constant(0.0)))
            .collect();
        for (k, &comp) in self.observed.iter().enumerate() {
            state[comp] = S::constant(y0[k]);
        }
        if !self.observed.contains(&0) {
            state[0] = S::constant(self.n) - S::sum(&state[1..]);
        }
        state
    }

    fn rhs<S: Scalar>(&self, t: f64, state: &[S], c: &SeirCoeffs<S>) -> Vec<S> {
        seir_rhs(t, state, &c.rates)
    }

    fn observe<S: Scalar>(&self, state: &[S], _c: &SeirCoeffs<S>) -> Vec<S> {
        self.observed.iter().map(|&i| state[i]).collect()
    }

    fn anchor(&self, state: &[f64], observed: &[f64], _c: &SeirCoeffs<f64>) -> Vec<f64> {
        let mut out = state.to_vec();
        for (k, &comp) in self.observed.iter().enumerate() {
            out[comp] = observed[k];
        }
        if !self.observed.contains(&0) {
            out[0] = self.n - out[1..].iter().sum::<f64>();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{integrate, Method, TimeGrid};

    fn params() -> SeirParams<f64> {
        SeirParams {
            beta: 0.6,
            sigma: 0.2,
            gamma: 0.1,
            n: 1000.0,
        }
    }

    #[test]
    fn disease_free_equilibrium() {
        assert_eq!(seir_rhs(0.0, &[1000.0, 0.0, 0.0, 0.0], &params()), vec![-0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn direct_substitution() {
        let d = seir_rhs(0.0, &[990.0, 0.0, 10.0, 0.0], &params());
        let expected = [-5.94, 5.94, -1.0, 1.0];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn population_is_conserved() {
        let p = params();
        let grid = TimeGrid::new(0.0, 1.0, 60).unwrap();
        let traj = integrate(|t, y: &[f64]| seir_rhs(t, y, &p), &[990.0, 0.0, 10.0, 0.0], grid, Method::Rk4)
            .unwrap();
        for row in traj.rows() {
            assert!((row.iter().sum::<f64>() - 1000.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn partial_observation_closes_population() {
        let m = Seir::observing(1000.0, &[2, 3]).unwrap();
        let names: Vec<_> = m.layout().specs().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["beta", "sigma", "gamma", "e0"]);
        let raw = vec![0.0, 0.0, 0.0, m.layout().specs()[3].to_raw(5.0).unwrap()];
        let c = m.coefficients(&m.layout().transform(&raw));
        let s0 = m.initial_state(&c, &[10.0, 2.0]);
        assert!((s0[0] - 983.0).abs() < 1e-9);
        assert!((s0[1] - 5.0).abs() < 1e-9);
        assert_eq!(m.observe(&s0, &c), vec![10.0, 2.0]);
        let anchored = m.anchor(&[900.0, 40.0, 50.0, 10.0], &[55.0, 12.0], &c);
        assert_eq!(anchored, vec![893.0, 40.0, 55.0, 12.0]);
    }
}
