use super::{DynamicsModel, ParamLayout, ParamSpec, Params, Shape, Transform};
use crate::autodiff::Scalar;

/// Competitive Lotka-Volterra coefficients for `d` species.
#[derive(Debug, Clone)]
pub struct LvParams<S> {
    /// intrinsic growth rates
    pub r: Vec<S>,
    /// carrying capacities
    pub k: Vec<S>,
    /// interaction matrix, row-major `d × d`
    pub a: Vec<S>,
}

/// `dpᵢ/dt = rᵢ pᵢ (1 − Σⱼ Aᵢⱼ pⱼ / kᵢ)`
pub fn lv_rhs<S: Scalar>(_t: f64, p: &[S], params: &LvParams<S>) -> Vec<S> {
    let d = p.len();
    (0..d)
        .map(|i| {
            let pressure = S::dot(&params.a[i * d..(i + 1) * d], p) / params.k[i];
            params.r[i] * p[i] * (S::constant(1.0) - pressure)
        })
        .collect()
}

/// Fully observed LV system with unknown `r`, `k` and off-diagonal `A`.
///
/// The diagonal of `A` is fixed to 1; a free diagonal only rescales `k`.
#[derive(Debug, Clone)]
pub struct LotkaVolterra {
    d: usize,
    substeps: usize,
    layout: ParamLayout,
}

impl LotkaVolterra {
    pub fn new(d: usize, substeps: usize) -> Self {
        let layout = ParamLayout::new(vec![
            ParamSpec::new("r", Shape::Vector(d), Transform::Positive, (0.0, 1.5)),
            ParamSpec::new("k", Shape::Vector(d), Transform::Positive, (-1.0, 2.0))
                .with_scale(100.0),
            ParamSpec::new(
                "a_offdiag",
                Shape::Vector(d * d - d),
                Transform::Free,
                (0.0, 0.5),
            ),
        ])
        .expect("static layout");
        LotkaVolterra {
            d,
            substeps: substeps.max(1),
            layout,
        }
    }

    pub fn species(&self) -> usize {
        self.d
    }
}

impl DynamicsModel for LotkaVolterra {
    type Coeffs<S: Scalar> = LvParams<S>;

    fn name(&self) -> &str {
        "lv"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn state_dim(&self) -> usize {
        self.d
    }

    fn obs_dim(&self) -> usize {
        self.d
    }

    fn coefficients<S: Scalar>(&self, p: &Params<S>) -> LvParams<S> {
        let d = self.d;
        let off = p.block(2);
        let mut a = Vec::with_capacity(d * d);
        let mut next = off.iter();
        for i in 0..d {
            for j in 0..d {
                a.push(if i == j {
                    S::constant(1.0)
                } else {
                    *next.next().expect("off-diagonal count")
                });
            }
        }
        LvParams {
            r: p.block(0).to_vec(),
            k: p.block(1).to_vec(),
            a,
        }
    }

    fn initial_state<S: Scalar>(&self, _c: &LvParams<S>, y0: &[f64]) -> Vec<S> {
        y0.iter().map(|&v| S::constant(v)).collect()
    }

    fn rhs<S: Scalar>(&self, t: f64, state: &[S], c: &LvParams<S>) -> Vec<S> {
        lv_rhs(t, state, c)
    }

    fn observe<S: Scalar>(&self, state: &[S], _c: &LvParams<S>) -> Vec<S> {
        state.to_vec()
    }

    fn anchor(&self, _state: &[f64], observed: &[f64], _c: &LvParams<f64>) -> Vec<f64> {
        observed.to_vec()
    }

    fn substeps(&self) -> usize {
        self.substeps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{integrate, Method, TimeGrid};

    fn identity_params(d: usize, r: f64, k: f64) -> LvParams<f64> {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        LvParams {
            r: vec![r; d],
            k: vec![k; d],
            a,
        }
    }

    #[test]
    fn extinction_is_fixed() {
        let p = identity_params(3, 1.0, 10.0);
        assert_eq!(lv_rhs(0.0, &[0.0, 0.0, 0.0], &p), vec![0.0; 3]);
    }

    #[test]
    fn carrying_capacity_is_fixed() {
        let p = identity_params(1, 0.7, 42.0);
        assert_eq!(lv_rhs(0.0, &[42.0], &p), vec![0.0]);
    }

    #[test]
    fn two_species_substitution() {
        let p = identity_params(2, 1.0, 10.0);
        assert_eq!(lv_rhs(0.0, &[5.0, 5.0], &p), vec![2.5, 2.5]);
    }

    #[test]
    fn stays_nonnegative_with_small_steps() {
        let p = LvParams {
            r: vec![1.5, 0.8, 1.2, 0.5],
            k: vec![50.0, 120.0, 80.0, 200.0],
            a: vec![
                1.0, 0.3, 0.1, 0.4, //
                0.2, 1.0, 0.5, 0.0, //
                0.4, 0.1, 1.0, 0.3, //
                0.0, 0.2, 0.45, 1.0,
            ],
        };
        // h·r·max(p/k) stays well below 0.1
        let grid = TimeGrid::new(0.0, 0.01, 2000).unwrap();
        let traj = integrate(|t, y: &[f64]| lv_rhs(t, y, &p), &[30.0, 5.0, 100.0, 0.5], grid, Method::Rk4)
            .unwrap();
        assert!(traj.rows().flatten().all(|&v| v >= -1e-8));
    }

    #[test]
    fn model_fixes_unit_diagonal() {
        let m = LotkaVolterra::new(3, 1);
        assert_eq!(m.layout().len(), 3 + 3 + 6);
        let raw = vec![0.0; m.layout().len()];
        let c = m.coefficients(&m.layout().transform(&raw));
        assert_eq!(c.a[0], 1.0);
        assert_eq!(c.a[4], 1.0);
        assert_eq!(c.a[1], 0.0);
    }
}
