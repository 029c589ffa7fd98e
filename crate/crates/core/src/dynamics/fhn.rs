use super::{DynamicsModel, ParamLayout, ParamSpec, Params, Transform};
use crate::autodiff::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct FhnParams<S> {
    pub a: S,
    pub b: S,
    pub c: S,
}

/// FitzHugh–Nagumo: `dx/dt = c(x + y − x³/3)`, `dy/dt = −(x + b·y − a)/c`.
pub fn fhn_rhs<S: Scalar>(_t: f64, xy: &[S], p: &FhnParams<S>) -> Vec<S> {
    let (x, y) = (xy[0], xy[1]);
    let dx = p.c * (x + y - x * x * x / 3.0);
    let dy = -(x + p.b * y - p.a) / p.c;
    vec![dx, dy]
}

/// Fully observed FHN system with unknown positive `a`, `b`, `c`.
#[derive(Debug, Clone)]
pub struct FitzHughNagumo {
    substeps: usize,
    layout: ParamLayout,
}

impl FitzHughNagumo {
    pub fn new(substeps: usize) -> Self {
        let layout = ParamLayout::new(vec![
            ParamSpec::scalar("a", Transform::Positive, (-1.0, 0.5)),
            ParamSpec::scalar("b", Transform::Positive, (-1.0, 0.5)),
            ParamSpec::scalar("c", Transform::Positive, (0.0, 3.0)),
        ])
        .expect("static layout");
        FitzHughNagumo {
            substeps: substeps.max(1),
            layout,
        }
    }
}

impl DynamicsModel for FitzHughNagumo {
    type Coeffs<S: Scalar> = FhnParams<S>;

    fn name(&self) -> &str {
        "fhn"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn coefficients<S: Scalar>(&self, p: &Params<S>) -> FhnParams<S> {
        FhnParams {
            a: p.scalar(0),
            b: p.scalar(1),
            c: p.scalar(2),
        }
    }

    fn initial_state<S: Scalar>(&self, _c: &FhnParams<S>, y0: &[f64]) -> Vec<S> {
        y0.iter().map(|&v| S::constant(v)).collect()
    }

    fn rhs<S: Scalar>(&self, t: f64, state: &[S], c: &FhnParams<S>) -> Vec<S> {
        fhn_rhs(t, state, c)
    }

    fn observe<S: Scalar>(&self, state: &[S], _c: &FhnParams<S>) -> Vec<S> {
        state.to_vec()
    }

    fn anchor(&self, _state: &[f64], observed: &[f64], _c: &FhnParams<f64>) -> Vec<f64> {
        observed.to_vec()
    }

    fn substeps(&self) -> usize {
        self.substeps
    }
}
