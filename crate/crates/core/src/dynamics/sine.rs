use super::{DynamicsModel, ParamLayout, ParamSpec, Params, Transform};
use crate::autodiff::Scalar;

/// `yᵢ = sin(w·i·h + b)` for `i = 0..n`.
pub fn sine_sample(w: f64, b: f64, n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| (w * (i as f64 * h) + b).sin()).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SineParams<S> {
    pub w: S,
    /// unobserved initial velocity
    pub v0: S,
    /// constant added to the observation
    pub offset: S,
}

/// Harmonic oscillator `y'' = −w²y` observed as `y + offset`.
///
/// The velocity is never observed, so its initial value is estimated.
#[derive(Debug, Clone)]
pub struct SineOscillator {
    layout: ParamLayout,
}

impl Default for SineOscillator {
    fn default() -> Self {
        let layout = ParamLayout::new(vec![
            ParamSpec::scalar("w", Transform::Positive, (-0.5, 1.5)),
            ParamSpec::scalar("v0", Transform::Free, (-1.0, 1.0)),
            ParamSpec::scalar("offset", Transform::Free, (-0.5, 0.5)),
        ])
        .expect("static layout");
        SineOscillator { layout }
    }
}

impl DynamicsModel for SineOscillator {
    type Coeffs<S: Scalar> = SineParams<S>;

    fn name(&self) -> &str {
        "sine"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn coefficients<S: Scalar>(&self, p: &Params<S>) -> SineParams<S> {
        SineParams {
            w: p.scalar(0),
            v0: p.scalar(1),
            offset: p.scalar(2),
        }
    }

    fn initial_state<S: Scalar>(&self, c: &SineParams<S>, y0: &[f64]) -> Vec<S> {
        vec![S::constant(y0[0]) - c.offset, c.v0]
    }

    fn rhs<S: Scalar>(&self, _t: f64, state: &[S], c: &SineParams<S>) -> Vec<S> {
        vec![state[1], -(c.w * c.w * state[0])]
    }

    fn observe<S: Scalar>(&self, state: &[S], c: &SineParams<S>) -> Vec<S> {
        vec![state[0] + c.offset]
    }

    fn anchor(&self, state: &[f64], observed: &[f64], c: &SineParams<f64>) -> Vec<f64> {
        vec![observed[0] - c.offset, state[1]]
    }
}
