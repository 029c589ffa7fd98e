use autoode::autodiff::{grad_check, GradCheck, Scalar, Var};
use autoode::covid::default_adjacency;
use autoode::dynamics::sueir::{SuEirConfig, SuEirCovid};
use autoode::dynamics::{seir_rhs, DynamicsModel, Seir, SeirParams};
use autoode::estimation::{window_loss, FitConfig};
use autoode::integrators::{integrate, Method, TimeGrid, Trajectory};
use autoode::Result;
use serde::Serialize;

pub const SUITES: [&str; 4] = ["primitives", "rk4", "seir", "sueir"];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub parameters: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn primitives<'t>(x: &[Var<'t>]) -> Result<Var<'t>> {
    let (a, b, c) = (x[0], x[1], x[2]);
    let s = a.exp() * b.sigmoid() + (c * c + 1.0).ln() - a.tanh() / (b.softplus() + 0.5);
    Ok(s + (c.abs() + 1.0).sqrt() * a.powf(3.0) + b.max(c) - a.min(c) + b.sigmoid().pow(c * c + 1.0))
}

fn rk4_logistic<'t>(x: &[Var<'t>]) -> Result<Var<'t>> {
    let (rate, y0) = (x[0], x[1]);
    let grid = TimeGrid::new(0.0, 0.25, 12)?;
    let traj = integrate(|_t, y: &[Var<'_>]| vec![rate * y[0] * (1.0 - y[0])], &[y0], grid, Method::Rk4)?;
    Ok(Scalar::sum(&traj.column(0)))
}

fn seir_window() -> (Seir, Trajectory<f64>) {
    let p = SeirParams {
        beta: 0.6,
        sigma: 0.2,
        gamma: 0.1,
        n: 1000.0,
    };
    let grid = TimeGrid::new(0.0, 1.0, 4).expect("grid");
    let full = integrate(|t, y: &[f64]| seir_rhs(t, y, &p), &[990.0, 0.0, 10.0, 0.0], grid, Method::Rk4)
        .expect("integration");
    let rows: Vec<Vec<f64>> = full.rows().map(|r| vec![r[0], r[2], r[3]]).collect();
    let model = Seir::observing(1000.0, &[0, 2, 3]).expect("observation set");
    (model, Trajectory::from_rows(0.0, 1.0, &rows).expect("rows"))
}

/// Runs one suite; `None` for an unknown name.
pub fn run_suite(name: &str, eps: f64) -> Option<Result<GradCheck>> {
    Some(match name {
        "primitives" => grad_check(primitives, &[0.3, -0.7, 1.1], eps),
        "rk4" => grad_check(rk4_logistic, &[0.8, 0.1], eps),
        "seir" => {
            let (model, obs) = seir_window();
            let cfg = FitConfig::default();
            let e0 = model.layout().specs()[3].to_raw(3.0).expect("finite");
            grad_check(|x: &[Var<'_>]| window_loss(&model, x, &obs, &cfg), &[0.3, -1.2, -2.0, e0], eps)
        }
        "sueir" => {
            let mask: Vec<Vec<f64>> = default_adjacency().into_iter().take(4).map(|r| r[..4].to_vec()).collect();
            let model = SuEirCovid::new(
                mask,
                SuEirConfig {
                    rank: 2,
                    breakpoints: 1,
                    window: 6,
                },
            )
            .expect("model");
            let raw: Vec<f64> = (0..model.layout().len())
                .map(|i| -1.5 + ((i * 7) % 11) as f64 / 11.0)
                .collect();
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|t| (0..12).map(|c| 1e-3 * (1.0 + 0.1 * t as f64 + 0.05 * c as f64)).collect())
                .collect();
            let obs = Trajectory::from_rows(0.0, 1.0, &rows).expect("rows");
            let cfg = FitConfig {
                time_weight_exponent: 0.5,
                ..FitConfig::default()
            };
            grad_check(|x: &[Var<'_>]| window_loss(&model, x, &obs, &cfg), &raw, eps)
        }
        _ => return None,
    })
}
