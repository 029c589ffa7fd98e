//! Fixed-step explicit integrators, generic over [`Scalar`].
//!
//! Integrating over taped [`Var`](crate::autodiff::Var)s makes every state of
//! the trajectory a differentiable function of the initial state and of
//! whatever parameters the right-hand side closes over.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Uniform time grid `tᵢ = t0 + i·h`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub h: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, n_steps: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !t0.is_finite() {
            return Err(Error::BadSpec(format!("step size must be positive, got {h}")));
        }
        if n_steps == 0 {
            return Err(Error::BadSpec("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, h, n_steps })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

/// States sampled on a uniform grid, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub t0: f64,
    pub h: f64,
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn new(t0: f64, h: f64, dim: usize) -> Self {
        Trajectory {
            t0,
            h,
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(t0: f64, h: f64, rows: &[Vec<S>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut traj = Trajectory::new(t0, h, dim);
        for r in rows {
            traj.push(r)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, row: &[S]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::shape(format!("row of {}", self.dim), row.len()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn last(&self) -> Option<&[S]> {
        (!self.is_empty()).then(|| self.row(self.len() - 1))
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    /// Column `j` across all rows.
    pub fn column(&self, j: usize) -> Vec<S> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows `start..end` as a new trajectory.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory<S> {
        Trajectory {
            t0: self.time(start),
            h: self.h,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }

    pub fn values(&self) -> Trajectory<f64> {
        Trajectory {
            t0: self.t0,
            h: self.h,
            dim: self.dim,
            data: self.data.iter().map(Scalar::value).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        self.rows().map(<[S]>::to_vec).collect()
    }
}

fn all_finite<S: Scalar>(y: &[S]) -> bool {
    y.iter().all(Scalar::is_finite)
}

/// One explicit Euler step, `y + h·f(t, y)`.
pub fn euler_step<S, F>(f: &F, t: f64, y: &[S], h: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    let k1 = f(t, y);
    let next: Vec<S> = y
        .iter()
        .zip(&k1)
        .map(|(&yi, &ki)| S::linear(&[yi, ki], &[1.0, h]))
        .collect();
    if all_finite(&next) {
        Ok(next)
    } else {
        Err(Error::NonFinite(format!("euler step at t={t}")))
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<S, F>(f: &F, t: f64, y: &[S], h: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    let half = 0.5 * h;
    let shifted = |k: &[S], w: f64| -> Vec<S> {
        y.iter()
            .zip(k)
            .map(|(&yi, &ki)| S::linear(&[yi, ki], &[1.0, w]))
            .collect()
    };
    let k1 = f(t, y);
    let k2 = f(t + half, &shifted(&k1, half));
    let k3 = f(t + half, &shifted(&k2, half));
    let k4 = f(t + h, &shifted(&k3, h));
    let w = [1.0, h / 6.0, h / 3.0, h / 3.0, h / 6.0];
    let next: Vec<S> = (0..y.len())
        .map(|i| S::linear(&[y[i], k1[i], k2[i], k3[i], k4[i]], &w))
        .collect();
    if all_finite(&next) {
        Ok(next)
    } else {
        Err(Error::NonFinite(format!("rk4 step at t={t}")))
    }
}

pub fn step<S, F>(method: Method, f: &F, t: f64, y: &[S], h: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    match method {
        Method::Euler => euler_step(f, t, y, h),
        Method::Rk4 => rk4_step(f, t, y, h),
    }
}

/// Integrates `dy/dt = f(t, y)` over `grid`, returning all `n_steps + 1` states.
pub fn integrate<S, F>(f: F, y0: &[S], grid: TimeGrid, method: Method) -> Result<Trajectory<S>>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    integrate_sampled(f, y0, grid, method, 1)
}

/// Like [`integrate`], but takes `substeps` internal steps of size
/// `grid.h / substeps` between consecutive output rows.
pub fn integrate_sampled<S, F>(
    f: F,
    y0: &[S],
    grid: TimeGrid,
    method: Method,
    substeps: usize,
) -> Result<Trajectory<S>>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Vec<S>,
{
    if !all_finite(y0) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let substeps = substeps.max(1);
    let h = grid.h / substeps as f64;
    let mut traj = Trajectory::new(grid.t0, grid.h, y0.len());
    traj.push(y0)?;
    let mut y = y0.to_vec();
    for i in 0..grid.n_steps {
        for j in 0..substeps {
            let t = grid.time(i) + j as f64 * h;
            y = step(method, &f, t, &y, h).map_err(|_| Error::Diverged { step: i + 1 })?;
        }
        traj.push(&y)?;
    }
    Ok(traj)
}
