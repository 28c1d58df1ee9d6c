//! Initial-history functions on a time grid.
//!
//! Delay systems need initial data on an interval `[-tau, 0]`: the state
//! history of a DDE, the channel histories `r_i` of a DDF, or the transported
//! boundary functions `phi_i` of the ODE-PDE form. A [`HistoryFunction`]
//! stores samples on a strictly increasing grid and interpolates with a
//! cubic rule: four-point Lagrange windows by default, or piecewise cubic
//! Hermite when derivative samples are attached (useful when the history
//! comes from an analytic expression and spectral-accuracy experiments need
//! clean derivatives).

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A vector-valued function of time given by samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFunction {
    grid: Vec<f64>,
    values: Vec<DVector<f64>>,
    derivatives: Option<Vec<DVector<f64>>>,
}

impl HistoryFunction {
    /// Builds a history from samples. The grid must be strictly increasing
    /// with at least two points, and all values finite.
    pub fn new(grid: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        Self::build(grid, values, None)
    }

    /// Builds a history with derivative samples attached; evaluation then
    /// uses piecewise cubic Hermite interpolation.
    pub fn with_derivatives(
        grid: Vec<f64>,
        values: Vec<DVector<f64>>,
        derivatives: Vec<DVector<f64>>,
    ) -> Result<Self> {
        Self::build(grid, values, Some(derivatives))
    }

    /// Constant history equal to `value` on `[lo, 0]`.
    pub fn constant(value: DVector<f64>, lo: f64) -> Self {
        let dim = value.len();
        HistoryFunction {
            grid: vec![lo, 0.0],
            values: vec![value.clone(), value],
            derivatives: Some(vec![DVector::zeros(dim), DVector::zeros(dim)]),
        }
    }

    /// Samples a closure on a uniform grid over `[lo, 0]`.
    pub fn sample(dim: usize, lo: f64, points: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|i| lo + (0.0 - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let values = grid.iter().map(|&t| f(t)).collect();
        let h = HistoryFunction {
            grid,
            values,
            derivatives: None,
        };
        debug_assert!(h.values.iter().all(|v| v.len() == dim));
        h
    }

    /// Samples a closure and its derivative on a uniform grid over `[lo, 0]`.
    pub fn sample_with_derivative(
        lo: f64,
        points: usize,
        f: impl Fn(f64) -> DVector<f64>,
        df: impl Fn(f64) -> DVector<f64>,
    ) -> Self {
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|i| lo + (0.0 - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let values = grid.iter().map(|&t| f(t)).collect();
        let derivatives = grid.iter().map(|&t| df(t)).collect();
        HistoryFunction {
            grid,
            values,
            derivatives: Some(derivatives),
        }
    }

    fn build(
        grid: Vec<f64>,
        values: Vec<DVector<f64>>,
        derivatives: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Config(
                "history grid needs at least two points".into(),
            ));
        }
        if grid.len() != values.len() {
            return Err(Error::Config(format!(
                "history has {} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if let Some(d) = &derivatives {
            if d.len() != grid.len() {
                return Err(Error::Config(format!(
                    "history has {} grid points but {} derivative samples",
                    grid.len(),
                    d.len()
                )));
            }
        }
        if grid.iter().any(|t| !t.is_finite()) || !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "history grid must be finite and strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "history value {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("history value {i} is non-finite")));
            }
        }
        if let Some(d) = &derivatives {
            for (i, v) in d.iter().enumerate() {
                if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!(
                        "history derivative sample {i} is malformed"
                    )));
                }
            }
        }
        Ok(HistoryFunction {
            grid,
            values,
            derivatives,
        })
    }

    /// Dimension of the sampled vectors.
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// First and last grid points.
    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// Errors unless the grid covers `[lo, 0]` (with a small slack for
    /// rounding) so delayed lookups never leave the data.
    pub fn check_coverage(&self, lo: f64, what: &str) -> Result<()> {
        let eps = 1e-12 * (1.0 + lo.abs());
        let (a, b) = self.span();
        if a > lo + eps || b < -eps {
            return Err(Error::Config(format!(
                "{what} covers [{a}, {b}] but must cover [{lo}, 0]"
            )));
        }
        Ok(())
    }

    /// Rescales the time axis by `factor > 0`: the result `g` satisfies
    /// `g(factor * t) = self(t)` (derivative samples are scaled accordingly).
    pub fn rescale(&self, factor: f64) -> HistoryFunction {
        HistoryFunction {
            grid: self.grid.iter().map(|t| t * factor).collect(),
            values: self.values.clone(),
            derivatives: self
                .derivatives
                .as_ref()
                .map(|d| d.iter().map(|v| v / factor).collect()),
        }
    }

    /// Index of the segment containing `t` (clamped to the grid range).
    fn segment(&self, t: f64) -> usize {
        match self
            .grid
            .binary_search_by(|g| g.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.grid.len() - 2),
        }
    }

    /// Evaluates the history at `t`. Points outside the grid are handled by
    /// extrapolating the boundary polynomial; callers that must stay inside
    /// the data use [`HistoryFunction::check_coverage`] beforehand.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if let Some(derivs) = &self.derivatives {
            let i = self.segment(t);
            return hermite(
                self.grid[i],
                self.grid[i + 1],
                &self.values[i],
                &self.values[i + 1],
                &derivs[i],
                &derivs[i + 1],
                t,
            );
        }
        let (lo, n) = self.window(t);
        lagrange(&self.grid[lo..lo + n], &self.values[lo..lo + n], t)
    }

    /// Evaluates the time derivative of the interpolant at `t`.
    pub fn derivative(&self, t: f64) -> DVector<f64> {
        if let Some(derivs) = &self.derivatives {
            let i = self.segment(t);
            return hermite_derivative(
                self.grid[i],
                self.grid[i + 1],
                &self.values[i],
                &self.values[i + 1],
                &derivs[i],
                &derivs[i + 1],
                t,
            );
        }
        let (lo, n) = self.window(t);
        lagrange_derivative(&self.grid[lo..lo + n], &self.values[lo..lo + n], t)
    }

    /// Window of up to four consecutive points around `t`.
    fn window(&self, t: f64) -> (usize, usize) {
        let n = self.grid.len();
        let w = n.min(4);
        let i = self.segment(t);
        let lo = i.saturating_sub(1).min(n - w);
        (lo, w)
    }
}

/// Lagrange interpolation through up to four points.
pub(crate) fn lagrange(ts: &[f64], ys: &[DVector<f64>], t: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(ys[0].len());
    for (i, yi) in ys.iter().enumerate() {
        let mut li = 1.0;
        for (j, &tj) in ts.iter().enumerate() {
            if j != i {
                li *= (t - tj) / (ts[i] - tj);
            }
        }
        acc += yi * li;
    }
    acc
}

/// Derivative of the Lagrange interpolant through up to four points.
fn lagrange_derivative(ts: &[f64], ys: &[DVector<f64>], t: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(ys[0].len());
    for (i, yi) in ys.iter().enumerate() {
        let denom: f64 = ts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &tj)| ts[i] - tj)
            .product();
        // d/dt prod_{j != i} (t - t_j) = sum_k prod_{j != i, k} (t - t_j)
        let mut dnum = 0.0;
        for k in 0..ts.len() {
            if k == i {
                continue;
            }
            let mut term = 1.0;
            for (j, &tj) in ts.iter().enumerate() {
                if j != i && j != k {
                    term *= t - tj;
                }
            }
            dnum += term;
        }
        acc += yi * (dnum / denom);
    }
    acc
}

/// Cubic Hermite interpolation on one segment.
#[allow(clippy::too_many_arguments)]
fn hermite(
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let h = t1 - t0;
    let u = (t - t0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h)
}

/// Time derivative of the cubic Hermite interpolant on one segment.
#[allow(clippy::too_many_arguments)]
fn hermite_derivative(
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let h = t1 - t0;
    let u = (t - t0) / h;
    let u2 = u * u;
    let dh00 = (6.0 * u2 - 6.0 * u) / h;
    let dh10 = 3.0 * u2 - 4.0 * u + 1.0;
    let dh01 = (-6.0 * u2 + 6.0 * u) / h;
    let dh11 = 3.0 * u2 - 2.0 * u;
    y0 * dh00 + d0 * dh10 + y1 * dh01 + d1 * dh11
}
