//! Native time-domain simulation for every representation.
//!
//! Each form gets its own stepper:
//!
//! * delayed-state and neutral forms: explicit RK4 on a uniform grid, delayed
//!   arguments read from the committed trace through cubic windows,
//!   distributed terms through sliding moment windows;
//! * delay-channel form: the same machinery with the channel signals `r_i`
//!   committed alongside the state;
//! * transport form: the channel stepper plus the exact characteristics
//!   reading `phi_i(t, s) = r_i(t + tau_i s)` sampled on a collocation grid;
//! * integral-equation form: Chebyshev–Gauss–Lobatto collocation of the PI
//!   operators and an implicit trapezoid rule in time.

mod dde;
mod ddf;
mod pie;
mod trace;
mod window;

pub use dde::{simulate_dde, simulate_nds};
pub use ddf::{simulate_ddf, simulate_odepde};
pub use pie::simulate_pie;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Time integrator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Explicit RK4 with characteristics-based delay evaluation (the native
    /// method for every delayed form).
    Rk4Characteristics,
    /// Implicit trapezoid rule (the native method for the integral-equation
    /// form, which differentiates the state under an operator).
    ImplicitTrapezoid,
}

/// How input derivatives (needed by the integral-equation form) are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputDerivative {
    /// Differentiate the signal descriptors analytically.
    #[default]
    Analytic,
    /// Fourth-order finite differences of the signal values.
    FiniteDifference,
}

/// Simulation parameters shared by all steppers.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Time step.
    pub dt: f64,
    /// Final time; the grid is `0, dt, ..., round(t_final/dt) * dt`.
    pub t_final: f64,
    /// Collocation nodes for the integral-equation stepper and for transport
    /// profiles.
    pub collocation_order: usize,
    /// Integrator override (`None` = the form's native method).
    pub integrator: Option<Integrator>,
    /// Input-derivative strategy for the integral-equation stepper.
    pub input_derivative: InputDerivative,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        SimConfig {
            dt,
            t_final,
            collocation_order: 16,
            integrator: None,
            input_derivative: InputDerivative::default(),
        }
    }

    /// Number of steps (grid has `steps + 1` points).
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("time step {} must be positive", self.dt)));
        }
        if self.steps() == 0 {
            return Err(Error::Config(format!(
                "final time {} shorter than one step {}",
                self.t_final, self.dt
            )));
        }
        if self.collocation_order < 2 {
            return Err(Error::Config(
                "collocation order must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// The step must resolve the fastest delay: `dt <= min tau_i / 4`, so
    /// that delayed lookups land well inside the committed trace and the
    /// interpolation windows never straddle a step boundary twice.
    pub(crate) fn check_against_delays(&self, delays: &[f64]) -> Result<()> {
        if let Some(&tau) = delays.first() {
            if self.dt > tau / 4.0 * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "time step {} exceeds a quarter of the smallest delay {tau}",
                    self.dt
                )));
            }
        }
        Ok(())
    }
}

/// Trace of one delay channel `r_i` on the simulation grid.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub dim: usize,
    /// `values[k] = r_i(t_k)`.
    pub values: Vec<DVector<f64>>,
}

/// Function-state samples on a collocation grid over the unit interval.
#[derive(Debug, Clone)]
pub struct CollocationTrace {
    /// Ascending nodes in `[-1, 0]`.
    pub nodes: Vec<f64>,
    /// Block dimension per channel.
    pub p_i: Vec<usize>,
    /// `values[k]` stacks, node-major, the function state at `t_k`:
    /// `[f(s_0); f(s_1); ...]` with each `f(s_j)` of dimension `sum p_i`.
    pub values: Vec<DVector<f64>>,
}

/// A simulated trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// Delayed signal `v` (empty vectors for forms without one).
    pub v: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Channel traces (delay-channel and transport forms).
    pub channels: Vec<ChannelTrace>,
    /// Function-state samples (transport and integral-equation forms).
    pub collocation: Option<CollocationTrace>,
}

impl Trajectory {
    pub(crate) fn with_capacity(dt: f64, steps: usize) -> Self {
        let cap = steps + 1;
        Trajectory {
            dt,
            t: Vec::with_capacity(cap),
            x: Vec::with_capacity(cap),
            z: Vec::with_capacity(cap),
            y: Vec::with_capacity(cap),
            v: Vec::with_capacity(cap),
            w: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            channels: Vec::new(),
            collocation: None,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// State at an off-grid time via a cubic window (clamped to the grid).
    pub fn x_at(&self, t: f64) -> DVector<f64> {
        interp_series(&self.t, &self.x, t)
    }

    /// Channel value at an off-grid time.
    pub fn channel_at(&self, i: usize, t: f64) -> DVector<f64> {
        interp_series(&self.t, &self.channels[i].values, t)
    }

    /// Guards against non-finite blow-ups during stepping.
    pub(crate) fn check_finite(x: &DVector<f64>, what: &str, t: f64) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Diverged {
                what: what.into(),
                t,
            })
        }
    }
}

/// Cubic Lagrange interpolation on a sorted sample series (clamped window).
pub(crate) fn interp_series(ts: &[f64], vals: &[DVector<f64>], t: f64) -> DVector<f64> {
    debug_assert_eq!(ts.len(), vals.len());
    debug_assert!(!ts.is_empty());
    if ts.len() < 4 {
        return crate::history::lagrange(ts, vals, t);
    }
    let pos = ts.partition_point(|&g| g < t);
    let hi = (pos + 1).min(ts.len() - 1).max(3);
    let lo = hi - 3;
    crate::history::lagrange(&ts[lo..=hi], &vals[lo..=hi], t)
}

/// Worst-case differences between two trajectories of the same system.
#[derive(Debug, Clone, Default)]
pub struct ComparisonReport {
    pub max_err_x: f64,
    pub max_err_z: f64,
    pub max_err_y: f64,
    /// Time at which the largest state error occurs.
    pub argmax_t: f64,
    /// Number of grid points compared.
    pub compared: usize,
}

impl ComparisonReport {
    pub fn max_err(&self) -> f64 {
        self.max_err_x.max(self.max_err_z).max(self.max_err_y)
    }
}

/// Compares trajectories on the coarser of the two grids (sup-norm over
/// time, infinity norm over components). The second trajectory is
/// interpolated where grids disagree.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<ComparisonReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("cannot compare empty trajectories".into()));
    }
    if a.x[0].len() != b.x[0].len() || a.z[0].len() != b.z[0].len() || a.y[0].len() != b.y[0].len()
    {
        return Err(Error::Input(
            "trajectories have different output dimensions".into(),
        ));
    }
    let (coarse, fine) = if a.dt >= b.dt { (a, b) } else { (b, a) };
    let t_end = coarse.t_final().min(fine.t_final());
    let mut rep = ComparisonReport::default();
    let same_grid = (coarse.dt - fine.dt).abs() < 1e-15;
    for (k, &t) in coarse.t.iter().enumerate() {
        if t > t_end + 1e-12 {
            break;
        }
        let (xb, zb, yb) = if same_grid {
            (fine.x[k].clone(), fine.z[k].clone(), fine.y[k].clone())
        } else {
            (
                interp_series(&fine.t, &fine.x, t),
                interp_series(&fine.t, &fine.z, t),
                interp_series(&fine.t, &fine.y, t),
            )
        };
        let ex = (&coarse.x[k] - &xb).amax();
        let ez = if coarse.z[k].is_empty() { 0.0 } else { (&coarse.z[k] - &zb).amax() };
        let ey = if coarse.y[k].is_empty() { 0.0 } else { (&coarse.y[k] - &yb).amax() };
        if ex > rep.max_err_x {
            rep.max_err_x = ex;
            rep.argmax_t = t;
        }
        rep.max_err_z = rep.max_err_z.max(ez);
        rep.max_err_y = rep.max_err_y.max(ey);
        rep.compared += 1;
    }
    Ok(rep)
}
