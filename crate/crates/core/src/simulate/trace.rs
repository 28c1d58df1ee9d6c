//! Uniform-grid solution traces with prehistory and 4-point interpolation.

use nalgebra::DVector;

use crate::history::HistoryFunction;

/// How a trace reads values at non-positive times.
pub(crate) enum Prehistory {
    /// Evaluate the stored history function.
    Value(HistoryFunction),
    /// Evaluate the history function's derivative (used for the delayed
    /// derivative trace of a neutral system).
    Derivative(HistoryFunction),
}

impl Prehistory {
    fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Prehistory::Value(h) => h.eval(t),
            Prehistory::Derivative(h) => h.derivative(t),
        }
    }

    fn grid(&self) -> &[f64] {
        match self {
            Prehistory::Value(h) | Prehistory::Derivative(h) => h.grid(),
        }
    }
}

/// Committed solution samples at `t_k = k dt`, backed by a prehistory for
/// `t <= 0`. Sampling between grid points uses a cubic Lagrange window;
/// sampling up to one step beyond the last committed point extrapolates that
/// window (the steppers rely on this for explicit head slivers).
pub(crate) struct Trace {
    dt: f64,
    pre: Prehistory,
    values: Vec<DVector<f64>>,
}

impl Trace {
    pub fn new(dt: f64, pre: Prehistory, at_zero: DVector<f64>) -> Self {
        Trace {
            dt,
            pre,
            values: vec![at_zero],
        }
    }

    pub fn push(&mut self, v: DVector<f64>) {
        self.values.push(v);
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }

    /// Value at signed grid index (negative indices read the prehistory).
    /// Index 0 reads the committed value, so traces whose prehistory
    /// derivative disagrees with the dynamics at `t = 0` interpolate with
    /// the right-sided limit once past the origin.
    fn at_index(&self, k: i64) -> DVector<f64> {
        if k < 0 {
            self.pre.eval(k as f64 * self.dt)
        } else {
            self.values[k as usize].clone()
        }
    }

    /// Samples the trace at an arbitrary time `t <= (len-1) dt + dt`.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        if t < 0.0 {
            return self.pre.eval(t);
        }
        let last = (self.values.len() - 1) as i64;
        let k = (t / self.dt).floor() as i64;
        // Cubic window [k-1, k+2], shifted to stay within committed data
        // plus prehistory; extrapolates when t is past the last point.
        let mut hi = (k + 2).min(last);
        let mut lo = hi - 3;
        if lo < 0 {
            // Solutions are typically C^1-kinked at the origin (prehistory
            // meets the dynamics), so a window for t > 0 must never straddle
            // it: keep to the committed side, at reduced degree while fewer
            // than four points exist. The early low-degree reads only feed
            // head slivers whose one-time error is below the step error.
            lo = 0;
            hi = 3.min(last);
        }
        let ts: Vec<f64> = (lo..=hi).map(|j| j as f64 * self.dt).collect();
        let vals: Vec<DVector<f64>> = (lo..=hi).map(|j| self.at_index(j)).collect();
        crate::history::lagrange(&ts, &vals, t)
    }

    /// Grid knots of the stored interpolant (committed times plus prehistory
    /// grid) strictly inside `(a, b)` — integration panels must break here.
    pub fn knots_between(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &g in self.pre.grid() {
            if g > a && g < b {
                out.push(g);
            }
        }
        // Committed grid: multiples of dt in (max(a, 0), b).
        let start = (a / self.dt).floor() as i64;
        let stop = (b / self.dt).ceil() as i64;
        for k in start..=stop {
            let t = k as f64 * self.dt;
            if t > a && t < b && t >= 0.0 {
                out.push(t);
            }
        }
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
        out
    }
}
