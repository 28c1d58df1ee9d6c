//! Exogenous input signals.
//!
//! Disturbances `w` and controls `u` are described per component by a
//! [`SignalDescriptor`] and bundled into a [`VectorSignal`]. Signals follow
//! the delay-system convention of vanishing for `t < 0`; representations
//! whose delayed channels carry the input directly additionally require the
//! signal to be continuously differentiable with `w(0) = 0`, which
//! [`SignalDescriptor::is_smooth`] and [`SignalDescriptor::vanishes_at_zero`]
//! let validators enforce.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::history::HistoryFunction;

/// Scalar signal shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// Identically zero.
    Zero,
    /// `level` for `t >= at` (and `t >= 0`), zero before.
    Step { at: f64, level: f64 },
    /// `c_0 + c_1 t + c_2 t^2 + ...` for `t >= 0`.
    Polynomial { coeffs: Vec<f64> },
    /// `amp * sin(omega t + phase)` for `t >= 0`.
    Sinusoid { amp: f64, omega: f64, phase: f64 },
    /// Cubic interpolation of samples on a grid over `[0, t_end]`.
    Sampled(HistoryFunction),
}

/// One scalar signal component with its differentiability contract.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDescriptor {
    pub kind: SignalKind,
    /// Whether an exact derivative is available (and the signal is C^1 on
    /// `t > 0`). Derived from the kind; sampled data may override via
    /// [`SignalDescriptor::assume_smooth`] when it comes from a smooth source.
    smooth: bool,
}

impl SignalDescriptor {
    pub fn zero() -> Self {
        SignalDescriptor {
            kind: SignalKind::Zero,
            smooth: true,
        }
    }

    pub fn step(at: f64, level: f64) -> Self {
        SignalDescriptor {
            kind: SignalKind::Step { at, level },
            smooth: false,
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        SignalDescriptor {
            kind: SignalKind::Polynomial { coeffs },
            smooth: true,
        }
    }

    pub fn constant(level: f64) -> Self {
        Self::polynomial(vec![level])
    }

    pub fn sinusoid(amp: f64, omega: f64, phase: f64) -> Self {
        SignalDescriptor {
            kind: SignalKind::Sinusoid { amp, omega, phase },
            smooth: true,
        }
    }

    pub fn sampled(h: HistoryFunction) -> Result<Self> {
        if h.dim() != 1 {
            return Err(Error::Config(format!(
                "sampled signal components are scalar, got dimension {}",
                h.dim()
            )));
        }
        Ok(SignalDescriptor {
            kind: SignalKind::Sampled(h),
            smooth: false,
        })
    }

    /// Marks a sampled signal as coming from a smooth source, unlocking its
    /// use where differentiability is required.
    pub fn assume_smooth(mut self) -> Self {
        self.smooth = true;
        self
    }

    /// Whether the signal is C^1 for `t > 0` with a trustworthy derivative.
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// Whether the signal extends continuously by zero across `t = 0`.
    pub fn vanishes_at_zero(&self) -> bool {
        self.value(0.0).abs() < 1e-12
    }

    /// Signal value; zero for `t < 0`.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.kind {
            SignalKind::Zero => 0.0,
            SignalKind::Step { at, level } => {
                if t >= *at {
                    *level
                } else {
                    0.0
                }
            }
            SignalKind::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
            SignalKind::Sinusoid { amp, omega, phase } => amp * (omega * t + phase).sin(),
            SignalKind::Sampled(h) => h.eval(t)[0],
        }
    }

    /// Derivative of the signal for `t > 0`; zero for `t < 0`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.kind {
            SignalKind::Zero | SignalKind::Step { .. } => 0.0,
            SignalKind::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (d, c)| acc * t + d as f64 * c),
            SignalKind::Sinusoid { amp, omega, phase } => amp * omega * (omega * t + phase).cos(),
            SignalKind::Sampled(h) => h.derivative(t)[0],
        }
    }

    /// Times in `(a, b)` where the signal is not smooth; integrators split
    /// quadrature windows there.
    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        if a < 0.0 && 0.0 < b {
            out.push(0.0);
        }
        if let SignalKind::Step { at, .. } = &self.kind {
            if a < *at && *at < b {
                out.push(*at);
            }
        }
    }
}

/// A vector-valued signal: one descriptor per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSignal {
    components: Vec<SignalDescriptor>,
}

impl VectorSignal {
    pub fn new(components: Vec<SignalDescriptor>) -> Self {
        VectorSignal { components }
    }

    /// Zero signal of the given width.
    pub fn zero(dim: usize) -> Self {
        VectorSignal {
            components: vec![SignalDescriptor::zero(); dim],
        }
    }

    /// One descriptor replicated across `dim` components.
    pub fn broadcast(d: SignalDescriptor, dim: usize) -> Self {
        VectorSignal {
            components: vec![d; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[SignalDescriptor] {
        &self.components
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.value(t)))
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.derivative(t)))
    }

    /// Fourth-order finite-difference derivative that never samples `t < 0`
    /// (one-sided near the origin), for descriptors without an exact
    /// derivative.
    pub fn derivative_fd(&self, t: f64, h: f64) -> DVector<f64> {
        let f = |s: f64| self.value(s);
        if t >= 2.0 * h {
            (f(t - 2.0 * h) - f(t - h) * 8.0 + f(t + h) * 8.0 - f(t + 2.0 * h)) / (12.0 * h)
        } else {
            // Forward one-sided stencil, also fourth order.
            (f(t) * -25.0 + f(t + h) * 48.0 - f(t + 2.0 * h) * 36.0 + f(t + 3.0 * h) * 16.0
                - f(t + 4.0 * h) * 3.0)
                / (12.0 * h)
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.components.iter().all(|c| c.is_smooth())
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.components.iter().all(|c| c.vanishes_at_zero())
    }

    /// Non-smooth times of any component within `(a, b)`, sorted.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.components {
            c.breakpoints(a, b, &mut out);
        }
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn signals_vanish_before_zero() {
        let s = SignalDescriptor::constant(4.0);
        assert_eq!(s.value(-0.001), 0.0);
        assert_eq!(s.value(0.0), 4.0);
        let w = SignalDescriptor::sinusoid(2.0, 3.0, 0.5);
        assert_eq!(w.value(-1.0), 0.0);
        assert_abs_diff_eq!(w.value(1.0), 2.0 * (3.5f64).sin(), epsilon = 1e-15);
    }

    #[test]
    fn polynomial_value_and_derivative() {
        let s = SignalDescriptor::polynomial(vec![1.0, -2.0, 3.0]);
        assert_abs_diff_eq!(s.value(2.0), 1.0 - 4.0 + 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.derivative(2.0), -2.0 + 12.0, epsilon = 1e-15);
    }

    #[test]
    fn step_is_flagged_non_smooth() {
        let s = SignalDescriptor::step(1.0, 2.0);
        assert!(!s.is_smooth());
        assert_eq!(s.value(0.999), 0.0);
        assert_eq!(s.value(1.0), 2.0);
        assert!(s.vanishes_at_zero());
        // A step at t <= 0 has a nonzero initial value.
        assert!(!SignalDescriptor::step(0.0, 2.0).vanishes_at_zero());
    }

    #[test]
    fn sinusoid_with_zero_phase_vanishes_at_zero() {
        assert!(SignalDescriptor::sinusoid(1.0, 2.0, 0.0).vanishes_at_zero());
        assert!(!SignalDescriptor::sinusoid(1.0, 2.0, 1.0).vanishes_at_zero());
    }

    #[test]
    fn finite_difference_matches_analytic_derivative() {
        let v = VectorSignal::broadcast(SignalDescriptor::sinusoid(1.0, 2.0, 0.0), 2);
        for &t in &[0.0, 0.001, 0.5, 3.0] {
            let fd = v.derivative_fd(t, 1e-3);
            let an = v.derivative(t);
            assert_abs_diff_eq!((fd - an).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn breakpoints_report_origin_and_steps() {
        let v = VectorSignal::new(vec![
            SignalDescriptor::step(0.5, 1.0),
            SignalDescriptor::sinusoid(1.0, 1.0, 0.0),
        ]);
        assert_eq!(v.breakpoints(-1.0, 1.0), vec![0.0, 0.5]);
        assert!(v.breakpoints(0.6, 1.0).is_empty());
    }
}
