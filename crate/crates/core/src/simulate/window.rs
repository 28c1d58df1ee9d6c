//! Sliding-window moments for distributed-delay terms.
//!
//! A distributed term `\int_{-tau}^{0} K(s) g(t + s) ds` with polynomial `K`
//! equals `sum_d C_d tau^d m_d(t)` where
//! `m_d(t) = \int_{t-tau}^{t} ((a - t) / tau)^d g(a) da` are normalized
//! moments of the signal over the trailing window. The moments are advanced
//! incrementally: recenter by a binomial shift, add the head sliver, drop the
//! tail sliver. This costs `O(deg)` quadrature panels per step instead of
//! re-integrating the whole window, and is algebraically identical to direct
//! quadrature of the stored interpolant.

use nalgebra::DVector;

use crate::kernel::PolyKernel;
use crate::quad::{gauss_legendre_on, gauss_nodes_for_degree};

pub(crate) struct MomentWindow {
    tau: f64,
    dim: usize,
    /// Current center (= the time the moments refer to).
    center: f64,
    /// `m_d`, `d = 0..=deg`, each of dimension `dim`.
    moments: Vec<DVector<f64>>,
    /// Gauss nodes per sliver panel.
    g: usize,
}

impl Clone for MomentWindow {
    fn clone(&self) -> Self {
        MomentWindow {
            tau: self.tau,
            dim: self.dim,
            center: self.center,
            moments: self.moments.clone(),
            g: self.g,
        }
    }
}

impl MomentWindow {
    /// Initializes the moments at `center` by panel quadrature over
    /// `[center - tau, center]`, splitting at the supplied knots.
    pub fn init(
        deg: usize,
        tau: f64,
        dim: usize,
        center: f64,
        knots: &[f64],
        sampler: &mut dyn FnMut(f64) -> DVector<f64>,
    ) -> Self {
        let g = gauss_nodes_for_degree(deg + 3);
        let mut w = MomentWindow {
            tau,
            dim,
            center,
            moments: vec![DVector::zeros(dim); deg + 1],
            g,
        };
        let mut panel_edges = vec![center - tau];
        panel_edges.extend(knots.iter().copied().filter(|&k| k > center - tau && k < center));
        panel_edges.push(center);
        for pair in panel_edges.windows(2) {
            w.accumulate_sliver(pair[0], pair[1], 1.0, sampler);
        }
        w
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Adds `sign * \int_a^b ((x - center)/tau)^d g(x) dx` to every moment.
    fn accumulate_sliver(
        &mut self,
        a: f64,
        b: f64,
        sign: f64,
        sampler: &mut dyn FnMut(f64) -> DVector<f64>,
    ) {
        if b - a < 1e-15 {
            return;
        }
        let rule = gauss_legendre_on(self.g, a, b);
        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let gval = sampler(x);
            let base = (x - self.center) / self.tau;
            let mut pow = 1.0;
            for m in self.moments.iter_mut() {
                *m += &gval * (sign * wt * pow);
                pow *= base;
            }
        }
    }

    /// Moves the window and its center from `center` to `to`, sampling the
    /// signal for the head sliver `[center, to]` and the tail sliver
    /// `[center - tau, to - tau]`. `knots_fn(a, b)` must return the
    /// interpolant/signal breakpoints strictly inside `(a, b)` so slivers can
    /// split there.
    pub fn advance(
        &mut self,
        to: f64,
        knots_fn: &dyn Fn(f64, f64) -> Vec<f64>,
        sampler: &mut dyn FnMut(f64) -> DVector<f64>,
    ) {
        let delta = to - self.center;
        if delta == 0.0 {
            return;
        }
        let deg = self.moments.len() - 1;
        // Recenter: ((a - to)/tau)^d = sum_k C(d,k) ((a-c)/tau)^k (-delta/tau)^{d-k}.
        let z = -delta / self.tau;
        let mut new_moments = vec![DVector::zeros(self.dim); deg + 1];
        for (d, nm) in new_moments.iter_mut().enumerate() {
            let mut binom = 1.0f64;
            // k runs downward so the binomial coefficient updates cheaply.
            for k in (0..=d).rev() {
                let zpow = z.powi((d - k) as i32);
                *nm += &self.moments[k] * (binom * zpow);
                binom *= k as f64 / (d - k + 1) as f64;
            }
        }
        self.moments = new_moments;
        let old_center = self.center;
        self.center = to;
        // Head sliver [old_center, to] enters, tail [old_center - tau, to - tau] leaves.
        for (lo, hi, sign) in [
            (old_center, to, 1.0),
            (old_center - self.tau, to - self.tau, -1.0),
        ] {
            let mut edges = vec![lo];
            edges.extend(knots_fn(lo, hi).into_iter().filter(|&k| k > lo && k < hi));
            edges.push(hi);
            for w in edges.windows(2) {
                self.accumulate_sliver(w[0], w[1], sign, sampler);
            }
        }
    }

    /// `\int_{-tau}^{0} K(s) g(center + s) ds = sum_d C_d tau^d m_d`.
    pub fn eval(&self, kernel: &PolyKernel) -> DVector<f64> {
        let mut out = DVector::zeros(kernel.rows());
        let mut tpow = 1.0;
        for (d, c) in kernel.coeffs().iter().enumerate() {
            if d < self.moments.len() {
                out += c * &self.moments[d] * tpow;
            }
            tpow *= self.tau;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    fn poly_sig(t: f64) -> DVector<f64> {
        dvector![2.0 - t + 0.5 * t * t * t]
    }

    fn reference(kernel: &PolyKernel, tau: f64, t: f64) -> f64 {
        // High-resolution quadrature of \int_{-tau}^0 K(s) g(t+s) ds.
        let rule = gauss_legendre_on(24, -tau, 0.0);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| kernel.eval1(s)[(0, 0)] * poly_sig(t + s)[0] * w)
            .sum()
    }

    #[test]
    fn window_matches_direct_quadrature_after_many_steps() {
        let kernel = PolyKernel::from_coeffs(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -0.7),
            DMatrix::from_element(1, 1, 0.3),
        ])
        .unwrap();
        let tau = 0.8;
        let mut sampler = |t: f64| poly_sig(t);
        let mut w = MomentWindow::init(kernel.degree(), tau, 1, 0.0, &[], &mut sampler);
        assert_abs_diff_eq!(w.eval(&kernel)[0], reference(&kernel, tau, 0.0), epsilon = 1e-12);
        let dt = 0.05;
        for k in 1..=200 {
            w.advance(k as f64 * dt, &|_, _| Vec::new(), &mut sampler);
        }
        assert_abs_diff_eq!(
            w.eval(&kernel)[0],
            reference(&kernel, tau, 10.0),
            epsilon = 1e-10
        );
    }

    #[test]
    fn half_step_peek_and_commit_agree_with_restart() {
        let kernel =
            PolyKernel::from_coeffs(vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0)])
                .unwrap();
        let tau = 0.5;
        let mut sampler = |t: f64| poly_sig(t);
        let mut w = MomentWindow::init(kernel.degree(), tau, 1, 0.0, &[], &mut sampler);
        // Peek at a half step without committing.
        let mut peek = w.clone();
        peek.advance(0.025, &|_, _| Vec::new(), &mut sampler);
        assert_abs_diff_eq!(
            peek.eval(&kernel)[0],
            reference(&kernel, tau, 0.025),
            epsilon = 1e-12
        );
        // Committing in several uneven hops reaches the same state as init there.
        for &t in &[0.05, 0.1, 0.2, 0.35] {
            w.advance(t, &|_, _| Vec::new(), &mut sampler);
        }
        let fresh = MomentWindow::init(kernel.degree(), tau, 1, 0.35, &[], &mut sampler);
        assert_abs_diff_eq!(w.eval(&kernel)[0], fresh.eval(&kernel)[0], epsilon = 1e-12);
    }

    #[test]
    fn slivers_split_at_knots() {
        // Piecewise signal: knot at t = 0 must be honored for exactness.
        let kernel = PolyKernel::from_coeffs(vec![DMatrix::from_element(1, 1, 1.0)]).unwrap();
        let kink = |t: f64| dvector![if t < 0.0 { 0.0 } else { t }];
        let mut sampler = |t: f64| kink(t);
        let tau = 1.0;
        let mut w = MomentWindow::init(0, tau, 1, 0.5, &[0.0], &mut sampler);
        // \int_{-0.5}^{0.5} max(0, a) da = 0.125.
        assert_abs_diff_eq!(w.eval(&kernel)[0], 0.125, epsilon = 1e-13);
        w.advance(0.75, &|_, _| vec![0.0], &mut sampler);
        // \int_{-0.25}^{0.75} max(0, a) da = 0.28125.
        assert_abs_diff_eq!(w.eval(&kernel)[0], 0.28125, epsilon = 1e-13);
    }
}
