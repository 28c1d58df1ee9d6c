//! Internal trivariate polynomial arithmetic.
//!
//! Operator composition multiplies kernels in `s` and `th` by kernels in
//! `th` and `eta`, then integrates out `th` between bounds that are
//! themselves `-1`, `0`, `s`, or `eta`. Every such term is a polynomial in
//! the three variables, so the whole calculation stays closed form. This
//! module provides the minimal arithmetic: products, sums, antiderivatives
//! in `th`, and substitution of a bound for `th`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{KernelVars, PolyKernel};

/// Integration bound for the middle variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Bound {
    Const(f64),
    S,
    Eta,
}

/// Matrix-valued polynomial in `(s, th, eta)`.
///
/// Coefficients are stored with index `(a * (dt + 1) + b) * (de + 1) + g`
/// for the monomial `s^a th^b eta^g`.
#[derive(Debug, Clone)]
pub(crate) struct MatPoly3 {
    rows: usize,
    cols: usize,
    ds: usize,
    dt: usize,
    de: usize,
    c: Vec<DMatrix<f64>>,
}

impl MatPoly3 {
    fn idx(&self, a: usize, b: usize, g: usize) -> usize {
        (a * (self.dt + 1) + b) * (self.de + 1) + g
    }

    fn with_degrees(rows: usize, cols: usize, ds: usize, dt: usize, de: usize) -> Self {
        MatPoly3 {
            rows,
            cols,
            ds,
            dt,
            de,
            c: vec![DMatrix::zeros(rows, cols); (ds + 1) * (dt + 1) * (de + 1)],
        }
    }

    /// Imports a one-variable kernel as a polynomial in the chosen variable:
    /// `var = 0` for `s`, `1` for `th`, `2` for `eta`.
    pub(crate) fn from_kernel1(k: &PolyKernel, var: usize) -> Self {
        debug_assert_eq!(k.vars(), KernelVars::One);
        let d = k.degree();
        let (ds, dt, de) = match var {
            0 => (d, 0, 0),
            1 => (0, d, 0),
            _ => (0, 0, d),
        };
        let mut out = Self::with_degrees(k.rows(), k.cols(), ds, dt, de);
        for (i, coef) in k.coeffs().iter().enumerate() {
            let pos = match var {
                0 => out.idx(i, 0, 0),
                1 => out.idx(0, i, 0),
                _ => out.idx(0, 0, i),
            };
            out.c[pos] = coef.clone();
        }
        out
    }

    /// Imports a two-variable kernel `k(x1, x2)` with the variable pair
    /// given as indices into `(s, th, eta)`, e.g. `(0, 1)` for `k(s, th)`.
    pub(crate) fn from_kernel2(k: &PolyKernel, v1: usize, v2: usize) -> Self {
        debug_assert_eq!(k.vars(), KernelVars::Two);
        debug_assert_ne!(v1, v2);
        let d = k.degree();
        let mut degs = [0usize; 3];
        degs[v1] = d;
        degs[v2] = d;
        let mut out = Self::with_degrees(k.rows(), k.cols(), degs[0], degs[1], degs[2]);
        let w = d + 1;
        for a in 0..w {
            for b in 0..w {
                let mut e = [0usize; 3];
                e[v1] = a;
                e[v2] = b;
                let pos = out.idx(e[0], e[1], e[2]);
                out.c[pos] = k.coeffs()[a * w + b].clone();
            }
        }
        out
    }

    /// Matrix product; degrees add in every variable.
    pub(crate) fn mul(&self, other: &MatPoly3) -> Result<MatPoly3> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "polynomial product right factor",
                (other.rows, other.cols),
                (self.cols, other.cols),
            ));
        }
        let mut out = Self::with_degrees(
            self.rows,
            other.cols,
            self.ds + other.ds,
            self.dt + other.dt,
            self.de + other.de,
        );
        for a1 in 0..=self.ds {
            for b1 in 0..=self.dt {
                for g1 in 0..=self.de {
                    let lhs = &self.c[self.idx(a1, b1, g1)];
                    if lhs.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    for a2 in 0..=other.ds {
                        for b2 in 0..=other.dt {
                            for g2 in 0..=other.de {
                                let rhs = &other.c[other.idx(a2, b2, g2)];
                                let pos = out.idx(a1 + a2, b1 + b2, g1 + g2);
                                out.c[pos] += lhs * rhs;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn add(&self, other: &MatPoly3) -> MatPoly3 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = Self::with_degrees(
            self.rows,
            self.cols,
            self.ds.max(other.ds),
            self.dt.max(other.dt),
            self.de.max(other.de),
        );
        for src in [self, other] {
            for a in 0..=src.ds {
                for b in 0..=src.dt {
                    for g in 0..=src.de {
                        let pos = out.idx(a, b, g);
                        out.c[pos] += &src.c[src.idx(a, b, g)];
                    }
                }
            }
        }
        out
    }

    /// Antiderivative in `th` with zero constant term.
    fn antiderivative_th(&self) -> MatPoly3 {
        let mut out = Self::with_degrees(self.rows, self.cols, self.ds, self.dt + 1, self.de);
        for a in 0..=self.ds {
            for b in 0..=self.dt {
                for g in 0..=self.de {
                    let pos = out.idx(a, b + 1, g);
                    out.c[pos] = &self.c[self.idx(a, b, g)] / (b as f64 + 1.0);
                }
            }
        }
        out
    }

    /// Substitutes a bound for `th`; the result has `th`-degree zero.
    fn subst_th(&self, bound: Bound) -> MatPoly3 {
        match bound {
            Bound::Const(cval) => {
                let mut out = Self::with_degrees(self.rows, self.cols, self.ds, 0, self.de);
                for a in 0..=self.ds {
                    for g in 0..=self.de {
                        let mut acc = DMatrix::zeros(self.rows, self.cols);
                        let mut pw = 1.0;
                        for b in 0..=self.dt {
                            acc += &self.c[self.idx(a, b, g)] * pw;
                            pw *= cval;
                        }
                        let pos = out.idx(a, 0, g);
                        out.c[pos] = acc;
                    }
                }
                out
            }
            Bound::S => {
                let mut out =
                    Self::with_degrees(self.rows, self.cols, self.ds + self.dt, 0, self.de);
                for a in 0..=self.ds {
                    for b in 0..=self.dt {
                        for g in 0..=self.de {
                            let pos = out.idx(a + b, 0, g);
                            out.c[pos] += &self.c[self.idx(a, b, g)];
                        }
                    }
                }
                out
            }
            Bound::Eta => {
                let mut out =
                    Self::with_degrees(self.rows, self.cols, self.ds, 0, self.de + self.dt);
                for a in 0..=self.ds {
                    for b in 0..=self.dt {
                        for g in 0..=self.de {
                            let pos = out.idx(a, 0, g + b);
                            out.c[pos] += &self.c[self.idx(a, b, g)];
                        }
                    }
                }
                out
            }
        }
    }

    /// Definite integral over `th` from `lower` to `upper`, closed form.
    pub(crate) fn integrate_th(&self, lower: Bound, upper: Bound) -> MatPoly3 {
        let f = self.antiderivative_th();
        let hi = f.subst_th(upper);
        let lo = f.subst_th(lower);
        hi.add(&lo.neg())
    }

    fn neg(&self) -> MatPoly3 {
        let mut out = self.clone();
        for c in &mut out.c {
            *c = -c.clone();
        }
        out
    }

    /// Exports as a two-variable kernel in `(s, eta)`. Requires `th`-degree
    /// zero (i.e. `th` has been integrated out).
    pub(crate) fn into_kernel_se(self) -> PolyKernel {
        debug_assert_eq!(self.dt, 0);
        let deg = self.ds.max(self.de);
        let w = deg + 1;
        let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); w * w];
        for a in 0..=self.ds {
            for g in 0..=self.de {
                coeffs[a * w + g] = self.c[self.idx(a, 0, g)].clone();
            }
        }
        PolyKernel::from_coeffs2(deg, coeffs).expect("shape-consistent by construction")
    }

    /// Exports as a one-variable kernel in `s` (requires `th`/`eta` degree 0).
    pub(crate) fn into_kernel_s(self) -> PolyKernel {
        debug_assert_eq!(self.dt, 0);
        debug_assert_eq!(self.de, 0);
        let mut coeffs = Vec::with_capacity(self.ds + 1);
        for a in 0..=self.ds {
            coeffs.push(self.c[self.idx(a, 0, 0)].clone());
        }
        PolyKernel::from_coeffs(coeffs).expect("shape-consistent by construction")
    }

    /// Exports as a one-variable kernel in `eta` (requires `s`/`th` degree 0).
    pub(crate) fn into_kernel_eta(self) -> PolyKernel {
        debug_assert_eq!(self.ds, 0);
        debug_assert_eq!(self.dt, 0);
        let mut coeffs = Vec::with_capacity(self.de + 1);
        for g in 0..=self.de {
            coeffs.push(self.c[self.idx(0, 0, g)].clone());
        }
        PolyKernel::from_coeffs(coeffs).expect("shape-consistent by construction")
    }

    /// Evaluates at a concrete point (test support).
    #[cfg(test)]
    pub(crate) fn eval(&self, s: f64, th: f64, eta: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for a in 0..=self.ds {
            for b in 0..=self.dt {
                for g in 0..=self.de {
                    acc += &self.c[self.idx(a, b, g)]
                        * (s.powi(a as i32) * th.powi(b as i32) * eta.powi(g as i32));
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn k1(coeffs: &[f64]) -> PolyKernel {
        PolyKernel::from_coeffs(coeffs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect())
            .unwrap()
    }

    #[test]
    fn product_matches_pointwise() {
        // a(s, th) from a 1-var kernel in s times b(th) in th.
        let a = MatPoly3::from_kernel1(&k1(&[1.0, 2.0]), 0); // 1 + 2s
        let b = MatPoly3::from_kernel1(&k1(&[-1.0, 0.0, 3.0]), 1); // -1 + 3 th^2
        let p = a.mul(&b).unwrap();
        for &(s, th) in &[(-0.3, -0.8), (0.0, -1.0), (-1.0, 0.0)] {
            let want = (1.0 + 2.0 * s) * (-1.0 + 3.0 * th * th);
            assert_abs_diff_eq!(p.eval(s, th, 0.0)[(0, 0)], want, epsilon = 1e-14);
        }
    }

    #[test]
    fn integrate_th_with_variable_bounds() {
        // f(th) = th; \int_eta^s th dth = (s^2 - eta^2) / 2.
        let f = MatPoly3::from_kernel1(&k1(&[0.0, 1.0]), 1);
        let g = f.integrate_th(Bound::Eta, Bound::S);
        for &(s, eta) in &[(-0.2, -0.9), (0.0, -1.0), (-0.5, -0.5)] {
            let want = (s * s - eta * eta) / 2.0;
            assert_abs_diff_eq!(g.eval(s, 0.0, eta)[(0, 0)], want, epsilon = 1e-14);
        }
    }

    #[test]
    fn integrate_th_with_constant_bounds() {
        // f(s, th) = s * th^2; \int_{-1}^{0} f dth = s / 3.
        let s_part = MatPoly3::from_kernel1(&k1(&[0.0, 1.0]), 0);
        let th_part = MatPoly3::from_kernel1(&k1(&[0.0, 0.0, 1.0]), 1);
        let f = s_part.mul(&th_part).unwrap();
        let g = f.integrate_th(Bound::Const(-1.0), Bound::Const(0.0));
        for &s in &[-1.0, -0.4, 0.0] {
            assert_abs_diff_eq!(g.eval(s, 0.0, 0.0)[(0, 0)], s / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn kernel_round_trip_through_poly3() {
        let z = DMatrix::zeros(1, 1);
        let one = DMatrix::from_element(1, 1, 1.0);
        // k(s, th) = s*th as a kernel, imported as (s, eta), exported back.
        let k = PolyKernel::from_coeffs2(1, vec![z.clone(), z.clone(), z, one]).unwrap();
        let p = MatPoly3::from_kernel2(&k, 0, 2);
        let back = p.into_kernel_se();
        for &(s, e) in &[(-0.7, -0.2), (-1.0, -1.0)] {
            assert_abs_diff_eq!(back.eval2(s, e)[(0, 0)], s * e, epsilon = 1e-14);
        }
    }
}
