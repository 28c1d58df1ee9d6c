//! Matrix-valued polynomial kernels in one or two variables.
//!
//! Distributed-delay blocks and PI-operator blocks are polynomials with dense
//! matrix coefficients. One-variable kernels `k(s)` represent distributed
//! delay weights and the `Q1/Q2/R0` blocks of a PI operator; two-variable
//! kernels `k(s, th)` represent the `R1/R2` blocks. All kernel algebra used
//! by the conversions (products, antiderivatives, variable scaling, definite
//! integrals) is closed form, so conversions introduce no quadrature error.
//!
//! Degrees grow under composition: a product of degree-`a` and degree-`b`
//! kernels has degree `a + b`, and an antiderivative raises the degree by
//! one. Operations that accept externally supplied data enforce a degree cap
//! ([`DEFAULT_DEGREE_CAP`] unless the caller overrides it) and refuse, rather
//! than truncate, results beyond it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default maximum polynomial degree accepted from external data and allowed
/// as the result of an operator composition.
pub const DEFAULT_DEGREE_CAP: usize = 8;

/// Number of formal variables of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVars {
    /// `k(s)`
    One,
    /// `k(s, th)`
    Two,
}

/// A matrix-valued polynomial kernel.
///
/// One-variable kernels store `deg + 1` coefficient matrices indexed by
/// monomial degree: `k(s) = sum_d coeffs[d] * s^d`. Two-variable kernels
/// store `(deg + 1)^2` matrices in `s`-major order:
/// `k(s, th) = sum_{a,b} coeffs[a * (deg + 1) + b] * s^a * th^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyKernel {
    rows: usize,
    cols: usize,
    deg: usize,
    vars: KernelVars,
    coeffs: Vec<DMatrix<f64>>,
}

impl PolyKernel {
    /// Zero one-variable kernel of the given shape.
    pub fn zero(rows: usize, cols: usize) -> Self {
        PolyKernel {
            rows,
            cols,
            deg: 0,
            vars: KernelVars::One,
            coeffs: vec![DMatrix::zeros(rows, cols)],
        }
    }

    /// Zero two-variable kernel of the given shape.
    pub fn zero2(rows: usize, cols: usize) -> Self {
        PolyKernel {
            rows,
            cols,
            deg: 0,
            vars: KernelVars::Two,
            coeffs: vec![DMatrix::zeros(rows, cols)],
        }
    }

    /// Degree-zero one-variable kernel equal to a constant matrix.
    pub fn constant(m: DMatrix<f64>) -> Self {
        PolyKernel {
            rows: m.nrows(),
            cols: m.ncols(),
            deg: 0,
            vars: KernelVars::One,
            coeffs: vec![m],
        }
    }

    /// Degree-zero two-variable kernel equal to a constant matrix.
    pub fn constant2(m: DMatrix<f64>) -> Self {
        PolyKernel {
            rows: m.nrows(),
            cols: m.ncols(),
            deg: 0,
            vars: KernelVars::Two,
            coeffs: vec![m],
        }
    }

    /// Builds a one-variable kernel from coefficient matrices indexed by
    /// degree. All matrices must share one shape and contain finite entries.
    pub fn from_coeffs(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::from_parts(KernelVars::One, coeffs)
    }

    /// Builds a two-variable kernel of degree `deg` from `(deg + 1)^2`
    /// coefficient matrices in `s`-major order.
    pub fn from_coeffs2(deg: usize, coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if coeffs.len() != (deg + 1) * (deg + 1) {
            return Err(Error::Config(format!(
                "two-variable kernel of degree {} needs {} coefficient matrices, got {}",
                deg,
                (deg + 1) * (deg + 1),
                coeffs.len()
            )));
        }
        let mut k = Self::from_parts(KernelVars::Two, coeffs)?;
        k.deg = deg;
        Ok(k)
    }

    fn from_parts(vars: KernelVars, coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::Config("kernel needs at least one coefficient".into()))?;
        let (rows, cols) = (first.nrows(), first.ncols());
        for (d, c) in coeffs.iter().enumerate() {
            if c.nrows() != rows || c.ncols() != cols {
                return Err(Error::dim(
                    format!("kernel coefficient {d}"),
                    (c.nrows(), c.ncols()),
                    (rows, cols),
                ));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!(
                    "kernel coefficient {d} contains a non-finite entry"
                )));
            }
        }
        let deg = coeffs.len() - 1;
        Ok(PolyKernel {
            rows,
            cols,
            deg,
            vars,
            coeffs,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn vars(&self) -> KernelVars {
        self.vars
    }

    /// Coefficient matrices in storage order (degree order for one variable,
    /// `s`-major for two variables).
    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Coefficient of `s^d` (one-variable kernels only).
    pub fn coeff(&self, d: usize) -> &DMatrix<f64> {
        debug_assert_eq!(self.vars, KernelVars::One);
        &self.coeffs[d]
    }

    /// True when every coefficient entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.iter().all(|&x| x == 0.0))
    }

    /// Errors when this kernel's degree exceeds `cap`.
    pub fn check_degree_cap(&self, cap: usize, context: &str) -> Result<()> {
        if self.deg > cap {
            Err(Error::DegreeCap {
                degree: self.deg,
                cap,
                context: context.to_string(),
            })
        } else {
            Ok(())
        }
    }

    /// Drops trailing zero coefficients so the stored degree is minimal.
    pub fn trim(mut self) -> Self {
        match self.vars {
            KernelVars::One => {
                while self.deg > 0 && self.coeffs[self.deg].iter().all(|&x| x == 0.0) {
                    self.coeffs.pop();
                    self.deg -= 1;
                }
            }
            KernelVars::Two => {
                while self.deg > 0 {
                    let d = self.deg;
                    let w = d + 1;
                    // The top layer consists of coefficients with s-degree d
                    // or th-degree d.
                    let top_zero = (0..w).all(|b| {
                        self.coeffs[d * w + b].iter().all(|&x| x == 0.0)
                            && self.coeffs[b * w + d].iter().all(|&x| x == 0.0)
                    });
                    if !top_zero {
                        break;
                    }
                    let nw = d;
                    let mut next = Vec::with_capacity(nw * nw);
                    for a in 0..nw {
                        for b in 0..nw {
                            next.push(self.coeffs[a * w + b].clone());
                        }
                    }
                    self.coeffs = next;
                    self.deg -= 1;
                }
            }
        }
        self
    }

    /// Evaluates a one-variable kernel at `s` (Horner form).
    pub fn eval1(&self, s: f64) -> DMatrix<f64> {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut acc = self.coeffs[self.deg].clone();
        for d in (0..self.deg).rev() {
            acc *= s;
            acc += &self.coeffs[d];
        }
        acc
    }

    /// Evaluates a two-variable kernel at `(s, th)`.
    pub fn eval2(&self, s: f64, th: f64) -> DMatrix<f64> {
        debug_assert_eq!(self.vars, KernelVars::Two);
        let w = self.deg + 1;
        // Horner in s over inner Horner in th.
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for a in (0..w).rev() {
            let mut inner = self.coeffs[a * w + self.deg].clone();
            for b in (0..self.deg).rev() {
                inner *= th;
                inner += &self.coeffs[a * w + b];
            }
            acc *= s;
            acc += inner;
        }
        acc
    }

    /// Evaluates at a point, checking arity and that every coordinate lies in
    /// `[lo, hi]`.
    pub fn eval_checked(&self, point: &[f64], lo: f64, hi: f64) -> Result<DMatrix<f64>> {
        let need = match self.vars {
            KernelVars::One => 1,
            KernelVars::Two => 2,
        };
        if point.len() != need {
            return Err(Error::Config(format!(
                "kernel takes {need} coordinate(s), got {}",
                point.len()
            )));
        }
        if point.iter().any(|&x| !(lo..=hi).contains(&x)) {
            return Err(Error::OutOfDomain {
                point: point.to_vec(),
                lo,
                hi,
            });
        }
        Ok(match self.vars {
            KernelVars::One => self.eval1(point[0]),
            KernelVars::Two => self.eval2(point[0], point[1]),
        })
    }

    /// Sum of two kernels with matching shape and arity.
    pub fn add(&self, other: &PolyKernel) -> Result<PolyKernel> {
        if self.vars != other.vars {
            return Err(Error::Config(
                "cannot add kernels with different arities".into(),
            ));
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(
                "kernel sum",
                (other.rows, other.cols),
                (self.rows, self.cols),
            ));
        }
        let deg = self.deg.max(other.deg);
        match self.vars {
            KernelVars::One => {
                let mut coeffs = Vec::with_capacity(deg + 1);
                for d in 0..=deg {
                    let mut c = DMatrix::zeros(self.rows, self.cols);
                    if d <= self.deg {
                        c += &self.coeffs[d];
                    }
                    if d <= other.deg {
                        c += &other.coeffs[d];
                    }
                    coeffs.push(c);
                }
                Ok(PolyKernel {
                    rows: self.rows,
                    cols: self.cols,
                    deg,
                    vars: KernelVars::One,
                    coeffs,
                })
            }
            KernelVars::Two => {
                let w = deg + 1;
                let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); w * w];
                for src in [self, other] {
                    let sw = src.deg + 1;
                    for a in 0..sw {
                        for b in 0..sw {
                            coeffs[a * w + b] += &src.coeffs[a * sw + b];
                        }
                    }
                }
                Ok(PolyKernel {
                    rows: self.rows,
                    cols: self.cols,
                    deg,
                    vars: KernelVars::Two,
                    coeffs,
                })
            }
        }
    }

    /// Scales every coefficient by `f`.
    pub fn scale(&self, f: f64) -> PolyKernel {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= f;
        }
        out
    }

    /// Left matrix product `m * k`.
    pub fn mul_matrix_left(&self, m: &DMatrix<f64>) -> Result<PolyKernel> {
        if m.ncols() != self.rows {
            return Err(Error::dim(
                "left factor",
                (m.nrows(), m.ncols()),
                (m.nrows(), self.rows),
            ));
        }
        Ok(PolyKernel {
            rows: m.nrows(),
            cols: self.cols,
            deg: self.deg,
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|c| m * c).collect(),
        })
    }

    /// Right matrix product `k * m`.
    pub fn mul_matrix_right(&self, m: &DMatrix<f64>) -> Result<PolyKernel> {
        if self.cols != m.nrows() {
            return Err(Error::dim(
                "right factor",
                (m.nrows(), m.ncols()),
                (self.cols, m.ncols()),
            ));
        }
        Ok(PolyKernel {
            rows: self.rows,
            cols: m.ncols(),
            deg: self.deg,
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|c| c * m).collect(),
        })
    }

    /// Matrix product of two one-variable kernels (degrees add).
    pub fn mul_kernel(&self, other: &PolyKernel) -> Result<PolyKernel> {
        debug_assert_eq!(self.vars, KernelVars::One);
        debug_assert_eq!(other.vars, KernelVars::One);
        if self.cols != other.rows {
            return Err(Error::dim(
                "kernel product right factor",
                (other.rows, other.cols),
                (self.cols, other.cols),
            ));
        }
        let deg = self.deg + other.deg;
        let mut coeffs = vec![DMatrix::zeros(self.rows, other.cols); deg + 1];
        for (a, ca) in self.coeffs.iter().enumerate() {
            for (b, cb) in other.coeffs.iter().enumerate() {
                coeffs[a + b] += ca * cb;
            }
        }
        Ok(PolyKernel {
            rows: self.rows,
            cols: other.cols,
            deg,
            vars: KernelVars::One,
            coeffs,
        })
    }

    /// Lifts a one-variable kernel `k(.)` to a two-variable kernel constant
    /// in `s`: `K(s, th) = k(th)`.
    pub fn promote_theta(&self) -> PolyKernel {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); (self.deg + 1) * (self.deg + 1)];
        for (b, c) in self.coeffs.iter().enumerate() {
            coeffs[b] = c.clone(); // s-degree 0 row
        }
        PolyKernel {
            rows: self.rows,
            cols: self.cols,
            deg: self.deg,
            vars: KernelVars::Two,
            coeffs,
        }
    }

    /// Lifts a one-variable kernel to a two-variable kernel constant in the
    /// second variable: `K(s, th) = k(s)`.
    pub fn promote_s(&self) -> PolyKernel {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); (self.deg + 1) * (self.deg + 1)];
        for (a, c) in self.coeffs.iter().enumerate() {
            coeffs[a * (self.deg + 1)] = c.clone();
        }
        PolyKernel {
            rows: self.rows,
            cols: self.cols,
            deg: self.deg,
            vars: KernelVars::Two,
            coeffs,
        }
    }

    /// Substitutes `s -> c * s` in a one-variable kernel.
    pub fn scale_var(&self, c: f64) -> PolyKernel {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut out = self.clone();
        let mut pow = 1.0;
        for d in 0..=out.deg {
            out.coeffs[d] *= pow;
            pow *= c;
        }
        out
    }

    /// Antiderivative `K(s) = \int_{lower}^{s} k(u) du` of a one-variable
    /// kernel; the degree rises by one.
    pub fn antiderivative_from(&self, lower: f64) -> PolyKernel {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut coeffs = Vec::with_capacity(self.deg + 2);
        let mut at_lower = DMatrix::zeros(self.rows, self.cols);
        coeffs.push(DMatrix::zeros(self.rows, self.cols));
        for (d, c) in self.coeffs.iter().enumerate() {
            let integrated = c / (d as f64 + 1.0);
            at_lower += &integrated * lower.powi(d as i32 + 1);
            coeffs.push(integrated);
        }
        coeffs[0] = -at_lower;
        PolyKernel {
            rows: self.rows,
            cols: self.cols,
            deg: self.deg + 1,
            vars: KernelVars::One,
            coeffs,
        }
    }

    /// Closed-form `\int_a^b k(s) ds` of a one-variable kernel.
    pub fn definite_integral(&self, a: f64, b: f64) -> DMatrix<f64> {
        debug_assert_eq!(self.vars, KernelVars::One);
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (d, c) in self.coeffs.iter().enumerate() {
            let p = d as i32 + 1;
            out += c * ((b.powi(p) - a.powi(p)) / p as f64);
        }
        out
    }

    /// Vertical stack of one-variable kernels with equal column counts.
    pub fn vstack(parts: &[&PolyKernel]) -> Result<PolyKernel> {
        let cols = parts
            .first()
            .ok_or_else(|| Error::Config("vstack of zero kernels".into()))?
            .cols;
        let deg = parts.iter().map(|k| k.deg).max().unwrap();
        let rows: usize = parts.iter().map(|k| k.rows).sum();
        let mut coeffs = vec![DMatrix::zeros(rows, cols); deg + 1];
        let mut row0 = 0;
        for k in parts {
            debug_assert_eq!(k.vars, KernelVars::One);
            if k.cols != cols {
                return Err(Error::dim("vstack block", (k.rows, k.cols), (k.rows, cols)));
            }
            for (d, c) in k.coeffs.iter().enumerate() {
                coeffs[d].view_mut((row0, 0), (k.rows, cols)).copy_from(c);
            }
            row0 += k.rows;
        }
        Ok(PolyKernel {
            rows,
            cols,
            deg,
            vars: KernelVars::One,
            coeffs,
        })
    }

    /// Horizontal stack of one-variable kernels with equal row counts.
    pub fn hstack(parts: &[&PolyKernel]) -> Result<PolyKernel> {
        let rows = parts
            .first()
            .ok_or_else(|| Error::Config("hstack of zero kernels".into()))?
            .rows;
        let deg = parts.iter().map(|k| k.deg).max().unwrap();
        let cols: usize = parts.iter().map(|k| k.cols).sum();
        let mut coeffs = vec![DMatrix::zeros(rows, cols); deg + 1];
        let mut col0 = 0;
        for k in parts {
            debug_assert_eq!(k.vars, KernelVars::One);
            if k.rows != rows {
                return Err(Error::dim("hstack block", (k.rows, k.cols), (rows, k.cols)));
            }
            for (d, c) in k.coeffs.iter().enumerate() {
                coeffs[d].view_mut((0, col0), (rows, k.cols)).copy_from(c);
            }
            col0 += k.cols;
        }
        Ok(PolyKernel {
            rows,
            cols,
            deg,
            vars: KernelVars::One,
            coeffs,
        })
    }

    /// Extracts a contiguous row range as a new kernel.
    pub fn row_block(&self, start: usize, count: usize) -> PolyKernel {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.view((start, 0), (count, self.cols)).into_owned())
            .collect();
        PolyKernel {
            rows: count,
            cols: self.cols,
            deg: self.deg,
            vars: self.vars,
            coeffs,
        }
    }

    /// Extracts a contiguous column range as a new kernel.
    pub fn col_block(&self, start: usize, count: usize) -> PolyKernel {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.view((0, start), (self.rows, count)).into_owned())
            .collect();
        PolyKernel {
            rows: self.rows,
            cols: count,
            deg: self.deg,
            vars: self.vars,
            coeffs,
        }
    }

    /// Largest absolute coefficient entry; a cheap magnitude estimate.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, &x| m.max(x.abs()))
    }
}
