//! Partial-integral (PI) operators on `R^a x L2[-1,0]^b`.
//!
//! A PI operator maps a hybrid vector `(x, Phi)` with finite part `x` and
//! function part `Phi` to another hybrid vector via
//!
//! ```text
//! finite out     = P x + \int_{-1}^{0} Q1(s) Phi(s) ds
//! function out(s) = Q2(s) x + R0(s) Phi(s)
//!                 + \int_{-1}^{s} R1(s, th) Phi(th) dth
//!                 + \int_{s}^{0} R2(s, th) Phi(th) dth
//! ```
//!
//! with polynomial blocks. The class is closed under addition, scaling, and
//! composition; composition is computed symbolically (polynomial arithmetic,
//! no quadrature), so composed operators are exact. Discretization collocates
//! the function part on a Chebyshev–Gauss–Lobatto grid and is exact on
//! polynomial data once the grid resolves the total degree.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::HistoryFunction;
use crate::kernel::{KernelVars, PolyKernel, DEFAULT_DEGREE_CAP};
use crate::poly3::{Bound, MatPoly3};
use crate::quad::{
    chebyshev_lobatto, gauss_legendre_on, gauss_nodes_for_degree, lagrange_basis_at,
    lagrange_moments, lobatto_barycentric_weights,
};

/// One component of the function part of a [`HybridVector`].
#[derive(Debug, Clone)]
pub enum FunctionPart {
    /// Polynomial data: a one-variable column kernel on `[-1, 0]`.
    Poly(PolyKernel),
    /// Sampled data interpolated cubically on `[-1, 0]`.
    Sampled(HistoryFunction),
}

impl FunctionPart {
    pub fn dim(&self) -> usize {
        match self {
            FunctionPart::Poly(k) => k.rows(),
            FunctionPart::Sampled(h) => h.dim(),
        }
    }

    pub fn eval(&self, s: f64) -> DVector<f64> {
        match self {
            FunctionPart::Poly(k) => DVector::from_column_slice(k.eval1(s).as_slice()),
            FunctionPart::Sampled(h) => h.eval(s),
        }
    }
}

/// An element of `R^a x L2[-1,0]^b`.
#[derive(Debug, Clone)]
pub struct HybridVector {
    finite: DVector<f64>,
    parts: Vec<FunctionPart>,
}

impl HybridVector {
    pub fn new(finite: DVector<f64>, parts: Vec<FunctionPart>) -> Result<Self> {
        for (i, part) in parts.iter().enumerate() {
            if let FunctionPart::Poly(k) = part {
                if k.cols() != 1 || k.vars() != KernelVars::One {
                    return Err(Error::Config(format!(
                        "function part {i} must be a one-variable column kernel"
                    )));
                }
            }
        }
        Ok(HybridVector { finite, parts })
    }

    /// Purely finite vector (empty function part).
    pub fn from_finite(finite: DVector<f64>) -> Self {
        HybridVector {
            finite,
            parts: Vec::new(),
        }
    }

    pub fn finite(&self) -> &DVector<f64> {
        &self.finite
    }

    pub fn parts(&self) -> &[FunctionPart] {
        &self.parts
    }

    /// Total function dimension (sum over parts).
    pub fn fun_dim(&self) -> usize {
        self.parts.iter().map(|p| p.dim()).sum()
    }

    pub fn is_polynomial(&self) -> bool {
        self.parts.iter().all(|p| matches!(p, FunctionPart::Poly(_)))
    }

    /// Stacked function value at `s`.
    pub fn function_value(&self, s: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.fun_dim());
        let mut at = 0;
        for part in &self.parts {
            let v = part.eval(s);
            out.rows_mut(at, v.len()).copy_from(&v);
            at += v.len();
        }
        out
    }

    /// Node-major sample vector `[Phi(s_0); Phi(s_1); ...]`.
    pub fn function_at_nodes(&self, nodes: &[f64]) -> DVector<f64> {
        let b = self.fun_dim();
        let mut out = DVector::zeros(b * nodes.len());
        for (j, &s) in nodes.iter().enumerate() {
            out.rows_mut(j * b, b).copy_from(&self.function_value(s));
        }
        out
    }

    /// The whole function part as a single stacked polynomial kernel
    /// (requires polynomial parts).
    fn stacked_poly(&self) -> Result<PolyKernel> {
        let kernels: Vec<&PolyKernel> = self
            .parts
            .iter()
            .map(|p| match p {
                FunctionPart::Poly(k) => Ok(k),
                FunctionPart::Sampled(_) => Err(Error::Config(
                    "closed-form apply needs polynomial function parts".into(),
                )),
            })
            .collect::<Result<_>>()?;
        if kernels.is_empty() {
            return Ok(PolyKernel::zero(0, 1));
        }
        PolyKernel::vstack(&kernels)
    }

    /// Knot set for quadrature over sampled parts (always contains -1, 0).
    fn knots(&self) -> Vec<f64> {
        let mut ts = vec![-1.0, 0.0];
        for part in &self.parts {
            if let FunctionPart::Sampled(h) = part {
                ts.extend(h.grid().iter().copied().filter(|&t| (-1.0..=0.0).contains(&t)));
            }
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        ts
    }
}

/// A PI operator `R^{fi} x L2^{pi} -> R^{fo} x L2^{po}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiOperator {
    p: DMatrix<f64>,
    q1: PolyKernel,
    q2: PolyKernel,
    r0: PolyKernel,
    r1: PolyKernel,
    r2: PolyKernel,
}

impl PiOperator {
    /// Assembles an operator from its blocks, checking the shape contract:
    /// `P` is `fo x fi`, `Q1` is `fo x pi`, `Q2` is `po x fi`, and
    /// `R0/R1/R2` are `po x pi` (with `R1`, `R2` two-variable).
    pub fn new(
        p: DMatrix<f64>,
        q1: PolyKernel,
        q2: PolyKernel,
        r0: PolyKernel,
        r1: PolyKernel,
        r2: PolyKernel,
    ) -> Result<Self> {
        let (fo, fi) = (p.nrows(), p.ncols());
        let (po, pi) = (q2.rows(), q1.cols());
        if q1.rows() != fo {
            return Err(Error::dim("Q1", (q1.rows(), q1.cols()), (fo, pi)));
        }
        if q2.cols() != fi {
            return Err(Error::dim("Q2", (q2.rows(), q2.cols()), (po, fi)));
        }
        for (name, k) in [("R0", &r0), ("R1", &r1), ("R2", &r2)] {
            if k.rows() != po || k.cols() != pi {
                return Err(Error::dim(name, (k.rows(), k.cols()), (po, pi)));
            }
        }
        for (name, k, want) in [
            ("Q1", &q1, KernelVars::One),
            ("Q2", &q2, KernelVars::One),
            ("R0", &r0, KernelVars::One),
            ("R1", &r1, KernelVars::Two),
            ("R2", &r2, KernelVars::Two),
        ] {
            if k.vars() != want {
                return Err(Error::Config(format!("{name} has the wrong arity")));
            }
        }
        Ok(PiOperator {
            p,
            q1,
            q2,
            r0,
            r1,
            r2,
        })
    }

    /// Zero operator with the given dimensions.
    pub fn zero(fo: usize, fi: usize, po: usize, pi: usize) -> Self {
        PiOperator {
            p: DMatrix::zeros(fo, fi),
            q1: PolyKernel::zero(fo, pi),
            q2: PolyKernel::zero(po, fi),
            r0: PolyKernel::zero(po, pi),
            r1: PolyKernel::zero2(po, pi),
            r2: PolyKernel::zero2(po, pi),
        }
    }

    /// Purely finite operator (`pi = po = 0`).
    pub fn from_matrix(p: DMatrix<f64>) -> Self {
        let (fo, fi) = (p.nrows(), p.ncols());
        PiOperator {
            p,
            q1: PolyKernel::zero(fo, 0),
            q2: PolyKernel::zero(0, fi),
            r0: PolyKernel::zero(0, 0),
            r1: PolyKernel::zero2(0, 0),
            r2: PolyKernel::zero2(0, 0),
        }
    }

    /// Identity on `R^{fin} x L2^{fun}`.
    pub fn identity(fin: usize, fun: usize) -> Self {
        let mut op = Self::zero(fin, fin, fun, fun);
        op.p = DMatrix::identity(fin, fin);
        op.r0 = PolyKernel::constant(DMatrix::identity(fun, fun));
        op
    }

    pub fn fin_out(&self) -> usize {
        self.p.nrows()
    }

    pub fn fin_in(&self) -> usize {
        self.p.ncols()
    }

    pub fn fun_out(&self) -> usize {
        self.q2.rows()
    }

    pub fn fun_in(&self) -> usize {
        self.q1.cols()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q1(&self) -> &PolyKernel {
        &self.q1
    }

    pub fn q2(&self) -> &PolyKernel {
        &self.q2
    }

    pub fn r0(&self) -> &PolyKernel {
        &self.r0
    }

    pub fn r1(&self) -> &PolyKernel {
        &self.r1
    }

    pub fn r2(&self) -> &PolyKernel {
        &self.r2
    }

    pub fn is_zero(&self) -> bool {
        self.p.iter().all(|&x| x == 0.0)
            && self.q1.is_zero()
            && self.q2.is_zero()
            && self.r0.is_zero()
            && self.r1.is_zero()
            && self.r2.is_zero()
    }

    /// Largest polynomial degree among the kernel blocks.
    pub fn max_degree(&self) -> usize {
        [&self.q1, &self.q2, &self.r0, &self.r1, &self.r2]
            .iter()
            .map(|k| k.degree())
            .max()
            .unwrap()
    }

    /// Block-wise sum; dimensions must match.
    pub fn add(&self, other: &PiOperator) -> Result<PiOperator> {
        if self.p.shape() != other.p.shape()
            || self.fun_in() != other.fun_in()
            || self.fun_out() != other.fun_out()
        {
            return Err(Error::dim(
                "operator sum",
                (other.fin_out(), other.fin_in()),
                (self.fin_out(), self.fin_in()),
            ));
        }
        Ok(PiOperator {
            p: &self.p + &other.p,
            q1: self.q1.add(&other.q1)?,
            q2: self.q2.add(&other.q2)?,
            r0: self.r0.add(&other.r0)?,
            r1: self.r1.add(&other.r1)?,
            r2: self.r2.add(&other.r2)?,
        })
    }

    /// Scalar multiple.
    pub fn scale(&self, f: f64) -> PiOperator {
        PiOperator {
            p: &self.p * f,
            q1: self.q1.scale(f),
            q2: self.q2.scale(f),
            r0: self.r0.scale(f),
            r1: self.r1.scale(f),
            r2: self.r2.scale(f),
        }
    }

    /// Applies the operator to a hybrid vector. Polynomial function parts
    /// are handled in closed form; sampled parts fall back to knot-aligned
    /// Gauss–Legendre quadrature (exact for the polynomial kernels against
    /// the cubic interpolant).
    pub fn apply(&self, v: &HybridVector) -> Result<HybridVector> {
        if v.finite.len() != self.fin_in() {
            return Err(Error::dim(
                "hybrid finite part",
                (v.finite.len(), 1),
                (self.fin_in(), 1),
            ));
        }
        if v.fun_dim() != self.fun_in() {
            return Err(Error::dim(
                "hybrid function part",
                (v.fun_dim(), 1),
                (self.fun_in(), 1),
            ));
        }
        if v.is_polynomial() {
            self.apply_poly(v)
        } else {
            self.apply_sampled(v)
        }
    }

    fn apply_poly(&self, v: &HybridVector) -> Result<HybridVector> {
        let x = DMatrix::from_column_slice(v.finite.len(), 1, v.finite.as_slice());
        let phi = v.stacked_poly()?;

        let mut finite = &self.p * &x;
        if self.fun_in() > 0 {
            finite += self.q1.mul_kernel(&phi)?.definite_integral(-1.0, 0.0);
        }
        let finite = DVector::from_column_slice(finite.as_slice());

        if self.fun_out() == 0 {
            return HybridVector::new(finite, Vec::new());
        }

        // Function row: Q2 x + R0 Phi + \int_{-1}^{s} R1 Phi + \int_{s}^{0} R2 Phi.
        let mut fun = self.q2.mul_matrix_right(&x)?;
        if self.fun_in() > 0 {
            fun = fun.add(&self.r0.mul_kernel(&phi)?)?;
            let phi3 = MatPoly3::from_kernel1(&phi, 1); // Phi(th)
            let t1 = MatPoly3::from_kernel2(&self.r1, 0, 1)
                .mul(&phi3)?
                .integrate_th(Bound::Const(-1.0), Bound::S)
                .into_kernel_s();
            let t2 = MatPoly3::from_kernel2(&self.r2, 0, 1)
                .mul(&phi3)?
                .integrate_th(Bound::S, Bound::Const(0.0))
                .into_kernel_s();
            fun = fun.add(&t1)?.add(&t2)?;
        }
        HybridVector::new(finite, vec![FunctionPart::Poly(fun.trim())])
    }

    fn apply_sampled(&self, v: &HybridVector) -> Result<HybridVector> {
        let knots = v.knots();
        let deg = self.max_degree();
        let g = gauss_nodes_for_degree(deg);
        // Pre-evaluate Phi at panel Gauss nodes.
        let panel_rule = |a: f64, b: f64| gauss_legendre_on(g, a, b);

        let x = &v.finite;
        let mut finite = &self.p * x;
        if self.fun_in() > 0 && !self.q1.is_zero() {
            for w in knots.windows(2) {
                let rule = panel_rule(w[0], w[1]);
                for (&s, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    finite += self.q1.eval1(s) * v.function_value(s) * wt;
                }
            }
        }

        if self.fun_out() == 0 {
            return HybridVector::new(finite, Vec::new());
        }

        // Sample the output function on the union knot grid.
        let mut out_values = Vec::with_capacity(knots.len());
        for &s in &knots {
            let mut val = self.q2.eval1(s) * x;
            if self.fun_in() > 0 {
                val += self.r0.eval1(s) * v.function_value(s);
                // \int_{-1}^{s} R1(s, th) Phi(th) dth split at knots.
                for w in knots.windows(2) {
                    let (a, b) = (w[0], w[1].min(s));
                    if a < b {
                        let rule = panel_rule(a, b);
                        for (&th, &wt) in rule.nodes.iter().zip(&rule.weights) {
                            val += self.r1.eval2(s, th) * v.function_value(th) * wt;
                        }
                    }
                    let (a2, b2) = (w[0].max(s), w[1]);
                    if a2 < b2 {
                        let rule = panel_rule(a2, b2);
                        for (&th, &wt) in rule.nodes.iter().zip(&rule.weights) {
                            val += self.r2.eval2(s, th) * v.function_value(th) * wt;
                        }
                    }
                }
            }
            out_values.push(val);
        }
        let out = HistoryFunction::new(knots, out_values)?;
        HybridVector::new(finite, vec![FunctionPart::Sampled(out)])
    }

    /// Composition `self . other` (apply `other` first), computed in closed
    /// form with the default degree cap.
    pub fn compose(&self, other: &PiOperator) -> Result<PiOperator> {
        self.compose_capped(other, DEFAULT_DEGREE_CAP)
    }

    /// Composition with an explicit degree cap; errors (no truncation) when
    /// a resulting block would exceed it.
    pub fn compose_capped(&self, other: &PiOperator, cap: usize) -> Result<PiOperator> {
        if self.fin_in() != other.fin_out() || self.fun_in() != other.fun_out() {
            return Err(Error::Config(format!(
                "cannot compose: left takes R^{} x L2^{}, right yields R^{} x L2^{}",
                self.fin_in(),
                self.fun_in(),
                other.fin_out(),
                other.fun_out()
            )));
        }
        let (a, b) = (self, other);

        // P_c = P_a P_b + \int_{-1}^0 Q1_a Q2_b.
        let mut p = &a.p * &b.p;
        if a.fun_in() > 0 {
            p += a.q1.mul_kernel(&b.q2)?.definite_integral(-1.0, 0.0);
        }

        // Q1_c(e) = P_a Q1_b(e) + Q1_a(e) R0_b(e)
        //         + \int_e^0 Q1_a(t) R1_b(t, e) dt + \int_{-1}^e Q1_a(t) R2_b(t, e) dt.
        let mut q1 = b.q1.mul_matrix_left(&a.p)?;
        if a.fun_in() > 0 {
            q1 = q1.add(&a.q1.mul_kernel(&b.r0)?)?;
            let q1a_t = MatPoly3::from_kernel1(&a.q1, 1);
            let t1 = q1a_t
                .mul(&MatPoly3::from_kernel2(&b.r1, 1, 2))?
                .integrate_th(Bound::Eta, Bound::Const(0.0))
                .into_kernel_eta();
            let t2 = q1a_t
                .mul(&MatPoly3::from_kernel2(&b.r2, 1, 2))?
                .integrate_th(Bound::Const(-1.0), Bound::Eta)
                .into_kernel_eta();
            q1 = q1.add(&t1)?.add(&t2)?;
        }

        // Q2_c(s) = Q2_a(s) P_b + R0_a(s) Q2_b(s)
        //         + \int_{-1}^s R1_a(s, t) Q2_b(t) dt + \int_s^0 R2_a(s, t) Q2_b(t) dt.
        let mut q2 = a.q2.mul_matrix_right(&b.p)?;
        if a.fun_in() > 0 {
            q2 = q2.add(&a.r0.mul_kernel(&b.q2)?)?;
            let q2b_t = MatPoly3::from_kernel1(&b.q2, 1);
            let t1 = MatPoly3::from_kernel2(&a.r1, 0, 1)
                .mul(&q2b_t)?
                .integrate_th(Bound::Const(-1.0), Bound::S)
                .into_kernel_s();
            let t2 = MatPoly3::from_kernel2(&a.r2, 0, 1)
                .mul(&q2b_t)?
                .integrate_th(Bound::S, Bound::Const(0.0))
                .into_kernel_s();
            q2 = q2.add(&t1)?.add(&t2)?;
        }

        // R0_c = R0_a R0_b.
        let r0 = a.r0.mul_kernel(&b.r0)?;

        // Shared multiplier terms for R1_c and R2_c.
        let po = a.fun_out();
        let pi = b.fun_in();
        let mut r1 = PolyKernel::zero2(po, pi);
        let mut r2 = PolyKernel::zero2(po, pi);
        if po > 0 && pi > 0 {
            // Q2_a(s) Q1_b(e) appears in both triangle kernels.
            let outer = MatPoly3::from_kernel1(&a.q2, 0)
                .mul(&MatPoly3::from_kernel1(&b.q1, 2))?
                .into_kernel_se();
            r1 = r1.add(&outer)?;
            r2 = r2.add(&outer)?;

            let r0a_s = MatPoly3::from_kernel1(&a.r0, 0);
            let r0b_e = MatPoly3::from_kernel1(&b.r0, 2);
            let r1a_se = MatPoly3::from_kernel2(&a.r1, 0, 2);
            let r2a_se = MatPoly3::from_kernel2(&a.r2, 0, 2);
            let r1b_se = MatPoly3::from_kernel2(&b.r1, 0, 2);
            let r2b_se = MatPoly3::from_kernel2(&b.r2, 0, 2);

            r1 = r1
                .add(&r0a_s.mul(&r1b_se)?.into_kernel_se())?
                .add(&r1a_se.mul(&r0b_e)?.into_kernel_se())?;
            r2 = r2
                .add(&r0a_s.mul(&r2b_se)?.into_kernel_se())?
                .add(&r2a_se.mul(&r0b_e)?.into_kernel_se())?;

            // Integral terms: products in (s, t) x (t, e), integrated over t.
            let r1a = MatPoly3::from_kernel2(&a.r1, 0, 1);
            let r2a = MatPoly3::from_kernel2(&a.r2, 0, 1);
            let r1b = MatPoly3::from_kernel2(&b.r1, 1, 2);
            let r2b = MatPoly3::from_kernel2(&b.r2, 1, 2);

            let r1a_r1b = r1a.mul(&r1b)?;
            let r1a_r2b = r1a.mul(&r2b)?;
            let r2a_r1b = r2a.mul(&r1b)?;
            let r2a_r2b = r2a.mul(&r2b)?;

            r1 = r1
                .add(&r1a_r1b.integrate_th(Bound::Eta, Bound::S).into_kernel_se())?
                .add(
                    &r1a_r2b
                        .integrate_th(Bound::Const(-1.0), Bound::Eta)
                        .into_kernel_se(),
                )?
                .add(&r2a_r1b.integrate_th(Bound::S, Bound::Const(0.0)).into_kernel_se())?;
            r2 = r2
                .add(
                    &r1a_r2b
                        .integrate_th(Bound::Const(-1.0), Bound::S)
                        .into_kernel_se(),
                )?
                .add(&r2a_r1b.integrate_th(Bound::Eta, Bound::Const(0.0)).into_kernel_se())?
                .add(&r2a_r2b.integrate_th(Bound::S, Bound::Eta).into_kernel_se())?;
        }

        let out = PiOperator::new(
            p,
            q1.trim(),
            q2.trim(),
            r0.trim(),
            r1.trim(),
            r2.trim(),
        )?;
        for (name, k) in [
            ("Q1", &out.q1),
            ("Q2", &out.q2),
            ("R0", &out.r0),
            ("R1", &out.r1),
            ("R2", &out.r2),
        ] {
            k.check_degree_cap(cap, &format!("compose ({name} block)"))?;
        }
        Ok(out)
    }

    /// Collocation matrix of the operator on a Chebyshev–Gauss–Lobatto grid
    /// of `m` nodes: a `(fo + po m) x (fi + pi m)` matrix acting on
    /// `[x; Phi(s_0); ...; Phi(s_{m-1})]`.
    ///
    /// Errors when `m` is too small to represent the kernel degrees
    /// (`m < max degree + 2`).
    pub fn discretize(&self, m: usize) -> Result<DMatrix<f64>> {
        let deg = self.max_degree();
        if m < deg + 2 {
            return Err(Error::Config(format!(
                "collocation size {m} cannot resolve kernel degree {deg}; need at least {}",
                deg + 2
            )));
        }
        let (fo, fi) = (self.fin_out(), self.fin_in());
        let (po, pi) = (self.fun_out(), self.fun_in());
        let nodes = chebyshev_lobatto(m);
        let bary = lobatto_barycentric_weights(m);
        let full_w = lagrange_moments(&nodes, &bary);

        let mut out = DMatrix::zeros(fo + po * m, fi + pi * m);
        out.view_mut((0, 0), (fo, fi)).copy_from(&self.p);

        // Finite output from function input: full-interval weights times Q1.
        if fo > 0 && pi > 0 && !self.q1.is_zero() {
            for (j, &s) in nodes.iter().enumerate() {
                let block = self.q1.eval1(s) * full_w[j];
                out.view_mut((0, fi + j * pi), (fo, pi)).copy_from(&block);
            }
        }

        // Function output from finite input.
        if po > 0 && fi > 0 && !self.q2.is_zero() {
            for (j, &s) in nodes.iter().enumerate() {
                out.view_mut((fo + j * po, 0), (po, fi))
                    .copy_from(&self.q2.eval1(s));
            }
        }

        if po > 0 && pi > 0 {
            // Multiplier part.
            if !self.r0.is_zero() {
                for (j, &s) in nodes.iter().enumerate() {
                    let block = self.r0.eval1(s);
                    let mut view = out.view_mut((fo + j * po, fi + j * pi), (po, pi));
                    view += block;
                }
            }
            // Partial-interval integrals, exact Gauss rules per row node.
            let g = (deg + m).div_ceil(2) + 1;
            for (j, &s) in nodes.iter().enumerate() {
                for (kernel, a, b) in [(&self.r1, -1.0, s), (&self.r2, s, 0.0)] {
                    if kernel.is_zero() || a >= b {
                        continue;
                    }
                    let rule = gauss_legendre_on(g, a, b);
                    for (&th, &wt) in rule.nodes.iter().zip(&rule.weights) {
                        let kv = kernel.eval2(s, th);
                        let l = lagrange_basis_at(&nodes, &bary, th);
                        for (k, &lk) in l.iter().enumerate() {
                            let coeff = wt * lk;
                            if coeff == 0.0 {
                                continue;
                            }
                            let mut view = out.view_mut((fo + j * po, fi + k * pi), (po, pi));
                            view += &kv * coeff;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar1(coeffs: &[f64]) -> PolyKernel {
        PolyKernel::from_coeffs(coeffs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect())
            .unwrap()
    }

    fn random_kernel1(rng: &mut ChaCha8Rng, rows: usize, cols: usize, deg: usize) -> PolyKernel {
        PolyKernel::from_coeffs(
            (0..=deg)
                .map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn random_kernel2(rng: &mut ChaCha8Rng, rows: usize, cols: usize, deg: usize) -> PolyKernel {
        PolyKernel::from_coeffs2(
            deg,
            (0..(deg + 1) * (deg + 1))
                .map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn random_op(rng: &mut ChaCha8Rng, fo: usize, fi: usize, po: usize, pi: usize) -> PiOperator {
        PiOperator::new(
            DMatrix::from_fn(fo, fi, |_, _| rng.random_range(-1.0..1.0)),
            random_kernel1(rng, fo, pi, 2),
            random_kernel1(rng, po, fi, 2),
            random_kernel1(rng, po, pi, 2),
            random_kernel2(rng, po, pi, 2),
            random_kernel2(rng, po, pi, 2),
        )
        .unwrap()
    }

    fn random_poly_vec(rng: &mut ChaCha8Rng, fin: usize, fun: usize) -> HybridVector {
        HybridVector::new(
            DVector::from_fn(fin, |_, _| rng.random_range(-1.0..1.0)),
            vec![FunctionPart::Poly(random_kernel1(rng, fun, 1, 2))],
        )
        .unwrap()
    }

    #[test]
    fn apply_worked_example() {
        // P = 1, Q1(s) = s; x = 1, Phi(s) = s:
        // finite out = 1 + \int_{-1}^0 s^2 ds = 4/3.
        let op = PiOperator::new(
            DMatrix::identity(1, 1),
            scalar1(&[0.0, 1.0]),
            PolyKernel::zero(1, 1),
            PolyKernel::zero(1, 1),
            PolyKernel::zero2(1, 1),
            PolyKernel::zero2(1, 1),
        )
        .unwrap();
        let v = HybridVector::new(
            dvector![1.0],
            vec![FunctionPart::Poly(scalar1(&[0.0, 1.0]))],
        )
        .unwrap();
        let out = op.apply(&v).unwrap();
        assert_abs_diff_eq!(out.finite()[0], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_operator_preserves_hybrid_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let id = PiOperator::identity(3, 2);
        let v = random_poly_vec(&mut rng, 3, 2);
        let out = id.apply(&v).unwrap();
        assert_abs_diff_eq!((out.finite() - v.finite()).norm(), 0.0, epsilon = 1e-14);
        for &s in &[-1.0, -0.62, -0.11, 0.0] {
            assert_abs_diff_eq!(
                (out.function_value(s) - v.function_value(s)).norm(),
                0.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn multiplier_composition_multiplies_kernels() {
        // {R0 = f} . {R0 = g} = {R0 = f g}.
        let f = scalar1(&[1.0, 2.0]);
        let g = scalar1(&[-1.0, 0.5]);
        let a = PiOperator::new(
            DMatrix::zeros(0, 0),
            PolyKernel::zero(0, 1),
            PolyKernel::zero(1, 0),
            f.clone(),
            PolyKernel::zero2(1, 1),
            PolyKernel::zero2(1, 1),
        )
        .unwrap();
        let b = PiOperator::new(
            DMatrix::zeros(0, 0),
            PolyKernel::zero(0, 1),
            PolyKernel::zero(1, 0),
            g.clone(),
            PolyKernel::zero2(1, 1),
            PolyKernel::zero2(1, 1),
        )
        .unwrap();
        let c = a.compose(&b).unwrap();
        let fg = f.mul_kernel(&g).unwrap();
        for &s in &[-1.0, -0.4, 0.0] {
            assert_abs_diff_eq!(c.r0().eval1(s)[(0, 0)], fg.eval1(s)[(0, 0)], epsilon = 1e-14);
        }
        assert!(c.r1().is_zero() && c.r2().is_zero());
    }

    #[test]
    fn composition_agrees_with_nested_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..25 {
            let a = random_op(&mut rng, 2, 3, 2, 2);
            let b = random_op(&mut rng, 3, 2, 2, 3);
            let v = random_poly_vec(&mut rng, 2, 3);
            let nested = a.apply(&b.apply(&v).unwrap()).unwrap();
            let composed = a.compose_capped(&b, 16).unwrap().apply(&v).unwrap();
            assert_abs_diff_eq!(
                (nested.finite() - composed.finite()).norm(),
                0.0,
                epsilon = 1e-12
            );
            for &s in &[-1.0, -0.77, -0.31, 0.0] {
                assert_abs_diff_eq!(
                    (nested.function_value(s) - composed.function_value(s)).norm(),
                    0.0,
                    epsilon = 1e-11
                );
            }
        }
    }

    #[test]
    fn compose_rejects_degree_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random_op(&mut rng, 1, 1, 1, 1);
        a.r1 = random_kernel2(&mut rng, 1, 1, 5);
        let mut b = random_op(&mut rng, 1, 1, 1, 1);
        b.r1 = random_kernel2(&mut rng, 1, 1, 5);
        let err = a.compose_capped(&b, 8).unwrap_err();
        assert!(matches!(err, Error::DegreeCap { .. }), "got {err}");
    }

    #[test]
    fn discretize_is_exact_on_resolved_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let op = random_op(&mut rng, 2, 2, 3, 2);
        let v = random_poly_vec(&mut rng, 2, 2);
        let m = 9; // degrees: op 2, data 2 -> anything >= 7 resolves exactly
        let nodes = chebyshev_lobatto(m);
        let disc = op.discretize(m).unwrap();
        let mut vin = DVector::zeros(2 + 2 * m);
        vin.rows_mut(0, 2).copy_from(v.finite());
        vin.rows_mut(2, 2 * m).copy_from(&v.function_at_nodes(&nodes));
        let got = &disc * &vin;
        let want = op.apply(&v).unwrap();
        assert_abs_diff_eq!(
            (got.rows(0, 2) - want.finite()).norm(),
            0.0,
            epsilon = 1e-12
        );
        let want_nodes = want.function_at_nodes(&nodes);
        assert_abs_diff_eq!(
            (got.rows(2, 3 * m) - want_nodes).norm(),
            0.0,
            epsilon = 1e-11
        );
    }

    #[test]
    fn discretize_rejects_unresolved_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut op = random_op(&mut rng, 1, 1, 1, 1);
        op.r0 = random_kernel1(&mut rng, 1, 1, 4);
        assert!(op.discretize(5).is_err());
        assert!(op.discretize(6).is_ok());
    }

    #[test]
    fn sampled_apply_matches_polynomial_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let op = random_op(&mut rng, 2, 2, 2, 2);
        let poly = random_kernel1(&mut rng, 2, 1, 2);
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let vp = HybridVector::new(x.clone(), vec![FunctionPart::Poly(poly.clone())]).unwrap();
        // Same data as dense samples.
        let h = HistoryFunction::sample(2, -1.0, 41, |s| {
            DVector::from_column_slice(poly.eval1(s).as_slice())
        });
        let vs = HybridVector::new(x, vec![FunctionPart::Sampled(h)]).unwrap();
        let got = op.apply(&vs).unwrap();
        let want = op.apply(&vp).unwrap();
        assert_abs_diff_eq!((got.finite() - want.finite()).norm(), 0.0, epsilon = 1e-10);
        for &s in &[-1.0, -0.5, -0.25, 0.0] {
            assert_abs_diff_eq!(
                (got.function_value(s) - want.function_value(s)).norm(),
                0.0,
                epsilon = 1e-9
            );
        }
    }
}
