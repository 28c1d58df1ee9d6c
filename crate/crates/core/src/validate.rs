//! Structural validation of system descriptions.
//!
//! `validate_*` functions return a [`ValidationReport`] listing every violated
//! invariant (empty report = valid). Checks cover matrix shapes, delay
//! ordering, kernel arity/degree, well-posedness of the feedback gain in
//! delay-channel form, and input smoothness requirements.

use std::fmt;

use nalgebra::DMatrix;

use crate::convert::PieSpec;
use crate::error::{Error, Result};
use crate::history::HistoryFunction;
use crate::kernel::{KernelVars, PolyKernel, DEFAULT_DEGREE_CAP};
use crate::quad::{gauss_legendre_on, gauss_nodes_for_degree};
use crate::signal::VectorSignal;
use crate::specs::{DdeSpec, DdfSpec, NdsSpec, OdePdeSpec};

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending object, named as in the interchange format ("A_1",
    /// "C_v2", "delays", ...).
    pub subject: String,
    /// What is wrong with it.
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Outcome of a validation pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Converts the report into a `Result`, erroring when violations exist.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }

    fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }

    fn shape(&mut self, subject: &str, m: &DMatrix<f64>, rows: usize, cols: usize) {
        if m.nrows() != rows || m.ncols() != cols {
            self.push(
                subject,
                format!("is {}x{}, want {rows}x{cols}", m.nrows(), m.ncols()),
            );
        } else if m.iter().any(|x| !x.is_finite()) {
            self.push(subject, "contains a non-finite entry");
        }
    }

    fn kernel(&mut self, subject: &str, k: &PolyKernel, rows: usize, cols: usize, vars: KernelVars) {
        if k.rows() != rows || k.cols() != cols {
            self.push(
                subject,
                format!("is {}x{}, want {rows}x{cols}", k.rows(), k.cols()),
            );
        }
        if k.vars() != vars {
            self.push(subject, "has the wrong number of kernel variables");
        }
        if k.degree() > DEFAULT_DEGREE_CAP {
            self.push(
                subject,
                format!("degree {} exceeds cap {DEFAULT_DEGREE_CAP}", k.degree()),
            );
        }
    }

    fn delays(&mut self, delays: &[f64]) {
        if delays.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            self.push("delays", "must be positive and finite");
        }
        if delays.windows(2).any(|w| w[0] >= w[1]) {
            self.push("delays", "not strictly increasing");
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Numerical thresholds used during validation.
#[derive(Debug, Clone, Copy)]
pub struct ValidationConfig {
    /// Condition-number bound above which the channel feedback matrix is
    /// declared singular.
    pub cond_bound: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { cond_bound: 1e12 }
    }
}

/// 2-norm condition number via singular values (infinite when rank deficient).
pub fn cond_2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn validate_dde(d: &DdeSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    if n == 0 {
        rep.push("n", "state dimension must be positive");
    }
    rep.delays(&d.delays);
    rep.shape("A_0", &d.a0, n, n);
    rep.shape("B_1", &d.b1, n, m);
    rep.shape("B_2", &d.b2, n, p);
    rep.shape("C_10", &d.c10, q, n);
    rep.shape("D_11", &d.d11, q, m);
    rep.shape("D_12", &d.d12, q, p);
    rep.shape("C_20", &d.c20, r, n);
    rep.shape("D_21", &d.d21, r, m);
    rep.shape("D_22", &d.d22, r, p);
    if d.delayed.len() != d.delays.len() {
        rep.push(
            "A_i",
            format!(
                "{} delayed blocks for {} delays",
                d.delayed.len(),
                d.delays.len()
            ),
        );
    }
    if d.distributed.len() != d.delays.len() {
        rep.push(
            "A_di",
            format!(
                "{} distributed blocks for {} delays",
                d.distributed.len(),
                d.delays.len()
            ),
        );
    }
    for (i, blk) in d.delayed.iter().enumerate() {
        let i1 = i + 1;
        rep.shape(&format!("A_{i1}"), &blk.a, n, n);
        rep.shape(&format!("B_1{i1}"), &blk.b1, n, m);
        rep.shape(&format!("B_2{i1}"), &blk.b2, n, p);
        rep.shape(&format!("C_1{i1}"), &blk.c1, q, n);
        rep.shape(&format!("D_11{i1}"), &blk.d11, q, m);
        rep.shape(&format!("D_12{i1}"), &blk.d12, q, p);
        rep.shape(&format!("C_2{i1}"), &blk.c2, r, n);
        rep.shape(&format!("D_21{i1}"), &blk.d21, r, m);
        rep.shape(&format!("D_22{i1}"), &blk.d22, r, p);
    }
    for (i, blk) in d.distributed.iter().enumerate() {
        let i1 = i + 1;
        rep.kernel(&format!("A_d{i1}"), &blk.a, n, n, KernelVars::One);
        rep.kernel(&format!("B_1d{i1}"), &blk.b1, n, m, KernelVars::One);
        rep.kernel(&format!("B_2d{i1}"), &blk.b2, n, p, KernelVars::One);
        rep.kernel(&format!("C_1d{i1}"), &blk.c1, q, n, KernelVars::One);
        rep.kernel(&format!("D_11d{i1}"), &blk.d11, q, m, KernelVars::One);
        rep.kernel(&format!("D_12d{i1}"), &blk.d12, q, p, KernelVars::One);
        rep.kernel(&format!("C_2d{i1}"), &blk.c2, r, n, KernelVars::One);
        rep.kernel(&format!("D_21d{i1}"), &blk.d21, r, m, KernelVars::One);
        rep.kernel(&format!("D_22d{i1}"), &blk.d22, r, p, KernelVars::One);
    }
    rep
}

pub fn validate_nds(s: &NdsSpec) -> ValidationReport {
    let mut rep = validate_dde(&s.base);
    let (n, q, r, k) = (s.base.n, s.base.q, s.base.r, s.base.delays.len());
    for (name, list) in [("E", &s.e), ("E_1", &s.e1), ("E_2", &s.e2)] {
        if list.len() != k {
            rep.push(name, format!("{} blocks for {k} delays", list.len()));
        }
    }
    for (i, (e, (e1, e2))) in s.e.iter().zip(s.e1.iter().zip(&s.e2)).enumerate() {
        let i1 = i + 1;
        rep.shape(&format!("E_{i1}"), e, n, n);
        rep.shape(&format!("E_1{i1}"), e1, q, n);
        rep.shape(&format!("E_2{i1}"), e2, r, n);
    }
    for (name, list) in [("E_d", &s.e_d), ("E_1d", &s.e1_d), ("E_2d", &s.e2_d)] {
        if list.len() != k {
            rep.push(name, format!("{} kernels for {k} delays", list.len()));
        }
    }
    for i in 0..s.e_d.len().min(k) {
        let i1 = i + 1;
        rep.kernel(&format!("E_d{i1}"), &s.e_d[i], n, n, KernelVars::One);
        rep.kernel(&format!("E_1d{i1}"), &s.e1_d[i], q, n, KernelVars::One);
        rep.kernel(&format!("E_2d{i1}"), &s.e2_d[i], r, n, KernelVars::One);
    }
    rep
}

pub fn validate_ddf(d: &DdfSpec) -> ValidationReport {
    validate_ddf_with(d, &ValidationConfig::default())
}

pub fn validate_ddf_with(d: &DdfSpec, cfg: &ValidationConfig) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (n, m, p, q, r, nv) = (d.n, d.m, d.p, d.q, d.r, d.n_v);
    if n == 0 {
        rep.push("n", "state dimension must be positive");
    }
    rep.delays(&d.delays);
    rep.shape("A_0", &d.a0, n, n);
    rep.shape("B_1", &d.b1, n, m);
    rep.shape("B_2", &d.b2, n, p);
    rep.shape("B_v", &d.b_v, n, nv);
    rep.shape("C_1", &d.c1, q, n);
    rep.shape("D_11", &d.d11, q, m);
    rep.shape("D_12", &d.d12, q, p);
    rep.shape("D_1v", &d.d1v, q, nv);
    rep.shape("C_2", &d.c2, r, n);
    rep.shape("D_21", &d.d21, r, m);
    rep.shape("D_22", &d.d22, r, p);
    rep.shape("D_2v", &d.d2v, r, nv);
    if d.channels.len() != d.delays.len() {
        rep.push(
            "channels",
            format!("{} channels for {} delays", d.channels.len(), d.delays.len()),
        );
    }
    for (i, ch) in d.channels.iter().enumerate() {
        let i1 = i + 1;
        let pi = ch.dim;
        rep.shape(&format!("C_r{i1}"), &ch.c_r, pi, n);
        rep.shape(&format!("B_r1{i1}"), &ch.b_r1, pi, m);
        rep.shape(&format!("B_r2{i1}"), &ch.b_r2, pi, p);
        rep.shape(&format!("D_rv{i1}"), &ch.d_rv, pi, nv);
        rep.shape(&format!("C_v{i1}"), &ch.c_v, nv, pi);
        rep.kernel(&format!("C_vd{i1}"), &ch.c_vd, nv, pi, KernelVars::One);
    }
    if rep.is_ok() {
        // Well-posedness of the instantaneous signal loop.
        let di = d.d_i_matrix();
        let cond = cond_2(&di);
        if cond > cfg.cond_bound {
            rep.push(
                "D_I",
                format!("D_I singular: condition number {cond:.3e} exceeds {:.1e}", cfg.cond_bound),
            );
        }
    }
    rep
}

pub fn validate_odepde(o: &OdePdeSpec) -> ValidationReport {
    let mut rep = validate_ddf(&o.ddf);
    if let Some(m) = o.collocation_hint {
        if m < 2 {
            rep.push("collocation_hint", "needs at least 2 nodes");
        }
    }
    rep
}

pub fn validate_pie(p: &PieSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (n, m, pp, q, r) = (p.n, p.m, p.p, p.q, p.r);
    let fun: usize = p.p_i.iter().sum();
    if n == 0 {
        rep.push("n", "state dimension must be positive");
    }
    rep.delays(&p.delays);
    if p.p_i.len() != p.delays.len() {
        rep.push(
            "p_i",
            format!("{} channel dims for {} delays", p.p_i.len(), p.delays.len()),
        );
    }
    let mut op = |name: &str, o: &crate::piops::PiOperator, fo: usize, fi: usize, po: usize, pi: usize| {
        if o.fin_out() != fo || o.fin_in() != fi || o.fun_out() != po || o.fun_in() != pi {
            rep.push(
                name,
                format!(
                    "maps R^{} x L2^{} -> R^{} x L2^{}, want R^{fi} x L2^{pi} -> R^{fo} x L2^{po}",
                    o.fin_in(),
                    o.fun_in(),
                    o.fin_out(),
                    o.fun_out()
                ),
            );
        }
    };
    op("T", &p.t, n, n, fun, fun);
    op("A", &p.a, n, n, fun, fun);
    op("B_1", &p.b1, n, m, fun, 0);
    op("B_2", &p.b2, n, pp, fun, 0);
    op("B_T1", &p.bt1, n, m, fun, 0);
    op("B_T2", &p.bt2, n, pp, fun, 0);
    op("C_1", &p.c1, q, n, 0, fun);
    op("C_2", &p.c2, r, n, 0, fun);
    op("D_11", &p.d11, q, m, 0, 0);
    op("D_12", &p.d12, q, pp, 0, 0);
    op("D_21", &p.d21, r, m, 0, 0);
    op("D_22", &p.d22, r, pp, 0, 0);
    rep
}

/// Whether each exogenous/actuation input must be continuously
/// differentiable with zero initial value for the representation to define
/// the same solutions as its delay-free reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InputRequirements {
    pub w_smooth: bool,
    pub u_smooth: bool,
}

/// A delayed-system description needs smooth `w` exactly when some delayed or
/// distributed block reads `w`.
pub fn input_requirements_dde(d: &DdeSpec) -> InputRequirements {
    let mat_hit = |f: &dyn Fn(&crate::specs::DelayBlock) -> bool| d.delayed.iter().any(|b| f(b));
    let ker_hit =
        |f: &dyn Fn(&crate::specs::KernelBlock) -> bool| d.distributed.iter().any(|b| f(b));
    InputRequirements {
        w_smooth: mat_hit(&|b| {
            b.b1.iter().any(|&x| x != 0.0)
                || b.d11.iter().any(|&x| x != 0.0)
                || b.d21.iter().any(|&x| x != 0.0)
        }) || ker_hit(&|b| !b.b1.is_zero() || !b.d11.is_zero() || !b.d21.is_zero()),
        u_smooth: mat_hit(&|b| {
            b.b2.iter().any(|&x| x != 0.0)
                || b.d12.iter().any(|&x| x != 0.0)
                || b.d22.iter().any(|&x| x != 0.0)
        }) || ker_hit(&|b| !b.b2.is_zero() || !b.d12.is_zero() || !b.d22.is_zero()),
    }
}

pub fn input_requirements_nds(s: &NdsSpec) -> InputRequirements {
    // The neutral blocks multiply delayed \dot x, not inputs.
    input_requirements_dde(&s.base)
}

/// A channel form needs smooth `w` exactly when some channel both reads `w`
/// (through `B_r1i`) and is actually fed back (through `C_vi` or the
/// distributed kernel). The composite products detect that coupling.
pub fn input_requirements_ddf(d: &DdfSpec) -> InputRequirements {
    let mut req = InputRequirements::default();
    for ch in &d.channels {
        let reads_w = ch.b_r1.iter().any(|&x| x != 0.0);
        let reads_u = ch.b_r2.iter().any(|&x| x != 0.0);
        if !reads_w && !reads_u {
            continue;
        }
        let coupled = |pick: &DMatrix<f64>| -> bool {
            if (&ch.c_v * pick).iter().any(|&x| x.abs() > 0.0) {
                return true;
            }
            ch.c_vd
                .coeffs()
                .iter()
                .any(|c| (c * pick).iter().any(|&x| x.abs() > 0.0))
        };
        if reads_w && coupled(&ch.b_r1) {
            req.w_smooth = true;
        }
        if reads_u && coupled(&ch.b_r2) {
            req.u_smooth = true;
        }
    }
    req
}

pub fn input_requirements_odepde(o: &OdePdeSpec) -> InputRequirements {
    input_requirements_ddf(&o.ddf)
}

/// A PIE needs smooth inputs exactly when the corresponding derivative
/// injection is nonzero.
pub fn input_requirements_pie(p: &PieSpec) -> InputRequirements {
    InputRequirements {
        w_smooth: !p.bt1.is_zero(),
        u_smooth: !p.bt2.is_zero(),
    }
}

/// Rejects input signals that violate the smoothness requirements.
pub fn check_inputs(req: InputRequirements, w: &VectorSignal, u: &VectorSignal) -> Result<()> {
    if req.w_smooth && !(w.is_smooth() && w.vanishes_at_zero()) {
        return Err(Error::Input(
            "delayed channels read w: it must be continuously differentiable with w(0) = 0"
                .into(),
        ));
    }
    if req.u_smooth && !(u.is_smooth() && u.vanishes_at_zero()) {
        return Err(Error::Input(
            "delayed channels read u: it must be continuously differentiable with u(0) = 0"
                .into(),
        ));
    }
    Ok(())
}

/// Sewing residuals of a channel-form initial condition: with `w(0) = u(0) = 0`
/// the channel histories must satisfy, at `t = 0`,
///
/// ```text
/// r_i(0) = C_ri x_0 + D_rvi v(0),
/// v(0)   = sum_i C_vi r_i(-tau_i) + sum_i \int_{-tau_i}^0 C_vdi(s) r_i(s) ds.
/// ```
///
/// Returns one residual vector per channel.
pub fn check_sewing_ddf(
    d: &DdfSpec,
    x0: &nalgebra::DVector<f64>,
    r0: &[HistoryFunction],
) -> Result<Vec<nalgebra::DVector<f64>>> {
    if x0.len() != d.n {
        return Err(Error::dim("x_0", (x0.len(), 1), (d.n, 1)));
    }
    if r0.len() != d.channels.len() {
        return Err(Error::Input(format!(
            "{} channel histories for {} channels",
            r0.len(),
            d.channels.len()
        )));
    }
    for ((i, ch), h) in d.channels.iter().enumerate().zip(r0) {
        if h.dim() != ch.dim {
            return Err(Error::dim(
                &format!("r_{}0", i + 1),
                (h.dim(), 1),
                (ch.dim, 1),
            ));
        }
        h.check_coverage(-d.delays[i], &format!("r_{}0", i + 1))?;
    }
    let v0 = ddf_history_v(d, r0);
    let out = d
        .channels
        .iter()
        .zip(r0)
        .map(|(ch, h)| h.eval(0.0) - &ch.c_r * x0 - &ch.d_rv * &v0)
        .collect();
    Ok(out)
}

/// `v(0)` induced by channel histories.
pub fn ddf_history_v(d: &DdfSpec, r0: &[HistoryFunction]) -> nalgebra::DVector<f64> {
    let mut v0 = nalgebra::DVector::zeros(d.n_v);
    for ((ch, h), &tau) in d.channels.iter().zip(r0).zip(&d.delays) {
        v0 += &ch.c_v * h.eval(-tau);
        if !ch.c_vd.is_zero() {
            v0 += integral_kernel_history(&ch.c_vd, tau, h);
        }
    }
    v0
}

/// `\int_{-tau}^{0} K(s) h(s) ds` with knot-aligned Gauss panels.
pub(crate) fn integral_kernel_history(
    kernel: &PolyKernel,
    tau: f64,
    h: &HistoryFunction,
) -> nalgebra::DVector<f64> {
    let mut knots: Vec<f64> = h
        .grid()
        .iter()
        .copied()
        .filter(|&t| t > -tau && t < 0.0)
        .collect();
    knots.insert(0, -tau);
    knots.push(0.0);
    let g = gauss_nodes_for_degree(kernel.degree());
    let mut acc = nalgebra::DVector::zeros(kernel.rows());
    for w in knots.windows(2) {
        if w[1] - w[0] < 1e-15 {
            continue;
        }
        let rule = gauss_legendre_on(g, w[0], w[1]);
        for (&s, &wt) in rule.nodes.iter().zip(&rule.weights) {
            acc += kernel.eval1(s) * h.eval(s) * wt;
        }
    }
    acc
}

/// Sewing residuals for a transport-form initial condition
/// `phi_i(0, s) = r_i(tau_i s)` on the unit interval.
pub fn check_sewing_odepde(
    o: &OdePdeSpec,
    x0: &nalgebra::DVector<f64>,
    phi0: &[HistoryFunction],
) -> Result<Vec<nalgebra::DVector<f64>>> {
    if phi0.len() != o.ddf.channels.len() {
        return Err(Error::Input(format!(
            "{} transport profiles for {} channels",
            phi0.len(),
            o.ddf.channels.len()
        )));
    }
    // phi_i on [-1, 0] corresponds to r_i(tau_i s): rescale back.
    let r0: Vec<HistoryFunction> = phi0
        .iter()
        .zip(&o.ddf.delays)
        .map(|(h, &tau)| h.rescale(tau))
        .collect();
    for (i, (h, &tau)) in r0.iter().zip(&o.ddf.delays).enumerate() {
        h.check_coverage(-tau, &format!("phi_{}0", i + 1))?;
    }
    check_sewing_ddf(&o.ddf, x0, &r0)
}
