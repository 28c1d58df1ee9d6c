//! Conversions between the five system representations.
//!
//! The delay-channel form is the hub: delayed-state descriptions and neutral
//! descriptions embed into it, the transport form is a reinterpretation of
//! it, and the integral-equation form is derived from it by eliminating the
//! delayed signal `v` through the channel feedback loop. A direct
//! delayed-state-to-integral shortcut is provided and agrees with the
//! two-step route exactly (the acceptance suite checks this).

use log::info;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::HistoryFunction;
use crate::kernel::PolyKernel;
use crate::piops::{FunctionPart, HybridVector, PiOperator};
use crate::specs::{DdeSpec, DdfChannel, DdfSpec, Dims, NdsSpec, OdePdeSpec};
use crate::validate::{cond_2, validate_dde, validate_ddf, validate_nds, ValidationConfig};

/// Default relative singular-value threshold for channel-rank detection.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// The integral-equation form
/// `T x' + B_T1 w' + B_T2 u' = A x + B_1 w + B_2 u` on `R^n x L2^{sum p_i}`,
/// with outputs `z = C_1 x + D_11 w + D_12 u` and `y = C_2 x + D_21 w + D_22 u`
/// (all coefficients PI operators, `x` the hybrid state).
#[derive(Debug, Clone)]
pub struct PieSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Physical delays retained for reconstructing trajectories.
    pub delays: Vec<f64>,
    /// Function-space partition: component `i` of the function state has
    /// dimension `p_i` and carries the channel for delay `i`.
    pub p_i: Vec<usize>,
    pub t: PiOperator,
    pub a: PiOperator,
    pub b1: PiOperator,
    pub b2: PiOperator,
    pub bt1: PiOperator,
    pub bt2: PiOperator,
    pub c1: PiOperator,
    pub c2: PiOperator,
    pub d11: PiOperator,
    pub d12: PiOperator,
    pub d21: PiOperator,
    pub d22: PiOperator,
}

impl PieSpec {
    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.q,
            r: self.r,
            k: self.delays.len(),
            p_i: self.p_i.clone(),
            n_v: 0,
        }
    }

    /// Total function dimension `sum p_i`.
    pub fn fun_dim(&self) -> usize {
        self.p_i.iter().sum()
    }
}

/// Intermediate products of the channel-to-integral conversion, kept for
/// inspection and reuse (initial-condition maps, diagnostics).
#[derive(Debug, Clone)]
pub struct ConversionScratch {
    /// `Chat_vi = C_vi + \int_{-tau_i}^0 C_vdi(s) ds` per channel.
    pub c_v_hat: Vec<DMatrix<f64>>,
    /// Loop matrix `D_I = (I - sum_i Chat_vi D_rvi)^{-1}`.
    pub d_i: DMatrix<f64>,
    /// Condition number of the matrix that was inverted.
    pub d_i_cond: f64,
    /// `C_Ii(s) = -D_I (C_vi + tau_i \int_{-1}^{s} C_vdi(tau_i h) dh)`.
    pub c_i: Vec<PolyKernel>,
    /// `[C_vx D_vw D_vu] = D_I sum_i Chat_vi [C_ri B_r1i B_r2i]`.
    pub v_maps: DMatrix<f64>,
}

fn hstack(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.first().map_or(0, |m| m.nrows());
    let cols = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        out.view_mut((0, at), (rows, m.ncols())).copy_from(m);
        at += m.ncols();
    }
    out
}

fn vstack(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = mats.first().map_or(0, |m| m.ncols());
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        out.view_mut((at, 0), (m.nrows(), cols)).copy_from(m);
        at += m.nrows();
    }
    out
}

/// Embeds a delayed-state description into the channel form: one channel per
/// delay carrying `r_i(t) = [x; w; u](t)`, with the delayed and distributed
/// blocks moved into the channel pick-up matrices.
pub fn dde_to_ddf(d: &DdeSpec) -> Result<DdfSpec> {
    validate_dde(d).into_result()?;
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    let nv = n + q + r;
    let width = n + m + p;
    let mut out = DdfSpec::zero(
        n,
        m,
        p,
        q,
        r,
        nv,
        d.delays.clone(),
        vec![width; d.delays.len()],
    );
    out.a0 = d.a0.clone();
    out.b1 = d.b1.clone();
    out.b2 = d.b2.clone();
    out.c1 = d.c10.clone();
    out.d11 = d.d11.clone();
    out.d12 = d.d12.clone();
    out.c2 = d.c20.clone();
    out.d21 = d.d21.clone();
    out.d22 = d.d22.clone();
    // [B_v; D_1v; D_2v] = I_{n+q+r}: the delayed signal v carries the summed
    // delayed contributions directly to x', z, y.
    let inj = DMatrix::identity(nv, nv);
    out.b_v = inj.rows(0, n).into_owned();
    out.d1v = inj.rows(n, q).into_owned();
    out.d2v = inj.rows(n + q, r).into_owned();
    let sel = DMatrix::identity(width, width);
    for (i, ch) in out.channels.iter_mut().enumerate() {
        ch.c_r = sel.columns(0, n).into_owned();
        ch.b_r1 = sel.columns(n, m).into_owned();
        ch.b_r2 = sel.columns(n + m, p).into_owned();
        ch.c_v = d.delayed[i].stacked();
        ch.c_vd = d.distributed[i].stacked();
    }
    Ok(out)
}

/// Embeds a neutral description into the channel form. Each channel carries
/// `r_i(t) = [x; w; u; x'](t)`: the extra rows reconstruct the delayed
/// derivative without differentiating the state, by re-expressing `x'` through
/// the right-hand side (its `v` dependence enters via `D_rvi`).
pub fn nds_to_ddf(s: &NdsSpec) -> Result<DdfSpec> {
    validate_nds(s).into_result()?;
    let d = &s.base;
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    let nv = n + q + r;
    let width = n + m + p + n;
    let mut out = DdfSpec::zero(
        n,
        m,
        p,
        q,
        r,
        nv,
        d.delays.clone(),
        vec![width; d.delays.len()],
    );
    out.a0 = d.a0.clone();
    out.b1 = d.b1.clone();
    out.b2 = d.b2.clone();
    out.c1 = d.c10.clone();
    out.d11 = d.d11.clone();
    out.d12 = d.d12.clone();
    out.c2 = d.c20.clone();
    out.d21 = d.d21.clone();
    out.d22 = d.d22.clone();
    let inj = DMatrix::identity(nv, nv);
    out.b_v = inj.rows(0, n).into_owned();
    out.d1v = inj.rows(n, q).into_owned();
    out.d2v = inj.rows(n + q, r).into_owned();

    for (i, ch) in out.channels.iter_mut().enumerate() {
        // Output map rows: [I 0 0; 0 I 0; 0 0 I; A_0 B_1 B_2].
        let mut c_r = DMatrix::zeros(width, n);
        c_r.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        c_r.view_mut((n + m + p, 0), (n, n)).copy_from(&d.a0);
        ch.c_r = c_r;
        let mut b_r1 = DMatrix::zeros(width, m);
        b_r1.view_mut((n, 0), (m, m)).copy_from(&DMatrix::identity(m, m));
        b_r1.view_mut((n + m + p, 0), (n, m)).copy_from(&d.b1);
        ch.b_r1 = b_r1;
        let mut b_r2 = DMatrix::zeros(width, p);
        b_r2.view_mut((n + m, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
        b_r2.view_mut((n + m + p, 0), (n, p)).copy_from(&d.b2);
        ch.b_r2 = b_r2;
        // Bottom rows finish x' = A_0 x + B_1 w + B_2 u + [I 0 0] v.
        let mut d_rv = DMatrix::zeros(width, nv);
        d_rv.view_mut((n + m + p, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        ch.d_rv = d_rv;
        // Pick-up appends the neutral column to the delayed block.
        ch.c_v = hstack(&[d.delayed[i].stacked(), s.e_stacked(i)]);
        ch.c_vd = PolyKernel::hstack(&[&s.base.distributed[i].stacked(), &s.e_d_stacked(i)])?;
    }
    Ok(out)
}

/// Reinterprets the channel form as a coupled transport equation (the data
/// is identical; only the reading of the channel state changes).
pub fn ddf_to_odepde(d: &DdfSpec) -> Result<OdePdeSpec> {
    validate_ddf(d).into_result()?;
    Ok(OdePdeSpec::new(d.clone()))
}

/// Inverse of [`ddf_to_odepde`].
pub fn odepde_to_ddf(o: &OdePdeSpec) -> DdfSpec {
    o.ddf.clone()
}

/// Maps channel histories `r_i` on `[-tau_i, 0]` to transport profiles
/// `phi_i(s) = r_i(tau_i s)` on `[-1, 0]`.
pub fn r0_to_phi0(r0: &[HistoryFunction], delays: &[f64]) -> Result<Vec<HistoryFunction>> {
    if r0.len() != delays.len() {
        return Err(Error::Input(format!(
            "{} channel histories for {} delays",
            r0.len(),
            delays.len()
        )));
    }
    Ok(r0
        .iter()
        .zip(delays)
        .map(|(h, &tau)| h.rescale(1.0 / tau))
        .collect())
}

/// Maps transport profiles back to channel histories, `r_i(t) = phi_i(t / tau_i)`.
pub fn phi0_to_r0(phi0: &[HistoryFunction], delays: &[f64]) -> Result<Vec<HistoryFunction>> {
    if phi0.len() != delays.len() {
        return Err(Error::Input(format!(
            "{} transport profiles for {} delays",
            phi0.len(),
            delays.len()
        )));
    }
    Ok(phi0
        .iter()
        .zip(delays)
        .map(|(h, &tau)| h.rescale(tau))
        .collect())
}

fn channel_scratch(d: &DdfSpec, cfg: &ValidationConfig) -> Result<ConversionScratch> {
    let nv = d.n_v;
    // Chat_vi and the loop matrix.
    let c_v_hat: Vec<DMatrix<f64>> = d
        .channels
        .iter()
        .zip(&d.delays)
        .map(|(ch, &tau)| ch.c_v_hat(tau))
        .collect();
    let mut loop_mat = DMatrix::identity(nv, nv);
    for (ch, hat) in d.channels.iter().zip(&c_v_hat) {
        loop_mat -= hat * &ch.d_rv;
    }
    let d_i_cond = cond_2(&loop_mat);
    if !d_i_cond.is_finite() || d_i_cond > cfg.cond_bound {
        return Err(Error::Singular {
            subject: "D_I".into(),
            cond: d_i_cond,
            bound: cfg.cond_bound,
        });
    }
    let d_i = loop_mat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            subject: "D_I".into(),
            cond: f64::INFINITY,
            bound: cfg.cond_bound,
        })?;

    // C_Ii(s) = -D_I (C_vi + tau_i \int_{-1}^{s} C_vdi(tau_i h) dh).
    let mut c_i = Vec::with_capacity(d.channels.len());
    for (ch, &tau) in d.channels.iter().zip(&d.delays) {
        let cumulative = ch
            .c_vd
            .scale_var(tau)
            .antiderivative_from(-1.0)
            .scale(tau);
        let inner = PolyKernel::constant(ch.c_v.clone()).add(&cumulative)?;
        c_i.push(inner.mul_matrix_left(&(-&d_i))?.trim());
    }

    // [C_vx D_vw D_vu] = D_I sum_i Chat_vi [C_ri B_r1i B_r2i].
    let width = d.n + d.m + d.p;
    let mut acc = DMatrix::zeros(nv, width);
    for (ch, hat) in d.channels.iter().zip(&c_v_hat) {
        acc += hat * ch.output_map();
    }
    let v_maps = &d_i * acc;

    Ok(ConversionScratch {
        c_v_hat,
        d_i,
        d_i_cond,
        c_i,
        v_maps,
    })
}

/// Converts the channel form to the integral-equation form, eliminating the
/// delayed signal through the channel feedback loop. Also returns the
/// intermediate products.
pub fn ddf_to_pie_with_scratch(d: &DdfSpec) -> Result<(PieSpec, ConversionScratch)> {
    validate_ddf(d).into_result()?;
    let cfg = ValidationConfig::default();
    let scratch = channel_scratch(d, &cfg)?;
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    let fun: usize = d.channel_dims().iter().sum();

    // Stacked channel maps.
    let out_maps: Vec<DMatrix<f64>> = d.channels.iter().map(|ch| ch.output_map()).collect();
    let drv_stack = vstack(&d.channels.iter().map(|ch| ch.d_rv.clone()).collect::<Vec<_>>());
    let t012 = vstack(&out_maps) + &drv_stack * &scratch.v_maps;
    let t0 = t012.columns(0, n).into_owned();
    let t1 = t012.columns(n, m).into_owned();
    let t2 = t012.columns(n + m, p).into_owned();

    // Row of channel kernels [C_I1(s) ... C_IK(s)].
    let c_i_row = PolyKernel::hstack(&scratch.c_i.iter().collect::<Vec<_>>())?;

    // T_a(s, th) = D_rv-stack * C_I-row(th); T_b = T_a - I.
    let t_a = c_i_row.mul_matrix_left(&drv_stack)?.promote_theta();
    let t_b = t_a.add(&PolyKernel::constant2(-DMatrix::identity(fun, fun)))?;

    // Multiplier 1/tau_i on each channel block.
    let mut i_tau = DMatrix::zeros(fun, fun);
    let mut at = 0;
    for (ch, &tau) in d.channels.iter().zip(&d.delays) {
        for k in 0..ch.dim {
            i_tau[(at + k, at + k)] = 1.0 / tau;
        }
        at += ch.dim;
    }

    // Bold instantaneous 3x3 block: native + injection * v maps.
    let inst = d.instantaneous_stacked() + d.v_injection_stacked() * &scratch.v_maps;
    let nqr = n + q + r;
    let bold_a0 = inst.view((0, 0), (n, n)).into_owned();
    let bold_b1 = inst.view((0, n), (n, m)).into_owned();
    let bold_b2 = inst.view((0, n + m), (n, p)).into_owned();
    let bold_c10 = inst.view((n, 0), (q, n)).into_owned();
    let bold_d11 = inst.view((n, n), (q, m)).into_owned();
    let bold_d12 = inst.view((n, n + m), (q, p)).into_owned();
    let bold_c20 = inst.view((n + q, 0), (r, n)).into_owned();
    let bold_d21 = inst.view((n + q, n), (r, m)).into_owned();
    let bold_d22 = inst.view((n + q, n + m), (r, p)).into_owned();

    // Function-row kernels [A(s); C_11(s); C_21(s)] = injection * C_I-row(s).
    let v_inj = d.v_injection_stacked();
    let fun_rows = c_i_row.mul_matrix_left(&v_inj)?;
    debug_assert_eq!(fun_rows.rows(), nqr);
    let bold_a_s = fun_rows.row_block(0, n);
    let bold_c11 = fun_rows.row_block(n, q);
    let bold_c21 = fun_rows.row_block(n + q, r);

    let pie = PieSpec {
        n,
        m,
        p,
        q,
        r,
        delays: d.delays.clone(),
        p_i: d.channel_dims(),
        t: PiOperator::new(
            DMatrix::identity(n, n),
            PolyKernel::zero(n, fun),
            PolyKernel::constant(t0),
            PolyKernel::zero(fun, fun),
            t_a.trim(),
            t_b.trim(),
        )?,
        a: PiOperator::new(
            bold_a0,
            bold_a_s.trim(),
            PolyKernel::zero(fun, n),
            PolyKernel::constant(i_tau),
            PolyKernel::zero2(fun, fun),
            PolyKernel::zero2(fun, fun),
        )?,
        b1: fin_with_q2(bold_b1, t_zero(fun, m)),
        b2: fin_with_q2(bold_b2, t_zero(fun, p)),
        bt1: fin_with_q2(DMatrix::zeros(n, m), PolyKernel::constant(t1)),
        bt2: fin_with_q2(DMatrix::zeros(n, p), PolyKernel::constant(t2)),
        c1: PiOperator::new(
            bold_c10,
            bold_c11.trim(),
            PolyKernel::zero(0, n),
            PolyKernel::zero(0, fun),
            PolyKernel::zero2(0, fun),
            PolyKernel::zero2(0, fun),
        )?,
        c2: PiOperator::new(
            bold_c20,
            bold_c21.trim(),
            PolyKernel::zero(0, n),
            PolyKernel::zero(0, fun),
            PolyKernel::zero2(0, fun),
            PolyKernel::zero2(0, fun),
        )?,
        d11: PiOperator::from_matrix(bold_d11),
        d12: PiOperator::from_matrix(bold_d12),
        d21: PiOperator::from_matrix(bold_d21),
        d22: PiOperator::from_matrix(bold_d22),
    };
    Ok((pie, scratch))
}

/// Converts the channel form to the integral-equation form.
pub fn ddf_to_pie(d: &DdfSpec) -> Result<PieSpec> {
    ddf_to_pie_with_scratch(d).map(|(pie, _)| pie)
}

fn t_zero(fun: usize, cols: usize) -> PolyKernel {
    PolyKernel::zero(fun, cols)
}

/// PI operator with a finite block and a `Q2` (function-from-finite) block
/// only — the shape of every input-injection coefficient. Inputs live in
/// the finite space, so the function-input width is zero.
fn fin_with_q2(p: DMatrix<f64>, q2: PolyKernel) -> PiOperator {
    let fun = q2.rows();
    let (fo, fi) = (p.nrows(), p.ncols());
    PiOperator::new(
        p,
        PolyKernel::zero(fo, 0),
        q2,
        PolyKernel::zero(fun, 0),
        PolyKernel::zero2(fun, 0),
        PolyKernel::zero2(fun, 0),
    )
    .unwrap_or_else(|_| panic!("injection operator shapes are internally consistent ({fi} cols)"))
}

/// Direct conversion from the delayed-state form to the integral-equation
/// form (no channel elimination needed: the loop matrix is the identity).
pub fn dde_to_pie(d: &DdeSpec) -> Result<PieSpec> {
    validate_dde(d).into_result()?;
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    let width = n + m + p;
    let k = d.delays.len();
    let fun = width * k;
    let nqr = n + q + r;

    // X_i(s) = G_i + tau_i \int_{-1}^{s} K_i(tau_i h) dh, stacked as a row.
    let mut x_blocks = Vec::with_capacity(k);
    for i in 0..k {
        let tau = d.delays[i];
        let g = d.delayed[i].stacked();
        let kern = d.distributed[i].stacked();
        let cumulative = kern.scale_var(tau).antiderivative_from(-1.0).scale(tau);
        x_blocks.push(PolyKernel::constant(g).add(&cumulative)?);
    }
    let x_row = PolyKernel::hstack(&x_blocks.iter().collect::<Vec<_>>())?;
    let fun_rows = x_row.scale(-1.0);
    let bold_a_s = fun_rows.row_block(0, n);
    let bold_c11 = fun_rows.row_block(n, q);
    let bold_c21 = fun_rows.row_block(n + q, r);

    // Bold instantaneous block: native + sum of delayed + integrated kernels.
    let mut inst = d.instantaneous_stacked();
    for i in 0..k {
        inst += d.delayed[i].stacked();
        let kern = d.distributed[i].stacked();
        if !kern.is_zero() {
            inst += kern.definite_integral(-d.delays[i], 0.0);
        }
    }
    let bold_a0 = inst.view((0, 0), (n, n)).into_owned();
    let bold_b1 = inst.view((0, n), (n, m)).into_owned();
    let bold_b2 = inst.view((0, n + m), (n, p)).into_owned();
    let bold_c10 = inst.view((n, 0), (q, n)).into_owned();
    let bold_d11 = inst.view((n, n), (q, m)).into_owned();
    let bold_d12 = inst.view((n, n + m), (q, p)).into_owned();
    let bold_c20 = inst.view((n + q, 0), (r, n)).into_owned();
    let bold_d21 = inst.view((n + q, n), (r, m)).into_owned();
    let bold_d22 = inst.view((n + q, n + m), (r, p)).into_owned();
    debug_assert_eq!(inst.nrows(), nqr);

    // Stacked selectors: channel i copies [x; w; u].
    let sel = DMatrix::identity(width, width);
    let t0 = vstack(&vec![sel.columns(0, n).into_owned(); k]);
    let t1 = vstack(&vec![sel.columns(n, m).into_owned(); k]);
    let t2 = vstack(&vec![sel.columns(n + m, p).into_owned(); k]);

    let mut i_tau = DMatrix::zeros(fun, fun);
    for i in 0..k {
        for j in 0..width {
            i_tau[(i * width + j, i * width + j)] = 1.0 / d.delays[i];
        }
    }

    Ok(PieSpec {
        n,
        m,
        p,
        q,
        r,
        delays: d.delays.clone(),
        p_i: vec![width; k],
        t: PiOperator::new(
            DMatrix::identity(n, n),
            PolyKernel::zero(n, fun),
            PolyKernel::constant(t0),
            PolyKernel::zero(fun, fun),
            PolyKernel::zero2(fun, fun),
            PolyKernel::constant2(-DMatrix::identity(fun, fun)),
        )?,
        a: PiOperator::new(
            bold_a0,
            bold_a_s.trim(),
            PolyKernel::zero(fun, n),
            PolyKernel::constant(i_tau),
            PolyKernel::zero2(fun, fun),
            PolyKernel::zero2(fun, fun),
        )?,
        b1: fin_with_q2(bold_b1, PolyKernel::zero(fun, m)),
        b2: fin_with_q2(bold_b2, PolyKernel::zero(fun, p)),
        bt1: fin_with_q2(DMatrix::zeros(n, m), PolyKernel::constant(t1)),
        bt2: fin_with_q2(DMatrix::zeros(n, p), PolyKernel::constant(t2)),
        c1: PiOperator::new(
            bold_c10,
            bold_c11.trim(),
            PolyKernel::zero(0, n),
            PolyKernel::zero(0, fun),
            PolyKernel::zero2(0, fun),
            PolyKernel::zero2(0, fun),
        )?,
        c2: PiOperator::new(
            bold_c20,
            bold_c21.trim(),
            PolyKernel::zero(0, n),
            PolyKernel::zero(0, fun),
            PolyKernel::zero2(0, fun),
            PolyKernel::zero2(0, fun),
        )?,
        d11: PiOperator::from_matrix(bold_d11),
        d12: PiOperator::from_matrix(bold_d12),
        d21: PiOperator::from_matrix(bold_d21),
        d22: PiOperator::from_matrix(bold_d22),
    })
}

/// Result of channel-rank reduction.
#[derive(Debug, Clone)]
pub struct MinimalDdf {
    pub ddf: DdfSpec,
    /// Detected channel rank per original delay (0 = channel dropped).
    pub channel_ranks: Vec<usize>,
    /// Delays whose channels carried no signal and were removed.
    pub dropped_delays: Vec<f64>,
}

/// Builds a channel form whose channel widths equal the numerical row ranks
/// of the stacked delayed/distributed coefficient blocks: channel `i` carries
/// `Hhat_i [x; w; u]` where `Hhat_i` spans the row space of
/// `[G_i; K_i^(0); ...; K_i^(deg)]`.
pub fn minimal_ddf_from_dde(d: &DdeSpec, rank_tol: f64) -> Result<MinimalDdf> {
    validate_dde(d).into_result()?;
    if !(rank_tol.is_finite() && rank_tol > 0.0) {
        return Err(Error::Config(format!("rank tolerance {rank_tol} must be positive")));
    }
    let (n, m, p, q, r) = (d.n, d.m, d.p, d.q, d.r);
    let nv = n + q + r;
    let width = n + m + p;

    let mut delays = Vec::new();
    let mut channels = Vec::new();
    let mut ranks = Vec::with_capacity(d.delays.len());
    let mut dropped = Vec::new();

    for i in 0..d.delays.len() {
        let g = d.delayed[i].stacked();
        let kern = d.distributed[i].stacked();
        let mut stack = vec![g.clone()];
        for c in kern.coeffs() {
            stack.push(c.clone());
        }
        let stacked = vstack(&stack);
        let max_abs = stacked.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if max_abs == 0.0 {
            ranks.push(0);
            dropped.push(d.delays[i]);
            continue;
        }
        let svd = stacked.clone().svd(false, true);
        let sigma_max = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > rank_tol * sigma_max)
            .count();
        if rank == 0 {
            ranks.push(0);
            dropped.push(d.delays[i]);
            continue;
        }
        ranks.push(rank);
        let v_t = svd.v_t.as_ref().expect("svd requested v_t");
        let h_hat = v_t.rows(0, rank).into_owned(); // rank x width
        let basis = h_hat.transpose(); // width x rank

        let mut ch = DdfChannel::zero(rank, n, m, p, nv);
        ch.c_r = h_hat.columns(0, n).into_owned();
        ch.b_r1 = h_hat.columns(n, m).into_owned();
        ch.b_r2 = h_hat.columns(n + m, p).into_owned();
        ch.c_v = &g * &basis;
        ch.c_vd = kern.mul_matrix_right(&basis)?.trim();
        channels.push(ch);
        delays.push(d.delays[i]);
    }

    let mut out = DdfSpec::zero(
        n,
        m,
        p,
        q,
        r,
        nv,
        delays,
        channels.iter().map(|c| c.dim).collect(),
    );
    out.channels = channels;
    out.a0 = d.a0.clone();
    out.b1 = d.b1.clone();
    out.b2 = d.b2.clone();
    out.c1 = d.c10.clone();
    out.d11 = d.d11.clone();
    out.d12 = d.d12.clone();
    out.c2 = d.c20.clone();
    out.d21 = d.d21.clone();
    out.d22 = d.d22.clone();
    let inj = DMatrix::identity(nv, nv);
    out.b_v = inj.rows(0, n).into_owned();
    out.d1v = inj.rows(n, q).into_owned();
    out.d2v = inj.rows(n + q, r).into_owned();

    if !dropped.is_empty() {
        info!(
            "channel reduction dropped {} inactive delay(s): {:?}",
            dropped.len(),
            dropped
        );
    }
    info!(
        "channel reduction: total channel dimension {} -> {}",
        width * d.delays.len(),
        out.total_channel_dim()
    );
    Ok(MinimalDdf {
        ddf: out,
        channel_ranks: ranks,
        dropped_delays: dropped,
    })
}

/// A plant with delayed actuation and output feedthrough, closed by static
/// output feedback `u(t) = F y(t)`. Inputs enter through per-delay blocks
/// `B_2i u(t - tau_i)` and `D_22i u(t - tau_i)`.
#[derive(Debug, Clone)]
pub struct SofPlant {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub delays: Vec<f64>,
    pub a0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    /// `B_2i` per delay.
    pub b2i: Vec<DMatrix<f64>>,
    /// `D_22i` per delay.
    pub d22i: Vec<DMatrix<f64>>,
}

impl SofPlant {
    fn validate(&self, f: &DMatrix<f64>) -> Result<()> {
        let (n, m, p, q, r) = (self.n, self.m, self.p, self.q, self.r);
        let checks = [
            ("A_0", &self.a0, n, n),
            ("B_1", &self.b1, n, m),
            ("C_1", &self.c1, q, n),
            ("D_11", &self.d11, q, m),
            ("D_12", &self.d12, q, p),
            ("C_2", &self.c2, r, n),
            ("D_21", &self.d21, r, m),
        ];
        for (name, mat, rr, cc) in checks {
            if mat.nrows() != rr || mat.ncols() != cc {
                return Err(Error::dim(name, (mat.nrows(), mat.ncols()), (rr, cc)));
            }
        }
        if self.b2i.len() != self.delays.len() || self.d22i.len() != self.delays.len() {
            return Err(Error::Input(format!(
                "{} input blocks for {} delays",
                self.b2i.len(),
                self.delays.len()
            )));
        }
        for (i, (b2, d22)) in self.b2i.iter().zip(&self.d22i).enumerate() {
            if b2.nrows() != n || b2.ncols() != p {
                return Err(Error::dim(&format!("B_2{}", i + 1), (b2.nrows(), b2.ncols()), (n, p)));
            }
            if d22.nrows() != r || d22.ncols() != p {
                return Err(Error::dim(
                    &format!("D_22{}", i + 1),
                    (d22.nrows(), d22.ncols()),
                    (r, p),
                ));
            }
        }
        if f.nrows() != p || f.ncols() != r {
            return Err(Error::dim("F", (f.nrows(), f.ncols()), (p, r)));
        }
        Ok(())
    }
}

/// Closes `u(t) = F y(t)` around a plant with delayed actuation, producing a
/// channel form whose channels carry the delayed control signals
/// `v_i(t) = F y(t - tau_i)`. The loop through the instantaneous output
/// remains implicit in the channel feedback (`D_rvi`), so no matrix inversion
/// happens here; well-posedness surfaces later as the loop-matrix condition.
pub fn sof_network_to_ddf(plant: &SofPlant, f: &DMatrix<f64>) -> Result<DdfSpec> {
    plant.validate(f)?;
    let (n, m, p, q, r) = (plant.n, plant.m, plant.p, plant.q, plant.r);
    let k = plant.delays.len();
    let p_f = p; // each channel carries one delayed control sample
    let nv = p_f * k;

    let mut out = DdfSpec::zero(n, m, 0, q, r, nv, plant.delays.clone(), vec![p_f; k]);
    // Closed-loop instantaneous data: u' = 0 inputs remain (p' = 0), and the
    // regulated output gains the feedback path z = (C_1 + D_12 F C_2) x + ...
    out.a0 = plant.a0.clone();
    out.b1 = plant.b1.clone();
    out.c1 = &plant.c1 + &plant.d12 * f * &plant.c2;
    out.d11 = &plant.d11 + &plant.d12 * f * &plant.d21;
    out.c2 = plant.c2.clone();
    out.d21 = plant.d21.clone();

    // v injections: B_v = [B_21 ... B_2K], D_2v = [D_221 ... D_22K],
    // D_1v = D_12 F D_2v.
    out.b_v = hstack(&plant.b2i);
    out.d2v = hstack(&plant.d22i);
    out.d1v = &plant.d12 * f * &out.d2v;

    let f_d2v = f * &out.d2v;
    for (i, ch) in out.channels.iter_mut().enumerate() {
        // r_i(t) = F y(t) = F C_2 x + F D_21 w + F D_22* v.
        ch.c_r = f * &plant.c2;
        ch.b_r1 = f * &plant.d21;
        ch.d_rv = f_d2v.clone();
        // Pick-up: v block i equals r_i(t - tau_i).
        let mut c_v = DMatrix::zeros(nv, p_f);
        c_v.view_mut((i * p_f, 0), (p_f, p_f))
            .copy_from(&DMatrix::identity(p_f, p_f));
        ch.c_v = c_v;
    }
    Ok(out)
}

/// Initial hybrid state for the integral-equation form, built from the
/// channel-form initial condition: finite part `x_0`, function components
/// `Phi_i(s) = tau_i r_i'(tau_i s)` (the channel history's derivative in the
/// unit variable).
pub fn hybrid_from_ddf_history(
    d: &DdfSpec,
    x0: &DVector<f64>,
    r0: &[HistoryFunction],
) -> Result<HybridVector> {
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
    let mut parts = Vec::with_capacity(r0.len());
    for ((h, &tau), ch) in r0.iter().zip(&d.delays).zip(&d.channels) {
        if h.dim() != ch.dim {
            return Err(Error::dim("r_i0", (h.dim(), 1), (ch.dim, 1)));
        }
        h.check_coverage(-tau, "channel history")?;
        // Re-grid onto the unit interval; histories may cover more than
        // [-tau, 0], so points outside map to the endpoints exactly once.
        let mut grid = vec![-1.0];
        grid.extend(h.grid().iter().filter_map(|&t| {
            let s = t / tau;
            (s > -1.0 && s < 0.0).then_some(s)
        }));
        grid.push(0.0);
        let values: Vec<DVector<f64>> = grid
            .iter()
            .map(|&s| h.derivative(tau * s) * tau)
            .collect();
        parts.push(FunctionPart::Sampled(HistoryFunction::new(grid, values)?));
    }
    HybridVector::new(x0.clone(), parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    /// x'(t) = a0 x(t) + a1 x(t - 1), z = x.
    fn scalar_dde(a0: f64, a1: f64) -> DdeSpec {
        let mut d = DdeSpec::zero(1, 0, 0, 1, 0, vec![1.0]);
        d.a0 = dmatrix![a0];
        d.delayed[0].a = dmatrix![a1];
        d.c10 = dmatrix![1.0];
        d
    }

    #[test]
    fn scalar_embedding_into_channel_form() {
        let d = scalar_dde(-0.3, -0.5);
        let f = dde_to_ddf(&d).unwrap();
        assert_eq!(f.n_v, 2); // n + q
        assert_eq!(f.channel_dims(), vec![1]);
        // r(t) = x(t); v = [a1 x(t-1); c1-block].
        assert_abs_diff_eq!(f.channels[0].c_r[(0, 0)], 1.0);
        assert_abs_diff_eq!(f.channels[0].c_v[(0, 0)], -0.5);
        assert_abs_diff_eq!(f.channels[0].c_v[(1, 0)], 0.0);
        assert_abs_diff_eq!(f.b_v[(0, 0)], 1.0);
        assert_abs_diff_eq!(f.b_v[(0, 1)], 0.0);
        assert_abs_diff_eq!(f.d1v[(0, 1)], 1.0);
    }

    #[test]
    fn scalar_pie_matches_hand_computation() {
        // x' = a0 x + a1 x(t-1): bold A_0 = a0 + a1, A(s) = -a1,
        // T = {P = 1, Q2 = [1; 0], R2 = -I} on the [x; w; u]-channel (width 1 here
        // since m = p = 0... width = n = 1, plus z-row selector).
        let d = scalar_dde(-0.3, -0.5);
        let pie = dde_to_pie(&d).unwrap();
        assert_abs_diff_eq!(pie.a.p()[(0, 0)], -0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(pie.a.q1().eval1(-0.4)[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pie.a.r0().eval1(-0.4)[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pie.t.p()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pie.t.q2().eval1(-0.4)[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pie.t.r2().eval2(-0.4, -0.7)[(0, 0)], -1.0, epsilon = 1e-15);
        assert!(pie.t.r1().is_zero());
        // z = x: bold C_10 = 1 + 0 (no delayed z terms here).
        assert_abs_diff_eq!(pie.c1.p()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_step_route_agrees_with_direct_route() {
        let mut d = DdeSpec::zero(2, 1, 0, 1, 0, vec![0.5, 1.25]);
        d.a0 = dmatrix![0.1, 1.0; -1.0, -0.4];
        d.b1 = dmatrix![0.3; -0.2];
        d.delayed[0].a = dmatrix![0.0, 0.2; -0.3, 0.1];
        d.delayed[1].b1 = dmatrix![0.5; 0.0];
        d.distributed[0].a =
            PolyKernel::from_coeffs(vec![dmatrix![0.1, 0.0; 0.0, -0.2], dmatrix![0.0, 0.3; 0.1, 0.0]])
                .unwrap();
        d.c10 = dmatrix![1.0, 0.0];
        let direct = dde_to_pie(&d).unwrap();
        let routed = ddf_to_pie(&dde_to_ddf(&d).unwrap()).unwrap();

        for (name, a, b) in [
            ("T", &direct.t, &routed.t),
            ("A", &direct.a, &routed.a),
            ("B_1", &direct.b1, &routed.b1),
            ("B_T1", &direct.bt1, &routed.bt1),
            ("C_1", &direct.c1, &routed.c1),
            ("D_11", &direct.d11, &routed.d11),
        ] {
            assert_abs_diff_eq!((a.p() - b.p()).norm(), 0.0, epsilon = 1e-12);
            for &s in &[-1.0, -0.6, -0.2, 0.0] {
                assert_abs_diff_eq!(
                    (a.q1().eval1(s) - b.q1().eval1(s)).norm(),
                    0.0,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    (a.q2().eval1(s) - b.q2().eval1(s)).norm(),
                    0.0,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    (a.r0().eval1(s) - b.r0().eval1(s)).norm(),
                    0.0,
                    epsilon = 1e-12
                );
                for &th in &[-0.9, -0.5, -0.1] {
                    assert_abs_diff_eq!(
                        (a.r1().eval2(s, th) - b.r1().eval2(s, th)).norm(),
                        0.0,
                        epsilon = 1e-12,
                    );
                    assert_abs_diff_eq!(
                        (a.r2().eval2(s, th) - b.r2().eval2(s, th)).norm(),
                        0.0,
                        epsilon = 1e-12,
                    );
                }
            }
            let _ = name;
        }
    }

    #[test]
    fn neutral_channel_reconstructs_derivative_row() {
        let mut s = NdsSpec::from_dde(scalar_dde(-0.3, -0.5));
        s.e[0] = dmatrix![0.25];
        let f = nds_to_ddf(&s).unwrap();
        // Channel rows: [x; x'] with x' = a0 x + v_x.
        assert_eq!(f.channel_dims(), vec![2]);
        assert_abs_diff_eq!(f.channels[0].c_r[(0, 0)], 1.0);
        assert_abs_diff_eq!(f.channels[0].c_r[(1, 0)], -0.3);
        assert_abs_diff_eq!(f.channels[0].d_rv[(1, 0)], 1.0);
        // Pick-up: v_x = a1 x(t-1) + e x'(t-1).
        assert_abs_diff_eq!(f.channels[0].c_v[(0, 0)], -0.5);
        assert_abs_diff_eq!(f.channels[0].c_v[(0, 1)], 0.25);
    }

    #[test]
    fn singular_loop_is_rejected() {
        let mut d = DdfSpec::zero(1, 0, 0, 0, 0, 1, vec![1.0], vec![1]);
        d.channels[0].d_rv = dmatrix![1.0];
        d.channels[0].c_v = dmatrix![1.0];
        let err = ddf_to_pie(&d).unwrap_err();
        match err {
            Error::Validation(rep) => assert!(rep.to_string().contains("D_I singular")),
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn rank_reduction_collapses_rank_one_blocks() {
        // Delayed block a1 = e1 e2^T has rank 1: channel carries x_2 only.
        let mut d = DdeSpec::zero(2, 0, 0, 0, 0, vec![1.0, 2.0]);
        d.a0 = dmatrix![0.0, 1.0; -1.0, -0.5];
        d.delayed[0].a = dmatrix![0.0, 0.7; 0.0, 0.0];
        // Second delay inactive.
        let red = minimal_ddf_from_dde(&d, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(red.channel_ranks, vec![1, 0]);
        assert_eq!(red.dropped_delays, vec![2.0]);
        assert_eq!(red.ddf.delays, vec![1.0]);
        assert_eq!(red.ddf.total_channel_dim(), 1);
        // The factored channel must reproduce G_i = C_v * H_hat.
        let got = &red.ddf.channels[0].c_v * red.ddf.channels[0].output_map().columns(0, 2);
        assert_abs_diff_eq!(
            (got - d.delayed[0].stacked()).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hybrid_history_derivative_scaling() {
        // r(t) = t on [-2, 0], tau = 2: Phi(s) = 2 * r'(2s) = 2.
        let mut d = DdfSpec::zero(1, 0, 0, 0, 0, 1, vec![2.0], vec![1]);
        d.channels[0].c_r = dmatrix![1.0];
        let h = HistoryFunction::sample(1, -2.0, 9, |t| dvector![t]);
        let v = hybrid_from_ddf_history(&d, &dvector![0.0], &[h]).unwrap();
        for &s in &[-1.0, -0.5, -0.25, 0.0] {
            assert_abs_diff_eq!(v.function_value(s)[0], 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn transport_profile_round_trip() {
        let h = HistoryFunction::sample(1, -3.0, 13, |t| dvector![(2.0 * t).sin()]);
        let phi = r0_to_phi0(std::slice::from_ref(&h), &[3.0]).unwrap();
        assert_abs_diff_eq!(phi[0].span().0, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(phi[0].eval(-0.5)[0], (-3.0f64).sin(), epsilon = 1e-12);
        let back = phi0_to_r0(&phi, &[3.0]).unwrap();
        assert_abs_diff_eq!(back[0].eval(-1.5)[0], h.eval(-1.5)[0], epsilon = 1e-12);
    }
}
