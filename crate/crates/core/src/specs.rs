//! The delay-system representation classes.
//!
//! Four input-output equivalent ways to describe one linear time-delay
//! system live here:
//!
//! * [`DdeSpec`] — delay differential equation with instantaneous, discrete
//!   delayed, and distributed delayed action of state, disturbance, and
//!   control on the state derivative and two output groups.
//! * [`NdsSpec`] — neutral delay system: a DDE plus delayed *derivative*
//!   feedback through `E`-blocks.
//! * [`DdfSpec`] — delay feedback form: all delays are routed through a
//!   a bank of low-dimensional channels `r_i` feeding a delayed signal `v`.
//! * [`OdePdeSpec`] — the DDF with each delayed channel realized as a
//!   transport PDE on `[-1, 0]`; matrices coincide with the DDF form.
//!
//! The partial-integral (PIE) representation, produced by conversion only,
//! lives in [`crate::convert`].
//!
//! Per delay, the nine coefficient blocks act on the stacked vector
//! `[x; w; u]` and produce the stacked `[dx/dt; z; y]`; [`DelayBlock`] and
//! [`KernelBlock`] group them and expose that stacked matrix, which is also
//! the shape the conversion formulas consume.

use nalgebra::DMatrix;

use crate::kernel::PolyKernel;

/// Size card of a representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Disturbance width (`w`).
    pub m: usize,
    /// Control width (`u`).
    pub p: usize,
    /// Regulated-output height (`z`).
    pub q: usize,
    /// Measured-output height (`y`).
    pub r: usize,
    /// Number of delays / channels.
    pub k: usize,
    /// Channel dimensions (DDF family; empty otherwise).
    pub p_i: Vec<usize>,
    /// Width of the aggregated delayed signal `v` (DDF family; 0 otherwise).
    pub n_v: usize,
}

impl Dims {
    /// Total channel dimension `sum p_i`.
    pub fn total_channel_dim(&self) -> usize {
        self.p_i.iter().sum()
    }
}

/// The nine matrices a single delay contributes, acting on `[x; w; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBlock {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

impl DelayBlock {
    pub fn zero(n: usize, m: usize, p: usize, q: usize, r: usize) -> Self {
        DelayBlock {
            a: DMatrix::zeros(n, n),
            b1: DMatrix::zeros(n, m),
            b2: DMatrix::zeros(n, p),
            c1: DMatrix::zeros(q, n),
            d11: DMatrix::zeros(q, m),
            d12: DMatrix::zeros(q, p),
            c2: DMatrix::zeros(r, n),
            d21: DMatrix::zeros(r, m),
            d22: DMatrix::zeros(r, p),
        }
    }

    /// `[A B1 B2; C1 D11 D12; C2 D21 D22]` as one `(n+q+r) x (n+m+p)` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, p) = (self.a.ncols(), self.b1.ncols(), self.b2.ncols());
        let (q, r) = (self.c1.nrows(), self.c2.nrows());
        let mut g = DMatrix::zeros(n + q + r, n + m + p);
        g.view_mut((0, 0), (n, n)).copy_from(&self.a);
        g.view_mut((0, n), (n, m)).copy_from(&self.b1);
        g.view_mut((0, n + m), (n, p)).copy_from(&self.b2);
        g.view_mut((n, 0), (q, n)).copy_from(&self.c1);
        g.view_mut((n, n), (q, m)).copy_from(&self.d11);
        g.view_mut((n, n + m), (q, p)).copy_from(&self.d12);
        g.view_mut((n + q, 0), (r, n)).copy_from(&self.c2);
        g.view_mut((n + q, n), (r, m)).copy_from(&self.d21);
        g.view_mut((n + q, n + m), (r, p)).copy_from(&self.d22);
        g
    }

    pub fn is_zero(&self) -> bool {
        [
            &self.a, &self.b1, &self.b2, &self.c1, &self.d11, &self.d12, &self.c2, &self.d21,
            &self.d22,
        ]
        .iter()
        .all(|m| m.iter().all(|&x| x == 0.0))
    }
}

/// The nine distributed-delay kernels of one delay, defined on `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    pub a: PolyKernel,
    pub b1: PolyKernel,
    pub b2: PolyKernel,
    pub c1: PolyKernel,
    pub d11: PolyKernel,
    pub d12: PolyKernel,
    pub c2: PolyKernel,
    pub d21: PolyKernel,
    pub d22: PolyKernel,
}

impl KernelBlock {
    pub fn zero(n: usize, m: usize, p: usize, q: usize, r: usize) -> Self {
        KernelBlock {
            a: PolyKernel::zero(n, n),
            b1: PolyKernel::zero(n, m),
            b2: PolyKernel::zero(n, p),
            c1: PolyKernel::zero(q, n),
            d11: PolyKernel::zero(q, m),
            d12: PolyKernel::zero(q, p),
            c2: PolyKernel::zero(r, n),
            d21: PolyKernel::zero(r, m),
            d22: PolyKernel::zero(r, p),
        }
    }

    /// The stacked `(n+q+r) x (n+m+p)` kernel (degrees are unified).
    pub fn stacked(&self) -> PolyKernel {
        let row0 = PolyKernel::hstack(&[&self.a, &self.b1, &self.b2]).expect("row widths agree");
        let row1 = PolyKernel::hstack(&[&self.c1, &self.d11, &self.d12]).expect("row widths agree");
        let row2 = PolyKernel::hstack(&[&self.c2, &self.d21, &self.d22]).expect("row widths agree");
        PolyKernel::vstack(&[&row0, &row1, &row2]).expect("column widths agree")
    }

    pub fn is_zero(&self) -> bool {
        [
            &self.a, &self.b1, &self.b2, &self.c1, &self.d11, &self.d12, &self.c2, &self.d21,
            &self.d22,
        ]
        .iter()
        .all(|k| k.is_zero())
    }

    pub fn max_degree(&self) -> usize {
        [
            &self.a, &self.b1, &self.b2, &self.c1, &self.d11, &self.d12, &self.c2, &self.d21,
            &self.d22,
        ]
        .iter()
        .map(|k| k.degree())
        .max()
        .unwrap()
    }
}

/// Delay differential equation.
///
/// Dynamics and outputs:
/// `dx/dt = A0 x + B1 w + B2 u + sum_i (delayed block) + sum_i (distributed block)`
/// with `z` and `y` rows built the same way from the `C`/`D` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DdeSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Strictly increasing positive delays `tau_1 < ... < tau_K`.
    pub delays: Vec<f64>,
    pub a0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c10: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub c20: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    /// Discrete delayed blocks, one per delay.
    pub delayed: Vec<DelayBlock>,
    /// Distributed delayed kernels, one per delay, on `[-tau_i, 0]`.
    pub distributed: Vec<KernelBlock>,
}

impl DdeSpec {
    /// All-zero system of the given dimensions.
    pub fn zero(n: usize, m: usize, p: usize, q: usize, r: usize, delays: Vec<f64>) -> Self {
        let k = delays.len();
        DdeSpec {
            n,
            m,
            p,
            q,
            r,
            delays,
            a0: DMatrix::zeros(n, n),
            b1: DMatrix::zeros(n, m),
            b2: DMatrix::zeros(n, p),
            c10: DMatrix::zeros(q, n),
            d11: DMatrix::zeros(q, m),
            d12: DMatrix::zeros(q, p),
            c20: DMatrix::zeros(r, n),
            d21: DMatrix::zeros(r, m),
            d22: DMatrix::zeros(r, p),
            delayed: vec![DelayBlock::zero(n, m, p, q, r); k],
            distributed: vec![KernelBlock::zero(n, m, p, q, r); k],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.q,
            r: self.r,
            k: self.delays.len(),
            p_i: Vec::new(),
            n_v: 0,
        }
    }

    /// Instantaneous `(n+q+r) x (n+m+p)` block.
    pub fn instantaneous_stacked(&self) -> DMatrix<f64> {
        DelayBlock {
            a: self.a0.clone(),
            b1: self.b1.clone(),
            b2: self.b2.clone(),
            c1: self.c10.clone(),
            d11: self.d11.clone(),
            d12: self.d12.clone(),
            c2: self.c20.clone(),
            d21: self.d21.clone(),
            d22: self.d22.clone(),
        }
        .stacked()
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.last().copied().unwrap_or(0.0)
    }
}

/// Neutral delay system: a DDE base plus delayed-derivative blocks.
///
/// The `e` blocks multiply `dx/dt(t - tau_i)` in the dynamics (`e`), the
/// regulated output (`e1`), and the measured output (`e2`); the `*_d`
/// kernels are their distributed counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct NdsSpec {
    pub base: DdeSpec,
    pub e: Vec<DMatrix<f64>>,
    pub e1: Vec<DMatrix<f64>>,
    pub e2: Vec<DMatrix<f64>>,
    pub e_d: Vec<PolyKernel>,
    pub e1_d: Vec<PolyKernel>,
    pub e2_d: Vec<PolyKernel>,
}

impl NdsSpec {
    /// Embeds a DDE as a neutral system with zero `E`-blocks.
    pub fn from_dde(base: DdeSpec) -> Self {
        let (n, q, r, k) = (base.n, base.q, base.r, base.delays.len());
        NdsSpec {
            base,
            e: vec![DMatrix::zeros(n, n); k],
            e1: vec![DMatrix::zeros(q, n); k],
            e2: vec![DMatrix::zeros(r, n); k],
            e_d: vec![PolyKernel::zero(n, n); k],
            e1_d: vec![PolyKernel::zero(q, n); k],
            e2_d: vec![PolyKernel::zero(r, n); k],
        }
    }

    pub fn dims(&self) -> Dims {
        self.base.dims()
    }

    /// Whether every neutral block vanishes (the system is a plain DDE).
    pub fn is_retarded(&self) -> bool {
        self.e.iter().chain(&self.e1).chain(&self.e2).all(|m| m.iter().all(|&x| x == 0.0))
            && self
                .e_d
                .iter()
                .chain(&self.e1_d)
                .chain(&self.e2_d)
                .all(|k| k.is_zero())
    }

    /// Stacked neutral column `[E_i; E_1i; E_2i]`, `(n+q+r) x n`.
    pub fn e_stacked(&self, i: usize) -> DMatrix<f64> {
        let (n, q, r) = (self.base.n, self.base.q, self.base.r);
        let mut g = DMatrix::zeros(n + q + r, n);
        g.view_mut((0, 0), (n, n)).copy_from(&self.e[i]);
        g.view_mut((n, 0), (q, n)).copy_from(&self.e1[i]);
        g.view_mut((n + q, 0), (r, n)).copy_from(&self.e2[i]);
        g
    }

    /// Stacked neutral kernel column, `(n+q+r) x n`.
    pub fn e_d_stacked(&self, i: usize) -> PolyKernel {
        PolyKernel::vstack(&[&self.e_d[i], &self.e1_d[i], &self.e2_d[i]])
            .expect("column widths agree")
    }
}

/// One delayed channel of a DDF.
///
/// The channel signal is `r_i(t) = C_r x + B_r1 w + B_r2 u + D_rv v` and the
/// channel feeds the aggregated delayed signal through
/// `v(t) += C_v r_i(t - tau_i) + \int_{-tau_i}^0 C_vd(s) r_i(t + s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdfChannel {
    /// Channel width `p_i`.
    pub dim: usize,
    pub c_r: DMatrix<f64>,
    pub b_r1: DMatrix<f64>,
    pub b_r2: DMatrix<f64>,
    pub d_rv: DMatrix<f64>,
    pub c_v: DMatrix<f64>,
    /// Distributed pickup kernel on `[-tau_i, 0]`.
    pub c_vd: PolyKernel,
}

impl DdfChannel {
    pub fn zero(dim: usize, n: usize, m: usize, p: usize, n_v: usize) -> Self {
        DdfChannel {
            dim,
            c_r: DMatrix::zeros(dim, n),
            b_r1: DMatrix::zeros(dim, m),
            b_r2: DMatrix::zeros(dim, p),
            d_rv: DMatrix::zeros(dim, n_v),
            c_v: DMatrix::zeros(n_v, dim),
            c_vd: PolyKernel::zero(n_v, dim),
        }
    }

    /// `[C_r B_r1 B_r2]` as one `p_i x (n+m+p)` matrix.
    pub fn output_map(&self) -> DMatrix<f64> {
        let (n, m, p) = (self.c_r.ncols(), self.b_r1.ncols(), self.b_r2.ncols());
        let mut g = DMatrix::zeros(self.dim, n + m + p);
        g.view_mut((0, 0), (self.dim, n)).copy_from(&self.c_r);
        g.view_mut((0, n), (self.dim, m)).copy_from(&self.b_r1);
        g.view_mut((0, n + m), (self.dim, p)).copy_from(&self.b_r2);
        g
    }

    /// Effective discrete pickup `C_v + \int_{-tau}^0 C_vd(s) ds`.
    pub fn c_v_hat(&self, tau: f64) -> DMatrix<f64> {
        if self.c_vd.is_zero() {
            self.c_v.clone()
        } else {
            &self.c_v + self.c_vd.definite_integral(-tau, 0.0)
        }
    }
}

/// Delay feedback form.
///
/// `[dx/dt; z; y] = [A0 B1 B2; C1 D11 D12; C2 D21 D22][x; w; u] + [Bv; D1v; D2v] v`
/// with `v` assembled from the delayed channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DdfSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Width of the aggregated delayed signal `v`.
    pub n_v: usize,
    pub delays: Vec<f64>,
    pub a0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub b_v: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d1v: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    pub d2v: DMatrix<f64>,
    /// One channel per delay.
    pub channels: Vec<DdfChannel>,
}

impl DdfSpec {
    /// All-zero system with the given channel widths.
    pub fn zero(
        n: usize,
        m: usize,
        p: usize,
        q: usize,
        r: usize,
        n_v: usize,
        delays: Vec<f64>,
        p_i: Vec<usize>,
    ) -> Self {
        let channels = p_i
            .iter()
            .map(|&dim| DdfChannel::zero(dim, n, m, p, n_v))
            .collect();
        DdfSpec {
            n,
            m,
            p,
            q,
            r,
            n_v,
            delays,
            a0: DMatrix::zeros(n, n),
            b1: DMatrix::zeros(n, m),
            b2: DMatrix::zeros(n, p),
            b_v: DMatrix::zeros(n, n_v),
            c1: DMatrix::zeros(q, n),
            d11: DMatrix::zeros(q, m),
            d12: DMatrix::zeros(q, p),
            d1v: DMatrix::zeros(q, n_v),
            c2: DMatrix::zeros(r, n),
            d21: DMatrix::zeros(r, m),
            d22: DMatrix::zeros(r, p),
            d2v: DMatrix::zeros(r, n_v),
            channels,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.q,
            r: self.r,
            k: self.delays.len(),
            p_i: self.channels.iter().map(|c| c.dim).collect(),
            n_v: self.n_v,
        }
    }

    /// Channel widths `p_i`.
    pub fn channel_dims(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.dim).collect()
    }

    /// Total channel dimension `sum p_i`.
    pub fn total_channel_dim(&self) -> usize {
        self.channels.iter().map(|c| c.dim).sum()
    }

    /// The delay-free core `[A_0 B_1 B_2; C_1 D_11 D_12; C_2 D_21 D_22]`
    /// as one `(n+q+r) x (n+m+p)` matrix.
    pub fn instantaneous_stacked(&self) -> DMatrix<f64> {
        let (n, m, p, q, r) = (self.n, self.m, self.p, self.q, self.r);
        let mut g = DMatrix::zeros(n + q + r, n + m + p);
        g.view_mut((0, 0), (n, n)).copy_from(&self.a0);
        g.view_mut((0, n), (n, m)).copy_from(&self.b1);
        g.view_mut((0, n + m), (n, p)).copy_from(&self.b2);
        g.view_mut((n, 0), (q, n)).copy_from(&self.c1);
        g.view_mut((n, n), (q, m)).copy_from(&self.d11);
        g.view_mut((n, n + m), (q, p)).copy_from(&self.d12);
        g.view_mut((n + q, 0), (r, n)).copy_from(&self.c2);
        g.view_mut((n + q, n), (r, m)).copy_from(&self.d21);
        g.view_mut((n + q, n + m), (r, p)).copy_from(&self.d22);
        g
    }

    /// `[Bv; D1v; D2v]` as one `(n+q+r) x n_v` matrix.
    pub fn v_injection_stacked(&self) -> DMatrix<f64> {
        let (n, q, r) = (self.n, self.q, self.r);
        let mut g = DMatrix::zeros(n + q + r, self.n_v);
        g.view_mut((0, 0), (n, self.n_v)).copy_from(&self.b_v);
        g.view_mut((n, 0), (q, self.n_v)).copy_from(&self.d1v);
        g.view_mut((n + q, 0), (r, self.n_v)).copy_from(&self.d2v);
        g
    }

    /// `I - sum_i Chat_vi D_rvi`, whose inverse `D_I` underpins both
    /// well-posedness of the delayed-signal loop and the PIE conversion.
    pub fn d_i_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n_v, self.n_v);
        for (ch, &tau) in self.channels.iter().zip(&self.delays) {
            m -= ch.c_v_hat(tau) * &ch.d_rv;
        }
        m
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.last().copied().unwrap_or(0.0)
    }
}

/// The coupled ODE-PDE realization of a DDF.
///
/// Each channel becomes a transport equation
/// `d/dt phi_i(t, s) = (1 / tau_i) d/ds phi_i(t, s)` on `s in [-1, 0]` with
/// boundary `phi_i(t, 0) = r_i(t)`, and the delayed signal reads
/// `v(t) = sum_i C_vi phi_i(t, -1) + sum_i \int_{-1}^0 tau_i C_vdi(tau_i s) phi_i(t, s) ds`.
/// All matrices coincide with the underlying DDF.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePdeSpec {
    pub ddf: DdfSpec,
    /// Preferred collocation size for display/export; simulation takes the
    /// grid size from its own configuration.
    pub collocation_hint: Option<usize>,
}

impl OdePdeSpec {
    pub fn new(ddf: DdfSpec) -> Self {
        OdePdeSpec {
            ddf,
            collocation_hint: None,
        }
    }

    pub fn dims(&self) -> Dims {
        self.ddf.dims()
    }
}
