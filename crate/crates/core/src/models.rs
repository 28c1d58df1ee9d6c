//! Builders for three benchmark delay networks.
//!
//! * A fleet of vehicles whose disturbance, actuation, and measurement paths
//!   are each delayed ([`UavParams`]): the textbook case where the delay form
//!   carries every state and input in every channel while the channel form
//!   delays only the low-dimensional signals that actually cross a link.
//! * The same fleet closed under static output feedback with delayed actuator
//!   feedthrough ([`SofParams`]): its output recursion has no delay-form
//!   realization at all, only a channel-form one.
//! * A multi-user water-temperature loop ([`ShowerParams`]): a scalable
//!   state-delay network whose channel form needs one scalar channel per user.
//!
//! Every builder emits plain [`DdeSpec`]/[`DdfSpec`] data ready for the
//! converters and simulators; nothing here holds interior mutability, so the
//! outputs can be shared freely across threads.

use crate::convert::{sof_network_to_ddf, SofPlant};
use crate::error::{Error, Result};
use crate::signal::{SignalDescriptor, VectorSignal};
use crate::specs::{DdeSpec, DdfSpec};
use nalgebra::DMatrix;

/// Which physical path a delayed link belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Leg {
    /// Disturbance reaching vehicle `i` late: `b_1i w(t - tau_proc_i)`.
    Process,
    /// Actuation reaching vehicle `i` late: `b_2i u(t - tau_in_i)`.
    Input,
    /// Measurement leaving vehicle `i` late:
    /// `c_2i x_i(t - tau_out_i) + d_21i w(t - tau_out_i)`.
    Output,
}

/// One merged delay value together with the links that share it.
struct Slot {
    tau: f64,
    /// `(leg, vehicle index)` pairs, ordered process < input < output.
    members: Vec<(Leg, usize)>,
}

/// A network of `N` identical-dimension vehicles exchanging a common
/// disturbance `w in R^m` and a common input `u in R^p`, with per-vehicle
/// states `x_i in R^n` and measurements `y_i in R^r`:
///
/// ```text
/// x_i' = a_i x_i + sum_j coupling[i][j] x_j + b_1i w(t - process_delays[i])
///                                           + b_2i u(t - input_delays[i])
/// z    = c1 x + d12 u
/// y_i  = c2_i x_i(t - output_delays[i]) + d21_i w(t - output_delays[i])
/// ```
///
/// The three delay lists are merged into one strictly increasing set; links
/// whose delays tie exactly share a delay index (and, in the channel form, a
/// stacked channel).
#[derive(Clone, Debug)]
pub struct UavParams {
    /// Per-vehicle drift blocks `a_i`, each `n x n`.
    pub a: Vec<DMatrix<f64>>,
    /// Couplings: `coupling[i][j]` drives vehicle `i` with vehicle `j`'s
    /// state. Diagonal entries must be zero (`a_i` carries them).
    pub coupling: Vec<Vec<DMatrix<f64>>>,
    /// Per-vehicle disturbance blocks `b_1i`, each `n x m`.
    pub b1: Vec<DMatrix<f64>>,
    /// Per-vehicle actuation blocks `b_2i`, each `n x p`.
    pub b2: Vec<DMatrix<f64>>,
    /// Per-vehicle measurement blocks `c_2i`, each `r x n`.
    pub c2: Vec<DMatrix<f64>>,
    /// Per-vehicle measured feedthrough blocks `d_21i`, each `r x m`.
    pub d21: Vec<DMatrix<f64>>,
    /// Regulated-output map over the stacked state, `q x (n N)`.
    pub c1: DMatrix<f64>,
    /// Regulated-output feedthrough from the input, `q x p`.
    pub d12: DMatrix<f64>,
    /// Disturbance transport delays, one per vehicle.
    pub process_delays: Vec<f64>,
    /// Actuation transport delays, one per vehicle.
    pub input_delays: Vec<f64>,
    /// Measurement transport delays, one per vehicle.
    pub output_delays: Vec<f64>,
}

impl UavParams {
    /// Scalar demonstration fleet: `a_i = -1`, no couplings, unit gains,
    /// `z = sum_i x_i + 0.1 u`, and delays `1, ..., 3N` split as
    /// process `i`, input `N + i`, output `2N + i`.
    pub fn demo(count: usize) -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        let seq = |off: usize| (1..=count).map(|i| (off + i) as f64).collect();
        UavParams {
            a: vec![DMatrix::from_element(1, 1, -1.0); count],
            coupling: vec![vec![DMatrix::zeros(1, 1); count]; count],
            b1: vec![one.clone(); count],
            b2: vec![one.clone(); count],
            c2: vec![one.clone(); count],
            d21: vec![one; count],
            c1: DMatrix::from_element(1, count, 1.0),
            d12: DMatrix::from_element(1, 1, 0.1),
            process_delays: seq(0),
            input_delays: seq(count),
            output_delays: seq(2 * count),
        }
    }

    /// Number of vehicles `N`.
    pub fn count(&self) -> usize {
        self.a.len()
    }

    /// Per-vehicle state dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    /// Disturbance dimension `m`.
    pub fn noise_dim(&self) -> usize {
        self.b1.first().map_or(0, |b| b.ncols())
    }

    /// Input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.b2.first().map_or(0, |b| b.ncols())
    }

    /// Per-vehicle measurement dimension `r`.
    pub fn output_dim(&self) -> usize {
        self.c2.first().map_or(0, |c| c.nrows())
    }

    /// Total channel width of [`build_uav_ddf`]: `(2n + r) N`. Each process
    /// and actuation link delays an `n`-wide signal, each measurement link an
    /// `r`-wide one.
    pub fn compact_channel_dim(&self) -> usize {
        (2 * self.state_dim() + self.output_dim()) * self.count()
    }

    /// Total channel width of the generic delay-form conversion, which drags
    /// the full `[x; w; u]` through every merged delay:
    /// `K (n N + m + p)` with `K = 3N` when no delays tie.
    pub fn naive_channel_dim(&self) -> usize {
        let stacked = self.state_dim() * self.count() + self.noise_dim() + self.input_dim();
        self.merged().map_or(0, |slots| slots.len() * stacked)
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.count();
        if count == 0 {
            return Err(Error::Input("a vehicle network needs at least one vehicle".into()));
        }
        let (n, m, p, r) = (self.state_dim(), self.noise_dim(), self.input_dim(), self.output_dim());
        if n == 0 || m == 0 || p == 0 || r == 0 {
            return Err(Error::Input(
                "vehicle blocks must be non-empty (state, disturbance, input, and output)".into(),
            ));
        }
        let lists = [
            ("a_i", &self.a, n, n),
            ("b_1i", &self.b1, n, m),
            ("b_2i", &self.b2, n, p),
            ("c_2i", &self.c2, r, n),
            ("d_21i", &self.d21, r, m),
        ];
        for (name, list, rows, cols) in lists {
            if list.len() != count {
                return Err(Error::Input(format!(
                    "{} {name} blocks for {count} vehicles",
                    list.len()
                )));
            }
            for (i, blk) in list.iter().enumerate() {
                if blk.nrows() != rows || blk.ncols() != cols {
                    return Err(Error::dim(
                        &format!("{name} (vehicle {})", i + 1),
                        (blk.nrows(), blk.ncols()),
                        (rows, cols),
                    ));
                }
            }
        }
        if self.coupling.len() != count || self.coupling.iter().any(|row| row.len() != count) {
            return Err(Error::Input(format!("coupling grid must be {count} x {count}")));
        }
        for (i, row) in self.coupling.iter().enumerate() {
            for (j, blk) in row.iter().enumerate() {
                if blk.nrows() != n || blk.ncols() != n {
                    return Err(Error::dim(
                        &format!("coupling ({},{})", i + 1, j + 1),
                        (blk.nrows(), blk.ncols()),
                        (n, n),
                    ));
                }
                if i == j && blk.iter().any(|&x| x != 0.0) {
                    return Err(Error::Input(format!(
                        "coupling ({0},{0}) must be zero; put self-dynamics in a_{0}",
                        i + 1
                    )));
                }
            }
        }
        if self.c1.ncols() != n * count {
            return Err(Error::dim("c1", (self.c1.nrows(), self.c1.ncols()), (self.c1.nrows(), n * count)));
        }
        if self.d12.nrows() != self.c1.nrows() || self.d12.ncols() != p {
            return Err(Error::dim("d12", (self.d12.nrows(), self.d12.ncols()), (self.c1.nrows(), p)));
        }
        for (name, list) in [
            ("process", &self.process_delays),
            ("input", &self.input_delays),
            ("output", &self.output_delays),
        ] {
            if list.len() != count {
                return Err(Error::Input(format!(
                    "{} {name} delays for {count} vehicles",
                    list.len()
                )));
            }
            if let Some(&tau) = list.iter().find(|&&tau| !(tau > 0.0)) {
                return Err(Error::Input(format!("{name} delay {tau} is not positive")));
            }
        }
        Ok(())
    }

    /// Merges the three delay lists into strictly increasing slots; exact
    /// ties share one slot.
    fn merged(&self) -> Result<Vec<Slot>> {
        self.validate()?;
        let mut links: Vec<(f64, Leg, usize)> = Vec::with_capacity(3 * self.count());
        for (leg, list) in [
            (Leg::Process, &self.process_delays),
            (Leg::Input, &self.input_delays),
            (Leg::Output, &self.output_delays),
        ] {
            links.extend(list.iter().enumerate().map(|(i, &tau)| (tau, leg, i)));
        }
        links.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut slots: Vec<Slot> = Vec::new();
        for (tau, leg, i) in links {
            match slots.last_mut() {
                Some(slot) if slot.tau == tau => slot.members.push((leg, i)),
                _ => slots.push(Slot { tau, members: vec![(leg, i)] }),
            }
        }
        Ok(slots)
    }

    /// Stacked drift `A_0` with `a_i` on the diagonal blocks and the
    /// couplings off it.
    fn drift(&self) -> DMatrix<f64> {
        let (count, n) = (self.count(), self.state_dim());
        let mut a0 = DMatrix::zeros(n * count, n * count);
        for i in 0..count {
            a0.view_mut((i * n, i * n), (n, n)).copy_from(&self.a[i]);
            for j in 0..count {
                if i != j {
                    a0.view_mut((i * n, j * n), (n, n)).copy_from(&self.coupling[i][j]);
                }
            }
        }
        a0
    }
}

/// Assembles the vehicle network as a plain delay form: `K <= 3N` merged
/// delays, and every delayed link becomes a block of the corresponding
/// delayed coefficient (disturbance links in `B_1i`, actuation links in
/// `B_2i`, measurement links in `C_2i`/`D_21i` at their vehicle's rows).
pub fn build_uav_dde(params: &UavParams) -> Result<DdeSpec> {
    let slots = params.merged()?;
    let count = params.count();
    let (n, m, p, r) = (
        params.state_dim(),
        params.noise_dim(),
        params.input_dim(),
        params.output_dim(),
    );
    let taus = slots.iter().map(|s| s.tau).collect();
    let mut d = DdeSpec::zero(n * count, m, p, params.c1.nrows(), r * count, taus);
    d.a0 = params.drift();
    d.c10 = params.c1.clone();
    d.d12 = params.d12.clone();
    for (k, slot) in slots.iter().enumerate() {
        let blk = &mut d.delayed[k];
        for &(leg, i) in &slot.members {
            match leg {
                Leg::Process => {
                    blk.b1.view_mut((i * n, 0), (n, m)).copy_from(&params.b1[i]);
                }
                Leg::Input => {
                    blk.b2.view_mut((i * n, 0), (n, p)).copy_from(&params.b2[i]);
                }
                Leg::Output => {
                    blk.c2.view_mut((i * r, i * n), (r, n)).copy_from(&params.c2[i]);
                    blk.d21.view_mut((i * r, 0), (r, m)).copy_from(&params.d21[i]);
                }
            }
        }
    }
    Ok(d)
}

/// Assembles the vehicle network as a channel form that delays only what
/// each link actually transports: `b_1i w(t)` and `b_2i u(t)` (`n` wide) for
/// disturbance and actuation links, `c_2i x_i(t) + d_21i w(t)` (`r` wide) for
/// measurement links, totalling `(2n + r) N` channel states instead of the
/// delay form's `3N (n N + m + p)`.
///
/// Links with exactly equal delays are stacked into one channel, keeping the
/// delays strictly increasing. Logs a warning when `n >= m` or `n >= p`,
/// where delaying the projected signal is no narrower than delaying the raw
/// input; the construction stays correct either way.
pub fn build_uav_ddf(params: &UavParams) -> Result<DdfSpec> {
    let slots = params.merged()?;
    let count = params.count();
    let (n, m, p, r) = (
        params.state_dim(),
        params.noise_dim(),
        params.input_dim(),
        params.output_dim(),
    );
    if n >= m || n >= p {
        log::warn!(
            "vehicle state width n = {n} is not below the disturbance/input widths (m = {m}, p = {p}); \
             the projected channels are no narrower than the raw signals"
        );
    }
    let width = |leg: Leg| if leg == Leg::Output { r } else { n };
    let taus = slots.iter().map(|s| s.tau).collect();
    let p_i = slots
        .iter()
        .map(|s| s.members.iter().map(|&(leg, _)| width(leg)).sum())
        .collect();
    let n_v = (2 * n + r) * count;
    let mut d = DdfSpec::zero(n * count, m, p, params.c1.nrows(), r * count, n_v, taus, p_i);
    d.a0 = params.drift();
    d.c1 = params.c1.clone();
    d.d12 = params.d12.clone();
    let mut voff = 0;
    for (k, slot) in slots.iter().enumerate() {
        let ch = &mut d.channels[k];
        // The aggregated signal lays channels end to end, so each channel's
        // pick-up is an identity block at its own offset.
        ch.c_v.view_mut((voff, 0), (ch.dim, ch.dim)).fill_with_identity();
        let mut row = 0;
        for &(leg, i) in &slot.members {
            match leg {
                Leg::Process => {
                    ch.b_r1.view_mut((row, 0), (n, m)).copy_from(&params.b1[i]);
                    d.b_v.view_mut((i * n, voff + row), (n, n)).fill_with_identity();
                }
                Leg::Input => {
                    ch.b_r2.view_mut((row, 0), (n, p)).copy_from(&params.b2[i]);
                    d.b_v.view_mut((i * n, voff + row), (n, n)).fill_with_identity();
                }
                Leg::Output => {
                    ch.c_r.view_mut((row, i * n), (r, n)).copy_from(&params.c2[i]);
                    ch.b_r1.view_mut((row, 0), (r, m)).copy_from(&params.d21[i]);
                    d.d2v.view_mut((i * r, voff + row), (r, r)).fill_with_identity();
                }
            }
            row += width(leg);
        }
        voff += ch.dim;
    }
    Ok(d)
}

/// The vehicle fleet with instantaneous disturbance and measurement but
/// delayed actuator feedthrough on the sensors:
///
/// ```text
/// x_i' = a_i x_i + sum_j coupling[i][j] x_j + b_1i w(t) + b_2i u(t - delays[i])
/// z    = c1 x + d12 u
/// y_i  = c2_i x_i + d21_i w + d22_i u(t - delays[i])
/// ```
///
/// Closing `u = F y` makes the measurement recurse on its own delayed values,
/// which no plain delay form can express; [`build_sof_network`] realizes the
/// loop as a channel form instead.
#[derive(Clone, Debug)]
pub struct SofParams {
    /// Per-vehicle drift blocks `a_i`, each `n x n`.
    pub a: Vec<DMatrix<f64>>,
    /// Couplings as in [`UavParams::coupling`].
    pub coupling: Vec<Vec<DMatrix<f64>>>,
    /// Per-vehicle disturbance blocks `b_1i`, each `n x m`.
    pub b1: Vec<DMatrix<f64>>,
    /// Per-vehicle actuation blocks `b_2i`, each `n x p`.
    pub b2: Vec<DMatrix<f64>>,
    /// Per-vehicle measurement blocks `c_2i`, each `r x n`.
    pub c2: Vec<DMatrix<f64>>,
    /// Per-vehicle measured disturbance feedthrough `d_21i`, each `r x m`.
    pub d21: Vec<DMatrix<f64>>,
    /// Per-vehicle measured actuator feedthrough `d_22i`, each `r x p`.
    pub d22: Vec<DMatrix<f64>>,
    /// Regulated-output map over the stacked state, `q x (n N)`.
    pub c1: DMatrix<f64>,
    /// Regulated-output feedthrough from the input, `q x p`.
    pub d12: DMatrix<f64>,
    /// Actuation delays, strictly increasing.
    pub delays: Vec<f64>,
}

impl SofParams {
    /// Scalar demonstration fleet: `a_i = -1`, no couplings, unit gains with
    /// actuator feedthrough `d_22i = 0.5`, and delays `1, ..., N`.
    pub fn demo(count: usize) -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        SofParams {
            a: vec![DMatrix::from_element(1, 1, -1.0); count],
            coupling: vec![vec![DMatrix::zeros(1, 1); count]; count],
            b1: vec![one.clone(); count],
            b2: vec![one.clone(); count],
            c2: vec![one.clone(); count],
            d21: vec![one.clone(); count],
            d22: vec![DMatrix::from_element(1, 1, 0.5); count],
            c1: DMatrix::from_element(1, count, 1.0),
            d12: DMatrix::from_element(1, 1, 0.1),
            delays: (1..=count).map(|i| i as f64).collect(),
        }
    }

    /// Mild uniform negative feedback gain, `p x (r N)`.
    pub fn demo_feedback(&self) -> DMatrix<f64> {
        let (p, rows) = (self.input_dim(), self.output_dim() * self.count());
        DMatrix::from_element(p, rows, -0.3 / rows.max(1) as f64)
    }

    /// Number of vehicles `N`.
    pub fn count(&self) -> usize {
        self.a.len()
    }

    /// Per-vehicle state dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    /// Disturbance dimension `m`.
    pub fn noise_dim(&self) -> usize {
        self.b1.first().map_or(0, |b| b.ncols())
    }

    /// Input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.b2.first().map_or(0, |b| b.ncols())
    }

    /// Per-vehicle measurement dimension `r`.
    pub fn output_dim(&self) -> usize {
        self.c2.first().map_or(0, |c| c.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        // The open-loop lists share the vehicle-network layout; reuse its
        // checks with dummy delay lists, then check the extras.
        let probe = UavParams {
            a: self.a.clone(),
            coupling: self.coupling.clone(),
            b1: self.b1.clone(),
            b2: self.b2.clone(),
            c2: self.c2.clone(),
            d21: self.d21.clone(),
            c1: self.c1.clone(),
            d12: self.d12.clone(),
            process_delays: vec![1.0; self.count()],
            input_delays: vec![1.0; self.count()],
            output_delays: vec![1.0; self.count()],
        };
        probe.validate()?;
        let (count, r, p) = (self.count(), self.output_dim(), self.input_dim());
        if self.d22.len() != count {
            return Err(Error::Input(format!(
                "{} d_22i blocks for {count} vehicles",
                self.d22.len()
            )));
        }
        for (i, blk) in self.d22.iter().enumerate() {
            if blk.nrows() != r || blk.ncols() != p {
                return Err(Error::dim(
                    &format!("d_22i (vehicle {})", i + 1),
                    (blk.nrows(), blk.ncols()),
                    (r, p),
                ));
            }
        }
        if self.delays.len() != count {
            return Err(Error::Input(format!(
                "{} actuation delays for {count} vehicles",
                self.delays.len()
            )));
        }
        if !self.delays.windows(2).all(|w| w[0] < w[1]) || !(self.delays[0] > 0.0) {
            return Err(Error::Input("actuation delays must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// The stacked open-loop plant: `B_1`, `D_21` stacked over vehicles,
    /// block-diagonal `C_2`, and per-delay injections `B_2i`, `D_22i` placed
    /// at vehicle `i`'s rows.
    pub fn plant(&self) -> Result<SofPlant> {
        self.validate()?;
        let count = self.count();
        let (n, m, p, r) = (self.state_dim(), self.noise_dim(), self.input_dim(), self.output_dim());
        let q = self.c1.nrows();
        let mut b1 = DMatrix::zeros(n * count, m);
        let mut c2 = DMatrix::zeros(r * count, n * count);
        let mut d21 = DMatrix::zeros(r * count, m);
        let mut b2i = vec![DMatrix::zeros(n * count, p); count];
        let mut d22i = vec![DMatrix::zeros(r * count, p); count];
        for i in 0..count {
            b1.view_mut((i * n, 0), (n, m)).copy_from(&self.b1[i]);
            c2.view_mut((i * r, i * n), (r, n)).copy_from(&self.c2[i]);
            d21.view_mut((i * r, 0), (r, m)).copy_from(&self.d21[i]);
            b2i[i].view_mut((i * n, 0), (n, p)).copy_from(&self.b2[i]);
            d22i[i].view_mut((i * r, 0), (r, p)).copy_from(&self.d22[i]);
        }
        let probe = UavParams {
            a: self.a.clone(),
            coupling: self.coupling.clone(),
            b1: self.b1.clone(),
            b2: self.b2.clone(),
            c2: self.c2.clone(),
            d21: self.d21.clone(),
            c1: self.c1.clone(),
            d12: self.d12.clone(),
            process_delays: vec![1.0; count],
            input_delays: vec![1.0; count],
            output_delays: vec![1.0; count],
        };
        Ok(SofPlant {
            n: n * count,
            m,
            p,
            q,
            r: r * count,
            delays: self.delays.clone(),
            a0: probe.drift(),
            b1,
            c1: self.c1.clone(),
            d11: DMatrix::zeros(q, m),
            d12: self.d12.clone(),
            c2,
            d21,
            b2i,
            d22i,
        })
    }
}

/// Closes `u = F y` around the [`SofParams`] plant and returns the resulting
/// channel form, whose channels carry the delayed control samples
/// `v_i(t) = F y(t - delays[i])`.
pub fn build_sof_network(params: &SofParams, f: &DMatrix<f64>) -> Result<DdfSpec> {
    sof_network_to_ddf(&params.plant()?, f)
}

/// Centralized water-temperature control for `N` users: tap position `T_1i`
/// integrates the temperature error, and temperature `T_2i` reacts to every
/// user's delayed temperature through the mixing matrix `Gamma`:
///
/// ```text
/// T_1i' = T_2i - w_i
/// T_2i' = sum_j Gamma_ij (T_2j(t - tau_j) - w_j) + u_i
/// z     = [sum_i T_1i;  0.1 sum_i u_i]
/// ```
///
/// with `Gamma_ii = -alpha_i` and `Gamma_ij = gamma_ij alpha_j` off the
/// diagonal. The state stacks as `x = [T_11..T_1N, T_21..T_2N]`.
#[derive(Clone, Debug)]
pub struct ShowerParams {
    /// Per-user response rates `alpha_i`.
    pub alpha: Vec<f64>,
    /// Coupling gains `gamma_ij`; diagonal entries are ignored.
    pub gamma: DMatrix<f64>,
    /// Per-user temperature delays, strictly increasing.
    pub tau: Vec<f64>,
}

impl ShowerParams {
    /// The standard scalable instance: `alpha_i = 1`, `gamma_ij = 1/N`,
    /// `tau_i = i`, driven by the constant demand `w_i = N`.
    pub fn standard(users: usize) -> Self {
        ShowerParams {
            alpha: vec![1.0; users],
            gamma: DMatrix::from_element(users, users, 1.0 / users.max(1) as f64),
            tau: (1..=users).map(|i| i as f64).collect(),
        }
    }

    /// Number of users `N`.
    pub fn users(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let users = self.users();
        if users == 0 {
            return Err(Error::Input("a shower network needs at least one user".into()));
        }
        if self.gamma.nrows() != users || self.gamma.ncols() != users {
            return Err(Error::dim("gamma", (self.gamma.nrows(), self.gamma.ncols()), (users, users)));
        }
        if self.tau.len() != users {
            return Err(Error::Input(format!("{} delays for {users} users", self.tau.len())));
        }
        if !self.tau.windows(2).all(|w| w[0] < w[1]) || !(self.tau[0] > 0.0) {
            return Err(Error::Input("temperature delays must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Mixing matrix `Gamma`: `-alpha_i` on the diagonal, `gamma_ij alpha_j`
    /// off it.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        let users = self.users();
        DMatrix::from_fn(users, users, |i, j| {
            if i == j {
                -self.alpha[i]
            } else {
                self.gamma[(i, j)] * self.alpha[j]
            }
        })
    }

    /// The constant demand `w_i(t) = N` the standard instance is driven by.
    pub fn disturbance(&self) -> VectorSignal {
        let users = self.users();
        VectorSignal::broadcast(SignalDescriptor::constant(users as f64), users)
    }
}

/// Assembles the shower network as a delay form with `n = 2N` states,
/// `K = N` delays, and delayed blocks `A_i` that pick user `i`'s temperature
/// column out of the mixing matrix.
pub fn build_shower_dde(params: &ShowerParams) -> Result<DdeSpec> {
    params.validate()?;
    let users = params.users();
    let g = params.gamma_matrix();
    let mut d = DdeSpec::zero(2 * users, users, users, 2, 0, params.tau.clone());
    d.a0.view_mut((0, users), (users, users)).fill_with_identity();
    d.b1.view_mut((0, 0), (users, users)).copy_from(&(-DMatrix::<f64>::identity(users, users)));
    d.b1.view_mut((users, 0), (users, users)).copy_from(&(-&g));
    d.b2.view_mut((users, 0), (users, users)).fill_with_identity();
    for j in 0..users {
        d.c10[(0, j)] = 1.0;
        d.d12[(1, j)] = 0.1;
    }
    for (k, blk) in d.delayed.iter_mut().enumerate() {
        // A_k = Gamma * diag(e_k) keeps only Gamma's k-th column, applied to
        // the temperature half of the state.
        blk.a.view_mut((users, users + k), (users, 1)).copy_from(&g.column(k));
    }
    Ok(d)
}

/// Assembles the shower network as a channel form with one scalar channel per
/// user — channel `i` carries the temperature `T_2i(t)` — so the total
/// channel width is `N` instead of the generic conversion's `N (2N + N + N)`.
pub fn build_shower_ddf(params: &ShowerParams) -> Result<DdfSpec> {
    params.validate()?;
    let users = params.users();
    let g = params.gamma_matrix();
    let mut d = DdfSpec::zero(
        2 * users,
        users,
        users,
        2,
        0,
        users,
        params.tau.clone(),
        vec![1; users],
    );
    d.a0.view_mut((0, users), (users, users)).fill_with_identity();
    d.b1.view_mut((0, 0), (users, users)).copy_from(&(-DMatrix::<f64>::identity(users, users)));
    d.b1.view_mut((users, 0), (users, users)).copy_from(&(-&g));
    d.b2.view_mut((users, 0), (users, users)).fill_with_identity();
    for j in 0..users {
        d.c1[(0, j)] = 1.0;
        d.d12[(1, j)] = 0.1;
    }
    // The delayed temperatures re-enter the dynamics through Gamma.
    d.b_v.view_mut((users, 0), (users, users)).copy_from(&g);
    for (k, ch) in d.channels.iter_mut().enumerate() {
        ch.c_r[(0, users + k)] = 1.0;
        ch.c_v[(k, 0)] = 1.0;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::{dde_to_ddf, minimal_ddf_from_dde, DEFAULT_RANK_TOL};
    use crate::history::HistoryFunction;
    use crate::simulate::{compare, simulate_dde, simulate_ddf, SimConfig};
    use nalgebra::{dmatrix, dvector, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(dt: f64, t_final: f64) -> SimConfig {
        SimConfig::new(dt, t_final)
    }

    /// Channel prehistories consistent with a state history `x0` and inputs
    /// that vanish for `t <= 0`: each channel samples its own output map.
    fn channel_history(d: &DdfSpec, x0: &HistoryFunction) -> Vec<HistoryFunction> {
        d.channels
            .iter()
            .zip(&d.delays)
            .map(|(ch, &tau)| HistoryFunction::sample(ch.dim, -tau, 257, |t| &ch.c_r * x0.eval(t)))
            .collect()
    }

    #[test]
    fn shower_single_user_matches_hand_matrices() {
        let d = build_shower_dde(&ShowerParams::standard(1)).unwrap();
        assert_eq!(d.delays, vec![1.0]);
        assert_eq!(d.a0, dmatrix![0.0, 1.0; 0.0, 0.0]);
        assert_eq!(d.delayed[0].a, dmatrix![0.0, 0.0; 0.0, -1.0]);
        assert_eq!(d.b1, dmatrix![-1.0; 1.0]);
        assert_eq!(d.b2, dmatrix![0.0; 1.0]);
        assert_eq!(d.c10, dmatrix![1.0, 0.0; 0.0, 0.0]);
        assert_eq!(d.d11, DMatrix::zeros(2, 1));
        assert_eq!(d.d12, dmatrix![0.0; 0.1]);
        assert!(d.delayed[0].b1.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shower_coupling_matrix_for_three_users() {
        let params = ShowerParams::standard(3);
        let g = params.gamma_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { -1.0 } else { 1.0 / 3.0 };
                assert_eq!(g[(i, j)], want);
            }
        }
        let d = build_shower_dde(&params).unwrap();
        for (k, blk) in d.delayed.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let want = if j == k { g[(i, k)] } else { 0.0 };
                    assert_eq!(blk.a[(3 + i, 3 + j)], want);
                }
            }
            assert!(blk.a.view((0, 0), (3, 6)).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn shower_channel_form_matches_the_state_form() {
        let params = ShowerParams::standard(2);
        let dde = build_shower_dde(&params).unwrap();
        let ddf = build_shower_ddf(&params).unwrap();
        let profile = |t: f64| {
            dvector![
                0.4 + 0.1 * t.sin(),
                -0.2 + 0.05 * (2.0 * t).cos(),
                0.3 * (0.7 * t).cos(),
                0.1 - 0.2 * (0.5 * t).sin()
            ]
        };
        let x0 = HistoryFunction::sample(4, -2.0, 129, profile);
        let r0: Vec<HistoryFunction> = (0..2)
            .map(|i| {
                HistoryFunction::sample(1, -params.tau[i], 65, |t| {
                    DVector::from_element(1, profile(t)[2 + i])
                })
            })
            .collect();
        let w = params.disturbance();
        let u = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.3, 0.8, 0.0), 2);
        let run = cfg(1e-3, 6.0);
        let a = simulate_dde(&dde, &x0, &w, &u, &run).unwrap();
        let b = simulate_ddf(&ddf, &x0.eval(0.0), &r0, &w, &u, &run).unwrap();
        let report = compare(&a, &b).unwrap();
        assert!(report.max_err() < 1e-8, "forms disagree: {report:?}");
    }

    #[test]
    fn shower_minimal_reduction_finds_unit_channels() {
        for users in [1, 4, 10] {
            let dde = build_shower_dde(&ShowerParams::standard(users)).unwrap();
            let min = minimal_ddf_from_dde(&dde, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(min.ddf.total_channel_dim(), users);
            assert!(min.channel_ranks.iter().all(|&rank| rank == 1));
        }
    }

    #[test]
    fn vehicle_network_scalar_instance_matches_hand_blocks() {
        let params = UavParams::demo(1);
        let dde = build_uav_dde(&params).unwrap();
        assert_eq!(dde.delays, vec![1.0, 2.0, 3.0]);
        assert_eq!(dde.a0, dmatrix![-1.0]);
        assert_eq!(dde.delayed[0].b1, dmatrix![1.0]);
        assert_eq!(dde.delayed[1].b2, dmatrix![1.0]);
        assert_eq!(dde.delayed[2].c2, dmatrix![1.0]);
        assert_eq!(dde.delayed[2].d21, dmatrix![1.0]);
        assert!(dde.delayed[0].b2.iter().all(|&x| x == 0.0));
        assert!(dde.delayed[1].b1.iter().all(|&x| x == 0.0));
        assert!(dde.c20.iter().all(|&x| x == 0.0));

        let ddf = build_uav_ddf(&params).unwrap();
        assert_eq!(ddf.channel_dims(), vec![1, 1, 1]);
        assert_eq!(ddf.channels[0].b_r1, dmatrix![1.0]);
        assert_eq!(ddf.channels[1].b_r2, dmatrix![1.0]);
        assert_eq!(ddf.channels[2].c_r, dmatrix![1.0]);
        assert_eq!(ddf.channels[2].b_r1, dmatrix![1.0]);
        assert_eq!(ddf.b_v, dmatrix![1.0, 1.0, 0.0]);
        assert_eq!(ddf.d2v, dmatrix![0.0, 0.0, 1.0]);
        for (k, ch) in ddf.channels.iter().enumerate() {
            for i in 0..3 {
                assert_eq!(ch.c_v[(i, 0)], if i == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn vehicle_network_without_couplings_is_block_diagonal() {
        let mut params = UavParams::demo(3);
        let dde = build_uav_dde(&params).unwrap();
        assert_eq!(dde.a0, DMatrix::from_diagonal(&dvector![-1.0, -1.0, -1.0]));
        params.coupling[0][2] = dmatrix![0.25];
        let dde = build_uav_dde(&params).unwrap();
        assert_eq!(dde.a0[(0, 2)], 0.25);
        assert_eq!(dde.a0[(2, 0)], 0.0);
    }

    #[test]
    fn vehicle_channel_form_matches_the_delay_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_u64);
        let mut rand_block = |rows: usize, cols: usize, scale: f64| {
            DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
        };
        let count = 2;
        let n = 2;
        let params = UavParams {
            a: (0..count)
                .map(|_| DMatrix::identity(n, n) * -1.5 + rand_block(n, n, 0.2))
                .collect(),
            coupling: vec![
                vec![DMatrix::zeros(n, n), rand_block(n, n, 0.15)],
                vec![rand_block(n, n, 0.15), DMatrix::zeros(n, n)],
            ],
            b1: (0..count).map(|_| rand_block(n, 1, 1.0)).collect(),
            b2: (0..count).map(|_| rand_block(n, 1, 1.0)).collect(),
            c2: (0..count).map(|_| rand_block(1, n, 1.0)).collect(),
            d21: (0..count).map(|_| rand_block(1, 1, 1.0)).collect(),
            c1: rand_block(2, n * count, 1.0),
            d12: rand_block(2, 1, 0.5),
            process_delays: vec![0.3, 0.45],
            input_delays: vec![0.6, 0.75],
            output_delays: vec![0.9, 1.05],
        };
        let dde = build_uav_dde(&params).unwrap();
        let ddf = build_uav_ddf(&params).unwrap();
        let profile = |t: f64| {
            dvector![
                0.3 * t.cos(),
                0.2 * (2.0 * t).sin(),
                -0.1 + 0.15 * (0.6 * t).sin(),
                0.25 * (1.3 * t).cos()
            ]
        };
        let x0 = HistoryFunction::sample(4, -1.05, 257, profile);
        let r0 = channel_history(&ddf, &x0);
        let w = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.8, 1.3, 0.0), 1);
        let u = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.5, 0.9, 0.0), 1);
        let run = cfg(1e-3, 3.15);
        let a = simulate_dde(&dde, &x0, &w, &u, &run).unwrap();
        let b = simulate_ddf(&ddf, &x0.eval(0.0), &r0, &w, &u, &run).unwrap();
        let report = compare(&a, &b).unwrap();
        assert!(report.max_err() < 1e-8, "forms disagree: {report:?}");
    }

    #[test]
    fn vehicle_channel_accounting() {
        for (n, m, p, r, count) in [(1, 2, 2, 1, 1), (2, 3, 4, 3, 4), (3, 5, 4, 3, 5), (1, 2, 3, 3, 2)] {
            let mut params = UavParams::demo(count);
            params.a = vec![DMatrix::identity(n, n) * -1.0; count];
            params.coupling = vec![vec![DMatrix::zeros(n, n); count]; count];
            params.b1 = vec![DMatrix::from_element(n, m, 1.0); count];
            params.b2 = vec![DMatrix::from_element(n, p, 1.0); count];
            params.c2 = vec![DMatrix::from_element(r, n, 1.0); count];
            params.d21 = vec![DMatrix::from_element(r, m, 1.0); count];
            params.c1 = DMatrix::from_element(1, n * count, 1.0);
            params.d12 = DMatrix::from_element(1, p, 0.1);
            let ddf = build_uav_ddf(&params).unwrap();
            assert_eq!(ddf.total_channel_dim(), (2 * n + r) * count);
            assert_eq!(ddf.total_channel_dim(), params.compact_channel_dim());
            let naive = dde_to_ddf(&build_uav_dde(&params).unwrap()).unwrap();
            assert_eq!(naive.total_channel_dim(), 3 * count * (n * count + m + p));
            assert_eq!(naive.total_channel_dim(), params.naive_channel_dim());
        }
    }

    #[test]
    fn colliding_delays_share_an_index() {
        let mut params = UavParams::demo(1);
        params.process_delays = vec![1.0];
        params.input_delays = vec![1.0];
        params.output_delays = vec![3.0];
        let dde = build_uav_dde(&params).unwrap();
        assert_eq!(dde.delays, vec![1.0, 3.0]);
        assert_eq!(dde.delayed[0].b1, dmatrix![1.0]);
        assert_eq!(dde.delayed[0].b2, dmatrix![1.0]);
        assert_eq!(dde.delayed[1].c2, dmatrix![1.0]);

        let ddf = build_uav_ddf(&params).unwrap();
        assert_eq!(ddf.channel_dims(), vec![2, 1]);
        // Stacked channel: disturbance row first, then actuation.
        assert_eq!(ddf.channels[0].b_r1, dmatrix![1.0; 0.0]);
        assert_eq!(ddf.channels[0].b_r2, dmatrix![0.0; 1.0]);
        assert_eq!(ddf.b_v, dmatrix![1.0, 1.0, 0.0]);

        let profile = |t: f64| dvector![0.2 * t.cos()];
        let x0 = HistoryFunction::sample(1, -3.0, 257, profile);
        let r0 = channel_history(&ddf, &x0);
        let w = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.7, 1.1, 0.0), 1);
        let u = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.4, 0.6, 0.0), 1);
        let run = cfg(1e-3, 5.0);
        let a = simulate_dde(&dde, &x0, &w, &u, &run).unwrap();
        let b = simulate_ddf(&ddf, &x0.eval(0.0), &r0, &w, &u, &run).unwrap();
        let report = compare(&a, &b).unwrap();
        assert!(report.max_err() < 1e-8, "forms disagree: {report:?}");
    }

    #[test]
    fn feedback_zero_keeps_the_open_loop() {
        let params = SofParams::demo(2);
        let f = DMatrix::zeros(1, 2);
        let ddf = build_sof_network(&params, &f).unwrap();
        assert_eq!(ddf.c1, params.c1);
        assert!(ddf.d1v.iter().all(|&x| x == 0.0));
        for ch in &ddf.channels {
            assert!(ch.c_r.iter().all(|&x| x == 0.0));
            assert!(ch.b_r1.iter().all(|&x| x == 0.0));
            assert!(ch.d_rv.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn feedthrough_free_loops_have_no_recursion() {
        let mut params = SofParams::demo(2);
        params.d22 = vec![DMatrix::zeros(1, 1); 2];
        let ddf = build_sof_network(&params, &params.demo_feedback()).unwrap();
        assert!(ddf.d2v.iter().all(|&x| x == 0.0));
        assert!(ddf.d1v.iter().all(|&x| x == 0.0));
        for ch in &ddf.channels {
            assert!(ch.d_rv.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn closed_loop_output_satisfies_the_recursion() {
        let params = SofParams::demo(2);
        let f = params.demo_feedback();
        let plant = params.plant().unwrap();
        let ddf = build_sof_network(&params, &f).unwrap();
        assert_eq!(ddf.p, 0);

        let x0 = HistoryFunction::sample(2, -2.0, 129, |t| {
            dvector![0.5 * (0.4 * t).cos(), -0.3 * (0.3 * t).sin()]
        });
        let r0: Vec<HistoryFunction> = ddf
            .delays
            .iter()
            .map(|&tau| HistoryFunction::constant(DVector::zeros(1), -tau))
            .collect();
        let w = VectorSignal::broadcast(SignalDescriptor::sinusoid(0.6, 0.9, 0.0), 1);
        let u = VectorSignal::zero(0);
        let run = cfg(1e-3, 5.0);
        let traj = simulate_ddf(&ddf, &x0.eval(0.0), &r0, &w, &u, &run).unwrap();

        // y(t) = C_2 x + D_21 w + sum_i D_22i F y(t - tau_i), checked with
        // exact grid lookups once every delayed argument is on the grid.
        let offsets: Vec<usize> = ddf.delays.iter().map(|&tau| (tau / run.dt).round() as usize).collect();
        let start = *offsets.iter().max().unwrap();
        let mut worst: f64 = 0.0;
        for k in start..traj.len() {
            let mut want = &plant.c2 * &traj.x[k] + &plant.d21 * &traj.w[k];
            for (i, &off) in offsets.iter().enumerate() {
                want += &plant.d22i[i] * &f * &traj.y[k - off];
            }
            worst = worst.max((&traj.y[k] - want).amax());
        }
        assert!(worst < 1e-9, "recursion residual {worst}");
    }
}
