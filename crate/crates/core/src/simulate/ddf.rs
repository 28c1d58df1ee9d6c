//! RK4 stepper for the delay-channel form and its transport realization.
//!
//! The channel signals `r_i` are committed to traces alongside the state;
//! the aggregated delayed signal `v(t)` reads them through discrete pickups
//! and sliding moment windows. The transport form shares the stepper — the
//! characteristics solution `phi_i(t, s) = r_i(t + tau_i s)` makes its
//! function state an exact read of the channel traces, which the stepper
//! records on a collocation grid.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::history::HistoryFunction;
use crate::kernel::PolyKernel;
use crate::quad::chebyshev_lobatto;
use crate::signal::VectorSignal;
use crate::simulate::trace::{Prehistory, Trace};
use crate::simulate::window::MomentWindow;
use crate::simulate::{
    ChannelTrace, CollocationTrace, Integrator, SimConfig, Trajectory,
};
use crate::specs::{DdfSpec, OdePdeSpec};
use crate::validate::{check_inputs, input_requirements_ddf, validate_ddf, validate_odepde};

/// Simulates the delay-channel form. `r0[i]` is the prehistory of channel
/// `i` on `[-tau_i, 0]`; its value at `0` is recomputed from the channel
/// equation, so only sewing-consistent prehistories reproduce the underlying
/// delay system (see [`crate::validate::check_sewing_ddf`]).
pub fn simulate_ddf(
    d: &DdfSpec,
    x0: &DVector<f64>,
    r0: &[HistoryFunction],
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    simulate_ddf_core(d, x0, r0, w, u, cfg, false)
}

/// Simulates the transport realization. `phi0[i]` is the initial channel
/// profile on the unit interval; the trajectory carries the profiles on a
/// Chebyshev–Gauss–Lobatto grid of `cfg.collocation_order` nodes, read
/// exactly along characteristics.
pub fn simulate_odepde(
    o: &OdePdeSpec,
    x0: &DVector<f64>,
    phi0: &[HistoryFunction],
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    validate_odepde(o).into_result()?;
    let r0 = crate::convert::phi0_to_r0(phi0, &o.ddf.delays)?;
    simulate_ddf_core(&o.ddf, x0, &r0, w, u, cfg, true)
}

fn simulate_ddf_core(
    d: &DdfSpec,
    x0: &DVector<f64>,
    r0: &[HistoryFunction],
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
    collocation: bool,
) -> Result<Trajectory> {
    validate_ddf(d).into_result()?;
    cfg.check()?;
    cfg.check_against_delays(&d.delays)?;
    if cfg.integrator == Some(Integrator::ImplicitTrapezoid) {
        return Err(Error::Config(
            "the delayed forms integrate with the RK4 characteristics method".into(),
        ));
    }
    if x0.len() != d.n {
        return Err(Error::dim("x_0", (x0.len(), 1), (d.n, 1)));
    }
    if w.dim() != d.m {
        return Err(Error::dim("w", (w.dim(), 1), (d.m, 1)));
    }
    if u.dim() != d.p {
        return Err(Error::dim("u", (u.dim(), 1), (d.p, 1)));
    }
    if r0.len() != d.channels.len() {
        return Err(Error::Config(format!(
            "got {} channel prehistories, the system has {} channels",
            r0.len(),
            d.channels.len()
        )));
    }
    for (i, (h, ch)) in r0.iter().zip(&d.channels).enumerate() {
        if h.dim() != ch.dim {
            return Err(Error::dim(
                format!("r_0[{i}]"),
                (h.dim(), 1),
                (ch.dim, 1),
            ));
        }
        h.check_coverage(-d.delays[i], &format!("r_0[{i}]"))?;
    }
    check_inputs(input_requirements_ddf(d), w, u)?;

    let dt = cfg.dt;
    let steps = cfg.steps();
    let k_delays = d.delays.len();
    let kerns: Vec<&PolyKernel> = d.channels.iter().map(|c| &c.c_vd).collect();

    // Channel traces, seeded with a placeholder at the origin: computing the
    // true r_i(0) needs v(0), which only reads strictly negative times.
    let mut traces: Vec<Trace> = r0
        .iter()
        .map(|h| Trace::new(dt, Prehistory::Value(h.clone()), h.eval(0.0)))
        .collect();
    let mut windows: Vec<Option<MomentWindow>> = Vec::with_capacity(k_delays);
    for (i, &tau) in d.delays.iter().enumerate() {
        if kerns[i].is_zero() {
            windows.push(None);
        } else {
            let knots = traces[i].knots_between(-tau, 0.0);
            let mut sampler = |t: f64| traces[i].sample(t);
            windows.push(Some(MomentWindow::init(
                kerns[i].degree(),
                tau,
                d.channels[i].dim,
                0.0,
                &knots,
                &mut sampler,
            )));
        }
    }

    // Aggregated delayed signal at time `t`; windows past their committed
    // center are peeked forward against the (possibly extrapolated) traces.
    let v_at = |t: f64, traces: &[Trace], windows: &[Option<MomentWindow>]| -> DVector<f64> {
        let mut v = DVector::zeros(d.n_v);
        for i in 0..k_delays {
            v += &d.channels[i].c_v * traces[i].sample(t - d.delays[i]);
            if let Some(win) = &windows[i] {
                if win.center() == t {
                    v += win.eval(kerns[i]);
                } else {
                    let mut peek = win.clone();
                    let knots_fn = |a: f64, b: f64| traces[i].knots_between(a, b);
                    let mut sampler = |tt: f64| traces[i].sample(tt);
                    peek.advance(t, &knots_fn, &mut sampler);
                    v += peek.eval(kerns[i]);
                }
            }
        }
        v
    };

    // Sew the channel origins to the channel equation.
    let v0 = v_at(0.0, &traces, &windows);
    for (i, ch) in d.channels.iter().enumerate() {
        let r_at_zero =
            &ch.c_r * x0 + &ch.b_r1 * w.value(0.0) + &ch.b_r2 * u.value(0.0) + &ch.d_rv * &v0;
        traces[i] = Trace::new(dt, Prehistory::Value(r0[i].clone()), r_at_zero);
    }

    let nodes = if collocation {
        chebyshev_lobatto(cfg.collocation_order)
    } else {
        Vec::new()
    };

    let mut out = Trajectory::with_capacity(dt, steps);
    out.channels = d
        .channels
        .iter()
        .map(|c| ChannelTrace {
            dim: c.dim,
            values: Vec::with_capacity(steps + 1),
        })
        .collect();
    if collocation {
        out.collocation = Some(CollocationTrace {
            nodes: nodes.clone(),
            p_i: d.channel_dims(),
            values: Vec::with_capacity(steps + 1),
        });
    }

    let record = |t: f64,
                  x: &DVector<f64>,
                  v: &DVector<f64>,
                  traces: &[Trace],
                  out: &mut Trajectory|
     -> Result<()> {
        Trajectory::check_finite(x, "x", t)?;
        let wv = w.value(t);
        let uv = u.value(t);
        out.t.push(t);
        out.z
            .push(&d.c1 * x + &d.d11 * &wv + &d.d12 * &uv + &d.d1v * v);
        out.y
            .push(&d.c2 * x + &d.d21 * &wv + &d.d22 * &uv + &d.d2v * v);
        out.x.push(x.clone());
        out.v.push(v.clone());
        out.w.push(wv);
        out.u.push(uv);
        for (i, tr) in traces.iter().enumerate() {
            out.channels[i].values.push(tr.last().clone());
        }
        if let Some(coll) = out.collocation.as_mut() {
            let total: usize = d.channels.iter().map(|c| c.dim).sum();
            let mut profile = DVector::zeros(total * nodes.len());
            for (j, &s) in nodes.iter().enumerate() {
                let mut row = 0;
                for (i, tr) in traces.iter().enumerate() {
                    let val = tr.sample(t + d.delays[i] * s);
                    profile
                        .rows_mut(j * total + row, d.channels[i].dim)
                        .copy_from(&val);
                    row += d.channels[i].dim;
                }
            }
            coll.values.push(profile);
        }
        Ok(())
    };

    let mut x = x0.clone();
    record(0.0, &x, &v0, &traces, &mut out)?;

    for k in 0..steps {
        let t = k as f64 * dt;
        let th = t + 0.5 * dt;
        let t1 = t + dt;
        let vt = v_at(t, &traces, &windows);
        let vh = v_at(th, &traces, &windows);
        let v1 = v_at(t1, &traces, &windows);

        let f = |tt: f64, xx: &DVector<f64>, v: &DVector<f64>| -> DVector<f64> {
            &d.a0 * xx + &d.b1 * w.value(tt) + &d.b2 * u.value(tt) + &d.b_v * v
        };
        let k1 = f(t, &x, &vt);
        let k2 = f(th, &(&x + &k1 * (dt / 2.0)), &vh);
        let k3 = f(th, &(&x + &k2 * (dt / 2.0)), &vh);
        let k4 = f(t1, &(&x + &k3 * dt), &v1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        Trajectory::check_finite(&x, "x", t1)?;

        // Commit the channels: r(t1) closes the loop through the peeked v,
        // then the windows advance against the committed interpolants.
        for (i, ch) in d.channels.iter().enumerate() {
            let r_next =
                &ch.c_r * &x + &ch.b_r1 * w.value(t1) + &ch.b_r2 * u.value(t1) + &ch.d_rv * &v1;
            Trajectory::check_finite(&r_next, &format!("r_{}", i + 1), t1)?;
            traces[i].push(r_next);
        }
        for (i, win) in windows.iter_mut().enumerate() {
            if let Some(win) = win {
                let knots_fn = |a: f64, b: f64| traces[i].knots_between(a, b);
                let mut sampler = |tt: f64| traces[i].sample(tt);
                win.advance(t1, &knots_fn, &mut sampler);
            }
        }

        let v_rec = v_at(t1, &traces, &windows);
        record(t1, &x, &v_rec, &traces, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::{dde_to_ddf, ddf_to_odepde, r0_to_phi0};
    use crate::simulate::{compare, simulate_dde};
    use crate::specs::DdeSpec;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    /// Two-state system with one discrete and one distributed delay.
    fn rich_dde() -> DdeSpec {
        let mut d = DdeSpec::zero(2, 1, 0, 1, 1, vec![0.5, 1.2]);
        d.a0 = dmatrix![-0.4, 0.3; -0.2, -0.7];
        d.b1 = dmatrix![1.0; 0.5];
        d.c10 = dmatrix![1.0, 0.0];
        d.c20 = dmatrix![0.0, 1.0];
        d.delayed[0].a = dmatrix![0.0, -0.5; 0.25, 0.0];
        d.delayed[1].c1 = dmatrix![0.3, -0.1];
        d.distributed[1].a =
            PolyKernel::from_coeffs(vec![dmatrix![0.2, 0.0; 0.0, -0.3], dmatrix![0.0, 0.1; 0.2, 0.0]])
                .unwrap();
        d
    }

    fn history() -> HistoryFunction {
        HistoryFunction::sample(2, -1.2, 241, |t| {
            dvector![(0.7 * t).cos(), 0.4 * (1.3 * t).sin()]
        })
    }

    /// Channel prehistories for the converted DDF: `r_i = [x; w; u]` with
    /// `w`, `u` vanishing at negative times.
    fn stacked_r0(d: &DdeSpec, x0: &HistoryFunction) -> Vec<HistoryFunction> {
        d.delays
            .iter()
            .map(|_| {
                HistoryFunction::sample(d.n + d.m + d.p, -d.max_delay(), 481, |t| {
                    let x = x0.eval(t);
                    let mut v = DVector::zeros(d.n + d.m + d.p);
                    v.rows_mut(0, d.n).copy_from(&x);
                    v
                })
            })
            .collect()
    }

    #[test]
    fn channel_form_reproduces_the_delay_system() {
        let d = rich_dde();
        let x0 = history();
        let w = VectorSignal::broadcast(crate::signal::SignalDescriptor::sinusoid(1.0, 2.0, 0.0), 1);
        let cfg = SimConfig::new(1e-3, 2.0);
        let direct = simulate_dde(&d, &x0, &w, &VectorSignal::zero(0), &cfg).unwrap();

        let ddf = dde_to_ddf(&d).unwrap();
        let r0 = stacked_r0(&d, &x0);
        let via = simulate_ddf(&ddf, &x0.eval(0.0), &r0, &w, &VectorSignal::zero(0), &cfg).unwrap();

        let rep = compare(&direct, &via).unwrap();
        assert!(
            rep.max_err() < 1e-8,
            "x {:.2e} z {:.2e} y {:.2e}",
            rep.max_err_x,
            rep.max_err_z,
            rep.max_err_y
        );
    }

    #[test]
    fn transport_profiles_follow_characteristics() {
        let d = rich_dde();
        let x0 = history();
        let cfg = SimConfig::new(1e-3, 1.0);
        let ddf = dde_to_ddf(&d).unwrap();
        let o = ddf_to_odepde(&ddf).unwrap();
        let r0 = stacked_r0(&d, &x0);
        let phi0 = r0_to_phi0(&r0, &ddf.delays).unwrap();
        let traj = simulate_odepde(
            &o,
            &x0.eval(0.0),
            &phi0,
            &VectorSignal::zero(1),
            &VectorSignal::zero(0),
            &cfg,
        )
        .unwrap();

        // phi_i(t, 0) = r_i(t): the boundary node must match the channel.
        let coll = traj.collocation.as_ref().unwrap();
        let total: usize = coll.p_i.iter().sum();
        assert_eq!(*coll.nodes.last().unwrap(), 0.0);
        let boundary = coll.nodes.len() - 1;
        for k in [0, 300, 999] {
            let profile = &coll.values[k];
            let mut row = 0;
            for (i, &pi) in coll.p_i.iter().enumerate() {
                let got = profile.rows(boundary * total + row, pi);
                let want = &traj.channels[i].values[k];
                assert_abs_diff_eq!((got - want).amax(), 0.0, epsilon = 1e-12);
                row += pi;
            }
        }

        // Interior nodes read the channel history exactly: at t = 0 the
        // profile equals the initial data.
        let profile0 = &coll.values[0];
        for (j, &s) in coll.nodes.iter().enumerate() {
            let want = phi0[0].eval(s);
            let got = profile0.rows(j * total, coll.p_i[0]);
            assert_abs_diff_eq!((got - want).amax(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_mismatched_channel_history() {
        let d = rich_dde();
        let ddf = dde_to_ddf(&d).unwrap();
        let cfg = SimConfig::new(1e-2, 0.1);
        let bad = vec![
            HistoryFunction::constant(dvector![0.0], -2.0);
            1 // wrong channel count
        ];
        let err = simulate_ddf(
            &ddf,
            &dvector![0.0, 0.0],
            &bad,
            &VectorSignal::zero(1),
            &VectorSignal::zero(0),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
