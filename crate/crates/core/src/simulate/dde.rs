//! RK4 stepper for the delayed-state and neutral forms.
//!
//! Delayed arguments are read from the committed trace (cubic windows);
//! distributed terms use sliding moment windows. Stage evaluations at
//! `t + dt/2` and `t + dt` peek ahead with cloned windows, extrapolating the
//! trace by at most one step; committed window updates happen after the step
//! lands, so the long-lived moments integrate exactly what is stored.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::history::HistoryFunction;
use crate::kernel::PolyKernel;
use crate::signal::VectorSignal;
use crate::simulate::trace::{Prehistory, Trace};
use crate::simulate::window::MomentWindow;
use crate::simulate::{Integrator, SimConfig, Trajectory};
use crate::specs::{DdeSpec, NdsSpec};
use crate::validate::{check_inputs, input_requirements_nds, validate_dde, validate_nds};
use crate::Error;

/// Simulates the delayed-state form. The prehistory `x0` must cover
/// `[-max delay, 0]`; `w`, `u` must satisfy the smoothness requirements the
/// coefficients induce (see [`crate::validate::input_requirements_dde`]).
pub fn simulate_dde(
    d: &DdeSpec,
    x0: &HistoryFunction,
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    validate_dde(d).into_result()?;
    simulate_neutral_core(&NdsSpec::from_dde(d.clone()), x0, w, u, cfg)
}

/// Simulates the neutral form; identical to [`simulate_dde`] plus the
/// delayed-derivative terms, which read a committed derivative trace.
pub fn simulate_nds(
    s: &NdsSpec,
    x0: &HistoryFunction,
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    validate_nds(s).into_result()?;
    simulate_neutral_core(s, x0, w, u, cfg)
}

fn check_integrator(cfg: &SimConfig) -> Result<()> {
    if cfg.integrator == Some(Integrator::ImplicitTrapezoid) {
        return Err(Error::Config(
            "the delayed forms integrate with the RK4 characteristics method".into(),
        ));
    }
    Ok(())
}

struct RowSplit {
    n: usize,
    q: usize,
    r: usize,
}

impl RowSplit {
    fn x(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.n).into_owned()
    }
    fn z(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.n, self.q).into_owned()
    }
    fn y(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.n + self.q, self.r).into_owned()
    }
}

fn simulate_neutral_core(
    s: &NdsSpec,
    x0: &HistoryFunction,
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.check()?;
    cfg.check_against_delays(&s.base.delays)?;
    check_integrator(cfg)?;
    let d = &s.base;
    let (n, m, p) = (d.n, d.m, d.p);
    if x0.dim() != n {
        return Err(Error::dim("x_0", (x0.dim(), 1), (n, 1)));
    }
    if w.dim() != m {
        return Err(Error::dim("w", (w.dim(), 1), (m, 1)));
    }
    if u.dim() != p {
        return Err(Error::dim("u", (u.dim(), 1), (p, 1)));
    }
    x0.check_coverage(-d.max_delay(), "x_0")?;
    check_inputs(input_requirements_nds(s), w, u)?;

    let dt = cfg.dt;
    let steps = cfg.steps();
    let split = RowSplit { n, q: d.q, r: d.r };
    let neutral = !s.is_retarded();

    // Stacked coefficient blocks per delay.
    let g_delayed: Vec<DMatrix<f64>> = d.delayed.iter().map(|b| b.stacked()).collect();
    let kerns: Vec<PolyKernel> = d
        .distributed
        .iter()
        .map(|b| b.stacked())
        .collect();
    let e_delayed: Vec<DMatrix<f64>> = (0..d.delays.len()).map(|i| s.e_stacked(i)).collect();
    let e_kerns: Vec<PolyKernel> = (0..d.delays.len()).map(|i| s.e_d_stacked(i)).collect();

    let mut trace = Trace::new(dt, Prehistory::Value(x0.clone()), x0.eval(0.0));
    // The derivative trace starts from the right-sided derivative the
    // dynamics dictate; it is filled lazily below once windows exist.
    let mut dtrace = Trace::new(dt, Prehistory::Derivative(x0.clone()), DVector::zeros(n));

    // Distributed windows over [x; w; u] and (neutral) over x'.
    let mut windows: Vec<Option<MomentWindow>> = Vec::with_capacity(d.delays.len());
    let mut e_windows: Vec<Option<MomentWindow>> = Vec::with_capacity(d.delays.len());
    {
        let mut sampler = |t: f64| stack_xwu(&trace, w, u, t);
        for (i, &tau) in d.delays.iter().enumerate() {
            if kerns[i].is_zero() {
                windows.push(None);
            } else {
                let mut knots = trace.knots_between(-tau, 0.0);
                knots.extend(w.breakpoints(-tau, 0.0));
                knots.extend(u.breakpoints(-tau, 0.0));
                windows.push(Some(MomentWindow::init(
                    kerns[i].degree(),
                    tau,
                    n + m + p,
                    0.0,
                    &knots,
                    &mut sampler,
                )));
            }
        }
    }
    {
        let mut dsampler = |t: f64| dtrace.sample(t);
        for (i, &tau) in d.delays.iter().enumerate() {
            if e_kerns[i].is_zero() {
                e_windows.push(None);
            } else {
                let knots = dtrace.knots_between(-tau, 0.0);
                e_windows.push(Some(MomentWindow::init(
                    e_kerns[i].degree(),
                    tau,
                    n,
                    0.0,
                    &knots,
                    &mut dsampler,
                )));
            }
        }
    }

    // History contribution c(t) to the stacked [x'; z; y] right-hand side.
    // `shift` peeks windows forward when t is past their committed center.
    let hist = |t: f64,
                trace: &Trace,
                dtrace: &Trace,
                windows: &[Option<MomentWindow>],
                e_windows: &[Option<MomentWindow>]|
     -> DVector<f64> {
        let mut acc = DVector::zeros(n + d.q + d.r);
        for (i, &tau) in d.delays.iter().enumerate() {
            acc += &g_delayed[i] * stack_xwu(trace, w, u, t - tau);
            if neutral {
                let edel = &e_delayed[i];
                if edel.iter().any(|&x| x != 0.0) {
                    acc += edel * dtrace.sample(t - tau);
                }
            }
            if let Some(win) = &windows[i] {
                if win.center() == t {
                    acc += win.eval(&kerns[i]);
                } else {
                    let mut peek = win.clone();
                    let knots_fn = |a: f64, b: f64| {
                        let mut ks = trace.knots_between(a, b);
                        ks.extend(w.breakpoints(a, b));
                        ks.extend(u.breakpoints(a, b));
                        ks
                    };
                    let mut sampler = |tt: f64| stack_xwu(trace, w, u, tt);
                    peek.advance(t, &knots_fn, &mut sampler);
                    acc += peek.eval(&kerns[i]);
                }
            }
            if let Some(win) = &e_windows[i] {
                if win.center() == t {
                    acc += win.eval(&e_kerns[i]);
                } else {
                    let mut peek = win.clone();
                    let knots_fn = |a: f64, b: f64| dtrace.knots_between(a, b);
                    let mut sampler = |tt: f64| dtrace.sample(tt);
                    peek.advance(t, &knots_fn, &mut sampler);
                    acc += peek.eval(&e_kerns[i]);
                }
            }
        }
        acc
    };

    // Instantaneous stacked contribution and split state derivative.
    let inst = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let mut acc = DVector::zeros(n + d.q + d.r);
        acc.rows_mut(0, n)
            .copy_from(&(&d.a0 * x + &d.b1 * w.value(t) + &d.b2 * u.value(t)));
        acc.rows_mut(n, d.q)
            .copy_from(&(&d.c10 * x + &d.d11 * w.value(t) + &d.d12 * u.value(t)));
        acc.rows_mut(n + d.q, d.r)
            .copy_from(&(&d.c20 * x + &d.d21 * w.value(t) + &d.d22 * u.value(t)));
        acc
    };

    // Initial derivative from the dynamics. Computing it only reads the
    // prehistory side of `dtrace` (every E-term argument is negative at
    // t = 0), so the placeholder value at the origin can be replaced now.
    let c_now = hist(0.0, &trace, &dtrace, &windows, &e_windows);
    let x_now = trace.value(0).clone();
    let xdot0 = split.x(&(inst(0.0, &x_now) + &c_now));
    dtrace = Trace::new(dt, Prehistory::Derivative(x0.clone()), xdot0);

    let mut out = Trajectory::with_capacity(dt, steps);
    let record = |t: f64,
                      trace: &Trace,
                      c: &DVector<f64>,
                      out: &mut Trajectory|
     -> Result<()> {
        let x = trace.last().clone();
        let full = inst(t, &x) + c;
        Trajectory::check_finite(&x, "x", t)?;
        out.t.push(t);
        out.z.push(split.z(&full));
        out.y.push(split.y(&full));
        out.x.push(x);
        out.v.push(DVector::zeros(0));
        out.w.push(w.value(t));
        out.u.push(u.value(t));
        Ok(())
    };

    record(0.0, &trace, &c_now, &mut out)?;

    for k in 0..steps {
        let t = k as f64 * dt;
        let th = t + 0.5 * dt;
        let t1 = t + dt;
        let c0 = hist(t, &trace, &dtrace, &windows, &e_windows);
        let ch = hist(th, &trace, &dtrace, &windows, &e_windows);
        let c1 = hist(t1, &trace, &dtrace, &windows, &e_windows);
        let x = trace.last().clone();

        let f = |tt: f64, xx: &DVector<f64>, c: &DVector<f64>| -> DVector<f64> {
            &d.a0 * xx + &d.b1 * w.value(tt) + &d.b2 * u.value(tt) + split.x(c)
        };
        let k1 = f(t, &x, &c0);
        let k2 = f(th, &(&x + &k1 * (dt / 2.0)), &ch);
        let k3 = f(th, &(&x + &k2 * (dt / 2.0)), &ch);
        let k4 = f(t1, &(&x + &k3 * dt), &c1);
        let x_next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        Trajectory::check_finite(&x_next, "x", t1)?;
        trace.push(x_next);

        // Commit the state windows against the now-complete trace.
        {
            let knots_fn = |a: f64, b: f64| {
                let mut ks = trace.knots_between(a, b);
                ks.extend(w.breakpoints(a, b));
                ks.extend(u.breakpoints(a, b));
                ks
            };
            let mut sampler = |tt: f64| stack_xwu(&trace, w, u, tt);
            for win in windows.iter_mut().flatten() {
                win.advance(t1, &knots_fn, &mut sampler);
            }
        }

        // Derivative at the new point (windows for x are committed; the
        // derivative windows still peek one sliver ahead).
        let c_new = hist(t1, &trace, &dtrace, &windows, &e_windows);
        let xdot_next = split.x(&(inst(t1, trace.last()) + &c_new));
        dtrace.push(xdot_next);
        {
            let knots_fn = |a: f64, b: f64| dtrace.knots_between(a, b);
            let mut sampler = |tt: f64| dtrace.sample(tt);
            for win in e_windows.iter_mut().flatten() {
                win.advance(t1, &knots_fn, &mut sampler);
            }
        }

        // Outputs at the committed point (windows all centered at t1 now).
        let c_rec = hist(t1, &trace, &dtrace, &windows, &e_windows);
        record(t1, &trace, &c_rec, &mut out)?;
    }
    Ok(out)
}

fn stack_xwu(trace: &Trace, w: &VectorSignal, u: &VectorSignal, t: f64) -> DVector<f64> {
    let x = trace.sample(t);
    let wv = w.value(t);
    let uv = u.value(t);
    let mut out = DVector::zeros(x.len() + wv.len() + uv.len());
    out.rows_mut(0, x.len()).copy_from(&x);
    out.rows_mut(x.len(), wv.len()).copy_from(&wv);
    out.rows_mut(x.len() + wv.len(), uv.len()).copy_from(&uv);
    out
}
