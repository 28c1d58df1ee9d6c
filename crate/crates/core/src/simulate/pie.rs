//! Implicit trapezoid stepper for the integral-equation form.
//!
//! The hybrid state `[x; Phi]` is collocated on a Chebyshev–Gauss–Lobatto
//! grid of `cfg.collocation_order` nodes; every operator becomes a matrix on
//! the stacked vector `[x; Phi(s_0); ...; Phi(s_{M-1})]`. The dynamics
//! differentiate the state under the `T` operator, so the natural scheme is
//! an implicit one: the trapezoid rule needs a single factorization of
//! `T - (dt/2) A` and keeps the second-order accuracy of the time grid
//! (spatial accuracy is spectral in the node count).

use nalgebra::DVector;

use crate::convert::PieSpec;
use crate::error::{Error, Result};
use crate::piops::HybridVector;
use crate::quad::chebyshev_lobatto;
use crate::signal::VectorSignal;
use crate::simulate::{
    CollocationTrace, Integrator, InputDerivative, SimConfig, Trajectory,
};
use crate::validate::{check_inputs, cond_2, input_requirements_pie, validate_pie};

/// Simulates the integral-equation form from a hybrid initial state.
pub fn simulate_pie(
    p: &PieSpec,
    x0: &HybridVector,
    w: &VectorSignal,
    u: &VectorSignal,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    validate_pie(p).into_result()?;
    cfg.check()?;
    cfg.check_against_delays(&p.delays)?;
    if cfg.integrator == Some(Integrator::Rk4Characteristics) {
        return Err(Error::Config(
            "the integral-equation form integrates with the implicit trapezoid method".into(),
        ));
    }
    if x0.finite().len() != p.n {
        return Err(Error::dim("x_0 finite part", (x0.finite().len(), 1), (p.n, 1)));
    }
    if x0.fun_dim() != p.fun_dim() {
        return Err(Error::dim(
            "x_0 function part",
            (x0.fun_dim(), 1),
            (p.fun_dim(), 1),
        ));
    }
    if w.dim() != p.m {
        return Err(Error::dim("w", (w.dim(), 1), (p.m, 1)));
    }
    if u.dim() != p.p {
        return Err(Error::dim("u", (u.dim(), 1), (p.p, 1)));
    }
    check_inputs(input_requirements_pie(p), w, u)?;

    let dt = cfg.dt;
    let steps = cfg.steps();
    let m_nodes = cfg.collocation_order;
    let nodes = chebyshev_lobatto(m_nodes);

    let t_d = p.t.discretize(m_nodes)?;
    let a_d = p.a.discretize(m_nodes)?;
    let b1_d = p.b1.discretize(m_nodes)?;
    let b2_d = p.b2.discretize(m_nodes)?;
    let bt1_d = p.bt1.discretize(m_nodes)?;
    let bt2_d = p.bt2.discretize(m_nodes)?;
    let c1_d = p.c1.discretize(m_nodes)?;
    let c2_d = p.c2.discretize(m_nodes)?;
    let d11_d = p.d11.discretize(m_nodes)?;
    let d12_d = p.d12.discretize(m_nodes)?;
    let d21_d = p.d21.discretize(m_nodes)?;
    let d22_d = p.d22.discretize(m_nodes)?;

    let lhs = &t_d - &a_d * (dt / 2.0);
    let cond = cond_2(&lhs);
    if !(cond <= 1e12) {
        return Err(Error::Singular {
            subject: format!("T - (dt/2) A at dt = {dt} with {m_nodes} collocation nodes"),
            cond,
            bound: 1e12,
        });
    }
    let lu = lhs.clone().lu();
    let rhs_mat = &t_d + &a_d * (dt / 2.0);

    // Input derivatives are only needed when the corresponding operator is
    // present (validation has already required smooth signals in that case).
    let need_wdot = !p.bt1.is_zero();
    let need_udot = !p.bt2.is_zero();
    let deriv = |sig: &VectorSignal, t: f64| -> DVector<f64> {
        match cfg.input_derivative {
            InputDerivative::Analytic => sig.derivative(t),
            InputDerivative::FiniteDifference => sig.derivative_fd(t, dt),
        }
    };

    let fun_total = p.fun_dim();
    let mut state = DVector::zeros(p.n + fun_total * m_nodes);
    state.rows_mut(0, p.n).copy_from(x0.finite());
    if fun_total > 0 {
        state
            .rows_mut(p.n, fun_total * m_nodes)
            .copy_from(&x0.function_at_nodes(&nodes));
    }

    let mut out = Trajectory::with_capacity(dt, steps);
    out.collocation = Some(CollocationTrace {
        nodes: nodes.clone(),
        p_i: p.p_i.clone(),
        values: Vec::with_capacity(steps + 1),
    });

    let record = |t: f64, state: &DVector<f64>, out: &mut Trajectory| -> Result<()> {
        Trajectory::check_finite(state, "the collocated state", t)?;
        let wv = w.value(t);
        let uv = u.value(t);
        out.t.push(t);
        out.z.push(&c1_d * state + &d11_d * &wv + &d12_d * &uv);
        out.y.push(&c2_d * state + &d21_d * &wv + &d22_d * &uv);
        out.x.push(state.rows(0, p.n).into_owned());
        out.v.push(DVector::zeros(0));
        out.w.push(wv);
        out.u.push(uv);
        out.collocation
            .as_mut()
            .unwrap()
            .values
            .push(state.rows(p.n, fun_total * m_nodes).into_owned());
        Ok(())
    };

    record(0.0, &state, &mut out)?;

    for k in 0..steps {
        let t = k as f64 * dt;
        let t1 = t + dt;
        let mut rhs = &rhs_mat * &state;
        rhs += &b1_d * (w.value(t) + w.value(t1)) * (dt / 2.0);
        rhs += &b2_d * (u.value(t) + u.value(t1)) * (dt / 2.0);
        if need_wdot {
            rhs -= &bt1_d * (deriv(w, t) + deriv(w, t1)) * (dt / 2.0);
        }
        if need_udot {
            rhs -= &bt2_d * (deriv(u, t) + deriv(u, t1)) * (dt / 2.0);
        }
        state = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            subject: format!("T - (dt/2) A at dt = {dt} with {m_nodes} collocation nodes"),
            cond,
            bound: 1e12,
        })?;
        record(t1, &state, &mut out)?;
    }
    Ok(out)
}
