//! End-to-end acceptance checks: one test per criterion, each printing a
//! single `PASS`/`FAIL` line with the measured figure next to its tolerance
//! (run with `--nocapture` to see the lines for passing tests too).

mod common;

use std::time::Instant;

use delayrep_core::quad::chebyshev_lobatto;
use delayrep_core::{
    build_shower_dde, build_shower_ddf, build_uav_dde, build_uav_ddf, check_lemma1, check_lemma2,
    check_lemma3, check_lemma4, check_lemma5, check_route_independence, dde_to_ddf,
    minimal_ddf_from_dde, simulate_dde, simulate_nds, DdeSpec, HistoryFunction, NdsSpec,
    ShowerParams, SimConfig, SofParams, UavParams, VectorSignal, DEFAULT_RANK_TOL,
};
use nalgebra::{dmatrix, dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: usize, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

/// 1. The scalar delay oscillator against its method-of-steps solution.
#[test]
fn criterion_1_method_of_steps_oracle() {
    let started = Instant::now();
    let mut d = DdeSpec::zero(1, 0, 0, 0, 0, vec![1.0]);
    d.delayed[0].a = dmatrix![-1.0];
    let x0 = HistoryFunction::constant(dvector![1.0], -1.0);
    let traj = simulate_dde(
        &d,
        &x0,
        &VectorSignal::zero(0),
        &VectorSignal::zero(0),
        &SimConfig::new(1e-3, 2.0),
    )
    .unwrap();
    let mut worst = 0.0f64;
    for (k, &t) in traj.t.iter().enumerate() {
        let exact = if t <= 1.0 {
            1.0 - t
        } else {
            1.0 - t + (t - 1.0) * (t - 1.0) / 2.0
        };
        worst = worst.max((traj.x[k][0] - exact).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-8 && elapsed < 1.0,
        &format!("max deviation {worst:.2e} vs 1e-8, {elapsed:.3} s vs 1 s"),
    );
}

/// 2. Delayed-state form vs its channel form on the shower networks and ten
/// random small systems.
#[test]
fn criterion_2_channel_form_differential_test() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for users in 1..=3 {
        let d = build_shower_dde(&ShowerParams::standard(users)).unwrap();
        let horizon = 3.0 * d.delays.last().unwrap();
        let rep = check_lemma1(&d, &SimConfig::new(1e-3, horizon)).unwrap();
        worst = worst.max(rep.max_deviation());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let d = common::random_small_dde(&mut rng);
        let horizon = 3.0 * d.delays.last().unwrap();
        let rep = check_lemma1(&d, &SimConfig::new(1e-3, horizon)).unwrap();
        worst = worst.max(rep.max_deviation());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        2,
        worst <= 1e-8 && elapsed < 30.0,
        &format!("max deviation {worst:.2e} vs 1e-8 over 13 systems, {elapsed:.1} s vs 30 s"),
    );
}

/// 3. Neutral form: the zero-derivative-coefficient case collapses to the
/// delayed-state routes, and a true neutral system converges at full order.
#[test]
fn criterion_3_neutral_form() {
    // A neutral spec whose derivative blocks are all zero must agree with
    // both its channel conversion and the plain delayed-state route.
    let mut d = DdeSpec::zero(2, 1, 1, 1, 1, vec![0.6, 1.0]);
    d.a0 = dmatrix![-0.7, 0.2; 0.0, -0.5];
    d.b1 = dmatrix![0.4; 0.1];
    d.b2 = dmatrix![0.0; 0.3];
    d.c10 = dmatrix![1.0, 0.5];
    d.c20 = dmatrix![0.3, 1.0];
    d.d21 = dmatrix![0.2];
    d.delayed[0].a = dmatrix![-0.3, 0.0; 0.1, 0.0];
    d.delayed[1].b1 = dmatrix![0.25; 0.0];
    d.delayed[0].c1 = dmatrix![0.5, 0.0];
    let rep = check_lemma2(&NdsSpec::from_dde(d), &SimConfig::new(1e-3, 4.0)).unwrap();
    let routes = rep.parts.iter().any(|p| p.0.contains("plain delay route"));
    let zero_e = rep.max_deviation();

    // A genuinely neutral scalar system with an analytic solution: with
    // history e^{l t} and l e^l = b + e l the solution stays e^{l t}, and
    // z = x + e1 x'(t - 1) is analytic too. Halving dt must cut the error
    // by at least 8x (order >= 3 observed; RK4 gives ~16x). A growing root
    // keeps the discretization error well above the sampled-history floor,
    // and the dense sampling keeps that floor near machine precision.
    let (l, e, e1) = (1.2f64, 0.5, 0.4);
    let b = l * l.exp() - e * l;
    let mut s = NdsSpec::from_dde(DdeSpec::zero(1, 0, 0, 1, 0, vec![1.0]));
    s.base.delayed[0].a = dmatrix![b];
    s.base.c10 = dmatrix![1.0];
    s.e[0] = dmatrix![e];
    s.e1[0] = dmatrix![e1];
    let x0 = HistoryFunction::sample_with_derivative(
        -1.0,
        16385,
        |t| dvector![(l * t).exp()],
        |t| dvector![l * (l * t).exp()],
    );
    let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| {
            let traj = simulate_nds(
                &s,
                &x0,
                &VectorSignal::zero(0),
                &VectorSignal::zero(0),
                &SimConfig::new(dt, 3.0),
            )
            .unwrap();
            let mut worst = 0.0f64;
            for (k, &t) in traj.t.iter().enumerate() {
                let x = (l * t).exp();
                let z = x + e1 * l * (l * (t - 1.0)).exp();
                worst = worst.max((traj.x[k][0] - x).abs());
                worst = worst.max((traj.z[k][0] - z).abs());
            }
            worst
        })
        .collect();
    let (r1, r2) = (errs[0] / errs[1], errs[1] / errs[2]);
    report(
        3,
        routes && zero_e <= 1e-8 && r1 >= 8.0 && r2 >= 8.0,
        &format!(
            "zero-E deviation {zero_e:.2e} vs 1e-8; refinement ratios {r1:.1}, {r2:.1} vs 8"
        ),
    );
}

/// 4. Transport profiles vs delayed channel values at every node.
#[test]
fn criterion_4_transport_profiles() {
    let d = build_shower_ddf(&ShowerParams::standard(1)).unwrap();
    let rep = check_lemma3(&d, &SimConfig::new(1e-3, 3.0)).unwrap();
    let worst = rep.max_deviation();
    report(4, worst <= 1e-10, &format!("max deviation {worst:.2e} vs 1e-10"));
}

/// 5. Integral-equation form vs the channel form, with spectral refinement
/// and state reconstruction.
#[test]
fn criterion_5_integral_form() {
    let d = build_shower_ddf(&ShowerParams::standard(2)).unwrap();
    let output_dev = |order: usize| -> (f64, f64) {
        let mut cfg = SimConfig::new(1e-3, 6.0);
        cfg.collocation_order = order;
        let rep = check_lemma4(&d, &cfg).unwrap();
        let outputs = rep
            .parts
            .iter()
            .filter(|p| p.0 == "y" || p.0 == "z")
            .map(|p| p.1)
            .fold(0.0f64, f64::max);
        let recon = rep
            .parts
            .iter()
            .find(|p| p.0.contains("reconstruction"))
            .unwrap()
            .1;
        (outputs, recon)
    };
    let sweep: Vec<f64> = [8, 12, 16, 24].iter().map(|&m| output_dev(m).0).collect();
    let (at16, recon) = output_dev(16);
    let monotone = sweep.windows(2).all(|w| w[1] < w[0]);
    report(
        5,
        at16 <= 1e-3 && recon <= 1e-3 && monotone,
        &format!(
            "outputs {at16:.2e}, reconstruction {recon:.2e} vs 1e-3; sweep M=8,12,16,24: {:?} {}",
            sweep.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            if monotone { "monotone" } else { "NOT monotone" },
        ),
    );
}

/// 6. The closed scalar feedback network satisfies its output recursion.
#[test]
fn criterion_6_feedback_recursion() {
    let params = SofParams::demo(2);
    let plant = params.plant().unwrap();
    let rep = check_lemma5(&plant, &params.demo_feedback(), &SimConfig::new(1e-3, 5.0)).unwrap();
    let worst = rep.max_deviation();
    report(6, worst <= 1e-9, &format!("max residual {worst:.2e} vs 1e-9"));
}

/// 7. The direct and two-step routes to the integral form agree.
#[test]
fn criterion_7_route_independence() {
    let d = build_shower_dde(&ShowerParams::standard(2)).unwrap();
    let worst = check_route_independence(&d, 8).unwrap();
    report(7, worst <= 1e-10, &format!("max deviation {worst:.2e} vs 1e-10 at M=8"));
}

/// 8. Channel-dimension accounting across the builders and the minimal
/// reduction.
#[test]
fn criterion_8_dimension_accounting() {
    let mut ok = true;
    let mut detail = String::new();

    // Structured vehicle channels: sum p_i = (2n + r) N.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut cases: Vec<(UavParams, usize, usize)> = (1..=5)
        .map(|count| (UavParams::demo(count), 1usize, 1usize))
        .collect();
    cases.push((common::random_uav_params(&mut rng, 2, 2, 1, 1, 1, 2), 2, 2));
    cases.push((common::random_uav_params(&mut rng, 3, 3, 2, 2, 1, 3), 3, 3));
    for (params, n, r) in &cases {
        let count = params.a.len();
        let want = (2 * n + r) * count;
        let ddf = build_uav_ddf(params).unwrap();
        if ddf.total_channel_dim() != want {
            ok = false;
            detail = format!(
                "structured channels gave {} for (2n+r)N = {want}",
                ddf.total_channel_dim()
            );
        }
        // The naive route: 3N channels of the full width n N + m + p.
        let dde = build_uav_dde(params).unwrap();
        let naive = dde_to_ddf(&dde).unwrap();
        let full = dde.n + dde.m + dde.p;
        if naive.channel_dims() != vec![full; 3 * count] {
            ok = false;
            detail = format!("naive channels {:?} != 3N x {full}", naive.channel_dims());
        }
    }

    // Rank-1 recovery on the shower network: sum p_i = N.
    for users in 1..=10 {
        let dde = build_shower_dde(&ShowerParams::standard(users)).unwrap();
        let minimal = minimal_ddf_from_dde(&dde, DEFAULT_RANK_TOL).unwrap();
        if minimal.ddf.total_channel_dim() != users {
            ok = false;
            detail = format!(
                "minimal reduction gave {} channels for N = {users}",
                minimal.ddf.total_channel_dim()
            );
        }
    }
    if ok {
        detail = "structured (2n+r)N on 7 fleets, naive 3N x (nN+m+p), minimal N for N <= 10"
            .to_string();
    }
    report(8, ok, &detail);
}

/// 9. Operator algebra agrees with nested/pointwise application, and the
/// discretization is exact once the nodes resolve the polynomial degrees.
#[test]
fn criterion_9_operator_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let probes = [-1.0, -0.61, -0.23, 0.0];
    let mut worst_alg = 0.0f64;
    for _ in 0..100 {
        let (fo_b, fi_b) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let (po_b, pi_b) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let (fo_a, po_a) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let b = common::random_op(&mut rng, fo_b, fi_b, po_b, pi_b, 2);
        let a = common::random_op(&mut rng, fo_a, fo_b, po_a, po_b, 2);
        let c = common::random_op(&mut rng, fo_b, fi_b, po_b, pi_b, 2);
        let v = common::random_poly_vec(&mut rng, fi_b, pi_b, 2);
        let alpha: f64 = rng.random_range(-2.0..2.0);

        let bv = b.apply(&v).unwrap();
        let nested = a.apply(&bv).unwrap();
        let composed = a.compose_capped(&b, 16).unwrap().apply(&v).unwrap();
        let summed = b.add(&c).unwrap().apply(&v).unwrap();
        let cv = c.apply(&v).unwrap();
        let scaled = b.scale(alpha).apply(&v).unwrap();

        worst_alg = worst_alg.max((nested.finite() - composed.finite()).amax());
        worst_alg = worst_alg.max((summed.finite() - (bv.finite() + cv.finite())).amax());
        worst_alg = worst_alg.max((scaled.finite() - bv.finite() * alpha).amax());
        for &s in &probes {
            worst_alg = worst_alg
                .max((nested.function_value(s) - composed.function_value(s)).amax());
            worst_alg = worst_alg.max(
                (summed.function_value(s) - (bv.function_value(s) + cv.function_value(s)))
                    .amax(),
            );
            worst_alg = worst_alg
                .max((scaled.function_value(s) - bv.function_value(s) * alpha).amax());
        }
    }

    // Discretization is exact once M exceeds the resolved degree + 1, where
    // applying a degree-d_op operator to degree-d_v data yields polynomials
    // of degree at most d_op + d_v + 1 (the windowed integrals).
    let mut worst_disc = 0.0f64;
    for d_op in 0..=2usize {
        for d_v in 0..=2usize {
            let op = common::random_op(&mut rng, 2, 2, 2, 2, d_op);
            let v = common::random_poly_vec(&mut rng, 2, 2, d_v);
            let want = op.apply(&v).unwrap();
            for m in [d_op + d_v + 3, d_op + d_v + 6] {
                let nodes = chebyshev_lobatto(m);
                let disc = op.discretize(m).unwrap();
                let mut vin = DVector::zeros(2 + 2 * m);
                vin.rows_mut(0, 2).copy_from(v.finite());
                vin.rows_mut(2, 2 * m).copy_from(&v.function_at_nodes(&nodes));
                let got = &disc * &vin;
                worst_disc = worst_disc.max((got.rows(0, 2) - want.finite()).amax());
                worst_disc = worst_disc
                    .max((got.rows(2, 2 * m) - want.function_at_nodes(&nodes)).amax());
            }
        }
    }
    report(
        9,
        worst_alg <= 1e-10 && worst_disc <= 1e-12,
        &format!(
            "algebra deviation {worst_alg:.2e} vs 1e-10 over 100 operators; \
             discretization deviation {worst_disc:.2e} vs 1e-12"
        ),
    );
}
