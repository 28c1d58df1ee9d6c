//! Shared generators for the integration suites: seeded random systems,
//! operators, and data with small, well-conditioned coefficients.
#![allow(dead_code)] // each test binary uses a different subset

use delayrep_core::{DdeSpec, FunctionPart, HybridVector, PiOperator, PolyKernel, UavParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_kernel1(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    deg: usize,
    scale: f64,
) -> PolyKernel {
    PolyKernel::from_coeffs(
        (0..=deg)
            .map(|_| random_matrix(rng, rows, cols, scale))
            .collect(),
    )
    .unwrap()
}

pub fn random_kernel2(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    deg: usize,
    scale: f64,
) -> PolyKernel {
    PolyKernel::from_coeffs2(
        deg,
        (0..(deg + 1) * (deg + 1))
            .map(|_| random_matrix(rng, rows, cols, scale))
            .collect(),
    )
    .unwrap()
}

/// Random delay system with `n, m, p, q, r <= 3`, at most two delays, and
/// distributed kernels of degree <= 1. Coefficients are small and the drift
/// is shifted stable so trajectories stay O(1) over a few delay spans.
pub fn random_small_dde(rng: &mut ChaCha8Rng) -> DdeSpec {
    let n = rng.random_range(1..=3usize);
    let m = rng.random_range(0..=3usize);
    let p = rng.random_range(0..=3usize);
    let q = rng.random_range(0..=3usize);
    let r = rng.random_range(0..=3usize);
    let mut delays = vec![0.4 + rng.random_range(0.0..0.4)];
    if rng.random_range(0..2) == 1 {
        delays.push(delays[0] + 0.3 + rng.random_range(0.0..0.5));
    }
    let k = delays.len();
    let mut d = DdeSpec::zero(n, m, p, q, r, delays);
    let s = 0.4 / n as f64;
    d.a0 = random_matrix(rng, n, n, s);
    for i in 0..n {
        d.a0[(i, i)] -= 0.5;
    }
    d.b1 = random_matrix(rng, n, m, s);
    d.b2 = random_matrix(rng, n, p, s);
    d.c10 = random_matrix(rng, q, n, 1.0);
    d.c20 = random_matrix(rng, r, n, 1.0);
    d.d11 = random_matrix(rng, q, m, 1.0);
    d.d12 = random_matrix(rng, q, p, 1.0);
    d.d21 = random_matrix(rng, r, m, 1.0);
    d.d22 = random_matrix(rng, r, p, 1.0);
    let sd = 0.3 / n as f64;
    for i in 0..k {
        d.delayed[i].a = random_matrix(rng, n, n, sd);
        d.delayed[i].b1 = random_matrix(rng, n, m, sd);
        d.delayed[i].b2 = random_matrix(rng, n, p, sd);
        d.delayed[i].c1 = random_matrix(rng, q, n, 1.0);
        d.delayed[i].c2 = random_matrix(rng, r, n, 1.0);
        d.delayed[i].d11 = random_matrix(rng, q, m, 1.0);
        d.delayed[i].d12 = random_matrix(rng, q, p, 1.0);
        d.delayed[i].d21 = random_matrix(rng, r, m, 1.0);
        d.delayed[i].d22 = random_matrix(rng, r, p, 1.0);
        d.distributed[i].a = random_kernel1(rng, n, n, 1, sd);
        d.distributed[i].b1 = random_kernel1(rng, n, m, 1, sd);
        d.distributed[i].c1 = random_kernel1(rng, q, n, 1, 0.5);
        d.distributed[i].c2 = random_kernel1(rng, r, n, 1, 0.5);
    }
    d
}

/// Random vehicle-network parameters: `count` vehicles of state dimension
/// `n`, measurement height `r`, and `3 * count` pairwise-distinct delays.
pub fn random_uav_params(
    rng: &mut ChaCha8Rng,
    count: usize,
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    r: usize,
) -> UavParams {
    let mut delays = Vec::with_capacity(3 * count);
    let mut t = 0.5;
    for _ in 0..3 * count {
        t += 0.2 + rng.random_range(0.0..0.2);
        delays.push(t);
    }
    UavParams {
        a: (0..count)
            .map(|_| {
                let mut a = random_matrix(rng, n, n, 0.3);
                for i in 0..n {
                    a[(i, i)] -= 0.8;
                }
                a
            })
            .collect(),
        coupling: (0..count)
            .map(|i| {
                (0..count)
                    .map(|j| {
                        if i == j {
                            DMatrix::zeros(n, n)
                        } else {
                            random_matrix(rng, n, n, 0.1)
                        }
                    })
                    .collect()
            })
            .collect(),
        b1: (0..count).map(|_| random_matrix(rng, n, m, 0.3)).collect(),
        b2: (0..count).map(|_| random_matrix(rng, n, p, 0.3)).collect(),
        c2: (0..count).map(|_| random_matrix(rng, r, n, 0.5)).collect(),
        d21: (0..count).map(|_| random_matrix(rng, r, m, 0.3)).collect(),
        c1: random_matrix(rng, q, n * count, 0.5),
        d12: random_matrix(rng, q, p, 0.3),
        process_delays: delays[..count].to_vec(),
        input_delays: delays[count..2 * count].to_vec(),
        output_delays: delays[2 * count..].to_vec(),
    }
}

/// Random 4-block operator with kernels of the given degree.
pub fn random_op(
    rng: &mut ChaCha8Rng,
    fo: usize,
    fi: usize,
    po: usize,
    pi: usize,
    deg: usize,
) -> PiOperator {
    PiOperator::new(
        random_matrix(rng, fo, fi, 1.0),
        random_kernel1(rng, fo, pi, deg, 1.0),
        random_kernel1(rng, po, fi, deg, 1.0),
        random_kernel1(rng, po, pi, deg, 1.0),
        random_kernel2(rng, po, pi, deg, 1.0),
        random_kernel2(rng, po, pi, deg, 1.0),
    )
    .unwrap()
}

/// Random hybrid vector with a single polynomial function channel.
pub fn random_poly_vec(rng: &mut ChaCha8Rng, fin: usize, fun: usize, deg: usize) -> HybridVector {
    HybridVector::new(
        DVector::from_fn(fin, |_, _| rng.random_range(-1.0..1.0)),
        vec![FunctionPart::Poly(random_kernel1(rng, fun, 1, deg, 1.0))],
    )
    .unwrap()
}
