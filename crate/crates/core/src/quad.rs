//! Quadrature rules and collocation grids.
//!
//! Two families of nodes are used throughout the crate:
//!
//! * **Gauss–Legendre** rules integrate the polynomial kernels that appear in
//!   distributed-delay terms. A rule with `g` nodes is exact for polynomials
//!   of degree `2g - 1`, so kernels of degree `d` multiplied by a cubic
//!   interpolant are integrated exactly with `ceil((d + 4 + 1) / 2)` nodes;
//!   [`gauss_nodes_for_degree`] encodes that choice.
//! * **Chebyshev–Gauss–Lobatto** points on `[-1, 0]` carry the collocation
//!   discretization of the function-space component of a PIE state. Nodes are
//!   returned in ascending order, so the first node is `-1` and the last `0`.

/// A one-dimensional quadrature rule on an arbitrary interval.
#[derive(Debug, Clone)]
pub struct Quadrature {
    /// Quadrature nodes.
    pub nodes: Vec<f64>,
    /// Matching weights; `sum(w_i f(x_i))` approximates the integral.
    pub weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on the canonical interval `[-1, 1]`.
///
/// Nodes are computed by Newton iteration on the Legendre polynomial `P_g`,
/// starting from the Chebyshev-based asymptotic estimate. Accurate to machine
/// precision for any practical order (tested up to 64 nodes).
///
/// # Panics
/// Panics if `g == 0`.
pub fn gauss_legendre(g: usize) -> Quadrature {
    assert!(g > 0, "a quadrature rule needs at least one node");
    let mut nodes = vec![0.0; g];
    let mut weights = vec![0.0; g];
    // Roots come in symmetric pairs; compute the non-negative half.
    for k in 0..g.div_ceil(2) {
        // Initial guess: Chebyshev angle estimate for the (g-k)-th root.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (g as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_g(x) and P_g'(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=g {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = g as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[g - 1 - k] = x;
        weights[k] = w;
        weights[g - 1 - k] = w;
    }
    Quadrature { nodes, weights }
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(g: usize, a: f64, b: f64) -> Quadrature {
    let base = gauss_legendre(g);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Quadrature {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| w * half).collect(),
    }
}

/// Node count that integrates `kernel degree x cubic interpolant` exactly.
///
/// The integrand has polynomial degree `deg + 3`; a Gauss rule with `g` nodes
/// is exact through degree `2g - 1`, so `g = ceil((deg + 4) / 2)` suffices.
pub fn gauss_nodes_for_degree(deg: usize) -> usize {
    (deg + 4).div_ceil(2)
}

/// Chebyshev–Gauss–Lobatto collocation nodes on `[-1, 0]`, ascending.
///
/// # Panics
/// Panics if `m < 2`; a Lobatto grid needs both interval ends.
pub fn chebyshev_lobatto(m: usize) -> Vec<f64> {
    assert!(m >= 2, "a Lobatto grid needs at least two nodes");
    let n = (m - 1) as f64;
    (0..m)
        .map(|j| {
            let angle = std::f64::consts::PI * (m - 1 - j) as f64 / n;
            // Map cos(angle) from [-1, 1] onto [-1, 0]; clamp the exact ends.
            match j {
                0 => -1.0,
                _ if j == m - 1 => 0.0,
                _ => 0.5 * (angle.cos() - 1.0),
            }
        })
        .collect()
}

/// Barycentric weights for a Chebyshev–Gauss–Lobatto grid of `m` nodes.
///
/// Valid for the ascending grid returned by [`chebyshev_lobatto`]; the
/// common scale factor is irrelevant to barycentric evaluation.
pub fn lobatto_barycentric_weights(m: usize) -> Vec<f64> {
    assert!(m >= 2);
    (0..m)
        .map(|j| {
            let sign = if (m - 1 - j) % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == m - 1 {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect()
}

/// Evaluates every Lagrange basis polynomial of the grid at one point.
///
/// Returns `l` with `l[j] = L_j(x)` where `L_j` is the cardinal polynomial of
/// node `j`. Uses the barycentric formula; exact (up to rounding) when `x`
/// coincides with a node.
pub fn lagrange_basis_at(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    debug_assert_eq!(nodes.len(), bary.len());
    // Exact hit on a node: the basis is a Kronecker delta.
    if let Some(hit) = nodes.iter().position(|&n| n == x) {
        let mut l = vec![0.0; nodes.len()];
        l[hit] = 1.0;
        return l;
    }
    let terms: Vec<f64> = nodes
        .iter()
        .zip(bary)
        .map(|(&n, &w)| w / (x - n))
        .collect();
    let denom: f64 = terms.iter().sum();
    terms.iter().map(|t| t / denom).collect()
}

/// Integral of every Lagrange basis polynomial over the whole grid interval.
///
/// Returns `w` with `w[j] = \int L_j(x) dx` over `[nodes[0], nodes[last]]`,
/// i.e. the Clenshaw–Curtis-type quadrature weights of the grid. Computed by
/// Gauss–Legendre integration of the basis polynomials, which is exact
/// because each basis polynomial has degree `m - 1`.
pub fn lagrange_moments(nodes: &[f64], bary: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let rule = gauss_legendre_on(m.div_ceil(2) + 1, nodes[0], nodes[m - 1]);
    let mut w = vec![0.0; m];
    for (&x, &gw) in rule.nodes.iter().zip(&rule.weights) {
        for (j, l) in lagrange_basis_at(nodes, bary, x).into_iter().enumerate() {
            w[j] += gw * l;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_low_orders_match_tabulated_values() {
        let q1 = gauss_legendre(1);
        assert_abs_diff_eq!(q1.nodes[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q1.weights[0], 2.0, epsilon = 1e-15);

        let q2 = gauss_legendre(2);
        let r = 1.0 / 3.0_f64.sqrt();
        assert_abs_diff_eq!(q2.nodes[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(q2.nodes[1], r, epsilon = 1e-15);
        assert_abs_diff_eq!(q2.weights[0], 1.0, epsilon = 1e-15);

        let q3 = gauss_legendre(3);
        let r3 = (3.0 / 5.0_f64).sqrt();
        assert_abs_diff_eq!(q3.nodes[0], -r3, epsilon = 1e-14);
        assert_abs_diff_eq!(q3.nodes[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q3.weights[1], 8.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_is_exact_for_degree_2g_minus_1() {
        for g in 1..=12 {
            let q = gauss_legendre_on(g, -1.0, 0.0);
            for d in 0..(2 * g) {
                let got: f64 = q
                    .nodes
                    .iter()
                    .zip(&q.weights)
                    .map(|(x, w)| w * x.powi(d as i32))
                    .sum();
                // \int_{-1}^{0} x^d dx = (-1)^d / (d + 1)
                let want = if d % 2 == 0 { 1.0 } else { -1.0 } / (d as f64 + 1.0);
                assert_abs_diff_eq!(got, want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gauss_high_order_integrates_smooth_function() {
        // \int_0^1 e^x dx = e - 1
        let q = gauss_legendre_on(20, 0.0, 1.0);
        let got: f64 = q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.exp()).sum();
        assert_abs_diff_eq!(got, std::f64::consts::E - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn lobatto_grid_spans_interval_ascending() {
        for m in [2, 3, 8, 17] {
            let s = chebyshev_lobatto(m);
            assert_eq!(s.len(), m);
            assert_eq!(s[0], -1.0);
            assert_eq!(s[m - 1], 0.0);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn lagrange_basis_reproduces_polynomials() {
        let m = 9;
        let nodes = chebyshev_lobatto(m);
        let bary = lobatto_barycentric_weights(m);
        // Interpolating any polynomial of degree < m through the nodes must
        // reproduce it exactly at arbitrary points.
        let f = |x: f64| 3.0 - 2.0 * x + 0.5 * x.powi(5) - x.powi(8);
        for &x in &[-0.93, -0.5, -0.211, -0.05, 0.0, -1.0] {
            let l = lagrange_basis_at(&nodes, &bary, x);
            let got: f64 = l.iter().zip(&nodes).map(|(li, &n)| li * f(n)).sum();
            assert_abs_diff_eq!(got, f(x), epsilon = 1e-11);
        }
    }

    #[test]
    fn lagrange_moments_integrate_polynomials_exactly() {
        let m = 7;
        let nodes = chebyshev_lobatto(m);
        let bary = lobatto_barycentric_weights(m);
        let w = lagrange_moments(&nodes, &bary);
        // Degree m-1 = 6 monomials over [-1, 0].
        for d in 0..m {
            let got: f64 = w
                .iter()
                .zip(&nodes)
                .map(|(wi, &n)| wi * n.powi(d as i32))
                .sum();
            let want = if d % 2 == 0 { 1.0 } else { -1.0 } / (d as f64 + 1.0);
            assert_abs_diff_eq!(got, want, epsilon = 1e-13);
        }
    }
}
