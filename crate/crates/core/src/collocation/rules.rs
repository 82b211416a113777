use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// 1-D node family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Gauss-Legendre abscissae.
    GaussLegendre,
    /// Clenshaw-Curtis (Chebyshev extrema) abscissae.
    ClenshawCurtis,
}

/// A 1-D quadrature rule on `[a, b]` with probabilist weights (they sum to
/// one, i.e. they integrate against the uniform density).
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    /// Node family.
    pub family: Family,
    /// Nodes, strictly increasing (unless the interval is degenerate).
    pub nodes: Vec<f64>,
    /// Weights matching `nodes`.
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; rules have at least one node.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k f(x_k)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    fn mapped(family: Family, ref_nodes: Vec<f64>, ref_weights: Vec<f64>, a: f64, b: f64) -> Self {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        Self {
            family,
            nodes: ref_nodes.iter().map(|&x| mid + half * x).collect(),
            weights: ref_weights.iter().map(|&w| 0.5 * w).collect(),
        }
    }
}

/// Legendre `P_p(x)` and its derivative by the three-term recurrence.
fn legendre(p: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if p == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=p {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = p as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `p`-point Gauss-Legendre rule mapped to `[a, b]`. Nodes are found by
/// Newton iteration on `P_p`, then symmetrized so the odd rules contain the
/// interval midpoint exactly.
pub fn gauss_legendre(p: usize, a: f64, b: f64) -> Rule1D {
    assert!(p >= 1, "Gauss-Legendre rule needs at least one point");
    let mut x = vec![0.0; p];
    let mut w = vec![0.0; p];
    let half = p / 2;
    for k in 0..half {
        // k-th largest root.
        let mut r = libm::cos(PI * (k as f64 + 0.75) / (p as f64 + 0.5));
        for _ in 0..100 {
            let (val, der) = legendre(p, r);
            let dr = val / der;
            r -= dr;
            if dr.abs() <= 1e-16 {
                break;
            }
        }
        let (_, der) = legendre(p, r);
        let weight = 2.0 / ((1.0 - r * r) * der * der);
        x[p - 1 - k] = r;
        x[k] = -r;
        w[p - 1 - k] = weight;
        w[k] = weight;
    }
    if p % 2 == 1 {
        let (_, der) = legendre(p, 0.0);
        x[half] = 0.0;
        w[half] = 2.0 / (der * der);
    }
    Rule1D::mapped(Family::GaussLegendre, x, w, a, b)
}

/// `m`-point Clenshaw-Curtis rule mapped to `[a, b]`; the endpoints are
/// included for `m >= 2` and `m = 1` is the midpoint rule.
pub fn clenshaw_curtis(m: usize, a: f64, b: f64) -> Rule1D {
    assert!(m >= 1, "Clenshaw-Curtis rule needs at least one point");
    if m == 1 {
        return Rule1D::mapped(Family::ClenshawCurtis, vec![0.0], vec![2.0], a, b);
    }
    let n = m - 1;
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for k in 0..m {
        // Increasing order: x_k = -cos(kπ/n), mirrored for exact symmetry.
        let theta = k as f64 * PI / n as f64;
        let mut s = 0.0;
        for j in 1..=n / 2 {
            let bj = if 2 * j == n { 1.0 } else { 2.0 };
            s += bj / (4.0 * (j * j) as f64 - 1.0) * libm::cos(2.0 * j as f64 * theta);
        }
        let ck = if k == 0 || k == n { 1.0 } else { 2.0 };
        w[k] = ck / n as f64 * (1.0 - s);
        x[k] = -libm::cos(theta);
    }
    for k in 0..m / 2 {
        let v = 0.5 * (x[n - k] - x[k]);
        x[k] = -v;
        x[n - k] = v;
        let wv = 0.5 * (w[k] + w[n - k]);
        w[k] = wv;
        w[n - k] = wv;
    }
    if m % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let mut rule = Rule1D::mapped(Family::ClenshawCurtis, x, w, a, b);
    rule.nodes[0] = a;
    rule.nodes[n] = b;
    rule
}
