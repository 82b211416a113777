use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::rules::{clenshaw_curtis, gauss_legendre, Family, Rule1D};
use crate::affine::ParameterBox;

/// Number of 1-D nodes as a function of the sparse-grid index `i >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    /// `m_i = i`.
    Linear,
    /// `m_1 = 1`, `m_i = 2^(i-1) + 1`; nested for Clenshaw-Curtis.
    NestedDoubling,
}

impl Growth {
    /// The conventional pairing: doubling for Clenshaw-Curtis, linear for
    /// Gauss-Legendre.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::ClenshawCurtis => Growth::NestedDoubling,
            Family::GaussLegendre => Growth::Linear,
        }
    }

    /// `m_i`.
    pub fn points(&self, i: usize) -> usize {
        match self {
            Growth::Linear => i,
            Growth::NestedDoubling if i <= 1 => 1,
            Growth::NestedDoubling => (1 << (i - 1)) + 1,
        }
    }
}

/// Where a point of a [`PointSet`] first came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointLabel {
    /// Sparse-grid multi-index `i` (1-based levels per direction).
    MultiIndex(Vec<usize>),
    /// Anchored-ANOVA direction set (zero-based coordinates).
    Anova(Vec<usize>),
}

/// Quadrature point set on Γ with possibly signed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    /// Dimension `M`.
    pub dim: usize,
    /// Distinct points in generation order.
    pub points: Vec<Vec<f64>>,
    /// Accumulated weights.
    pub weights: Vec<f64>,
    /// Label of the first tensor rule that produced each point.
    pub labels: Vec<PointLabel>,
    /// For every tensor-rule point in generation order, the index of the
    /// merged point it was folded into.
    pub dedup: Vec<usize>,
}

impl PointSet {
    /// Number of distinct points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when there are no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ w_k f(ξ_k)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w * f(x))
            .sum()
    }
}

fn binomial(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as i128 / (j + 1) as i128;
    }
    acc as i64
}

/// All multi-indices `i >= 1` with `|i| = total`, first coordinate largest
/// first, so that variation in direction 1 precedes direction 2.
fn compositions(dim: usize, total: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(prefix: &mut Vec<usize>, left: usize, slots: usize, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (1..=left - (slots - 1)).rev() {
            prefix.push(first);
            rec(prefix, left - first, slots - 1, out);
            prefix.pop();
        }
    }
    if total >= dim && dim > 0 {
        rec(&mut Vec::with_capacity(dim), total, dim, out);
    }
}

/// Smolyak combination terms `(i, c_i)` for level `ℓ` in `M` dimensions:
/// `c_i = (-1)^(ℓ+M-|i|) binom(M-1, ℓ+M-|i|)` for `ℓ+1 <= |i| <= ℓ+M`,
/// zero-coefficient multi-indices omitted.
pub fn smolyak_terms(dim: usize, level: usize) -> Vec<(Vec<usize>, i64)> {
    let mut terms = Vec::new();
    let lo = (level + 1).max(dim);
    for total in lo..=level + dim {
        let gap = level + dim - total;
        let c = binomial(dim - 1, gap);
        if c == 0 {
            continue;
        }
        let c = if gap.is_multiple_of(2) { c } else { -c };
        let mut idx = Vec::new();
        compositions(dim, total, &mut idx);
        terms.extend(idx.into_iter().map(|i| (i, c)));
    }
    terms
}

/// Canonical node ids per coordinate, matching nodes within a relative
/// tolerance.
pub(crate) struct NodeTable {
    nodes: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

impl NodeTable {
    pub(crate) fn new(domain: &ParameterBox) -> Self {
        let scale = (0..domain.dim())
            .map(|m| {
                let (a, b) = domain.interval(m);
                a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
            })
            .collect();
        Self {
            nodes: vec![Vec::new(); domain.dim()],
            scale,
        }
    }

    pub(crate) fn id(&mut self, m: usize, x: f64) -> u32 {
        let tol = 1e-12 * self.scale[m];
        let table = &mut self.nodes[m];
        if let Some(k) = table.iter().position(|&y| (y - x).abs() <= tol) {
            return k as u32;
        }
        table.push(x);
        (table.len() - 1) as u32
    }
}

fn rule(family: Family, points: usize, a: f64, b: f64) -> Rule1D {
    match family {
        Family::GaussLegendre => gauss_legendre(points, a, b),
        Family::ClenshawCurtis => clenshaw_curtis(points, a, b),
    }
}

/// Smolyak sparse grid of level `ℓ` on `domain`: the union of the tensor
/// rules of [`smolyak_terms`], each scaled by its combination coefficient,
/// with coincident points merged and their weights accumulated.
pub fn sparse_grid(
    domain: &ParameterBox,
    level: usize,
    family: Family,
    growth: Growth,
) -> PointSet {
    let dim = domain.dim();
    let mut table = NodeTable::new(domain);
    let mut index: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    let mut set = PointSet {
        dim,
        points: Vec::new(),
        weights: Vec::new(),
        labels: Vec::new(),
        dedup: Vec::new(),
    };
    let mut cache: BTreeMap<(usize, usize), Rule1D> = BTreeMap::new();
    for (multi, coef) in smolyak_terms(dim, level) {
        let rules: Vec<Rule1D> = multi
            .iter()
            .enumerate()
            .map(|(m, &i)| {
                let (a, b) = domain.interval(m);
                cache
                    .entry((m, i))
                    .or_insert_with(|| rule(family, growth.points(i), a, b))
                    .clone()
            })
            .collect();
        let mut cursor = vec![0usize; dim];
        loop {
            let xi: Vec<f64> = (0..dim).map(|m| rules[m].nodes[cursor[m]]).collect();
            let w = coef as f64
                * (0..dim)
                    .map(|m| rules[m].weights[cursor[m]])
                    .product::<f64>();
            let key: Vec<u32> = xi
                .iter()
                .enumerate()
                .map(|(m, &x)| table.id(m, x))
                .collect();
            let k = *index.entry(key).or_insert_with(|| {
                set.points.push(xi);
                set.weights.push(0.0);
                set.labels.push(PointLabel::MultiIndex(multi.clone()));
                set.points.len() - 1
            });
            set.weights[k] += w;
            set.dedup.push(k);

            // Odometer with the last coordinate fastest.
            let mut m = dim;
            loop {
                if m == 0 {
                    break;
                }
                m -= 1;
                cursor[m] += 1;
                if cursor[m] < rules[m].len() {
                    break;
                }
                cursor[m] = 0;
                if m == 0 {
                    m = usize::MAX;
                    break;
                }
            }
            if m == usize::MAX || dim == 0 {
                break;
            }
        }
    }
    set
}
