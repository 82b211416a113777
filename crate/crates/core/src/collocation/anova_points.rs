use alloc::vec;
use alloc::vec::Vec;

use super::rules::{gauss_legendre, Rule1D};
use crate::affine::ParameterBox;

/// Tensor Gauss-Legendre points over the free coordinates `K`, with every
/// other coordinate pinned to the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaPointSet {
    /// Free coordinates, zero-based and increasing.
    pub directions: Vec<usize>,
    /// Points per free coordinate.
    pub orders: Vec<usize>,
    /// Anchor point `c`.
    pub anchor: Vec<f64>,
    /// Points, last free coordinate varying fastest.
    pub points: Vec<Vec<f64>>,
    /// Tensor weights; they sum to one.
    pub weights: Vec<f64>,
}

impl AnovaPointSet {
    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True for an empty set (never produced by [`anova_points`]).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weights `W(ξ) = Π_j (ξ_j ≠ c_j ? w_j : w_j - 1)` with which
    /// `Σ W u` is `Σ_{S ⊆ K} (-1)^{|K∖S|} Q_S[u]`, every `Q_S` using the
    /// rules of this set. Needs odd orders so that the anchor is a node;
    /// `None` otherwise.
    pub fn difference_weights(&self) -> Option<Vec<f64>> {
        if self.orders.iter().any(|p| p % 2 == 0) {
            return None;
        }
        let rules: Vec<Rule1D> = self
            .orders
            .iter()
            .map(|&p| gauss_legendre(p, 0.0, 1.0))
            .collect();
        let mut out = Vec::with_capacity(self.points.len());
        let mut cursor = vec![0usize; self.orders.len()];
        for _ in 0..self.points.len() {
            let mut w = 1.0;
            for (k, r) in rules.iter().enumerate() {
                let v = r.weights[cursor[k]];
                w *= if 2 * cursor[k] + 1 == self.orders[k] {
                    v - 1.0
                } else {
                    v
                };
            }
            out.push(w);
            for k in (0..cursor.len()).rev() {
                cursor[k] += 1;
                if cursor[k] < self.orders[k] {
                    break;
                }
                cursor[k] = 0;
            }
        }
        Some(out)
    }
}

/// Anchored ANOVA collocation points for the direction set `directions`
/// with `orders[k]` Gauss-Legendre points in `directions[k]`. An empty
/// direction set yields the anchor alone.
pub fn anova_points(
    domain: &ParameterBox,
    directions: &[usize],
    orders: &[usize],
) -> AnovaPointSet {
    assert_eq!(directions.len(), orders.len(), "one order per direction");
    assert!(
        directions.windows(2).all(|w| w[0] < w[1]),
        "directions must be increasing"
    );
    let anchor = domain.anchor();
    let rules: Vec<Rule1D> = directions
        .iter()
        .zip(orders)
        .map(|(&m, &p)| {
            let (a, b) = domain.interval(m);
            gauss_legendre(p, a, b)
        })
        .collect();
    let total: usize = orders.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut cursor = vec![0usize; directions.len()];
    for _ in 0..total {
        let mut xi = anchor.clone();
        let mut w = 1.0;
        for (k, &m) in directions.iter().enumerate() {
            xi[m] = rules[k].nodes[cursor[k]];
            w *= rules[k].weights[cursor[k]];
        }
        points.push(xi);
        weights.push(w);
        for k in (0..cursor.len()).rev() {
            cursor[k] += 1;
            if cursor[k] < orders[k] {
                break;
            }
            cursor[k] = 0;
        }
    }
    AnovaPointSet {
        directions: directions.to_vec(),
        orders: orders.to_vec(),
        anchor,
        points,
        weights,
    }
}

/// How [`count_points`] tallies a level-`ℓ` ANOVA point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountConvention {
    /// `Σ_{l=0}^{ℓ} binom(M, l) p^l`.
    #[default]
    Formula,
    /// `Σ_{l=1}^{ℓ} binom(M, l) (p-1)^l`: anchor term dropped and the
    /// anchor node of each odd rule not counted again.
    TableNoAnchor,
}

/// Number of points in the level-`ℓ` ANOVA set with `p` points per
/// direction.
pub fn count_points(dim: usize, level: usize, p: u64, convention: CountConvention) -> u128 {
    let (start, base) = match convention {
        CountConvention::Formula => (0, p as u128),
        CountConvention::TableNoAnchor => (1, p.saturating_sub(1) as u128),
    };
    let mut total = 0u128;
    let mut binom = 1u128;
    let mut power = 1u128;
    for l in 0..=level.min(dim) {
        if l > 0 {
            binom = binom * (dim - l + 1) as u128 / l as u128;
            power *= base;
        }
        if l >= start {
            total += binom * power;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_direction_varies_one_coordinate() {
        let dom = ParameterBox::uniform(4, 0.01, 1.0).unwrap();
        let set = anova_points(&dom, &[0], &[3]);
        assert_eq!(set.len(), 3);
        for p in &set.points {
            assert_eq!(&p[1..], &[0.505, 0.505, 0.505]);
        }
        assert!(set.points.windows(2).all(|w| w[0][0] < w[1][0]));
    }

    #[test]
    fn pair_has_nine_points_and_unit_weight() {
        let dom = ParameterBox::uniform(4, 0.01, 1.0).unwrap();
        let set = anova_points(&dom, &[1, 3], &[3, 3]);
        assert_eq!(set.len(), 9);
        assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for p in &set.points {
            assert_eq!(p[0], 0.505);
            assert_eq!(p[2], 0.505);
        }
        // Last free coordinate fastest.
        assert_eq!(set.points[0][1], set.points[1][1]);
        assert!(set.points[0][3] < set.points[1][3]);
    }

    #[test]
    fn empty_set_is_anchor() {
        let dom = ParameterBox::uniform(3, 0.01, 1.0).unwrap();
        let set = anova_points(&dom, &[], &[]);
        assert_eq!(set.points, vec![dom.anchor()]);
        assert_eq!(set.weights, vec![1.0]);
    }

    #[test]
    fn difference_weights_are_inclusion_exclusion() {
        let dom = ParameterBox::uniform(3, 0.01, 1.0).unwrap();
        let f = |x: &[f64]| libm::exp(x[0]) * (1.0 + x[1] * x[2]) + x[2];
        let q = |k: &[usize], p: usize| {
            let s = anova_points(&dom, k, &vec![p; k.len()]);
            s.points
                .iter()
                .zip(&s.weights)
                .map(|(x, w)| w * f(x))
                .sum::<f64>()
        };
        let set = anova_points(&dom, &[0, 2], &[5, 5]);
        let w = set.difference_weights().unwrap();
        let got: f64 = set.points.iter().zip(&w).map(|(x, w)| w * f(x)).sum();
        let want = q(&[0, 2], 5) - q(&[0], 5) - q(&[2], 5) + f(&dom.anchor());
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        assert!(anova_points(&dom, &[1], &[4])
            .difference_weights()
            .is_none());
    }

    #[test]
    fn counts() {
        assert_eq!(count_points(7, 0, 5, CountConvention::Formula), 1);
        assert_eq!(count_points(4, 3, 9, CountConvention::Formula), 3439);
        assert_eq!(count_points(64, 2, 9, CountConvention::Formula), 163_873);
        assert_eq!(
            count_points(64, 2, 9, CountConvention::TableNoAnchor),
            129_536
        );
        assert_eq!(
            count_points(100, 2, 9, CountConvention::TableNoAnchor),
            317_600
        );
    }
}
