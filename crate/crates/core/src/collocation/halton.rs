use alloc::vec::Vec;

use crate::affine::ParameterBox;

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Radical inverse of `index` in `base`: the base-`b` digits mirrored
/// about the radix point.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

/// Multidimensional Halton sequence on the unit cube using the first `M`
/// primes as bases, starting at index 1.
#[derive(Debug, Clone)]
pub struct Halton {
    bases: Vec<u64>,
    index: u64,
}

impl Halton {
    /// Sequence in `dim` dimensions.
    pub fn new(dim: usize) -> Self {
        Self {
            bases: first_primes(dim),
            index: 1,
        }
    }

    /// Unit-cube point with the given 1-based index.
    pub fn point(&self, index: u64) -> Vec<f64> {
        self.bases
            .iter()
            .map(|&b| radical_inverse(index, b))
            .collect()
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        let p = self.point(self.index);
        self.index += 1;
        Some(p)
    }
}

/// The first `count` Halton points mapped affinely into `domain`.
pub fn halton(domain: &ParameterBox, count: usize) -> Vec<Vec<f64>> {
    Halton::new(domain.dim())
        .take(count)
        .map(|u| domain.from_unit(&u))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn base_two_start() {
        let unit = ParameterBox::uniform(1, 0.0, 1.0).unwrap();
        let pts = halton(&unit, 3);
        assert_eq!(pts, vec![vec![0.5], vec![0.25], vec![0.75]]);
    }

    #[test]
    fn second_base_is_three() {
        let first = Halton::new(2).next().unwrap();
        assert_eq!(first[0], 0.5);
        assert!((first[1] - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn primes() {
        assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
        assert_eq!(first_primes(100)[99], 541);
    }

    #[test]
    fn mapped_mean_converges() {
        let dom = ParameterBox::uniform(3, 0.01, 1.0).unwrap();
        let pts = halton(&dom, 10_000);
        for m in 0..3 {
            let mean = pts.iter().map(|p| p[m]).sum::<f64>() / pts.len() as f64;
            assert!((mean - 0.505).abs() < 1e-2);
            assert!(pts.iter().all(|p| p[m] > 0.01 && p[m] < 1.0));
        }
    }
}
