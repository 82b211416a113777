//! Sample moments of nodal fields and relative moment errors.

use alloc::vec;
use alloc::vec::Vec;

use crate::{norm2, Error, Result};

/// Mean and standard-deviation fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// Pointwise mean.
    pub mean: Vec<f64>,
    /// Pointwise standard deviation.
    pub sd: Vec<f64>,
}

/// Running mean and centered second moment (Welford), mergeable in a
/// fixed order so parallel reductions stay deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    /// Empty accumulator for fields of length `n`.
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    /// Number of samples.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds one sample.
    pub fn push(&mut self, field: &[f64]) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(field) {
            let d = x - *m;
            *m += d * inv;
            *s += d * (x - *m);
        }
    }

    /// Folds `other` in (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Mean and population standard deviation.
    pub fn finish(&self) -> Moments {
        let n = self.count.max(1) as f64;
        Moments {
            mean: self.mean.clone(),
            sd: self
                .m2
                .iter()
                .map(|s| libm::sqrt((s / n).max(0.0)))
                .collect(),
        }
    }
}

/// Relative errors of a candidate's moments against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentErrors {
    /// `‖E_ref - E‖ / ‖E_ref‖`.
    pub e_mu: f64,
    /// `‖σ_ref - σ‖ / ‖σ_ref‖`.
    pub e_sigma: f64,
    /// The reference mean was zero and `e_mu` is absolute.
    pub mu_absolute: bool,
    /// The reference deviation was zero and `e_sigma` is absolute.
    pub sigma_absolute: bool,
}

fn relative(reference: &[f64], candidate: &[f64]) -> (f64, bool) {
    let diff: Vec<f64> = reference
        .iter()
        .zip(candidate)
        .map(|(a, b)| a - b)
        .collect();
    let d = norm2(&diff);
    let r = norm2(reference);
    if r > 0.0 {
        (d / r, false)
    } else {
        (d, true)
    }
}

/// Nodal Euclidean relative errors in mean and standard deviation.
pub fn moment_errors(reference: &Moments, candidate: &Moments) -> Result<MomentErrors> {
    if reference.mean.len() != candidate.mean.len() || reference.sd.len() != candidate.sd.len() {
        return Err(Error::InvalidArgument(
            "moment fields on different grids".into(),
        ));
    }
    let (e_mu, mu_absolute) = relative(&reference.mean, &candidate.mean);
    let (e_sigma, sigma_absolute) = relative(&reference.sd, &candidate.sd);
    Ok(MomentErrors {
        e_mu,
        e_sigma,
        mu_absolute,
        sigma_absolute,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_zero_sd() {
        let mut acc = MomentAccumulator::new(2);
        acc.push(&[1.0, -3.0]);
        let m = acc.finish();
        assert_eq!(m.mean, vec![1.0, -3.0]);
        assert_eq!(m.sd, vec![0.0, 0.0]);
    }

    #[test]
    fn population_formula() {
        let mut acc = MomentAccumulator::new(1);
        for x in [1.0, 2.0, 3.0, 4.0] {
            acc.push(&[x]);
        }
        let m = acc.finish();
        assert!((m.mean[0] - 2.5).abs() < 1e-15);
        assert!((m.sd[0] - libm::sqrt(1.25)).abs() < 1e-15);
    }

    #[test]
    fn merge_matches_sequential() {
        let data: Vec<f64> = (0..37).map(|k| libm::sin(k as f64)).collect();
        let mut seq = MomentAccumulator::new(1);
        data.iter().for_each(|&x| seq.push(&[x]));
        let mut a = MomentAccumulator::new(1);
        let mut b = MomentAccumulator::new(1);
        data[..10].iter().for_each(|&x| a.push(&[x]));
        data[10..].iter().for_each(|&x| b.push(&[x]));
        a.merge(&b);
        let (s, m) = (seq.finish(), a.finish());
        assert!((s.mean[0] - m.mean[0]).abs() < 1e-15);
        assert!((s.sd[0] - m.sd[0]).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let r = Moments {
            mean: vec![1.0, 2.0],
            sd: vec![0.5, 0.5],
        };
        let e = moment_errors(&r, &r).unwrap();
        assert_eq!((e.e_mu, e.e_sigma), (0.0, 0.0));
        let c = Moments {
            mean: vec![1.01, 2.02],
            sd: vec![0.5, 0.5],
        };
        let e = moment_errors(&r, &c).unwrap();
        assert!((e.e_mu - 0.01).abs() < 1e-14);
        assert_eq!(e.e_sigma, 0.0);
        let z = Moments {
            mean: vec![0.0, 0.0],
            sd: vec![0.0, 0.0],
        };
        let e = moment_errors(&z, &c).unwrap();
        assert!(e.mu_absolute && e.sigma_absolute);
    }
}
