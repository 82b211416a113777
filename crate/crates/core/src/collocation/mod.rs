//! Collocation point generators: 1-D rules, Smolyak sparse grids, anchored
//! PCM-ANOVA point sets, point-count formulas and Halton sequences.

mod anova_points;
mod halton;
mod rules;
mod smolyak;

pub use anova_points::{anova_points, count_points, AnovaPointSet, CountConvention};
pub use halton::{first_primes, halton, radical_inverse, Halton};
pub use rules::{clenshaw_curtis, gauss_legendre, Family, Rule1D};
pub use smolyak::{smolyak_terms, sparse_grid, Growth, PointLabel, PointSet};
