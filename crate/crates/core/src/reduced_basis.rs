//! Orthonormal reduced basis with incrementally maintained offline blocks,
//! Galerkin reduced solves, the residual indicator and the greedy update
//! sweep.

use alloc::vec;
use alloc::vec::Vec;

use crate::affine::{AffineSystem, ParameterBox};
use crate::dense::{DenseLu, DenseMatrix};
use crate::{dot, norm2, Error, Result};

/// Columns whose norm drops below this fraction of the snapshot norm after
/// orthogonalization are rejected as degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-10;

/// Reduced systems with a larger condition estimate are logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Multiple of `ε_mach (|ũ^T G ũ| + 2|ũ^T g| + |h|)` below which the
/// expanded squared residual is treated as round-off.
pub const CANCELLATION_FACTOR: f64 = 64.0;

/// What the residual norm is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `‖f_ξ‖` of the lifted interior system.
    #[default]
    Interior,
    /// `(‖f_ξ‖² + ‖g‖²)^{1/2}`: the right-hand side of the full nodal
    /// system whose Dirichlet rows carry the boundary data `g`. Those rows
    /// have zero residual here, so only the denominator changes.
    WithBoundaryData,
}

/// Weighting of the residual indicator, `w_k = P(ξ = ξ_k)^α`, and its
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorConfig {
    alpha: f64,
    /// Denominator of the relative residual.
    pub normalization: Normalization,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            normalization: Normalization::Interior,
        }
    }
}

impl IndicatorConfig {
    /// `α` must lie in `[0, 1]`.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(alloc::format!(
                "indicator exponent {alpha} outside [0, 1]"
            )));
        }
        Ok(Self {
            alpha,
            normalization: Normalization::Interior,
        })
    }

    /// Same weighting with another normalization.
    pub fn with_normalization(self, normalization: Normalization) -> Self {
        Self {
            normalization,
            ..self
        }
    }

    fn denominator(&self, system: &AffineSystem, forcing_sq: f64) -> f64 {
        match self.normalization {
            Normalization::Interior => libm::sqrt(forcing_sq.max(0.0)),
            Normalization::WithBoundaryData => {
                let g = system.lifting().values();
                libm::sqrt(forcing_sq.max(0.0) + dot(g, g))
            }
        }
    }

    /// Exponent `α`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `w_k` at ξ for the uniform density on `domain`.
    pub fn weight(&self, domain: &ParameterBox, xi: &[f64]) -> f64 {
        if self.alpha == 0.0 {
            1.0
        } else {
            libm::pow(domain.density(xi), self.alpha)
        }
    }
}

/// One accepted snapshot of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEntry {
    /// Parameter of the snapshot.
    pub xi: Vec<f64>,
    /// ANOVA direction set (zero-based) or sparse-grid multi-index the
    /// point came from, if any.
    pub label: Option<Vec<usize>>,
}

/// Growable square block stored shell by shell: shell `s` holds column `s`
/// rows `0..=s` followed by row `s` columns `0..s`. Appending a basis
/// column appends one shell; truncation drops shells.
#[derive(Debug, Clone, Default, PartialEq)]
struct Shell {
    data: Vec<f64>,
}

impl Shell {
    fn dim(&self) -> usize {
        libm::sqrt(self.data.len() as f64) as usize
    }

    fn push(&mut self, column: &[f64], row: &[f64]) {
        debug_assert_eq!(column.len(), row.len() + 1);
        self.data.extend_from_slice(column);
        self.data.extend_from_slice(row);
    }

    fn truncate(&mut self, n: usize) {
        self.data.truncate(n * n);
    }

    #[cfg(test)]
    fn get(&self, k: usize, l: usize) -> f64 {
        if k <= l {
            self.data[l * l + k]
        } else {
            self.data[k * k + k + 1 + l]
        }
    }

    /// `u^T B u`.
    fn quad(&self, u: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for s in 0..n {
            let base = s * s;
            let col = &self.data[base..base + s + 1];
            let row = &self.data[base + s + 1..base + 2 * s + 1];
            acc += u[s] * (dot(col, &u[..=s]) + dot(row, &u[..s]));
        }
        acc
    }

    /// `out += c B` for a row-major `out`.
    fn add_into(&self, c: f64, out: &mut DenseMatrix) {
        let n = self.dim();
        for s in 0..n {
            let base = s * s;
            for k in 0..=s {
                *out.get_mut(k, s) += c * self.data[base + k];
            }
            for l in 0..s {
                *out.get_mut(s, l) += c * self.data[base + s + 1 + l];
            }
        }
    }
}

/// `A_i Q` restricted to the rows on which `A_i` is nonzero.
#[derive(Debug, Clone, PartialEq)]
struct TermSupport {
    rows: Vec<usize>,
    columns: Vec<Vec<f64>>,
}

/// `(A_i Q)^T (A_j Q)` for a pair of terms with overlapping row support.
#[derive(Debug, Clone, PartialEq)]
struct GramPair {
    i: usize,
    j: usize,
    pos_i: Vec<u32>,
    pos_j: Vec<u32>,
    block: Shell,
}

/// `(A_i Q)^T f_j`, with `f_j` restricted to the rows of `A_i`.
#[derive(Debug, Clone, PartialEq)]
struct CrossPair {
    i: usize,
    j: usize,
    forcing: Vec<f64>,
    values: Vec<f64>,
}

/// Result of evaluating the residual indicator at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicator {
    /// `η`: relative residual times the point weight.
    pub eta: f64,
    /// `‖A_ξ Q ũ - f_ξ‖₂`.
    pub residual: f64,
    /// `‖f_ξ‖₂`.
    pub forcing: f64,
    /// Set when `‖f_ξ‖ = 0` and `η` is the absolute residual.
    pub absolute: bool,
    /// The expansion was lost to cancellation and the residual was formed
    /// from the assembled system instead.
    pub recomputed: bool,
}

impl Indicator {
    fn new(residual: f64, forcing: f64, weight: f64, recomputed: bool) -> Self {
        let absolute = !(forcing > 0.0);
        Indicator {
            eta: if absolute {
                residual * weight
            } else {
                residual / forcing * weight
            },
            residual,
            forcing,
            absolute,
            recomputed,
        }
    }
}

/// Orthonormal reduced basis `Q` together with all offline blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    size: usize,
    q: Vec<Vec<f64>>,
    record: Vec<BasisEntry>,
    terms: Vec<TermSupport>,
    reduced: Vec<Shell>,
    projected: Vec<Vec<f64>>,
    gram: Vec<GramPair>,
    cross: Vec<CrossPair>,
    scalars: Vec<f64>,
}

fn intersect(a: &[usize], b: &[usize]) -> (Vec<u32>, Vec<u32>) {
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            core::cmp::Ordering::Less => x += 1,
            core::cmp::Ordering::Greater => y += 1,
            core::cmp::Ordering::Equal => {
                pa.push(x as u32);
                pb.push(y as u32);
                x += 1;
                y += 1;
            }
        }
    }
    (pa, pb)
}

fn gather_dot(a: &[f64], pa: &[u32], b: &[f64], pb: &[u32]) -> f64 {
    pa.iter()
        .zip(pb)
        .map(|(&x, &y)| a[x as usize] * b[y as usize])
        .sum()
}

impl ReducedBasis {
    /// Empty basis for `system`; precomputes the term supports and the
    /// forcing scalars `f_i^T f_j`.
    pub fn new(system: &AffineSystem) -> Self {
        let terms: Vec<TermSupport> = system
            .operator_terms()
            .iter()
            .map(|t| TermSupport {
                rows: t.matrix.nonempty_rows(),
                columns: Vec::new(),
            })
            .collect();
        let mut gram = Vec::new();
        for i in 0..terms.len() {
            for j in i..terms.len() {
                let (pos_i, pos_j) = intersect(&terms[i].rows, &terms[j].rows);
                if !pos_i.is_empty() {
                    gram.push(GramPair {
                        i,
                        j,
                        pos_i,
                        pos_j,
                        block: Shell::default(),
                    });
                }
            }
        }
        let forcing = system.forcing_terms();
        let mut cross = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            for (j, f) in forcing.iter().enumerate() {
                let restricted: Vec<f64> = t.rows.iter().map(|&r| f.vector[r]).collect();
                if restricted.iter().any(|&v| v != 0.0) {
                    cross.push(CrossPair {
                        i,
                        j,
                        forcing: restricted,
                        values: Vec::new(),
                    });
                }
            }
        }
        let nf = forcing.len();
        let mut scalars = vec![0.0; nf * nf];
        for a in 0..nf {
            for b in a..nf {
                let v = dot(&forcing[a].vector, &forcing[b].vector);
                scalars[a * nf + b] = v;
                scalars[b * nf + a] = v;
            }
        }
        Self {
            size: system.size(),
            q: Vec::new(),
            record: Vec::new(),
            reduced: vec![Shell::default(); terms.len()],
            projected: vec![Vec::new(); nf],
            terms,
            gram,
            cross,
            scalars,
        }
    }

    /// Number of basis columns `N_r`.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    /// True before the first snapshot.
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Interior dimension.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Basis columns.
    pub fn columns(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Snapshot record, one entry per column.
    pub fn record(&self) -> &[BasisEntry] {
        &self.record
    }

    /// Number of term pairs with stored Gram blocks.
    pub fn gram_pairs(&self) -> usize {
        self.gram.len()
    }

    /// Drops every column past the first `n`, restoring the offline blocks
    /// to exactly the state they had with `n` columns.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        self.q.truncate(n);
        self.record.truncate(n);
        for t in &mut self.terms {
            t.columns.truncate(n);
        }
        for s in &mut self.reduced {
            s.truncate(n);
        }
        for p in &mut self.projected {
            p.truncate(n);
        }
        for g in &mut self.gram {
            g.block.truncate(n);
        }
        for c in &mut self.cross {
            c.values.truncate(n);
        }
    }

    /// Two passes of modified Gram-Schmidt against the current columns.
    /// Returns the orthogonal remainder and its norm relative to `v`.
    pub fn orthogonalize(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let original = norm2(v);
        let mut w = v.to_vec();
        for _ in 0..2 {
            for q in &self.q {
                let c = dot(q, &w);
                for (x, y) in w.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let ratio = if original > 0.0 {
            norm2(&w) / original
        } else {
            0.0
        };
        (w, ratio)
    }

    /// Orthogonalizes `snapshot` (interior values) against the basis and
    /// appends it unless it is degenerate. Returns whether a column was
    /// added.
    pub fn augment(&mut self, system: &AffineSystem, snapshot: &[f64], entry: BasisEntry) -> bool {
        let (mut w, ratio) = self.orthogonalize(snapshot);
        if ratio < DEGENERATE_RATIO {
            log::debug!("degenerate snapshot rejected (ratio {ratio:e})");
            return false;
        }
        let nrm = norm2(&w);
        w.iter_mut().for_each(|x| *x /= nrm);
        self.push_column(system, w);
        self.record.push(entry);
        true
    }

    fn push_column(&mut self, system: &AffineSystem, q: Vec<f64>) {
        let s = self.q.len();
        let ops = system.operator_terms();
        for (i, t) in self.terms.iter_mut().enumerate() {
            let a = &ops[i].matrix;
            let col: Vec<f64> = t
                .rows
                .iter()
                .map(|&r| a.row(r).map(|(c, v)| v * q[c]).sum())
                .collect();
            t.columns.push(col);
        }
        self.q.push(q);
        for (i, t) in self.terms.iter().enumerate() {
            let new = &t.columns[s];
            let column: Vec<f64> = (0..=s)
                .map(|k| {
                    t.rows
                        .iter()
                        .zip(new)
                        .map(|(&r, &v)| self.q[k][r] * v)
                        .sum()
                })
                .collect();
            let qs = &self.q[s];
            let row: Vec<f64> = (0..s)
                .map(|l| {
                    t.rows
                        .iter()
                        .zip(&t.columns[l])
                        .map(|(&r, &v)| qs[r] * v)
                        .sum()
                })
                .collect();
            self.reduced[i].push(&column, &row);
        }
        for (j, f) in system.forcing_terms().iter().enumerate() {
            self.projected[j].push(dot(&self.q[s], &f.vector));
        }
        for g in &mut self.gram {
            let vi = &self.terms[g.i].columns;
            let vj = &self.terms[g.j].columns;
            let column: Vec<f64> = (0..=s)
                .map(|k| gather_dot(&vi[k], &g.pos_i, &vj[s], &g.pos_j))
                .collect();
            let row: Vec<f64> = (0..s)
                .map(|l| gather_dot(&vi[s], &g.pos_i, &vj[l], &g.pos_j))
                .collect();
            g.block.push(&column, &row);
        }
        for c in &mut self.cross {
            c.values.push(dot(&self.terms[c.i].columns[s], &c.forcing));
        }
    }

    /// Reduced operator `Σ φ_i(ξ) Q^T A_i Q` and load `Σ ψ_j(ξ) Q^T f_j`.
    pub fn reduced_system(&self, system: &AffineSystem, xi: &[f64]) -> (DenseMatrix, Vec<f64>) {
        let n = self.len();
        let phi = system.operator_coefficients(xi);
        let psi = system.forcing_coefficients(xi);
        let mut a = DenseMatrix::zeros(n);
        for (c, block) in phi.iter().zip(&self.reduced) {
            if *c != 0.0 {
                block.add_into(*c, &mut a);
            }
        }
        let mut b = vec![0.0; n];
        for (c, proj) in psi.iter().zip(&self.projected) {
            if *c != 0.0 {
                for (x, y) in b.iter_mut().zip(proj) {
                    *x += c * y;
                }
            }
        }
        (a, b)
    }

    /// Galerkin reduced solve `Q^T A_ξ Q ũ = Q^T f_ξ`.
    pub fn reduced_solve(&self, system: &AffineSystem, xi: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument(
                "reduced solve with an empty basis".into(),
            ));
        }
        system.domain().check(xi)?;
        let (a, b) = self.reduced_system(system, xi);
        let lu = DenseLu::factor(&a).map_err(|_| Error::SingularReduced {
            condition: f64::INFINITY,
        })?;
        let condition = lu.condition_estimate();
        if !condition.is_finite() || condition > 1e16 {
            return Err(Error::SingularReduced { condition });
        }
        if condition > CONDITION_WARNING {
            log::warn!(
                "reduced system condition estimate {condition:e} with N_r = {}",
                self.len()
            );
        }
        Ok(lu.solve(&b))
    }

    /// Residual indicator from the offline blocks:
    /// `‖A_ξ Q ũ - f_ξ‖² = ũ^T G ũ - 2 ũ^T g + h`, clamped at zero, relative
    /// to the configured right-hand side norm and multiplied by the point
    /// weight.
    ///
    /// The expansion cannot resolve residuals much below `sqrt(ε_mach)`
    /// times the size of its parts. When the expanded square falls under
    /// that round-off level the residual is formed directly instead.
    pub fn residual_indicator(
        &self,
        system: &AffineSystem,
        xi: &[f64],
        u: &[f64],
        config: &IndicatorConfig,
    ) -> Indicator {
        let n = u.len().min(self.len());
        let u = &u[..n];
        let phi = system.operator_coefficients(xi);
        let psi = system.forcing_coefficients(xi);
        let mut quad = 0.0;
        for g in &self.gram {
            let c = phi[g.i] * phi[g.j];
            if c == 0.0 {
                continue;
            }
            let q = if n == self.len() {
                g.block.quad(u)
            } else {
                let mut b = g.block.clone();
                b.truncate(n);
                b.quad(u)
            };
            quad += if g.i == g.j { c * q } else { 2.0 * c * q };
        }
        let mut lin = 0.0;
        for cp in &self.cross {
            let c = phi[cp.i] * psi[cp.j];
            if c != 0.0 {
                lin += c * dot(&cp.values[..n], u);
            }
        }
        let nf = psi.len();
        let mut h = 0.0;
        for a in 0..nf {
            if psi[a] == 0.0 {
                continue;
            }
            for b in 0..nf {
                h += psi[a] * psi[b] * self.scalars[a * nf + b];
            }
        }
        let sq = quad - 2.0 * lin + h;
        let floor = CANCELLATION_FACTOR * f64::EPSILON * (quad.abs() + 2.0 * lin.abs() + h.abs());
        if sq <= floor {
            if let Ok(direct) = self.direct_indicator(system, xi, u, config) {
                return Indicator {
                    recomputed: true,
                    ..direct
                };
            }
        }
        let forcing = config.denominator(system, h);
        let weight = config.weight(system.domain(), xi);
        Indicator::new(libm::sqrt(sq.max(0.0)), forcing, weight, false)
    }

    /// The same indicator computed from the full residual vector.
    pub fn direct_indicator(
        &self,
        system: &AffineSystem,
        xi: &[f64],
        u: &[f64],
        config: &IndicatorConfig,
    ) -> Result<Indicator> {
        let (a, f) = system.assemble_at(xi)?;
        let x = self.interior(u);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&f).map(|(p, q)| p - q).collect();
        let residual = norm2(&r);
        let forcing = config.denominator(system, dot(&f, &f));
        let weight = config.weight(system.domain(), xi);
        Ok(Indicator::new(residual, forcing, weight, false))
    }

    /// `Q ũ` on interior dofs; `ũ` may be shorter than `N_r`.
    pub fn interior(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.size];
        for (c, q) in u.iter().zip(&self.q) {
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi += c * qi;
            }
        }
        x
    }

    /// Full nodal field `Q ũ` plus the Dirichlet lifting.
    pub fn field(&self, system: &AffineSystem, u: &[f64]) -> Vec<f64> {
        system.lifting().lift(&self.interior(u))
    }

    /// Coordinates `Q^T x` of an interior vector.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.q.iter().map(|q| dot(q, x)).collect()
    }

    /// `max |Q^T Q - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (k, a) in self.q.iter().enumerate() {
            for (l, b) in self.q.iter().enumerate().skip(k) {
                let target = if k == l { 1.0 } else { 0.0 };
                err = err.max((dot(a, b) - target).abs());
            }
        }
        err
    }

    /// Rebuilds every offline block from scratch and returns the largest
    /// relative deviation from the incrementally maintained ones.
    pub fn offline_consistency_error(&self, system: &AffineSystem) -> f64 {
        let mut fresh = ReducedBasis::new(system);
        for q in &self.q {
            fresh.push_column(system, q.clone());
        }
        let rel = |a: &[f64], b: &[f64]| {
            let scale = a
                .iter()
                .chain(b)
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            a.iter()
                .zip(b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                / scale
        };
        let mut err: f64 = 0.0;
        for (a, b) in self.reduced.iter().zip(&fresh.reduced) {
            err = err.max(rel(&a.data, &b.data));
        }
        for (a, b) in self.projected.iter().zip(&fresh.projected) {
            err = err.max(rel(a, b));
        }
        for (a, b) in self.gram.iter().zip(&fresh.gram) {
            err = err.max(rel(&a.block.data, &b.block.data));
        }
        for (a, b) in self.cross.iter().zip(&fresh.cross) {
            err = err.max(rel(&a.values, &b.values));
        }
        err
    }

    /// Greedy sweep over `points` in order: keep the reduced solution where
    /// the indicator is below `tolerance`, otherwise solve the full system
    /// and augment the basis.
    pub fn update(
        &mut self,
        system: &AffineSystem,
        points: &[Vec<f64>],
        tolerance: f64,
        config: &IndicatorConfig,
        label: Option<&[usize]>,
    ) -> Result<UpdateReport> {
        let mut report = UpdateReport::default();
        for (k, xi) in points.iter().enumerate() {
            let eta = if self.is_empty() {
                f64::INFINITY
            } else {
                match self.reduced_solve(system, xi) {
                    Ok(u) => {
                        let ind = self.residual_indicator(system, xi, &u, config);
                        if ind.eta < tolerance {
                            report.outcomes.push(PointOutcome {
                                coefficients: u,
                                eta: ind.eta,
                                full: false,
                            });
                            continue;
                        }
                        ind.eta
                    }
                    Err(Error::SingularReduced { condition }) => {
                        log::warn!(
                            "singular reduced system (condition {condition:e}); solving in full"
                        );
                        f64::INFINITY
                    }
                    Err(e) => return Err(e),
                }
            };
            let snap = system.full_solve(xi)?;
            let added = self.augment(
                system,
                &snap.interior,
                BasisEntry {
                    xi: xi.clone(),
                    label: label.map(|l| l.to_vec()),
                },
            );
            if added {
                report.accepted.push(k);
            } else {
                report.degenerate += 1;
            }
            report.outcomes.push(PointOutcome {
                coefficients: self.project(&snap.interior),
                eta,
                full: true,
            });
        }
        Ok(report)
    }
}

/// What the update sweep produced at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    /// Basis coordinates of the solution used at the point.
    pub coefficients: Vec<f64>,
    /// Indicator before any augmentation (infinite for an empty basis).
    pub eta: f64,
    /// Whether a full solve was made.
    pub full: bool,
}

/// Outcome of [`ReducedBasis::update`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// One outcome per point, in sweep order.
    pub outcomes: Vec<PointOutcome>,
    /// Indices of the points whose snapshots were appended.
    pub accepted: Vec<usize>,
    /// Full solves whose snapshot was numerically in the span already.
    pub degenerate: usize,
}

/// Orders index sets by descending indicator, picking the first maximum
/// each round, and concatenates their snapshot groups in that order.
pub fn sort_by_indicator<K: Clone, S: Clone>(
    gamma: &[f64],
    groups: &[Vec<S>],
    index: &[K],
) -> (Vec<S>, Vec<K>) {
    assert_eq!(gamma.len(), index.len());
    assert_eq!(groups.len(), index.len());
    let mut left: Vec<usize> = (0..index.len()).collect();
    let mut snapshots = Vec::new();
    let mut order = Vec::with_capacity(index.len());
    while !left.is_empty() {
        let mut best = 0;
        for (pos, &k) in left.iter().enumerate() {
            if gamma[k] > gamma[left[best]] {
                best = pos;
            }
        }
        let k = left.remove(best);
        snapshots.extend(groups[k].iter().cloned());
        order.push(index[k].clone());
    }
    (snapshots, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{build_benchmark, BenchmarkParams, SdMode};
    use crate::mesh::{Partition, StructuredMesh};

    fn system(n: usize, nx: usize, ny: usize, nu: f64) -> AffineSystem {
        let mesh = StructuredMesh::new(n, Partition::new(nx, ny)).unwrap();
        let params = BenchmarkParams {
            nu,
            wind: BenchmarkParams::wind_from_angle(30.0),
            forcing: 1.0,
            sd_mode: SdMode::PerParameter,
            sd_forcing: false,
        };
        build_benchmark(
            &mesh,
            &params,
            ParameterBox::uniform(nx * ny, 0.01, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = seed;
        (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        s ^= s << 13;
                        s ^= s >> 7;
                        s ^= s << 17;
                        0.01 + 0.99 * ((s >> 11) as f64 / (1u64 << 53) as f64)
                    })
                    .collect()
            })
            .collect()
    }

    fn basis_from(sys: &AffineSystem, pts: &[Vec<f64>]) -> ReducedBasis {
        let mut rb = ReducedBasis::new(sys);
        for xi in pts {
            let s = sys.full_solve(xi).unwrap();
            rb.augment(
                sys,
                &s.interior,
                BasisEntry {
                    xi: xi.clone(),
                    label: None,
                },
            );
        }
        rb
    }

    #[test]
    fn shell_layout_roundtrip() {
        let mut s = Shell::default();
        s.push(&[1.0], &[]);
        s.push(&[2.0, 3.0], &[4.0]);
        s.push(&[5.0, 6.0, 7.0], &[8.0, 9.0]);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 4.0);
        assert_eq!(s.get(2, 1), 9.0);
        assert_eq!(s.get(1, 2), 6.0);
        let u = [1.0, -1.0, 2.0];
        let mut direct = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                direct += u[k] * s.get(k, l) * u[l];
            }
        }
        assert_eq!(s.quad(&u), direct);
    }

    #[test]
    fn anchor_projection() {
        let sys = system(16, 2, 2, 0.5);
        let anchor = sys.domain().anchor();
        let rb = basis_from(&sys, core::slice::from_ref(&anchor));
        let u = rb.reduced_solve(&sys, &anchor).unwrap();
        let s = sys.full_solve(&anchor).unwrap();
        assert!((u[0] - norm2(&s.interior)).abs() <= 1e-9 * norm2(&s.interior));
    }

    #[test]
    fn reproduces_snapshots_in_span() {
        let sys = system(16, 2, 2, 0.05);
        let pts = points(4, 5, 3);
        let rb = basis_from(&sys, &pts);
        assert!(rb.orthonormality_error() <= 1e-10);
        let cfg = IndicatorConfig::default();
        for xi in &pts {
            let u = rb.reduced_solve(&sys, xi).unwrap();
            let s = sys.full_solve(xi).unwrap();
            let f = rb.field(&sys, &u);
            let diff: Vec<f64> = f.iter().zip(&s.field).map(|(a, b)| a - b).collect();
            assert!(norm2(&diff) <= 1e-8, "{}", norm2(&diff));
            let eta = rb.residual_indicator(&sys, xi, &u, &cfg).eta;
            assert!(eta <= 1e-8, "eta {eta}");
        }
    }

    #[test]
    fn offline_matches_direct_residual() {
        let sys = system(16, 2, 2, 0.05);
        let rb = basis_from(&sys, &points(4, 4, 11));
        let cfg = IndicatorConfig::default();
        for xi in points(4, 20, 5) {
            let u = rb.reduced_solve(&sys, &xi).unwrap();
            let a = rb.residual_indicator(&sys, &xi, &u, &cfg);
            let b = rb.direct_indicator(&sys, &xi, &u, &cfg).unwrap();
            assert!(
                (a.eta - b.eta).abs() <= 1e-7 * b.eta,
                "{} vs {}",
                a.eta,
                b.eta
            );
            assert!((a.forcing - b.forcing).abs() <= 1e-12 * b.forcing);
        }
    }

    #[test]
    fn reduced_matrix_matches_monolithic() {
        let sys = system(12, 2, 2, 0.05);
        let rb = basis_from(&sys, &points(4, 3, 17));
        for xi in points(4, 5, 23) {
            let (ar, br) = rb.reduced_system(&sys, &xi);
            let (a, f) = sys.assemble_at(&xi).unwrap();
            let aq: Vec<Vec<f64>> = rb.columns().iter().map(|q| a.mul_vec(q)).collect();
            let scale = ar.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..rb.len() {
                for l in 0..rb.len() {
                    let direct = dot(&rb.columns()[k], &aq[l]);
                    assert!((ar.get(k, l) - direct).abs() <= 1e-11 * scale);
                }
                assert!((br[k] - dot(&rb.columns()[k], &f)).abs() <= 1e-11 * norm2(&f));
            }
        }
    }

    #[test]
    fn truncation_restores_blocks_exactly() {
        let sys = system(12, 2, 2, 0.5);
        let pts = points(4, 4, 29);
        let short = basis_from(&sys, &pts[..2]);
        let mut long = basis_from(&sys, &pts);
        long.truncate(2);
        assert_eq!(long.q, short.q);
        assert_eq!(long.reduced, short.reduced);
        assert_eq!(long.projected, short.projected);
        for (a, b) in long.gram.iter().zip(&short.gram) {
            assert_eq!(a.block, b.block);
        }
        for (a, b) in long.cross.iter().zip(&short.cross) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn incremental_blocks_are_consistent() {
        let sys = system(12, 2, 2, 0.05);
        let rb = basis_from(&sys, &points(4, 4, 31));
        assert!(rb.offline_consistency_error(&sys) <= 1e-12);
    }

    #[test]
    fn degenerate_snapshot_rejected() {
        let sys = system(12, 2, 2, 0.5);
        let xi = sys.domain().anchor();
        let mut rb = basis_from(&sys, core::slice::from_ref(&xi));
        let s = sys.full_solve(&xi).unwrap();
        assert!(!rb.augment(&sys, &s.interior, BasisEntry { xi, label: None }));
        assert_eq!(rb.len(), 1);
    }

    #[test]
    fn update_tolerance_extremes() {
        let sys = system(12, 2, 2, 0.5);
        let pts = points(4, 6, 37);
        let cfg = IndicatorConfig::default();
        let mut rb = basis_from(&sys, &[sys.domain().anchor()]);
        let r = rb.update(&sys, &pts, f64::INFINITY, &cfg, None).unwrap();
        assert!(r.accepted.is_empty());
        assert_eq!(rb.len(), 1);
        let mut rb = ReducedBasis::new(&sys);
        let r = rb.update(&sys, &pts, 0.0, &cfg, Some(&[0])).unwrap();
        assert_eq!(r.accepted.len() + r.degenerate, pts.len());
        assert!(r.outcomes.iter().all(|o| o.full));
        assert_eq!(rb.record()[0].label.as_deref(), Some(&[0usize][..]));
    }

    #[test]
    fn adding_columns_does_not_increase_indicator() {
        let sys = system(12, 2, 2, 0.05);
        let pts = points(4, 5, 41);
        let probes = points(4, 10, 43);
        let cfg = IndicatorConfig::default();
        let mut rb = ReducedBasis::new(&sys);
        let mut prev: Option<Vec<f64>> = None;
        for xi in &pts {
            let s = sys.full_solve(xi).unwrap();
            rb.augment(
                &sys,
                &s.interior,
                BasisEntry {
                    xi: xi.clone(),
                    label: None,
                },
            );
            assert!(rb.orthonormality_error() <= 1e-10);
            let etas: Vec<f64> = probes
                .iter()
                .map(|p| {
                    let u = rb.reduced_solve(&sys, p).unwrap();
                    rb.direct_indicator(&sys, p, &u, &cfg).unwrap().eta
                })
                .collect();
            if let Some(prev) = &prev {
                for (a, b) in etas.iter().zip(prev) {
                    // Galerkin on a nonsymmetric operator does not minimize the
                    // residual, so small increases do occur.
                    assert!(*a <= b * 1.01 + 1e-8, "{a} vs {b}");
                }
            }
            prev = Some(etas);
        }
    }

    #[test]
    fn indicator_sort() {
        let (s, j) = sort_by_indicator(
            &[0.1, 0.9, 0.5],
            &[vec!['a'], vec!['b'], vec!['c']],
            &["a", "b", "c"],
        );
        assert_eq!(j, ["b", "c", "a"]);
        assert_eq!(s, ['b', 'c', 'a']);
        let (_, j) = sort_by_indicator(&[0.5, 0.5, 0.7], &[vec![0], vec![1], vec![2]], &[0, 1, 2]);
        assert_eq!(j, [2, 0, 1]);
        let (_, j) = sort_by_indicator(&[3.0], &[Vec::<u8>::new()], &[7]);
        assert_eq!(j, [7]);
    }

    #[test]
    fn alpha_zero_gives_unit_weight() {
        let dom = ParameterBox::uniform(3, 0.01, 1.0).unwrap();
        assert_eq!(IndicatorConfig::default().weight(&dom, &dom.anchor()), 1.0);
        assert!(IndicatorConfig::new(1.5).is_err());
    }
}
