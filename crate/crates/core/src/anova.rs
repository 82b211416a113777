//! Anchored-ANOVA bookkeeping: combination coefficients, recursive term
//! means, truncation and saturation indicators, and moment synthesis.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::{norm2, Error, Result};

/// Direction set `K`, zero-based and strictly increasing.
pub type DirectionSet = Vec<usize>;

/// `ϰ_{M,j,ℓ} = Σ_{r=j}^{ℓ} (-1)^{r-j} (M-j)! / ((r-j)! (M-r)!)`.
pub fn kappa(m: usize, j: usize, level: usize) -> Result<i64> {
    if j > level || level > m {
        return Err(Error::InvalidArgument(alloc::format!(
            "kappa needs 0 <= j <= l <= M, got M={m} j={j} l={level}"
        )));
    }
    let mut total: i128 = 0;
    let mut binom: i128 = 1; // binom(M-j, r-j)
    for r in j..=level {
        if r > j {
            binom = binom * (m - r + 1) as i128 / (r - j) as i128;
        }
        if (r - j).is_multiple_of(2) {
            total += binom;
        } else {
            total -= binom;
        }
    }
    Ok(total as i64)
}

/// How a term's mean is obtained from the quadrature over its point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TermRule {
    /// `E[u_K] = R_K - Σ_{S ⊊ K} E[u_S]` with each `E[u_S]` at its own
    /// order; moments combine the raw sums with the coefficients `c_K`.
    Recursive,
    /// `E[u_K] = Σ_{S ⊆ K} (-1)^{|K∖S|} Q_S[u]` with every `Q_S` at the
    /// order of `K`, from the difference weights of its point set. The
    /// same weights applied to `u²` give the term's share of `E[u²]`, and
    /// moments are sums over the kept terms. Agrees with `Recursive` when
    /// every term has the same order.
    #[default]
    Differenced,
}

/// One anchored-ANOVA term computed by quadrature over its point set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTerm {
    /// Direction set `K`.
    pub directions: DirectionSet,
    /// Points per direction `p_K` (zero for the anchor term).
    pub order: usize,
    /// `Σ_k w_k u(ξ_k)` over `Ξ_K`.
    pub raw_mean: Vec<f64>,
    /// `Σ_k w_k u(ξ_k)^2` over `Ξ_K`.
    pub raw_second: Vec<f64>,
    /// `E[u_K]`.
    pub mean: Vec<f64>,
    /// Share of `E[u²]` under [`TermRule::Differenced`]; empty otherwise.
    pub second: Vec<f64>,
    /// `‖E[u_K]‖`.
    pub mean_norm: f64,
    /// Truncation indicator `γ_K` (infinite for the anchor term).
    pub gamma: f64,
    /// Saturation `ρ_K` against the previous order, if there was one.
    pub rho: Option<f64>,
    /// Size of the point set.
    pub points: usize,
}

/// Kept terms, dropped sets and active index sets of an anchored-ANOVA
/// expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaState {
    dim: usize,
    rule: TermRule,
    terms: BTreeMap<DirectionSet, AnovaTerm>,
    dropped: BTreeSet<DirectionSet>,
    /// Active index sets `J_l`, indexed by `l`.
    pub active: Vec<Vec<DirectionSet>>,
}

impl AnovaState {
    /// State holding only the anchor term `u_0`, with recursive terms.
    pub fn new(dim: usize, anchor_field: Vec<f64>) -> Self {
        let raw_second: Vec<f64> = anchor_field.iter().map(|v| v * v).collect();
        let mean_norm = norm2(&anchor_field);
        let mut terms = BTreeMap::new();
        terms.insert(
            Vec::new(),
            AnovaTerm {
                directions: Vec::new(),
                order: 0,
                raw_mean: anchor_field.clone(),
                second: raw_second.clone(),
                raw_second,
                mean: anchor_field,
                mean_norm,
                gamma: f64::INFINITY,
                rho: None,
                points: 1,
            },
        );
        Self {
            dim,
            rule: TermRule::Recursive,
            terms,
            dropped: BTreeSet::new(),
            active: vec![Vec::new()],
        }
    }

    /// Switches the term rule; call before adding terms.
    pub fn with_rule(mut self, rule: TermRule) -> Self {
        self.rule = rule;
        self
    }

    /// Term rule in use.
    pub fn rule(&self) -> TermRule {
        self.rule
    }

    /// Parameter dimension `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest order `|K|` among the kept terms.
    pub fn level(&self) -> usize {
        self.terms.keys().map(|k| k.len()).max().unwrap_or(0)
    }

    /// Kept term for `K`.
    pub fn term(&self, k: &[usize]) -> Option<&AnovaTerm> {
        self.terms.get(k)
    }

    /// All kept terms, ordered by direction set.
    pub fn terms(&self) -> impl Iterator<Item = &AnovaTerm> {
        self.terms.values()
    }

    /// Sets that were computed and then excluded from the expansion.
    pub fn dropped(&self) -> &BTreeSet<DirectionSet> {
        &self.dropped
    }

    /// Number of nodal values per field.
    pub fn field_len(&self) -> usize {
        self.terms[&Vec::new()].mean.len()
    }

    /// `E[u_K] = R_K - Σ_{S ⊊ K} E[u_S]`, where dropped subsets contribute
    /// zero and a subset that was never computed is an error.
    pub fn term_mean(&self, k: &[usize], raw_mean: &[f64]) -> Result<Vec<f64>> {
        let mut mean = raw_mean.to_vec();
        for s in proper_subsets(k) {
            if let Some(t) = self.terms.get(&s) {
                for (m, v) in mean.iter_mut().zip(&t.mean) {
                    *m -= v;
                }
            } else if !self.dropped.contains(&s) {
                return Err(Error::MissingLowerTerm {
                    term: k.to_vec(),
                    missing: s,
                });
            }
        }
        Ok(mean)
    }

    /// `γ_K = ‖E[u_K]‖ / Σ_{|S|<|K|} ‖E[u_S]‖` over kept terms.
    pub fn indicator(&self, order: usize, mean_norm: f64) -> f64 {
        let denom: f64 = self
            .terms
            .values()
            .filter(|t| t.directions.len() < order)
            .map(|t| t.mean_norm)
            .sum();
        if denom > 0.0 {
            mean_norm / denom
        } else if mean_norm == 0.0 {
            0.0
        } else {
            log::warn!("zero indicator denominator at order {order}");
            f64::INFINITY
        }
    }

    /// `ρ_K = ‖E[u_K^new] - E[u_K^old]‖ / ‖Σ_{|S|≤|K|} E[u_S]‖`, with the
    /// new term standing in for `K` in the denominator sum.
    pub fn saturation(&self, new: &AnovaTerm, old: &AnovaTerm) -> f64 {
        let diff: Vec<f64> = new.mean.iter().zip(&old.mean).map(|(a, b)| a - b).collect();
        let mut sum = new.mean.clone();
        for t in self.terms.values() {
            if t.directions.len() <= new.directions.len() && t.directions != new.directions {
                for (s, v) in sum.iter_mut().zip(&t.mean) {
                    *s += v;
                }
            }
        }
        let denom = norm2(&sum);
        if denom > 0.0 {
            norm2(&diff) / denom
        } else {
            log::warn!("zero saturation denominator for {:?}", new.directions);
            f64::INFINITY
        }
    }

    /// Builds the term for `K` from its quadrature sums, with `γ_K`
    /// evaluated against the current kept terms.
    pub fn build_term(
        &self,
        k: &[usize],
        order: usize,
        raw_mean: Vec<f64>,
        raw_second: Vec<f64>,
        points: usize,
    ) -> Result<AnovaTerm> {
        let mean = self.term_mean(k, &raw_mean)?;
        let mean_norm = norm2(&mean);
        Ok(AnovaTerm {
            directions: k.to_vec(),
            order,
            gamma: self.indicator(k.len(), mean_norm),
            raw_mean,
            raw_second,
            mean,
            second: Vec::new(),
            mean_norm,
            rho: None,
            points,
        })
    }

    /// Builds the term for `K` under [`TermRule::Differenced`] from the
    /// plain sums and the difference-weighted sums `Σ W u`, `Σ W u²`.
    pub fn build_differenced_term(
        &self,
        k: &[usize],
        order: usize,
        raw: (Vec<f64>, Vec<f64>),
        differenced: (Vec<f64>, Vec<f64>),
        points: usize,
    ) -> AnovaTerm {
        let (mean, second) = differenced;
        let mean_norm = norm2(&mean);
        AnovaTerm {
            directions: k.to_vec(),
            order,
            gamma: self.indicator(k.len(), mean_norm),
            raw_mean: raw.0,
            raw_second: raw.1,
            mean,
            second,
            mean_norm,
            rho: None,
            points,
        }
    }

    /// Inserts or replaces a kept term.
    pub fn insert(&mut self, term: AnovaTerm) {
        self.dropped.remove(&term.directions);
        self.terms.insert(term.directions.clone(), term);
    }

    /// Puts `K` back to `previous`: reinserted when present, otherwise
    /// marked as dropped.
    pub fn restore(&mut self, k: &[usize], previous: Option<AnovaTerm>) {
        match previous {
            Some(t) => self.insert(t),
            None => {
                self.terms.remove(k);
                self.dropped.insert(k.to_vec());
            }
        }
    }

    /// Removes `K` from the expansion.
    pub fn drop_term(&mut self, k: &[usize]) {
        self.restore(k, None);
    }

    /// Coefficients `c_K` with `Σ_{K kept} E[u_K] = Σ_K c_K R_K`. For the
    /// complete set of terms up to level `ℓ` these are `ϰ_{M,|K|,ℓ}`.
    pub fn combination_coefficients(&self) -> BTreeMap<DirectionSet, f64> {
        let mut expansion: BTreeMap<DirectionSet, BTreeMap<DirectionSet, f64>> = BTreeMap::new();
        let mut keys: Vec<&DirectionSet> = self.terms.keys().collect();
        keys.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        for k in keys {
            let mut coefs: BTreeMap<DirectionSet, f64> = BTreeMap::new();
            coefs.insert(k.clone(), 1.0);
            for s in proper_subsets(k) {
                if let Some(sub) = expansion.get(&s) {
                    for (t, c) in sub {
                        *coefs.entry(t.clone()).or_insert(0.0) -= c;
                    }
                }
            }
            expansion.insert(k.clone(), coefs);
        }
        let mut total: BTreeMap<DirectionSet, f64> = BTreeMap::new();
        for coefs in expansion.values() {
            for (t, c) in coefs {
                *total.entry(t.clone()).or_insert(0.0) += c;
            }
        }
        total.retain(|_, c| *c != 0.0);
        total
    }

    /// Mean and standard deviation of the truncated expansion; the second
    /// moment uses the same combination of the squared samples. Returns the
    /// most negative variance encountered before clamping as the third
    /// value.
    pub fn combine_moments(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.field_len();
        let mut mean = vec![0.0; n];
        let mut second = vec![0.0; n];
        match self.rule {
            TermRule::Recursive => {
                for (k, c) in self.combination_coefficients() {
                    let t = &self.terms[&k];
                    for i in 0..n {
                        mean[i] += c * t.raw_mean[i];
                        second[i] += c * t.raw_second[i];
                    }
                }
            }
            TermRule::Differenced => {
                for t in self.terms.values() {
                    for i in 0..n {
                        mean[i] += t.mean[i];
                        second[i] += t.second[i];
                    }
                }
            }
        }
        let mut worst = 0.0f64;
        let sd = mean
            .iter()
            .zip(&second)
            .map(|(m, s)| {
                let var = s - m * m;
                worst = worst.min(var);
                libm::sqrt(var.max(0.0))
            })
            .collect();
        if worst < 0.0 {
            log::debug!("negative variance {worst:e} clamped to zero");
        }
        (mean, sd, worst)
    }

    /// Per-term diagnostics in direction-set order (anchor term excluded).
    pub fn diagnostics(&self) -> Vec<TermDiagnostics> {
        let mut rows: Vec<TermDiagnostics> = self
            .terms
            .values()
            .filter(|t| !t.directions.is_empty())
            .map(|t| TermDiagnostics {
                directions: t.directions.clone(),
                order: t.order,
                mean_norm: t.mean_norm,
                gamma: t.gamma,
                rho: t.rho,
                kept: true,
            })
            .collect();
        rows.extend(self.dropped.iter().map(|k| TermDiagnostics {
            directions: k.clone(),
            order: 0,
            mean_norm: 0.0,
            gamma: 0.0,
            rho: None,
            kept: false,
        }));
        rows.sort_by(|a, b| {
            a.directions
                .len()
                .cmp(&b.directions.len())
                .then(a.directions.cmp(&b.directions))
        });
        rows
    }
}

/// One row of per-term output.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDiagnostics {
    /// Direction set, zero-based.
    pub directions: DirectionSet,
    /// Final order `p_K`.
    pub order: usize,
    /// `‖E[u_K]‖`.
    pub mean_norm: f64,
    /// `γ_K`.
    pub gamma: f64,
    /// Last saturation value, if any.
    pub rho: Option<f64>,
    /// False for sets excluded without a retained term.
    pub kept: bool,
}

/// All proper subsets of `k` (including the empty set), each increasing.
pub fn proper_subsets(k: &[usize]) -> Vec<DirectionSet> {
    assert!(k.len() < 32, "direction set too large");
    let full = (1u32 << k.len()) - 1;
    (0..full)
        .map(|mask| {
            k.iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &d)| d)
                .collect()
        })
        .collect()
}

/// All `l`-subsets of `{0, .., m-1}` in lexicographic order.
pub fn subsets_of_size(m: usize, l: usize) -> Vec<DirectionSet> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(l);
    fn rec(start: usize, m: usize, l: usize, cur: &mut Vec<usize>, out: &mut Vec<DirectionSet>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        for d in start..m {
            if m - d < l - cur.len() {
                break;
            }
            cur.push(d);
            rec(d + 1, m, l, cur, out);
            cur.pop();
        }
    }
    rec(0, m, l, &mut cur, &mut out);
    out
}
