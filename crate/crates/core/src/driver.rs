//! Run modes: sparse-grid sweeps, fixed-order PCM-ANOVA and the dimension
//! and order adaptive algorithm.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::affine::{AffineSystem, Snapshot};
use crate::anova::{subsets_of_size, AnovaState, AnovaTerm, DirectionSet, TermRule};
use crate::collocation::{anova_points, sparse_grid, Family, Growth};
use crate::reduced_basis::{sort_by_indicator, BasisEntry, IndicatorConfig, ReducedBasis};
use crate::{Error, Result};

/// Source of wall-clock seconds. The core has no clock of its own.
pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn now(&self) -> f64;
}

/// A clock that never advances; every phase reports zero seconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Settings of the adaptive run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    /// Reduced-basis acceptance tolerance `ε_RB`.
    pub eps_rb: f64,
    /// ANOVA truncation tolerance `ε_A`.
    pub eps_a: f64,
    /// Order saturation tolerance `ε_p`.
    pub eps_p: f64,
    /// Initial order `p₀` (odd).
    pub p0: usize,
    /// Initial level `ℓ₀`.
    pub l0: usize,
    /// Final level `ℓ`.
    pub l_max: usize,
    /// Order increment.
    pub increment: usize,
    /// Hard upper bound on any `p_K`.
    pub p_max: usize,
    /// Cap `p_K <= max_{|S| = |K|-1} p_S` for terms above level one.
    pub strong_cap: bool,
    /// When a visit adds no snapshot but passes the γ and ρ tests, keep the
    /// freshly computed term instead of resetting it. The term still
    /// leaves the active set.
    pub keep_without_snapshot: bool,
    /// How term means are formed.
    pub rule: TermRule,
    /// Indicator weighting.
    pub indicator: IndicatorConfig,
}

impl AdaptiveConfig {
    /// Defaults with `ε_A = ε_p = ε_RB / 2`, `p₀ = 3`, `ℓ₀ = 2`, `ℓ = 2`.
    pub fn new(eps_rb: f64) -> Self {
        Self {
            eps_rb,
            eps_a: eps_rb / 2.0,
            eps_p: eps_rb / 2.0,
            p0: 3,
            l0: 2,
            l_max: 2,
            increment: 2,
            p_max: 31,
            strong_cap: false,
            keep_without_snapshot: true,
            rule: TermRule::Differenced,
            indicator: IndicatorConfig::default(),
        }
    }

    /// Checks the invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidArgument(s.into()));
        if !(self.eps_rb > 0.0 && self.eps_a > 0.0 && self.eps_p > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.p0 == 0 || self.p0.is_multiple_of(2) {
            return bad("initial order must be odd and positive");
        }
        if self.increment == 0 {
            return bad("order increment must be positive");
        }
        if self.rule == TermRule::Differenced && self.increment % 2 == 1 {
            return bad("differenced terms need an even order increment");
        }
        if self.l0 == 0 || self.l0 > self.l_max {
            return bad("need 1 <= initial level <= final level");
        }
        if self.p_max < self.p0 {
            return bad("order cap below the initial order");
        }
        Ok(())
    }
}

/// Settings of the fixed-order run.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAnovaConfig {
    /// Highest ANOVA level `ℓ`.
    pub level: usize,
    /// Points per direction.
    pub p: usize,
    /// Reduced-basis acceptance tolerance `ε_RB`.
    pub eps_rb: f64,
    /// Truncation tolerance `ε_A`; zero keeps every set.
    pub eps_a: f64,
    /// How term means are formed.
    pub rule: TermRule,
    /// Indicator weighting.
    pub indicator: IndicatorConfig,
}

impl FixedAnovaConfig {
    /// Differenced terms, `ε_A = ε_RB / 2`, default indicator.
    pub fn new(level: usize, p: usize, eps_rb: f64) -> Self {
        Self {
            level,
            p,
            eps_rb,
            eps_a: eps_rb / 2.0,
            rule: TermRule::Differenced,
            indicator: IndicatorConfig::default(),
        }
    }

    /// Checks the invariants.
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 || self.p == 0 || !(self.eps_rb > 0.0) || !(self.eps_a >= 0.0) {
            return Err(Error::InvalidArgument(
                "fixed ANOVA needs level >= 1, p >= 1, eps_rb > 0, eps_a >= 0".into(),
            ));
        }
        if self.rule == TermRule::Differenced && self.p.is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "differenced terms need an odd order".into(),
            ));
        }
        Ok(())
    }
}

/// Direction statistics for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DirectionReport {
    /// `‖E[u_j]‖` of the first-order term (zero if absent).
    pub mean_norm: f64,
    /// Largest order of any kept term containing `j`.
    pub p_max: usize,
    /// Basis columns whose snapshot came from the first-order term `{j}`.
    pub snapshots: usize,
}

/// Accepted and rejected direction sets of one level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelReport {
    /// Interaction level.
    pub level: usize,
    /// Sets kept in the expansion.
    pub accepted: Vec<DirectionSet>,
    /// Sets dropped from it.
    pub rejected: Vec<DirectionSet>,
}

/// One row of progress, written after each level or pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRow {
    /// Level at which the row was taken.
    pub level: usize,
    /// Basis size.
    pub n_r: usize,
    /// Points visited so far.
    pub visited: usize,
    /// Mean field.
    pub mean: Vec<f64>,
    /// Standard deviation field.
    pub sd: Vec<f64>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Phases {
    /// Anchor solve and basis seed.
    pub setup: f64,
    /// Update sweeps, including full solves.
    pub sweeps: f64,
    /// Field reconstruction and moment sums.
    pub moments: f64,
}

/// Summary of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    /// Final basis size `N_r`.
    pub n_r: usize,
    /// Every point evaluated by a sweep, repeats included, plus the anchor.
    pub visited: usize,
    /// Full solves, including degenerate ones.
    pub full_solves: usize,
    /// Per coordinate.
    pub directions: Vec<DirectionReport>,
    /// Per level.
    pub levels: Vec<LevelReport>,
    /// Final mean field.
    pub mean: Vec<f64>,
    /// Final standard deviation field.
    pub sd: Vec<f64>,
    /// Snapshot parameters in ledger order (sorted per pass where the mode
    /// sorts).
    pub ledger: Vec<BasisEntry>,
    /// Intermediate moments.
    pub progress: Vec<ProgressRow>,
    /// Timings.
    pub phases: Phases,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct Run {
    /// Final basis.
    pub basis: ReducedBasis,
    /// ANOVA state (absent for sparse-grid runs).
    pub anova: Option<AnovaState>,
    /// Summary.
    pub report: RunReport,
}

/// A run aborted by a numerical failure, with the report as far as it got.
#[derive(Debug, Clone)]
pub struct RunFailure {
    /// What failed.
    pub error: Error,
    /// Checkpointed report.
    pub report: Box<RunReport>,
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "run aborted after {} snapshots: {}",
            self.report.n_r, self.error
        )
    }
}

/// Result of a run mode.
pub type RunResult = core::result::Result<Run, RunFailure>;

struct Ctx<'a> {
    system: &'a AffineSystem,
    clock: &'a dyn Clock,
    basis: ReducedBasis,
    report: RunReport,
}

impl<'a> Ctx<'a> {
    fn seed(system: &'a AffineSystem, clock: &'a dyn Clock) -> Result<(Self, Snapshot)> {
        let t0 = clock.now();
        let anchor = system.domain().anchor();
        let snap = system.full_solve(&anchor)?;
        let mut basis = ReducedBasis::new(system);
        basis.augment(
            system,
            &snap.interior,
            BasisEntry {
                xi: anchor.clone(),
                label: Some(Vec::new()),
            },
        );
        let mut report = RunReport {
            visited: 1,
            full_solves: 1,
            ..RunReport::default()
        };
        report.phases.setup = clock.now() - t0;
        Ok((
            Self {
                system,
                clock,
                basis,
                report,
            },
            snap,
        ))
    }

    /// Sweeps `points` and returns the weighted first and second raw
    /// moments of the fields (and the difference-weighted ones when `diff`
    /// is given) together with the new ledger entries.
    fn sweep(
        &mut self,
        points: &[Vec<f64>],
        weights: &[f64],
        diff: Option<&[f64]>,
        eps: f64,
        cfg: &IndicatorConfig,
        label: Option<&[usize]>,
    ) -> Result<Sums> {
        let before = self.basis.len();
        let t0 = self.clock.now();
        let up = self.basis.update(self.system, points, eps, cfg, label)?;
        let t1 = self.clock.now();
        self.report.visited += points.len();
        self.report.full_solves += up.outcomes.iter().filter(|o| o.full).count();
        let n = self.system.lifting().values().len();
        let mut mean = vec![0.0; n];
        let mut second = vec![0.0; n];
        let mut differenced = diff.map(|_| (vec![0.0; n], vec![0.0; n]));
        for (j, (o, &w)) in up.outcomes.iter().zip(weights).enumerate() {
            let f = self.basis.field(self.system, &o.coefficients);
            for i in 0..n {
                mean[i] += w * f[i];
                second[i] += w * f[i] * f[i];
            }
            if let (Some((dm, ds)), Some(d)) = (differenced.as_mut(), diff) {
                for i in 0..n {
                    dm[i] += d[j] * f[i];
                    ds[i] += d[j] * f[i] * f[i];
                }
            }
        }
        self.report.phases.sweeps += t1 - t0;
        self.report.phases.moments += self.clock.now() - t1;
        Ok(Sums {
            raw: (mean, second),
            differenced,
            added: self.basis.record()[before..].to_vec(),
        })
    }

    /// Sweeps the order-`p` point set of `K` and builds its term.
    fn term(
        &mut self,
        state: &AnovaState,
        k: &[usize],
        p: usize,
        eps: f64,
        cfg: &IndicatorConfig,
    ) -> Result<(AnovaTerm, Vec<BasisEntry>)> {
        let set = anova_points(self.system.domain(), k, &vec![p; k.len()]);
        let diff = match state.rule() {
            TermRule::Recursive => None,
            TermRule::Differenced => Some(set.difference_weights().ok_or_else(|| {
                Error::InvalidArgument("differenced terms need odd orders".into())
            })?),
        };
        let sums = self.sweep(
            &set.points,
            &set.weights,
            diff.as_deref(),
            eps,
            cfg,
            Some(k),
        )?;
        let term = match sums.differenced {
            Some(d) => state.build_differenced_term(k, p, sums.raw, d, set.len()),
            None => state.build_term(k, p, sums.raw.0, sums.raw.1, set.len())?,
        };
        Ok((term, sums.added))
    }

    fn fail(mut self, error: Error) -> RunFailure {
        self.report.n_r = self.basis.len();
        RunFailure {
            error,
            report: Box::new(self.report),
        }
    }
}

fn finish_anova(mut ctx: Ctx<'_>, state: AnovaState) -> Run {
    let (mean, sd, _) = state.combine_moments();
    ctx.report.mean = mean;
    ctx.report.sd = sd;
    ctx.report.n_r = ctx.basis.len();
    ctx.report.directions = direction_report(&state, &ctx.basis);
    Run {
        basis: ctx.basis,
        anova: Some(state),
        report: ctx.report,
    }
}

fn direction_report(state: &AnovaState, basis: &ReducedBasis) -> Vec<DirectionReport> {
    let mut out = vec![DirectionReport::default(); state.dim()];
    for t in state.terms() {
        for &j in &t.directions {
            out[j].p_max = out[j].p_max.max(t.order);
        }
        if let [j] = t.directions[..] {
            out[j].mean_norm = t.mean_norm;
        }
    }
    for e in basis.record() {
        if let Some([j]) = e.label.as_deref() {
            out[*j].snapshots += 1;
        }
    }
    out
}

fn progress(state: &AnovaState, level: usize, basis: &ReducedBasis, visited: usize) -> ProgressRow {
    let (mean, sd, _) = state.combine_moments();
    ProgressRow {
        level,
        n_r: basis.len(),
        visited,
        mean,
        sd,
    }
}

/// `(l+1)`-sets formed as unions of two effective level-`l` sets, kept
/// only when every `l`-subset has been visited so its mean is defined.
fn next_level(effective: &[DirectionSet], visited: &BTreeSet<DirectionSet>) -> Vec<DirectionSet> {
    let mut out = BTreeSet::new();
    for (a, x) in effective.iter().enumerate() {
        for y in &effective[a + 1..] {
            let mut u: BTreeSet<usize> = x.iter().copied().collect();
            u.extend(y.iter().copied());
            if u.len() != x.len() + 1 {
                continue;
            }
            let u: DirectionSet = u.into_iter().collect();
            let closed = (0..u.len()).all(|skip| {
                let s: DirectionSet = u
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                visited.contains(&s)
            });
            if closed {
                out.insert(u);
            }
        }
    }
    out.into_iter().collect()
}

fn effective(state: &AnovaState, level: usize, eps_a: f64) -> Vec<DirectionSet> {
    state
        .terms()
        .filter(|t| t.directions.len() == level && t.gamma > eps_a)
        .map(|t| t.directions.clone())
        .collect()
}

/// Fixed-order PCM-ANOVA: every level up to `level` with `p` points per
/// direction. Terms at level `l + 1` are built from the sets of level `l`
/// with `γ_K > ε_A`; `ε_A = 0` keeps all of them. Each level's snapshot
/// ledger is sorted by `γ`.
pub fn run_fixed_anova(
    system: &AffineSystem,
    config: &FixedAnovaConfig,
    clock: &dyn Clock,
) -> RunResult {
    if let Err(e) = config.validate() {
        return Err(RunFailure {
            error: e,
            report: Box::default(),
        });
    }
    let FixedAnovaConfig {
        level,
        p,
        eps_rb,
        eps_a,
        rule,
        indicator: ref cfg,
    } = *config;
    let (mut ctx, anchor) = Ctx::seed(system, clock).map_err(|e| RunFailure {
        error: e,
        report: Box::default(),
    })?;
    let anchor_field = anchor.field;
    ctx.report.ledger = ctx.basis.record().to_vec();
    let mut state = AnovaState::new(system.dim(), anchor_field).with_rule(rule);
    let mut visited: BTreeSet<DirectionSet> = BTreeSet::new();
    visited.insert(Vec::new());
    let mut candidates = subsets_of_size(system.dim(), 1);
    for l in 1..=level.min(system.dim()) {
        let mut gamma = Vec::with_capacity(candidates.len());
        let mut groups = Vec::with_capacity(candidates.len());
        for k in &candidates {
            let (term, added) = match ctx.term(&state, k, p, eps_rb, cfg) {
                Ok(v) => v,
                Err(e) => return Err(ctx.fail(e)),
            };
            gamma.push(term.gamma);
            groups.push(added);
            state.insert(term);
            visited.insert(k.clone());
        }
        let (sorted, order) = sort_by_indicator(&gamma, &groups, &candidates);
        ctx.report.ledger.extend(sorted);
        let eff = effective(&state, l, eps_a);
        ctx.report.levels.push(LevelReport {
            level: l,
            accepted: order.clone(),
            rejected: Vec::new(),
        });
        ctx.report
            .progress
            .push(progress(&state, l, &ctx.basis, ctx.report.visited));
        candidates = if eps_a == 0.0 {
            subsets_of_size(system.dim(), l + 1)
        } else {
            next_level(&eff, &visited)
        };
        if candidates.is_empty() {
            break;
        }
    }
    Ok(finish_anova(ctx, state))
}

/// Quadrature sums of one sweep.
struct Sums {
    raw: (Vec<f64>, Vec<f64>),
    differenced: Option<(Vec<f64>, Vec<f64>)>,
    added: Vec<BasisEntry>,
}

/// Why a visit removed its term from the active set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    NoSnapshot,
    Small,
    Saturated,
}

struct Visit {
    exit: Option<Exit>,
    gamma: f64,
    added: Vec<BasisEntry>,
}

/// One visit of `K` at order `p`: sweep, rebuild the term, decide. On an
/// exclusion by `γ` or `ρ` (or by a missing snapshot unless the config
/// keeps such terms) the term and the basis are put back as they were.
fn visit(
    ctx: &mut Ctx<'_>,
    state: &mut AnovaState,
    k: &[usize],
    p: usize,
    config: &AdaptiveConfig,
) -> Result<Visit> {
    let previous: Option<AnovaTerm> = state.term(k).cloned();
    let columns = ctx.basis.len();
    let (mut term, added) = ctx.term(state, k, p, config.eps_rb, &config.indicator)?;
    term.rho = previous.as_ref().map(|old| state.saturation(&term, old));
    let gamma = term.gamma;
    let exit = if gamma < config.eps_a {
        Some(Exit::Small)
    } else if term.rho.is_some_and(|r| r < config.eps_p) {
        Some(Exit::Saturated)
    } else if ctx.basis.len() == columns {
        Some(Exit::NoSnapshot)
    } else {
        None
    };
    match exit {
        None => {
            state.insert(term);
            Ok(Visit { exit, gamma, added })
        }
        Some(Exit::NoSnapshot) if config.keep_without_snapshot => {
            state.insert(term);
            Ok(Visit { exit, gamma, added })
        }
        Some(_) => {
            ctx.basis.truncate(columns);
            state.restore(k, previous);
            Ok(Visit {
                exit,
                gamma,
                added: Vec::new(),
            })
        }
    }
}

/// The dimension- and order-adaptive algorithm.
///
/// Starts from all sets up to level `ℓ₀` at order `p₀`. Each pass visits
/// every active set `K`: sweep `Ξ_K^{p_K}`, rebuild the term, then either
/// drop `K` from the active set (no new snapshot, `γ_K < ε_A`, or
/// `ρ_K < ε_p`) or raise `p_K`. A drop caused by `γ` or `ρ` restores the
/// term and the basis to their state before the visit. After each pass
/// the new snapshots are appended to the ledger in descending `γ` and the
/// active set is reordered the same way. Level `l + 1` starts from the
/// unions of the level-`l` sets with `γ > ε_A`.
pub fn run_adaptive(
    system: &AffineSystem,
    config: &AdaptiveConfig,
    clock: &dyn Clock,
) -> RunResult {
    if let Err(e) = config.validate() {
        return Err(RunFailure {
            error: e,
            report: Box::default(),
        });
    }
    let (mut ctx, anchor) = Ctx::seed(system, clock).map_err(|e| RunFailure {
        error: e,
        report: Box::default(),
    })?;
    let anchor_field = anchor.field;
    ctx.report.ledger = ctx.basis.record().to_vec();
    let dim = system.dim();
    let mut state = AnovaState::new(dim, anchor_field).with_rule(config.rule);
    let mut orders: BTreeMap<DirectionSet, usize> = BTreeMap::new();
    let mut left: BTreeSet<DirectionSet> = BTreeSet::new();
    let mut active: Vec<DirectionSet> = Vec::new();
    for l in 1..=config.l0.min(dim) {
        active.extend(subsets_of_size(dim, l));
    }
    let mut visited_sets: BTreeSet<DirectionSet> = BTreeSet::new();
    visited_sets.insert(Vec::new());
    let mut rejected: BTreeMap<usize, Vec<DirectionSet>> = BTreeMap::new();

    let mut l = config.l0.min(dim);
    loop {
        for k in &active {
            orders.entry(k.clone()).or_insert(config.p0);
        }
        while !active.is_empty() {
            let pass = active.clone();
            let mut gamma = Vec::with_capacity(pass.len());
            let mut groups = Vec::with_capacity(pass.len());
            for k in &pass {
                debug_assert!(!left.contains(k), "revisited an excluded set");
                let p = orders[k];
                let v = match visit(&mut ctx, &mut state, k, p, config) {
                    Ok(v) => v,
                    Err(e) => return Err(ctx.fail(e)),
                };
                visited_sets.insert(k.clone());
                gamma.push(v.gamma);
                groups.push(v.added);
                if v.exit.is_some() {
                    left.insert(k.clone());
                } else {
                    let next = p + config.increment;
                    let cap = if config.strong_cap && k.len() > 1 {
                        orders
                            .iter()
                            .filter(|(s, _)| s.len() == k.len() - 1)
                            .map(|(_, &q)| q)
                            .max()
                            .unwrap_or(config.p_max)
                            .min(config.p_max)
                    } else {
                        config.p_max
                    };
                    if next > cap {
                        left.insert(k.clone());
                    } else {
                        orders.insert(k.clone(), next);
                    }
                }
            }
            let (sorted, order) = sort_by_indicator(&gamma, &groups, &pass);
            ctx.report.ledger.extend(sorted);
            active = order.into_iter().filter(|k| !left.contains(k)).collect();
            ctx.report
                .progress
                .push(progress(&state, l, &ctx.basis, ctx.report.visited));
        }
        for k in visited_sets.iter().filter(|k| !k.is_empty()) {
            if state.term(k).is_none() {
                let r = rejected.entry(k.len()).or_default();
                if !r.contains(k) {
                    r.push(k.clone());
                }
            }
        }
        if l >= config.l_max.min(dim) {
            break;
        }
        let eff = effective(&state, l, config.eps_a);
        active = next_level(&eff, &visited_sets);
        l += 1;
        if active.is_empty() {
            break;
        }
    }
    let top = state.level();
    for lv in 1..=top.max(l) {
        ctx.report.levels.push(LevelReport {
            level: lv,
            accepted: state
                .terms()
                .filter(|t| t.directions.len() == lv)
                .map(|t| t.directions.clone())
                .collect(),
            rejected: rejected.remove(&lv).unwrap_or_default(),
        });
    }
    Ok(finish_anova(ctx, state))
}

/// Sparse-grid collocation with the basis updated level by level,
/// `Q = RBM(Q, Θ_l, ε)` for `l = 0..=ℓ`. Points already evaluated at an
/// earlier level keep their reduced solution. One progress row per level.
pub fn run_sparse_grid(
    system: &AffineSystem,
    family: Family,
    growth: Growth,
    l_max: usize,
    eps_rb: f64,
    cfg: &IndicatorConfig,
    clock: &dyn Clock,
) -> RunResult {
    if !(eps_rb > 0.0) {
        return Err(RunFailure {
            error: Error::InvalidArgument("eps_rb must be positive".into()),
            report: Box::default(),
        });
    }
    let (mut ctx, anchor) = Ctx::seed(system, clock).map_err(|e| RunFailure {
        error: e,
        report: Box::default(),
    })?;
    let mut known: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    known.insert(key(&anchor.xi), ctx.basis.project(&anchor.interior));
    let n = system.lifting().values().len();
    for l in 0..=l_max {
        let grid = sparse_grid(system.domain(), l, family, growth);
        let fresh: Vec<Vec<f64>> = grid
            .points
            .iter()
            .filter(|x| !known.contains_key(&key(x)))
            .cloned()
            .collect();
        let t0 = clock.now();
        let up = match ctx.basis.update(system, &fresh, eps_rb, cfg, None) {
            Ok(u) => u,
            Err(e) => return Err(ctx.fail(e)),
        };
        ctx.report.phases.sweeps += clock.now() - t0;
        ctx.report.visited += fresh.len();
        ctx.report.full_solves += up.outcomes.iter().filter(|o| o.full).count();
        for (x, o) in fresh.into_iter().zip(up.outcomes) {
            known.insert(key(&x), o.coefficients);
        }
        let t1 = clock.now();
        let mut mean = vec![0.0; n];
        let mut second = vec![0.0; n];
        for (x, &w) in grid.points.iter().zip(&grid.weights) {
            let f = ctx.basis.field(system, &known[&key(x)]);
            for i in 0..n {
                mean[i] += w * f[i];
                second[i] += w * f[i] * f[i];
            }
        }
        let sd: Vec<f64> = mean
            .iter()
            .zip(&second)
            .map(|(m, s)| libm::sqrt((s - m * m).max(0.0)))
            .collect();
        ctx.report.phases.moments += clock.now() - t1;
        ctx.report.progress.push(ProgressRow {
            level: l,
            n_r: ctx.basis.len(),
            visited: ctx.report.visited,
            mean: mean.clone(),
            sd: sd.clone(),
        });
        ctx.report.levels.push(LevelReport {
            level: l,
            ..LevelReport::default()
        });
        ctx.report.mean = mean;
        ctx.report.sd = sd;
    }
    ctx.report.n_r = ctx.basis.len();
    ctx.report.ledger = ctx.basis.record().to_vec();
    Ok(Run {
        basis: ctx.basis,
        anova: None,
        report: ctx.report,
    })
}

/// Point identity up to rounding, so nodes shared by nested rules match.
fn key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| libm::round(v * 1e12) as i64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{build_benchmark, BenchmarkParams, ParameterBox, SdMode};
    use crate::mesh::{Partition, StructuredMesh};

    fn system(n: usize, nx: usize, ny: usize, nu: f64, a: f64, b: f64) -> AffineSystem {
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
            ParameterBox::uniform(nx * ny, a, b).unwrap(),
        )
        .unwrap()
    }

    fn adaptive(eps: f64, l0: usize) -> AdaptiveConfig {
        AdaptiveConfig {
            l0,
            ..AdaptiveConfig::new(eps)
        }
    }

    fn fixed(level: usize, p: usize, eps_rb: f64, eps_a: f64) -> FixedAnovaConfig {
        FixedAnovaConfig {
            eps_a,
            ..FixedAnovaConfig::new(level, p, eps_rb)
        }
    }

    #[test]
    fn config_validation() {
        assert!(AdaptiveConfig::new(1e-3).validate().is_ok());
        let mut c = AdaptiveConfig::new(1e-3);
        c.p0 = 4;
        assert!(c.validate().is_err());
        c = AdaptiveConfig::new(1e-3);
        c.eps_p = 0.0;
        assert!(c.validate().is_err());
        c = AdaptiveConfig::new(1e-3);
        c.l0 = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn degenerate_box_is_deterministic() {
        let sys = system(8, 2, 2, 0.5, 0.5, 0.5);
        let run = run_adaptive(&sys, &adaptive(1e-3, 1), &NoClock).unwrap();
        assert_eq!(run.report.n_r, 1);
        let state = run.anova.unwrap();
        // Every first-order term is negligible and truncated away.
        assert_eq!(state.terms().count(), 1);
        assert_eq!(state.dropped().len(), 4);
        assert!(run.report.progress.len() == 1);
        assert!(run.report.sd.iter().all(|&s| s < 1e-7));
    }

    #[test]
    fn huge_truncation_stops_at_first_level() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let mut cfg = adaptive(1e-3, 1);
        cfg.eps_a = 1e6;
        let run = run_adaptive(&sys, &cfg, &NoClock).unwrap();
        let state = run.anova.unwrap();
        assert!(state.terms().all(|t| t.directions.len() <= 1));
        let fixed = run_fixed_anova(&sys, &fixed(2, 3, 1e-3, 1e6), &NoClock).unwrap();
        assert!(fixed
            .anova
            .unwrap()
            .terms()
            .all(|t| t.directions.len() <= 1));
    }

    #[test]
    fn term_rules_agree_at_a_fixed_order() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let mut cfg = fixed(2, 3, 1e-4, 0.0);
        let a = run_fixed_anova(&sys, &cfg, &NoClock).unwrap().report;
        cfg.rule = TermRule::Recursive;
        let b = run_fixed_anova(&sys, &cfg, &NoClock).unwrap().report;
        assert_eq!(a.n_r, b.n_r);
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
        for (x, y) in a.sd.iter().zip(&b.sd) {
            assert!((x * x - y * y).abs() <= 1e-12, "{x} vs {y}");
        }
        cfg.p = 4;
        assert!(run_fixed_anova(&sys, &cfg, &NoClock).is_ok());
        cfg.rule = TermRule::Differenced;
        assert!(run_fixed_anova(&sys, &cfg, &NoClock).is_err());
    }

    #[test]
    fn fixed_first_level_visits() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let run = run_fixed_anova(&sys, &fixed(1, 5, 1e-4, 0.0), &NoClock).unwrap();
        assert_eq!(run.report.visited, 1 + 4 * 5);
        assert!(run.report.visited >= run.report.n_r - 1);
        assert_eq!(run.report.ledger.len(), run.report.n_r);
        let snaps: usize = run.report.directions.iter().map(|d| d.snapshots).sum();
        assert!(snaps <= run.report.n_r);
    }

    #[test]
    fn fixed_no_truncation_keeps_every_set() {
        let sys = system(9, 3, 1, 0.5, 0.01, 1.0);
        let run = run_fixed_anova(&sys, &fixed(3, 3, 1e-3, 1e-15), &NoClock).unwrap();
        let state = run.anova.unwrap();
        assert_eq!(state.terms().count(), 8);
    }

    #[test]
    fn tolerance_monotonicity() {
        let sys = system(12, 2, 2, 0.5, 0.01, 1.0);
        let ladder = [-2.5, -3.0, -3.5, -4.0].map(|e: f64| libm::pow(10.0, e));
        let mut last = (0, 0, 0);
        for eps in ladder {
            let cfg = IndicatorConfig::default();
            let a = run_adaptive(&sys, &adaptive(eps, 1), &NoClock)
                .unwrap()
                .report
                .n_r;
            let f = run_fixed_anova(&sys, &fixed(2, 5, eps, 0.0), &NoClock)
                .unwrap()
                .report
                .n_r;
            let s = run_sparse_grid(
                &sys,
                Family::GaussLegendre,
                Growth::Linear,
                3,
                eps,
                &cfg,
                &NoClock,
            )
            .unwrap()
            .report
            .n_r;
            assert!(
                a >= last.0 && f >= last.1 && s >= last.2,
                "{eps}: {a} {f} {s} after {last:?}"
            );
            last = (a, f, s);
        }
    }

    #[test]
    fn exclusion_restores_state_bitwise() {
        let sys = system(10, 2, 2, 0.5, 0.01, 1.0);
        let (mut ctx, anchor) = Ctx::seed(&sys, &NoClock).unwrap();
        let mut state = AnovaState::new(4, anchor.field);
        let cfg = AdaptiveConfig {
            eps_a: 1e-12,
            ..adaptive(1e-6, 1)
        };
        let first = visit(&mut ctx, &mut state, &[0], 3, &cfg).unwrap();
        assert!(first.exit.is_none() && !first.added.is_empty());
        let basis = ctx.basis.clone();
        let terms = state.clone();
        // A huge ε_A forces the γ exclusion after snapshots were taken.
        let strict = AdaptiveConfig {
            eps_a: 1e9,
            ..cfg.clone()
        };
        let v = visit(&mut ctx, &mut state, &[0], 7, &strict).unwrap();
        assert_eq!(v.exit, Some(Exit::Small));
        assert!(ctx.basis == basis);
        assert!(state == terms);
        // A huge ε_p forces the ρ exclusion.
        let sat = AdaptiveConfig { eps_p: 1e9, ..cfg };
        let v = visit(&mut ctx, &mut state, &[0], 9, &sat).unwrap();
        assert_eq!(v.exit, Some(Exit::Saturated));
        assert!(ctx.basis == basis);
        assert!(state == terms);
    }

    #[test]
    fn first_visit_exclusion_drops_the_term() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let (mut ctx, anchor) = Ctx::seed(&sys, &NoClock).unwrap();
        let mut state = AnovaState::new(4, anchor.field);
        let cfg = AdaptiveConfig {
            eps_a: 1e9,
            ..adaptive(1e-6, 1)
        };
        visit(&mut ctx, &mut state, &[2], 3, &cfg).unwrap();
        assert_eq!(ctx.basis.len(), 1);
        assert!(state.term(&[2]).is_none());
        assert!(state.dropped().contains(&vec![2]));
    }

    #[test]
    fn adaptive_never_exceeds_fixed_count() {
        let sys = system(12, 3, 2, 1.0 / 20.0, 0.01, 1.0);
        let mut cfg = adaptive(1e-3, 1);
        cfg.p_max = 9;
        let run = run_adaptive(&sys, &cfg, &NoClock).unwrap();
        let fixed =
            crate::collocation::count_points(6, 2, 9, crate::collocation::CountConvention::Formula);
        // Each set can be visited at orders 3, 5, 7, 9: at most 3+5+7+9 = 24
        // points per direction and 9+25+49+81 per pair.
        let bound = 1 + 6 * 24 + 15 * 164;
        assert!(run.report.visited <= bound);
        assert!((run.report.visited as u128) < fixed * 2);
        for lv in &run.report.levels {
            for k in &lv.accepted {
                assert!(!lv.rejected.contains(k));
            }
        }
    }

    #[test]
    fn sparse_grid_level_zero_is_anchor() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let run = run_sparse_grid(
            &sys,
            Family::ClenshawCurtis,
            Growth::NestedDoubling,
            0,
            1e-4,
            &IndicatorConfig::default(),
            &NoClock,
        )
        .unwrap();
        assert_eq!(run.report.n_r, 1);
        assert_eq!(run.report.visited, 1);
        assert!(run.report.sd.iter().all(|&s| s == 0.0));
        let anchor = sys.full_solve(&sys.domain().anchor()).unwrap();
        for (a, b) in run.report.mean.iter().zip(&anchor.field) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_grid_rows_per_level() {
        let sys = system(8, 2, 2, 0.5, 0.01, 1.0);
        let run = run_sparse_grid(
            &sys,
            Family::ClenshawCurtis,
            Growth::NestedDoubling,
            2,
            1e-5,
            &IndicatorConfig::default(),
            &NoClock,
        )
        .unwrap();
        assert_eq!(run.report.progress.len(), 3);
        // Nested grid: the level-2 grid has 1 + 4*2 + (4*2 + 6*4) = 41 distinct points.
        assert_eq!(run.report.visited, 41);
        assert!(run.report.progress.windows(2).all(|w| w[0].n_r <= w[1].n_r));
    }
}
