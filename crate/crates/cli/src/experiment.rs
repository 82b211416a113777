//! Building the benchmark, running one mode over the tolerance ladder and
//! scoring it against quasi-Monte Carlo reference moments.

use std::time::Instant;

use rbanova_core::affine::{build_benchmark, AffineSystem, ParameterBox};
use rbanova_core::anova::AnovaState;
use rbanova_core::collocation::Halton;
use rbanova_core::driver::{
    run_adaptive, run_fixed_anova, run_sparse_grid, Clock, NoClock, RunReport, RunResult,
};
use rbanova_core::mesh::{Partition, StructuredMesh};
use rbanova_core::moments::{moment_errors, MomentAccumulator, MomentErrors, Moments};
use rbanova_core::reduced_basis::ReducedBasis;

use crate::config::{ExperimentConfig, Mode};
use crate::{output, CliError};

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    /// Starts now.
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// How reference samples were evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSolver {
    /// Finite-element solve per sample.
    Full,
    /// Reduced solve in a basis built with a tighter tolerance.
    Reduced {
        /// Tolerance of that basis.
        eps_rb: f64,
        /// Its size.
        n_r: usize,
    },
}

/// Reference moments with their provenance.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Mean and standard deviation.
    pub moments: Moments,
    /// Halton samples used.
    pub samples: usize,
    /// Solver behind each sample.
    pub solver: ReferenceSolver,
    /// Wall time.
    pub seconds: f64,
}

/// One row of errors.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    /// Sparse-grid level, `None` for the final row of an ANOVA run.
    pub level: Option<usize>,
    /// Basis size.
    pub n_r: usize,
    /// Points visited.
    pub visited: usize,
    /// Moment errors, when a reference exists.
    pub errors: Option<MomentErrors>,
}

/// One entry of the tolerance ladder.
#[derive(Debug, Clone)]
pub struct LadderRun {
    /// `ε_RB`.
    pub eps_rb: f64,
    /// Run summary.
    pub report: RunReport,
    /// ANOVA terms, if the mode has them.
    pub anova: Option<AnovaState>,
    /// Wall time (zero when deterministic).
    pub seconds: f64,
    /// Scored rows.
    pub rows: Vec<ErrorRow>,
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// The validated config.
    pub config: ExperimentConfig,
    /// Grid size after rounding.
    pub n: usize,
    /// Completed ladder entries.
    pub runs: Vec<LadderRun>,
    /// Reference moments.
    pub reference: Option<Reference>,
    /// The error that stopped the experiment early.
    pub failure: Option<String>,
}

/// The benchmark system described by `cfg`.
pub fn build_system(cfg: &ExperimentConfig) -> Result<AffineSystem, CliError> {
    let partition = Partition::new(cfg.partition[0], cfg.partition[1]);
    let mesh = StructuredMesh::new(cfg.grid_size(), partition)
        .map_err(|e| CliError::Config(format!("field `n`: {e}")))?;
    Ok(build_benchmark(&mesh, &cfg.benchmark(), cfg.domain()?)?)
}

/// Runs the configured mode once at `eps_rb`.
pub fn run_mode(
    system: &AffineSystem,
    cfg: &ExperimentConfig,
    eps_rb: f64,
    clock: &dyn Clock,
) -> RunResult {
    match cfg.mode {
        Mode::SparseGrid => run_sparse_grid(
            system,
            cfg.family.into(),
            cfg.growth_rule(),
            cfg.l_max,
            eps_rb,
            &cfg.indicator(),
            clock,
        ),
        Mode::FixedAnova => run_fixed_anova(system, &cfg.fixed(eps_rb), clock),
        Mode::Adaptive => run_adaptive(system, &cfg.adaptive(eps_rb), clock),
    }
}

fn halton_points(domain: &ParameterBox, count: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    Halton::new(domain.dim())
        .take(count)
        .map(|u| domain.from_unit(&u))
}

/// Moments over the first `count` Halton points, one full solve each.
pub fn qmc_full(system: &AffineSystem, count: usize) -> Result<Moments, CliError> {
    let mut acc = MomentAccumulator::new(system.lifting().values().len());
    for (k, xi) in halton_points(system.domain(), count).enumerate() {
        acc.push(&system.full_solve(&xi)?.field);
        if (k + 1) % 1000 == 0 {
            log::info!("reference: {} of {count} full solves", k + 1);
        }
    }
    Ok(acc.finish())
}

/// Moments over the first `count` Halton points, one reduced solve each.
pub fn qmc_reduced(
    system: &AffineSystem,
    basis: &ReducedBasis,
    count: usize,
) -> Result<Moments, CliError> {
    let mut acc = MomentAccumulator::new(system.lifting().values().len());
    for xi in halton_points(system.domain(), count) {
        let u = basis.reduced_solve(system, &xi)?;
        acc.push(&basis.field(system, &u));
    }
    Ok(acc.finish())
}

/// Reference moments: full solves up to `qmc_full_limit` samples, reduced
/// solves in a `qmc_fast_eps` basis of the configured mode above it.
pub fn qmc_reference(
    system: &AffineSystem,
    cfg: &ExperimentConfig,
    count: usize,
) -> Result<Reference, CliError> {
    let start = Instant::now();
    let (moments, solver) = if count <= cfg.qmc_full_limit {
        (qmc_full(system, count)?, ReferenceSolver::Full)
    } else {
        let run = run_mode(system, cfg, cfg.qmc_fast_eps, &NoClock)?;
        let solver = ReferenceSolver::Reduced {
            eps_rb: cfg.qmc_fast_eps,
            n_r: run.basis.len(),
        };
        (qmc_reduced(system, &run.basis, count)?, solver)
    };
    Ok(Reference {
        moments,
        samples: count,
        solver,
        seconds: if cfg.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        },
    })
}

fn score(run: &mut LadderRun, mode: Mode, reference: Option<&Reference>) -> Result<(), CliError> {
    let errors = |mean: &[f64], sd: &[f64]| -> Result<Option<MomentErrors>, CliError> {
        reference
            .map(|r| {
                let cand = Moments {
                    mean: mean.to_vec(),
                    sd: sd.to_vec(),
                };
                moment_errors(&r.moments, &cand).map_err(CliError::from)
            })
            .transpose()
    };
    run.rows = if mode == Mode::SparseGrid {
        run.report
            .progress
            .iter()
            .map(|p| {
                Ok(ErrorRow {
                    level: Some(p.level),
                    n_r: p.n_r,
                    visited: p.visited,
                    errors: errors(&p.mean, &p.sd)?,
                })
            })
            .collect::<Result<_, CliError>>()?
    } else {
        vec![ErrorRow {
            level: None,
            n_r: run.report.n_r,
            visited: run.report.visited,
            errors: errors(&run.report.mean, &run.report.sd)?,
        }]
    };
    Ok(())
}

/// Computes the ladder and the reference without writing anything.
pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let system = build_system(cfg)?;
    let mut outcome = Outcome {
        config: cfg.clone(),
        n: cfg.grid_size(),
        runs: Vec::new(),
        reference: None,
        failure: None,
    };
    for &eps in &cfg.eps_rb {
        let wall = WallClock::start();
        let clock: &dyn Clock = if cfg.deterministic { &NoClock } else { &wall };
        log::info!("{:?} run at eps_rb = {eps:e}", cfg.mode);
        match run_mode(&system, cfg, eps, clock) {
            Ok(run) => outcome.runs.push(LadderRun {
                eps_rb: eps,
                seconds: clock.now(),
                report: run.report,
                anova: run.anova,
                rows: Vec::new(),
            }),
            Err(f) => {
                outcome.runs.push(LadderRun {
                    eps_rb: eps,
                    seconds: clock.now(),
                    report: *f.report.clone(),
                    anova: None,
                    rows: Vec::new(),
                });
                outcome.failure = Some(f.to_string());
                return Ok(outcome);
            }
        }
    }
    if let Some(count) = cfg.qmc_samples {
        match qmc_reference(&system, cfg, count) {
            Ok(r) => outcome.reference = Some(r),
            Err(e) => {
                outcome.failure = Some(e.to_string());
                return Ok(outcome);
            }
        }
    }
    for run in &mut outcome.runs {
        score(run, cfg.mode, outcome.reference.as_ref())?;
    }
    Ok(outcome)
}

/// Runs the experiment and writes its artifacts to `output_dir`; artifacts
/// are written even when a run fails part way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let outcome = compute(cfg)?;
    output::write_all(&outcome, &cfg.output_dir)?;
    match &outcome.failure {
        Some(f) => Err(CliError::Numerical(f.clone())),
        None => Ok(outcome),
    }
}
