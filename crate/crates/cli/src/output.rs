//! errors.csv, directions.csv, anova_terms.csv and report.txt.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::experiment::{Outcome, ReferenceSolver};
use crate::CliError;

fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

/// 1-based, dash-joined direction set.
pub fn label(k: &[usize]) -> String {
    k.iter()
        .map(|j| (j + 1).to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn mode_name(o: &Outcome) -> String {
    serde_json::to_value(o.config.mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Writes every artifact into `dir`, creating it if needed.
pub fn write_all(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_errors(outcome, &dir.join("errors.csv"))?;
    write_directions(outcome, &dir.join("directions.csv"))?;
    write_terms(outcome, &dir.join("anova_terms.csv"))?;
    fs::write(dir.join("report.txt"), report(outcome))?;
    Ok(())
}

/// One row per ladder entry, or per level in sparse-grid mode.
pub fn write_errors(outcome: &Outcome, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "mode",
        "eps_rb",
        "level",
        "n_r",
        "visited",
        "e_mu",
        "e_sigma",
        "wall_seconds",
    ])?;
    let mode = mode_name(outcome);
    for run in &outcome.runs {
        for row in &run.rows {
            w.write_record([
                mode.clone(),
                sci(run.eps_rb),
                row.level.map(|l| l.to_string()).unwrap_or_default(),
                row.n_r.to_string(),
                row.visited.to_string(),
                opt_sci(row.errors.map(|e| e.e_mu)),
                opt_sci(row.errors.map(|e| e.e_sigma)),
                sci(run.seconds),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-coordinate mean norm, largest order and first-order snapshots.
pub fn write_directions(outcome: &Outcome, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eps_rb", "j", "mean_norm", "p_j", "n_r_j"])?;
    for run in &outcome.runs {
        for (j, d) in run.report.directions.iter().enumerate() {
            w.write_record([
                sci(run.eps_rb),
                (j + 1).to_string(),
                sci(d.mean_norm),
                d.p_max.to_string(),
                d.snapshots.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Every computed ANOVA term with its indicators and snapshot count.
pub fn write_terms(outcome: &Outcome, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "eps_rb",
        "directions",
        "order",
        "mean_norm",
        "gamma",
        "rho",
        "kept",
        "snapshots",
    ])?;
    for run in &outcome.runs {
        let Some(state) = &run.anova else { continue };
        for t in state.diagnostics() {
            let snaps = run
                .report
                .ledger
                .iter()
                .filter(|e| e.label.as_deref() == Some(&t.directions[..]))
                .count();
            w.write_record([
                sci(run.eps_rb),
                label(&t.directions),
                t.order.to_string(),
                sci(t.mean_norm),
                sci(t.gamma),
                opt_sci(t.rho),
                t.kept.to_string(),
                snaps.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `key = value` sections describing the experiment.
pub fn report(o: &Outcome) -> String {
    let c = &o.config;
    let mut s = String::new();
    let _ = writeln!(s, "[experiment]");
    let _ = writeln!(s, "mode = {}", mode_name(o));
    let _ = writeln!(s, "n_requested = {}", c.n);
    let _ = writeln!(s, "n = {}", o.n);
    let _ = writeln!(s, "partition = {}x{}", c.partition[0], c.partition[1]);
    let _ = writeln!(s, "dim = {}", c.dim());
    let _ = writeln!(s, "nu = {}", sci(c.nu));
    let _ = writeln!(s, "bounds = {} {}", sci(c.bounds[0]), sci(c.bounds[1]));
    let _ = writeln!(s, "angle_deg = {}", sci(c.angle_deg));
    let _ = writeln!(s, "family = {:?}", c.family);
    let _ = writeln!(s, "normalization = {:?}", c.normalization);
    let _ = writeln!(s, "term_means = {:?}", c.term_means);
    let _ = writeln!(s, "deterministic = {}", c.deterministic);
    if let Some(r) = &o.reference {
        let _ = writeln!(s, "\n[reference]");
        let _ = writeln!(s, "samples = {}", r.samples);
        let _ = writeln!(s, "sequence = halton");
        match r.solver {
            ReferenceSolver::Full => {
                let _ = writeln!(s, "solver = full");
            }
            ReferenceSolver::Reduced { eps_rb, n_r } => {
                let _ = writeln!(s, "solver = reduced");
                let _ = writeln!(s, "basis_eps_rb = {}", sci(eps_rb));
                let _ = writeln!(s, "basis_n_r = {n_r}");
            }
        }
        let _ = writeln!(s, "seconds = {}", sci(r.seconds));
    }
    for (i, run) in o.runs.iter().enumerate() {
        let r = &run.report;
        let _ = writeln!(s, "\n[run {}]", i + 1);
        let _ = writeln!(s, "eps_rb = {}", sci(run.eps_rb));
        let _ = writeln!(s, "n_r = {}", r.n_r);
        let _ = writeln!(s, "visited = {}", r.visited);
        let _ = writeln!(s, "full_solves = {}", r.full_solves);
        let _ = writeln!(s, "seconds = {}", sci(run.seconds));
        let _ = writeln!(s, "seconds.setup = {}", sci(r.phases.setup));
        let _ = writeln!(s, "seconds.sweeps = {}", sci(r.phases.sweeps));
        let _ = writeln!(s, "seconds.moments = {}", sci(r.phases.moments));
        if let Some(e) = run.rows.last().and_then(|row| row.errors) {
            let _ = writeln!(s, "e_mu = {}", sci(e.e_mu));
            let _ = writeln!(s, "e_sigma = {}", sci(e.e_sigma));
        }
        for l in &r.levels {
            let join = |v: &[Vec<usize>]| v.iter().map(|k| label(k)).collect::<Vec<_>>().join(" ");
            let _ = writeln!(s, "level.{}.accepted = {}", l.level, join(&l.accepted));
            let _ = writeln!(s, "level.{}.rejected = {}", l.level, join(&l.rejected));
        }
    }
    if let Some(f) = &o.failure {
        let _ = writeln!(s, "\n[failure]");
        let _ = writeln!(s, "error = {f}");
    }
    s
}
