//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use rbanova_core::affine::{BenchmarkParams, ParameterBox, SdMode};
use rbanova_core::anova::TermRule;
use rbanova_core::collocation::{Family, Growth};
use rbanova_core::driver::{AdaptiveConfig, FixedAnovaConfig};
use rbanova_core::reduced_basis::{IndicatorConfig, Normalization};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Run mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sequential sweeps over Smolyak levels `0..=l_max`.
    SparseGrid,
    /// PCM-ANOVA up to `level` with a fixed order `p`.
    FixedAnova,
    /// Dimension and order adaptive PCM-ANOVA.
    Adaptive,
}

/// 1-D node family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFamily {
    /// Gauss-Legendre.
    GaussLegendre,
    /// Clenshaw-Curtis.
    ClenshawCurtis,
}

impl From<NodeFamily> for Family {
    fn from(f: NodeFamily) -> Self {
        match f {
            NodeFamily::GaussLegendre => Family::GaussLegendre,
            NodeFamily::ClenshawCurtis => Family::ClenshawCurtis,
        }
    }
}

/// Sparse-grid growth rule; `None` in the config picks the family default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRule {
    /// `m_i = i`.
    Linear,
    /// `m_i = 2^(i-1) + 1`.
    NestedDoubling,
}

/// Residual normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRule {
    /// Interior forcing only.
    Interior,
    /// Interior forcing and boundary data.
    WithBoundaryData,
}

/// How ANOVA term means are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermMeans {
    /// Subtract the lower terms at their own orders.
    Recursive,
    /// Inclusion-exclusion at the term's own order.
    Differenced,
}

impl From<TermMeans> for TermRule {
    fn from(t: TermMeans) -> Self {
        match t {
            TermMeans::Recursive => TermRule::Recursive,
            TermMeans::Differenced => TermRule::Differenced,
        }
    }
}

/// Streamline-diffusion coefficient treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdRule {
    /// `δ_m(ξ_m)` per point.
    PerParameter,
    /// `δ_m` at the anchor.
    FrozenAtAnchor,
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Cells per side; rounded up to a multiple of both partition counts.
    pub n: usize,
    /// Subdomains along x1 and x2.
    pub partition: [usize; 2],
    /// Diffusion scale ν.
    pub nu: f64,
    /// Bounds of every `Γ_m`.
    pub bounds: [f64; 2],
    /// Wind angle in degrees right of vertical.
    pub angle_deg: f64,
    /// Forcing constant.
    pub forcing: f64,
    /// Streamline-diffusion coefficient treatment.
    pub sd_mode: SdRule,
    /// Include the streamline load term.
    pub sd_forcing: bool,
    /// Run mode.
    pub mode: Mode,
    /// Node family.
    pub family: NodeFamily,
    /// Sparse-grid growth; family default when absent.
    pub growth: Option<GrowthRule>,
    /// Tolerance ladder `ε_RB`, one run per entry.
    pub eps_rb: Vec<f64>,
    /// `ε_A`; `ε_RB / 2` when absent. Zero disables truncation in fixed mode.
    pub eps_a: Option<f64>,
    /// `ε_p`; `ε_RB / 2` when absent.
    pub eps_p: Option<f64>,
    /// Initial order of the adaptive mode.
    pub p0: usize,
    /// Initial level of the adaptive mode.
    pub l0: usize,
    /// Final level (adaptive and sparse-grid modes).
    pub l_max: usize,
    /// Order increment.
    pub increment: usize,
    /// Order cap.
    pub p_max: usize,
    /// `p_K <= max p_S` over the subsets one level down.
    pub strong_cap: bool,
    /// Keep a term whose sweep added no snapshot.
    pub keep_without_snapshot: bool,
    /// Level of the fixed mode.
    pub level: usize,
    /// Order of the fixed mode.
    pub p: usize,
    /// Indicator weight exponent.
    pub alpha: f64,
    /// Residual normalization.
    pub normalization: NormalizationRule,
    /// ANOVA term means.
    pub term_means: TermMeans,
    /// Halton reference samples; `None` skips the reference.
    pub qmc_samples: Option<usize>,
    /// Largest sample count that uses full solves.
    pub qmc_full_limit: usize,
    /// `ε_RB` of the basis behind reduced-solve references.
    pub qmc_fast_eps: f64,
    /// Artifact directory.
    pub output_dir: PathBuf,
    /// Report every timing as zero so outputs are byte-reproducible.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 64,
            partition: [6, 6],
            nu: 0.5,
            bounds: [0.01, 1.0],
            angle_deg: 30.0,
            forcing: 1.0,
            sd_mode: SdRule::PerParameter,
            sd_forcing: false,
            mode: Mode::Adaptive,
            family: NodeFamily::GaussLegendre,
            growth: None,
            eps_rb: vec![1e-3],
            eps_a: None,
            eps_p: None,
            p0: 3,
            l0: 2,
            l_max: 2,
            increment: 2,
            p_max: 31,
            strong_cap: false,
            keep_without_snapshot: true,
            level: 2,
            p: 9,
            alpha: 0.0,
            normalization: NormalizationRule::WithBoundaryData,
            term_means: TermMeans::Differenced,
            qmc_samples: Some(10_000),
            qmc_full_limit: 10_000,
            qmc_fast_eps: 1e-6,
            output_dir: PathBuf::from("out"),
            deterministic: false,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ExperimentConfig {
    /// Parses a JSON document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file and applies `key=value` overrides; values are JSON and
    /// fall back to plain strings.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let Value::Object(map) = &mut doc else {
            return Err(CliError::Config(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            map.insert(key.trim().to_string(), value);
        }
        let cfg: Self = serde_json::from_value(doc)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks ranges that serde cannot.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: &str| Err(CliError::Config(format!("field `{field}`: {why}")));
        if self.n == 0 {
            return bad("n", "must be positive");
        }
        if self.partition.contains(&0) {
            return bad("partition", "counts must be positive");
        }
        if !(self.nu > 0.0) {
            return bad("nu", "must be positive");
        }
        if !(self.bounds[0] > 0.0 && self.bounds[1] > self.bounds[0]) {
            return bad("bounds", "need 0 < lower < upper");
        }
        if self.eps_rb.is_empty() || self.eps_rb.iter().any(|e| !(*e > 0.0)) {
            return bad("eps_rb", "need at least one positive tolerance");
        }
        if self.eps_a.is_some_and(|e| !(e >= 0.0)) {
            return bad("eps_a", "must be nonnegative");
        }
        if self.eps_a == Some(0.0) && self.mode == Mode::Adaptive {
            return bad("eps_a", "must be positive in adaptive mode");
        }
        if self.eps_p.is_some_and(|e| !(e > 0.0)) {
            return bad("eps_p", "must be positive");
        }
        if self.p0 == 0 || self.p0.is_multiple_of(2) {
            return bad("p0", "must be odd and positive");
        }
        if self.increment == 0 {
            return bad("increment", "must be positive");
        }
        if self.mode == Mode::Adaptive && (self.l0 == 0 || self.l0 > self.l_max) {
            return bad("l0", "need 1 <= l0 <= l_max");
        }
        if self.mode == Mode::FixedAnova && (self.level == 0 || self.p == 0) {
            return bad("level", "fixed mode needs level >= 1 and p >= 1");
        }
        if self.term_means == TermMeans::Differenced {
            if self.increment % 2 == 1 {
                return bad("increment", "differenced term means need an even increment");
            }
            if self.mode == Mode::FixedAnova && self.p.is_multiple_of(2) {
                return bad("p", "differenced term means need an odd order");
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if self.qmc_samples.is_some_and(|q| q < 1000) {
            return bad("qmc_samples", "reference needs at least 1000 samples");
        }
        if !(self.qmc_fast_eps > 0.0) {
            return bad("qmc_fast_eps", "must be positive");
        }
        Ok(())
    }

    /// Parameter dimension `M`.
    pub fn dim(&self) -> usize {
        self.partition[0] * self.partition[1]
    }

    /// `n` rounded up to a multiple of both partition counts.
    pub fn grid_size(&self) -> usize {
        let [a, b] = self.partition;
        let l = a / gcd(a, b) * b;
        self.n.div_ceil(l) * l
    }

    /// Physical parameters.
    pub fn benchmark(&self) -> BenchmarkParams {
        BenchmarkParams {
            nu: self.nu,
            wind: BenchmarkParams::wind_from_angle(self.angle_deg),
            forcing: self.forcing,
            sd_mode: match self.sd_mode {
                SdRule::PerParameter => SdMode::PerParameter,
                SdRule::FrozenAtAnchor => SdMode::FrozenAtAnchor,
            },
            sd_forcing: self.sd_forcing,
        }
    }

    /// Parameter box.
    pub fn domain(&self) -> Result<ParameterBox, CliError> {
        ParameterBox::uniform(self.dim(), self.bounds[0], self.bounds[1])
            .map_err(|e| CliError::Config(format!("field `bounds`: {e}")))
    }

    /// Indicator weighting and normalization.
    pub fn indicator(&self) -> IndicatorConfig {
        let n = match self.normalization {
            NormalizationRule::Interior => Normalization::Interior,
            NormalizationRule::WithBoundaryData => Normalization::WithBoundaryData,
        };
        IndicatorConfig::new(self.alpha)
            .expect("alpha validated")
            .with_normalization(n)
    }

    /// Sparse-grid growth.
    pub fn growth_rule(&self) -> Growth {
        match self.growth {
            Some(GrowthRule::Linear) => Growth::Linear,
            Some(GrowthRule::NestedDoubling) => Growth::NestedDoubling,
            None => Growth::default_for(self.family.into()),
        }
    }

    /// Adaptive settings for one ladder entry.
    pub fn adaptive(&self, eps_rb: f64) -> AdaptiveConfig {
        AdaptiveConfig {
            eps_rb,
            eps_a: self.eps_a.unwrap_or(eps_rb / 2.0),
            eps_p: self.eps_p.unwrap_or(eps_rb / 2.0),
            p0: self.p0,
            l0: self.l0,
            l_max: self.l_max,
            increment: self.increment,
            p_max: self.p_max,
            strong_cap: self.strong_cap,
            keep_without_snapshot: self.keep_without_snapshot,
            rule: self.term_means.into(),
            indicator: self.indicator(),
        }
    }

    /// Fixed-order settings for one ladder entry.
    pub fn fixed(&self, eps_rb: f64) -> FixedAnovaConfig {
        FixedAnovaConfig {
            level: self.level,
            p: self.p,
            eps_rb,
            eps_a: self.eps_a.unwrap_or(eps_rb / 2.0),
            rule: self.term_means.into(),
            indicator: self.indicator(),
        }
    }
}
