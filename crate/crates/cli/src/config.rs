//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mixcem::fem::{BcKind, RhsMode};
use mixcem::materials::{PatternKind, PatternSpec, Phase};

use crate::error::{CliError, Result};

/// Matrix phase modulus; contrasts are feature moduli against it.
pub const E2: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcName {
    Neumann,
    Dirichlet,
    Mixed,
}

impl BcName {
    pub fn kind(self) -> BcKind {
        match self {
            BcName::Neumann => BcKind::Neumann,
            BcName::Dirichlet => BcKind::Dirichlet,
            BcName::Mixed => BcKind::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// `(cos πx sin πy, 0)`
    #[default]
    Trig,
    /// `(1, 1)`
    Constant,
}

impl Source {
    pub fn eval(self, x: f64, y: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        match self {
            Source::Trig => [(PI * x).cos() * (PI * y).sin(), 0.0],
            Source::Constant => [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsName {
    #[default]
    Projected,
    Plain,
}

impl RhsName {
    pub fn mode(self) -> RhsMode {
        match self {
            RhsName::Projected => RhsMode::Projected,
            RhsName::Plain => RhsMode::Plain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    /// One material everywhere, `E = contrast`, `ν = nu1`.
    Uniform,
    /// Square inclusions, period `nf/8`.
    #[default]
    ModelA,
    /// Model A plus a cross of channels.
    ModelB,
    Inclusions { period: usize, size: usize },
    /// CSV or plain PGM grid; cells equal to the maximum value get the
    /// feature phase, all others the matrix phase.
    Raster { path: PathBuf },
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Uniform => "uniform",
            Pattern::ModelA => "model_a",
            Pattern::ModelB => "model_b",
            Pattern::Inclusions { .. } => "inclusions",
            Pattern::Raster { .. } => "raster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nf: usize,
    pub nc: OneOrMany,
    #[serde(rename = "Nbf", default = "default_nbf")]
    pub nbf: usize,
    pub osly: Vec<usize>,
    /// Feature moduli `E₁` (the matrix has `E₂ = 1`).
    pub contrast: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu1: f64,
    #[serde(default = "default_nu")]
    pub nu2: f64,
    pub bc: BcName,
    #[serde(default)]
    pub source: Source,
    #[serde(default)]
    pub pattern: Pattern,
    #[serde(default)]
    pub rhs_mode: RhsName,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshot: bool,
    /// Wall-clock columns are written as zero when off, which makes the
    /// CSV reproducible byte for byte.
    #[serde(default = "default_true")]
    pub record_timings: bool,
}

fn default_nbf() -> usize {
    6
}

fn default_nu() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let ncs = self.nc.values();
        if self.nf == 0 || ncs.is_empty() {
            return bad("nf and nc must be positive".into());
        }
        for &nc in &ncs {
            if nc < 2 || self.nf % nc != 0 {
                return bad(format!("nc = {nc} must be at least 2 and divide nf = {}", self.nf));
            }
            if let Some(&l) = self.osly.iter().find(|&&l| l > nc) {
                return bad(format!("osly = {l} exceeds nc = {nc}"));
            }
        }
        if self.nbf < 3 {
            return bad(format!("Nbf = {} cannot span the rigid motions", self.nbf));
        }
        if self.osly.is_empty() || self.contrast.is_empty() {
            return bad("osly and contrast lists must not be empty".into());
        }
        if let Some(c) = self.contrast.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return bad(format!("contrast {c} must be positive"));
        }
        for nu in [self.nu1, self.nu2] {
            if !(0.0..0.5).contains(&nu) {
                return bad(format!("Poisson ratio {nu} outside [0, 0.5)"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if self.bc == BcName::Neumann && self.source == Source::Constant {
            return bad("a constant source has nonzero resultant and cannot balance zero traction".into());
        }
        Ok(())
    }

    /// Material layout for one feature modulus.
    pub fn pattern_spec(&self, contrast: f64) -> Result<PatternSpec> {
        let feature = Phase { e: contrast, nu: self.nu1 };
        let background = Phase { e: E2, nu: self.nu2 };
        Ok(match &self.pattern {
            Pattern::Uniform => PatternSpec::uniform(contrast, self.nu1),
            Pattern::ModelA => PatternSpec::model_a(self.nf, feature, background),
            Pattern::ModelB => PatternSpec::model_b(self.nf, feature, background),
            Pattern::Inclusions { period, size } => PatternSpec {
                kind: PatternKind::Inclusions {
                    period: *period,
                    size: *size,
                },
                background,
                feature,
            },
            Pattern::Raster { path } => PatternSpec::from_raster_file(path, feature, background)?,
        })
    }

    /// `E₂` as reported: the uniform layout has a single modulus.
    pub fn e2(&self, contrast: f64) -> f64 {
        if self.pattern == Pattern::Uniform {
            contrast
        } else {
            E2
        }
    }
}
