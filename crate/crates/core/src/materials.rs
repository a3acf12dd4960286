//! Piecewise-constant isotropic materials on the fine squares.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::MeshHierarchy;

/// Lamé parameters `(λ, μ)` from Young's modulus and Poisson ratio.
pub fn lame_from_e_nu(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e.is_finite() && nu.is_finite()) {
        return Err(Error::NonFinite(format!("E = {e}, ν = {nu}")));
    }
    if e <= 0.0 {
        return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::InvalidInput(format!(
            "Poisson ratio must lie in (-1, 0.5), got {nu}"
        )));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Voigt compliance for `(σ₁₁, σ₂₂, σ₁₂)`, the inverse of
/// `[[λ+2μ, λ, 0], [λ, λ+2μ, 0], [0, 0, 2μ]]`, in closed form.
pub fn compliance_voigt(lambda: f64, mu: f64) -> Result<[[f64; 3]; 3]> {
    if !(lambda.is_finite() && mu.is_finite()) {
        return Err(Error::NonFinite(format!("λ = {lambda}, μ = {mu}")));
    }
    if mu <= 0.0 {
        return Err(Error::InvalidInput(format!("shear modulus must be positive, got {mu}")));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!("λ must be nonnegative, got {lambda}")));
    }
    let (a, b, c) = compliance_coeffs(lambda, mu);
    Ok([[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, c]])
}

/// `(𝒜₁₁, 𝒜₁₂, 𝒜₃₃)`. The 2×2 block is `[[k, λ], [λ, k]]⁻¹` with
/// determinant `k² − λ² = 4μ(λ+μ)`, factored to avoid cancellation.
fn compliance_coeffs(lambda: f64, mu: f64) -> (f64, f64, f64) {
    let det = 4.0 * mu * (lambda + mu);
    ((lambda + 2.0 * mu) / det, -lambda / det, 1.0 / (2.0 * mu))
}

/// Derived coefficients of one fine square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareMaterial {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `λ + 2μ`
    pub k: f64,
    /// `k H⁻²`
    pub k_tilde: f64,
    /// `𝒜₁₁ = 𝒜₂₂`
    pub a11: f64,
    /// `𝒜₁₂`
    pub a12: f64,
    /// `𝒜₃₃ = 1/(2μ)`
    pub a33: f64,
}

impl SquareMaterial {
    pub fn new(e: f64, nu: f64, coarse_h: f64) -> Result<Self> {
        let (lambda, mu) = lame_from_e_nu(e, nu)?;
        if lambda < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative Poisson ratio {nu} gives λ < 0"
            )));
        }
        let (a11, a12, a33) = compliance_coeffs(lambda, mu);
        let k = lambda + 2.0 * mu;
        Ok(Self {
            e,
            nu,
            lambda,
            mu,
            k,
            k_tilde: k / (coarse_h * coarse_h),
            a11,
            a12,
            a33,
        })
    }

    pub fn compliance(&self) -> [[f64; 3]; 3] {
        [
            [self.a11, self.a12, 0.0],
            [self.a12, self.a11, 0.0],
            [0.0, 0.0, self.a33],
        ]
    }
}

/// Young's modulus and Poisson ratio of one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub e: f64,
    pub nu: f64,
}

/// Coefficient layout.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternKind {
    Uniform,
    /// Square inclusions of `size` squares repeating every `period` squares,
    /// centered in each period.
    Inclusions { period: usize, size: usize },
    /// Inclusions plus one horizontal and one vertical channel of `width`
    /// squares through the domain center.
    InclusionsChannels {
        period: usize,
        size: usize,
        width: usize,
    },
    /// Explicit per-square Young's moduli, row 0 at the bottom.
    Raster { values: Vec<Vec<f64>> },
}

/// Coefficient pattern with its two phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Matrix phase (E₂, ν₂).
    pub background: Phase,
    /// Inclusion and channel phase (E₁, ν₁).
    pub feature: Phase,
}

impl PatternSpec {
    pub fn uniform(e: f64, nu: f64) -> Self {
        let p = Phase { e, nu };
        Self {
            kind: PatternKind::Uniform,
            background: p,
            feature: p,
        }
    }

    /// Inclusions with period `nf/8` and half-period size.
    pub fn model_a(nf: usize, feature: Phase, background: Phase) -> Self {
        let period = (nf / 8).max(2);
        Self {
            kind: PatternKind::Inclusions {
                period,
                size: period / 2,
            },
            background,
            feature,
        }
    }

    /// Model A plus channels of width `nf/32`.
    pub fn model_b(nf: usize, feature: Phase, background: Phase) -> Self {
        let period = (nf / 8).max(2);
        Self {
            kind: PatternKind::InclusionsChannels {
                period,
                size: period / 2,
                width: (nf / 32).max(1),
            },
            background,
            feature,
        }
    }

    /// Raster pattern read from a CSV or plain PGM (`P2`) file.
    pub fn from_raster_file(path: &Path, feature: Phase, background: Phase) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("reading {}: {e}", path.display())))?;
        let values = if text.trim_start().starts_with("P2") {
            parse_pgm(&text)?
        } else {
            parse_csv(&text)?
        };
        Ok(Self {
            kind: PatternKind::Raster { values },
            background,
            feature,
        })
    }
}

fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidInput(format!("raster line {}: `{}`: {e}", ln + 1, s.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Plain PGM; gray levels are taken as moduli. The first image row is the
/// bottom of the domain, as for CSV input.
fn parse_pgm(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |what: &str| Error::InvalidInput(format!("PGM: {what}"));
    if tokens.next() != Some("P2") {
        return Err(bad("missing P2 magic"));
    }
    let mut next_num = |what: &str| -> Result<f64> {
        tokens
            .next()
            .ok_or_else(|| bad(&format!("missing {what}")))?
            .parse::<f64>()
            .map_err(|e| bad(&format!("{what}: {e}")))
    };
    let w = next_num("width")? as usize;
    let h = next_num("height")? as usize;
    let _maxval = next_num("maxval")?;
    let mut rows = Vec::with_capacity(h);
    for _ in 0..h {
        let row = (0..w).map(|_| next_num("pixel")).collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-square material data.
#[derive(Debug, Clone)]
pub struct MaterialField {
    nf: usize,
    squares: Vec<SquareMaterial>,
}

impl MaterialField {
    pub fn square(&self, s: usize) -> &SquareMaterial {
        &self.squares[s]
    }

    pub fn of_triangle(&self, t: usize) -> &SquareMaterial {
        &self.squares[t / 2]
    }

    pub fn squares(&self) -> &[SquareMaterial] {
        &self.squares
    }

    pub fn nf(&self) -> usize {
        self.nf
    }

    /// Ratio of the largest to the smallest Young's modulus.
    pub fn contrast(&self) -> f64 {
        let (lo, hi) = self
            .squares
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| (lo.min(m.e), hi.max(m.e)));
        hi / lo
    }
}

fn in_inclusion(i: usize, j: usize, period: usize, size: usize) -> bool {
    let off = (period - size) / 2;
    let inside = |x: usize| {
        let r = x % period;
        r >= off && r < off + size
    };
    inside(i) && inside(j)
}

fn in_channel(i: usize, j: usize, nf: usize, width: usize) -> bool {
    let lo = (nf - width) / 2;
    let inside = |x: usize| x >= lo && x < lo + width;
    inside(i) || inside(j)
}

/// Assigns `(E, ν)` to every fine square of `mesh`.
pub fn build_field(mesh: &MeshHierarchy, pattern: &PatternSpec) -> Result<MaterialField> {
    let nf = mesh.nf();
    let hc = mesh.coarse_h();
    let bg = SquareMaterial::new(pattern.background.e, pattern.background.nu, hc)?;
    let ft = SquareMaterial::new(pattern.feature.e, pattern.feature.nu, hc)?;
    let mut squares = Vec::with_capacity(nf * nf);
    match &pattern.kind {
        PatternKind::Uniform => squares.resize(nf * nf, bg),
        PatternKind::Inclusions { period, size } => {
            check_inclusions(*period, *size)?;
            for s in 0..nf * nf {
                let (i, j) = mesh.square_ij(s);
                squares.push(if in_inclusion(i, j, *period, *size) { ft } else { bg });
            }
        }
        PatternKind::InclusionsChannels {
            period,
            size,
            width,
        } => {
            check_inclusions(*period, *size)?;
            if *width == 0 || *width > nf {
                return Err(Error::InvalidInput(format!("channel width {width} invalid")));
            }
            for s in 0..nf * nf {
                let (i, j) = mesh.square_ij(s);
                let feature = in_inclusion(i, j, *period, *size) || in_channel(i, j, nf, *width);
                squares.push(if feature { ft } else { bg });
            }
        }
        PatternKind::Raster { values } => {
            if values.len() != nf || values.iter().any(|r| r.len() != nf) {
                return Err(Error::InvalidInput(format!(
                    "raster must be {nf}x{nf}, got {} rows",
                    values.len()
                )));
            }
            let threshold = (pattern.feature.e * pattern.background.e).sqrt();
            let feature_is_stiff = pattern.feature.e >= pattern.background.e;
            for s in 0..nf * nf {
                let (i, j) = mesh.square_ij(s);
                let e = values[j][i];
                let is_feature = (e >= threshold) == feature_is_stiff;
                let nu = if is_feature { pattern.feature.nu } else { pattern.background.nu };
                squares.push(SquareMaterial::new(e, nu, hc)?);
            }
        }
    }
    Ok(MaterialField { nf, squares })
}

fn check_inclusions(period: usize, size: usize) -> Result<()> {
    if period == 0 || size == 0 || size >= period {
        return Err(Error::InvalidInput(format!(
            "inclusion size {size} must be positive and below the period {period}"
        )));
    }
    Ok(())
}
