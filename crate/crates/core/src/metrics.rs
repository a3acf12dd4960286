//! Energy and L² norms, relative errors.

use crate::error::{Error, Result};
use crate::fem::{remove_rigid_part, BcKind, OperatorBlocks, SolutionPair};
use crate::coarse::MsSolution;
use crate::geometry::MeshHierarchy;
use crate::numerics::SparseMat;

fn quad_norm(m: &SparseMat, v: &[f64], what: &str) -> Result<f64> {
    if v.len() != m.ncols() {
        return Err(Error::Dimension(format!("{what}: vector of length {}", v.len())));
    }
    let q = m.quad_form(v);
    if !q.is_finite() {
        return Err(Error::NonFinite(what.to_string()));
    }
    let scale: f64 = v.iter().map(|x| x * x).sum::<f64>() * m.norm_inf();
    if q < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite {
            context: format!("{what}: quadratic form {q:e}"),
        });
    }
    Ok(q.max(0.0).sqrt())
}

/// `‖σ‖_𝒜 = (σᵀAσ)^{1/2}`
pub fn norm_a(a: &SparseMat, sigma: &[f64]) -> Result<f64> {
    quad_norm(a, sigma, "compliance norm")
}

/// `‖v‖_s = (vᵀSv)^{1/2}`
pub fn norm_s(s: &SparseMat, v: &[f64]) -> Result<f64> {
    quad_norm(s, v, "weighted norm")
}

/// `‖v‖_{L²} = (vᵀMv)^{1/2}`
pub fn norm_l2(m: &SparseMat, v: &[f64]) -> Result<f64> {
    quad_norm(m, v, "L2 norm")
}

/// Relative errors of a multiscale solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub e_sigma: f64,
    /// Absent under pure traction conditions, where displacements are only
    /// defined up to a rigid motion.
    pub e_u: Option<f64>,
    pub ref_sigma_norm: f64,
    pub ref_u_norm: f64,
}

/// `e_σ = ‖σ_h − σ_ms‖_𝒜 / ‖σ_h‖_𝒜`, `e_u = ‖u_h − u_ms‖_{L²} / ‖u_h‖_{L²}`.
pub fn rel_errors(reference: &SolutionPair, ms: &MsSolution, blocks: &OperatorBlocks) -> Result<ErrorReport> {
    let ds: Vec<f64> = reference.sigma.iter().zip(&ms.sigma).map(|(a, b)| a - b).collect();
    let ref_sigma_norm = norm_a(&blocks.a, &reference.sigma)?;
    if ref_sigma_norm <= 0.0 {
        return Err(Error::InvalidInput("reference stress vanishes".into()));
    }
    let e_sigma = norm_a(&blocks.a, &ds)? / ref_sigma_norm;
    let ref_u_norm = norm_l2(&blocks.m, &reference.u)?;
    let e_u = if blocks.bc.kind == BcKind::Neumann {
        None
    } else {
        if ref_u_norm <= 0.0 {
            return Err(Error::InvalidInput("reference displacement vanishes".into()));
        }
        let du: Vec<f64> = reference.u.iter().zip(&ms.u).map(|(a, b)| a - b).collect();
        Some(norm_l2(&blocks.m, &du)? / ref_u_norm)
    };
    Ok(ErrorReport {
        e_sigma,
        e_u,
        ref_sigma_norm,
        ref_u_norm,
    })
}

/// Removes the rigid-motion part of `u` in the `M` inner product.
pub fn remove_rigid_motion(mesh: &MeshHierarchy, m: &SparseMat, u: &[f64]) -> Vec<f64> {
    remove_rigid_part(mesh, m, u)
}
