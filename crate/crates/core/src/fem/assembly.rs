use faer::Mat;

use super::bc::{BcKind, BcSpec, VectorFn};
use super::element::JmElement;
use super::quadrature::{bary_to_point, SEG_GAUSS3, TRI_DEG4};
use crate::error::{Error, Result};
use crate::geometry::{patch_boundary_stress_dofs, BoundarySide, MeshHierarchy, PatchRegion};
use crate::materials::MaterialField;
use crate::numerics::{axpy, dot, factorize, norm_inf, SparseMat, SparseSym};
use crate::spectral::AuxSpace;

/// Global operator blocks of the fine mixed discretization.
#[derive(Debug, Clone)]
pub struct OperatorBlocks {
    pub bc: BcSpec,
    /// Compliance mass `∫ 𝒜τ_a : τ_b`, `n_σ × n_σ`.
    pub a: SparseMat,
    /// Divergence coupling `∫ div τ_b · v_a`, `n_u × n_σ`.
    pub b: SparseMat,
    /// Weighted mass `∫ k̃ v_a · v_b`, `n_u × n_u`.
    pub s: SparseMat,
    /// Mass `∫ v_a · v_b`, `n_u × n_u`.
    pub m: SparseMat,
    /// Stress DOFs not fixed by the traction condition.
    pub sigma_free: Vec<bool>,
    elements: [JmElement; 2],
    a_parts: [[[[f64; 15]; 15]; 3]; 2],
    b_local: [[[f64; 15]; 6]; 2],
    /// `(𝒜₁₁, 𝒜₁₂, 𝒜₃₃)` per fine square.
    compliance: Vec<[f64; 3]>,
}

impl OperatorBlocks {
    /// Reference element of triangle `t`; all triangles of one type are
    /// translates of each other.
    pub fn element(&self, t: usize) -> &JmElement {
        &self.elements[t % 2]
    }

    /// Element compliance matrix of triangle `t` in local DOF order.
    pub fn element_a(&self, t: usize) -> [[f64; 15]; 15] {
        let parts = &self.a_parts[t % 2];
        let c = self.compliance[t / 2];
        let mut out = [[0.0; 15]; 15];
        for i in 0..15 {
            for j in 0..15 {
                out[i][j] = c[0] * parts[0][i][j] + c[1] * parts[1][i][j] + c[2] * parts[2][i][j];
            }
        }
        out
    }

    /// Element divergence matrix of triangle `t`, row `2m + r`.
    pub fn element_b(&self, t: usize) -> &[[f64; 15]; 6] {
        &self.b_local[t % 2]
    }

    /// `σ|_Tᵀ A_T σ|_T` for a global stress vector.
    pub fn triangle_energy(&self, mesh: &MeshHierarchy, t: usize, sigma: &[f64]) -> f64 {
        let dofs = mesh.dofs().triangle_sigma_dofs(mesh, t);
        let x: Vec<f64> = dofs.iter().map(|&d| sigma[d]).collect();
        let a = self.element_a(t);
        let mut e = 0.0;
        for i in 0..15 {
            if x[i] == 0.0 {
                continue;
            }
            e += x[i] * (0..15).map(|j| a[i][j] * x[j]).sum::<f64>();
        }
        e
    }

    /// Dense compliance matrix assembled from `triangles` only, on the
    /// ascending global stress DOF list `dofs` (which must cover them).
    pub fn local_a_dense(&self, mesh: &MeshHierarchy, triangles: &[usize], dofs: &[usize]) -> Mat<f64> {
        let layout = mesh.dofs();
        let mut out = Mat::<f64>::zeros(dofs.len(), dofs.len());
        for &t in triangles {
            let g = layout.triangle_sigma_dofs(mesh, t);
            let l: Vec<usize> = g
                .iter()
                .map(|d| dofs.binary_search(d).expect("dof list covers triangle"))
                .collect();
            let a = self.element_a(t);
            for i in 0..15 {
                for j in 0..15 {
                    out[(l[i], l[j])] += a[i][j];
                }
            }
        }
        out
    }

    pub fn n_sigma(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.s.nrows()
    }

    /// Ascending list of free stress DOFs.
    pub fn free_sigma_dofs(&self) -> Vec<usize> {
        (0..self.n_sigma()).filter(|&d| self.sigma_free[d]).collect()
    }
}

/// P1 mass matrix of a triangle with area `area`: `(area/12)(1 + δ_mn)`.
fn p1_mass(area: f64, m: usize, n: usize) -> f64 {
    area / 12.0 * if m == n { 2.0 } else { 1.0 }
}

/// Assembles `A`, `B`, `S` and `M` and the free-DOF mask for `bc`.
pub fn assemble_blocks(mesh: &MeshHierarchy, field: &MaterialField, bc: &BcSpec) -> Result<OperatorBlocks> {
    if field.nf() != mesh.nf() {
        return Err(Error::Dimension(format!(
            "material field for nf = {} used on mesh with nf = {}",
            field.nf(),
            mesh.nf()
        )));
    }
    let elements = [
        JmElement::new(mesh.triangle_coords(0), mesh.triangle_orientation(0))?,
        JmElement::new(mesh.triangle_coords(1), mesh.triangle_orientation(1))?,
    ];
    let a_parts = [elements[0].compliance_parts(), elements[1].compliance_parts()];
    let b_local = [elements[0].divergence_matrix(), elements[1].divergence_matrix()];
    let compliance: Vec<[f64; 3]> = field.squares().iter().map(|m| [m.a11, m.a12, m.a33]).collect();

    let layout = mesh.dofs();
    let (n_sigma, n_u) = (layout.n_sigma(), layout.n_u());
    let nt = mesh.n_triangles();
    let area = mesh.triangle_area();

    let mut blocks = OperatorBlocks {
        bc: bc.clone(),
        a: SparseMat::zeros(0, 0),
        b: SparseMat::zeros(0, 0),
        s: SparseMat::zeros(0, 0),
        m: SparseMat::zeros(0, 0),
        sigma_free: vec![true; n_sigma],
        elements,
        a_parts,
        b_local,
        compliance,
    };

    let mut ta = Vec::with_capacity(225 * nt);
    let mut tb = Vec::with_capacity(90 * nt);
    let mut ts = Vec::with_capacity(36 * nt);
    let mut tm = Vec::with_capacity(36 * nt);
    for t in 0..nt {
        let g = layout.triangle_sigma_dofs(mesh, t);
        let a = blocks.element_a(t);
        for i in 0..15 {
            for j in 0..15 {
                ta.push((g[i], g[j], a[i][j]));
            }
        }
        let b = blocks.element_b(t);
        for (row, br) in b.iter().enumerate() {
            let ui = 6 * t + row;
            for j in 0..15 {
                tb.push((ui, g[j], br[j]));
            }
        }
        let kt = field.of_triangle(t).k_tilde;
        for m in 0..3 {
            for n in 0..3 {
                let mass = p1_mass(area, m, n);
                for r in 0..2 {
                    let (ui, uj) = (layout.u_dof(t, m, r), layout.u_dof(t, n, r));
                    tm.push((ui, uj, mass));
                    ts.push((ui, uj, kt * mass));
                }
            }
        }
    }
    blocks.a = SparseMat::from_triplets(n_sigma, n_sigma, ta)?;
    blocks.b = SparseMat::from_triplets(n_u, n_sigma, tb)?;
    blocks.s = SparseMat::from_triplets(n_u, n_u, ts)?;
    blocks.m = SparseMat::from_triplets(n_u, n_u, tm)?;

    for side in BoundarySide::ALL {
        if bc.is_traction_side(side) {
            for d in layout.boundary_sigma_dofs(mesh, side) {
                blocks.sigma_free[d] = false;
            }
        }
    }
    Ok(blocks)
}

/// Displacement coefficient vectors of the rigid motions `(1, 0)`, `(0, 1)`
/// and `(−y, x)`.
pub fn rigid_motions(mesh: &MeshHierarchy) -> [Vec<f64>; 3] {
    let layout = mesh.dofs();
    let n_u = layout.n_u();
    let mut r = [vec![0.0; n_u], vec![0.0; n_u], vec![0.0; n_u]];
    for t in 0..mesh.n_triangles() {
        for (m, p) in mesh.triangle_coords(t).iter().enumerate() {
            r[0][layout.u_dof(t, m, 0)] = 1.0;
            r[1][layout.u_dof(t, m, 1)] = 1.0;
            r[2][layout.u_dof(t, m, 0)] = -p[1];
            r[2][layout.u_dof(t, m, 1)] = p[0];
        }
    }
    r
}

/// Source term of the displacement equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// `(f, v)`
    Plain,
    /// `s(π(k̃⁻¹ f), v)`
    Projected,
}

/// Right-hand sides `(rhs_σ, rhs_u)` for source `f` and the displacement
/// data of `bc`.
pub fn assemble_rhs(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    f: &VectorFn,
    mode: RhsMode,
    aux: Option<&AuxSpace>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let layout = mesh.dofs();
    let area = mesh.triangle_area();
    let mut rhs_u = vec![0.0; layout.n_u()];
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_coords(t);
        for (l, w) in TRI_DEG4 {
            let x = bary_to_point(&p, &l);
            let fx = f(x[0], x[1]);
            for m in 0..3 {
                for r in 0..2 {
                    rhs_u[layout.u_dof(t, m, r)] += area * w * l[m] * fx[r];
                }
            }
        }
    }
    if rhs_u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("source evaluation".into()));
    }
    if mode == RhsMode::Projected {
        let aux = aux.ok_or_else(|| {
            Error::InvalidInput("projected right-hand side needs the auxiliary space".into())
        })?;
        let coeffs = aux.q().mul_t_vec(&rhs_u);
        rhs_u = blocks.s.mul_vec(&aux.q().mul_vec(&coeffs));
    }

    let mut rhs_sigma = vec![0.0; layout.n_sigma()];
    if let Some(g) = &blocks.bc.displacement {
        for (e, edge) in mesh.edges().iter().enumerate() {
            let Some(side) = edge.boundary else { continue };
            if blocks.bc.is_traction_side(side) {
                continue;
            }
            let (a, b) = (mesh.vertex(edge.vertices[0]), mesh.vertex(edge.vertices[1]));
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            // +1 where the global normal points out of the domain
            let sign = match side {
                BoundarySide::Bottom | BoundarySide::Right => -1.0,
                BoundarySide::Top | BoundarySide::Left => 1.0,
            };
            for (xi, w) in SEG_GAUSS3 {
                let x = [a[0] + xi * (b[0] - a[0]), a[1] + xi * (b[1] - a[1])];
                let gx = g(x[0], x[1]);
                for c in 0..2 {
                    rhs_sigma[layout.edge_dof(e, c, 0)] += sign * w * len * gx[c];
                    rhs_sigma[layout.edge_dof(e, c, 1)] += sign * w * len * gx[c] * (2.0 * xi - 1.0);
                }
            }
        }
    }
    Ok((rhs_sigma, rhs_u))
}

/// Fine-grid stress and displacement.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    /// `‖Kx − b‖∞ / (1 + ‖b‖∞)` of the saddle system.
    pub residual: f64,
}

/// Solves the fine saddle problem `[A Bᵀ; B 0](σ, u) = (rhs_σ, rhs_u)` on
/// the free stress DOFs. Under pure traction conditions three multipliers
/// fix the rigid motions of `u` in the `M` inner product.
pub fn solve_fine(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    rhs_sigma: &[f64],
    rhs_u: &[f64],
) -> Result<SolutionPair> {
    let (n_sigma, n_u) = (blocks.n_sigma(), blocks.n_u());
    if rhs_sigma.len() != n_sigma || rhs_u.len() != n_u {
        return Err(Error::Dimension("fine right-hand side".into()));
    }
    let free = blocks.free_sigma_dofs();
    let nf = free.len();
    let neumann = blocks.bc.kind == BcKind::Neumann;
    let rigid = neumann.then(|| rigid_motions(mesh));
    if let Some(r) = &rigid {
        for (k, rk) in r.iter().enumerate() {
            let dot: f64 = rk.iter().zip(rhs_u).map(|(a, b)| a * b).sum();
            let scale: f64 = rk.iter().zip(rhs_u).map(|(a, b)| (a * b).abs()).sum();
            if dot.abs() > 1e-8 * (1e-300 + scale).max(norm_inf(rhs_u)) {
                log::warn!("source violates rigid-motion compatibility {k}: {dot:e}");
                return Err(Error::IncompatibleSource(format!(
                    "rigid-motion moment {k} of the source is {dot:e}"
                )));
            }
        }
    }
    // Under pure traction the rows of B are dependent through the rigid
    // motions; pinning three displacement DOFs removes that kernel without
    // the dense multiplier rows a bordered system would need.
    let pinned = match &rigid {
        Some(r) => pin_rigid_dofs(mesh, r),
        None => Vec::new(),
    };
    let kept_u: Vec<usize> = (0..n_u).filter(|d| !pinned.contains(d)).collect();
    let nk = kept_u.len();
    let n = nf + nk;

    let mut trips = Vec::new();
    let a = blocks.a.submatrix(&free, &free);
    trips.extend(a.triplets());
    let b = blocks.b.submatrix(&kept_u, &free);
    for (i, j, v) in b.triplets() {
        trips.push((nf + i, j, v));
        trips.push((j, nf + i, v));
    }
    let k = SparseSym::from_triplets(n, trips)?;
    let mut rhs = vec![0.0; n];
    for (l, &g) in free.iter().enumerate() {
        rhs[l] = rhs_sigma[g];
    }
    for (l, &g) in kept_u.iter().enumerate() {
        rhs[nf + l] = rhs_u[g];
    }
    let signs: Vec<i8> = (0..n).map(|i| if i < nf { 1 } else { -1 }).collect();
    let fact = factorize(&k, &signs, "fine saddle system")?;
    let x = fact.solve(&rhs)?;
    let kx = k.as_mat().mul_vec(&x);
    let res = kx.iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let mut sigma = vec![0.0; n_sigma];
    for (l, &g) in free.iter().enumerate() {
        sigma[g] = x[l];
    }
    let mut u = vec![0.0; n_u];
    for (l, &g) in kept_u.iter().enumerate() {
        u[g] = x[nf + l];
    }
    let Some(r) = rigid else {
        return Ok(SolutionPair {
            sigma,
            u,
            residual: res / (1.0 + norm_inf(&rhs)),
        });
    };

    // The pinned system is much worse conditioned than the problem itself,
    // so refine against the bordered system [A Bᵀ 0; B 0 Mr; 0 (Mr)ᵀ 0]
    // using the pinned factorization as approximate inverse.
    let bordered = RigidBorder::new(&blocks.m, r);
    u = bordered.normalize(&u);
    let a_full = &blocks.a;
    let b_full = &blocks.b;
    let mut mu = [0.0; 3];
    let mut residual = f64::INFINITY;
    let bnorm = norm_inf(rhs_sigma).max(norm_inf(rhs_u));
    for step in 0..=FINE_REFINEMENT {
        // residuals of the full system on free stress DOFs
        let mut r_sigma = a_full.mul_vec(&sigma);
        let btu = b_full.mul_t_vec(&u);
        for (i, v) in r_sigma.iter_mut().enumerate() {
            *v = rhs_sigma[i] - *v - btu[i];
        }
        let bs = b_full.mul_vec(&sigma);
        let mut r_u: Vec<f64> = rhs_u.iter().zip(&bs).map(|(f, b)| f - b).collect();
        for k in 0..3 {
            axpy(-mu[k], &bordered.mr[k], &mut r_u);
        }
        let r_c: [f64; 3] = std::array::from_fn(|k| -dot(&bordered.mr[k], &u));
        residual = free
            .iter()
            .map(|&g| r_sigma[g].abs())
            .chain(r_u.iter().map(|v| v.abs()))
            .chain(r_c.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            / (1.0 + bnorm);
        if step == FINE_REFINEMENT {
            break;
        }
        // multiplier update restores compatibility of the displacement residual
        let dmu = bordered.solve_gram(&std::array::from_fn(|k| dot(&bordered.r[k], &r_u)));
        for k in 0..3 {
            axpy(-dmu[k], &bordered.mr[k], &mut r_u);
            mu[k] += dmu[k];
        }
        let mut rr = vec![0.0; n];
        for (l, &g) in free.iter().enumerate() {
            rr[l] = r_sigma[g];
        }
        for (l, &g) in kept_u.iter().enumerate() {
            rr[nf + l] = r_u[g];
        }
        let dx = fact.solve(&rr)?;
        for (l, &g) in free.iter().enumerate() {
            sigma[g] += dx[l];
        }
        let mut du = vec![0.0; n_u];
        for (l, &g) in kept_u.iter().enumerate() {
            du[g] = dx[nf + l];
        }
        let alpha = bordered.solve_gram(&std::array::from_fn(|k| r_c[k] - dot(&bordered.mr[k], &du)));
        for k in 0..3 {
            axpy(alpha[k], &bordered.r[k], &mut du);
        }
        for (a, d) in u.iter_mut().zip(&du) {
            *a += d;
        }
    }
    Ok(SolutionPair { sigma, u, residual })
}

const FINE_REFINEMENT: usize = 3;

/// Rigid motions `r_k`, their mass images `M r_k` and the Gram matrix
/// `(M r_k)ᵀ r_j`.
struct RigidBorder {
    r: [Vec<f64>; 3],
    mr: [Vec<f64>; 3],
    gram: nalgebra::Matrix3<f64>,
}

impl RigidBorder {
    fn new(m: &SparseMat, r: [Vec<f64>; 3]) -> Self {
        let mr: [Vec<f64>; 3] = std::array::from_fn(|k| m.mul_vec(&r[k]));
        let gram = nalgebra::Matrix3::from_fn(|i, j| dot(&mr[i], &r[j]));
        Self { r, mr, gram }
    }

    fn solve_gram(&self, rhs: &[f64; 3]) -> [f64; 3] {
        let x = self
            .gram
            .lu()
            .solve(&nalgebra::Vector3::from_column_slice(rhs))
            .unwrap_or_else(nalgebra::Vector3::zeros);
        [x[0], x[1], x[2]]
    }

    /// Removes the rigid part of `u` in the `M` inner product.
    fn normalize(&self, u: &[f64]) -> Vec<f64> {
        let c = self.solve_gram(&std::array::from_fn(|k| dot(&self.mr[k], u)));
        let mut out = u.to_vec();
        for k in 0..3 {
            axpy(-c[k], &self.r[k], &mut out);
        }
        out
    }
}

/// Three displacement DOFs, taken from the first and last triangles so the
/// lever arm spans the domain, on which the rigid motions are best
/// conditioned.
fn pin_rigid_dofs(mesh: &MeshHierarchy, r: &[Vec<f64>; 3]) -> Vec<usize> {
    let layout = mesh.dofs();
    let last = mesh.n_triangles() - 1;
    let cand: Vec<usize> = [0, last]
        .into_iter()
        .flat_map(|t| (0..3).flat_map(move |m| (0..2).map(move |c| layout.u_dof(t, m, c))))
        .collect();
    let mut best = (0.0, Vec::new());
    // strict improvement keeps the first maximizer
    for i in 0..cand.len() {
        for j in (i + 1)..cand.len() {
            for k in (j + 1)..cand.len() {
                let rows = [cand[i], cand[j], cand[k]];
                let m = nalgebra::Matrix3::from_fn(|p, q| r[q][rows[p]]);
                let d = m.determinant().abs();
                if d > best.0 {
                    best = (d, rows.to_vec());
                }
            }
        }
    }
    best.1
}

/// Removes the rigid-motion part of `u` in the `M` inner product.
pub fn remove_rigid_part(mesh: &MeshHierarchy, m: &SparseMat, u: &[f64]) -> Vec<f64> {
    RigidBorder::new(m, rigid_motions(mesh)).normalize(u)
}

/// Operator blocks restricted to a patch.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    /// Global ids of the local free stress DOFs, ascending.
    pub sigma_dofs: Vec<usize>,
    /// Global ids of the local displacement DOFs, ascending.
    pub u_dofs: Vec<usize>,
    pub a: SparseMat,
    pub b: SparseMat,
    pub s: SparseMat,
    pub m: SparseMat,
}

/// Restricts `blocks` to `patch`, dropping the stress DOFs that vanish on
/// the patch boundary under `bc`.
pub fn restrict_blocks(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    patch: &PatchRegion,
    bc: &BcSpec,
) -> LocalBlocks {
    let fixed = patch_boundary_stress_dofs(mesh, patch, bc);
    let sigma_dofs: Vec<usize> = patch
        .sigma_dofs
        .iter()
        .copied()
        .filter(|d| fixed.binary_search(d).is_err())
        .collect();
    let u_dofs = patch.u_dofs.clone();
    let a = blocks.a.submatrix(&sigma_dofs, &sigma_dofs);
    let b = blocks.b.submatrix(&u_dofs, &sigma_dofs);
    let s = blocks.s.submatrix(&u_dofs, &u_dofs);
    let m = blocks.m.submatrix(&u_dofs, &u_dofs);
    LocalBlocks {
        sigma_dofs,
        u_dofs,
        a,
        b,
        s,
        m,
    }
}

