//! Coarse multiscale saddle problem and fine-grid reconstruction.

use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{rigid_motions, BcKind, OperatorBlocks};
use crate::geometry::MeshHierarchy;
use crate::msbasis::MsStressSpace;
use crate::numerics::{dense_solve, norm_inf, select_independent_columns};
use crate::spectral::AuxSpace;

/// Relative Schur pivot below which a stress function is treated as
/// linearly dependent on the others (after unit-diagonal scaling).
const DEPENDENCE_TOL: f64 = 1e-10;

/// Galerkin system on `Σ_ms × U_aux`.
#[derive(Debug, Clone)]
pub struct CoarseSystem {
    /// `Ψᵀ A Ψ`
    pub a_ms: Mat<f64>,
    /// `Qᵀ B Ψ`
    pub b_ms: Mat<f64>,
    /// `Qᵀ f`
    pub f: Vec<f64>,
    /// `Ψᵀ g` from displacement boundary data.
    pub g: Vec<f64>,
    /// `(M r_k)ᵀ Q` for the three rigid motions under pure traction conditions.
    pub constraints: Option<Mat<f64>>,
}

impl CoarseSystem {
    pub fn n_psi(&self) -> usize {
        self.a_ms.nrows()
    }

    pub fn n_aux(&self) -> usize {
        self.b_ms.nrows()
    }

    /// Online system size before dependent columns are removed.
    pub fn dim(&self) -> usize {
        self.n_psi() + self.n_aux() + self.constraints.as_ref().map_or(0, |c| c.nrows())
    }
}

/// Coarse coefficients and fine reconstructions.
#[derive(Debug, Clone)]
pub struct MsSolution {
    /// Stress coefficients per multiscale column (zero for dropped columns).
    pub c: Vec<f64>,
    /// Displacement coefficients per auxiliary column.
    pub d: Vec<f64>,
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    /// Stress columns removed as numerically dependent.
    pub dropped: Vec<usize>,
    /// `‖Kx − b‖∞ / (1 + ‖b‖∞)` of the solved system.
    pub residual: f64,
    /// Seconds spent in the dense solve.
    pub online_seconds: f64,
}

/// Assembles the coarse system cell by cell: on each coarse cell `C`,
/// `A_ms += G_Cᵀ A_C G_C` and the rows of `C`'s auxiliary functions get
/// `Q_Cᵀ B_C G_C`, where `G_C` holds the basis values on `C`'s stress DOFs.
pub fn assemble_coarse(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    space: &MsStressSpace,
    aux: &AuxSpace,
    rhs_sigma: &[f64],
    rhs_u_plain: &[f64],
) -> Result<CoarseSystem> {
    let n_psi = space.n_cols();
    let n_aux = aux.n_cols();
    if n_psi != n_aux {
        return Err(Error::Dimension(format!(
            "{n_psi} stress functions for {n_aux} auxiliary functions"
        )));
    }
    if rhs_sigma.len() != blocks.n_sigma() || rhs_u_plain.len() != blocks.n_u() {
        return Err(Error::Dimension("coarse right-hand side".into()));
    }
    let layout = mesh.dofs();

    // columns touching each coarse cell
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_cells()];
    for (k, f) in space.columns.iter().enumerate() {
        let (ci, cj) = mesh.cell_ij(f.cell);
        for c in 0..mesh.n_cells() {
            let (i, j) = mesh.cell_ij(c);
            if ci.abs_diff(i) <= f.layers && cj.abs_diff(j) <= f.layers {
                touching[c].push(k);
            }
        }
    }

    let cell_blocks: Vec<(Mat<f64>, Mat<f64>)> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let tris = mesh.triangles_of_cell(c);
            let mut dofs: Vec<usize> = tris
                .iter()
                .flat_map(|&t| layout.triangle_sigma_dofs(mesh, t))
                .collect();
            dofs.sort_unstable();
            dofs.dedup();
            let cols = &touching[c];
            let g = Mat::from_fn(dofs.len(), cols.len(), |r, k| space.columns[cols[k]].value_at(dofs[r]));
            let a_c = blocks.local_a_dense(mesh, &tris, &dofs);
            let mut ag = Mat::<f64>::zeros(dofs.len(), cols.len());
            matmul(ag.as_mut(), Accum::Replace, a_c.as_ref(), g.as_ref(), 1.0, Par::Seq);
            let mut gag = Mat::<f64>::zeros(cols.len(), cols.len());
            matmul(gag.as_mut(), Accum::Replace, g.transpose(), ag.as_ref(), 1.0, Par::Seq);

            // Q_Cᵀ B_C: rows = auxiliary functions of C, columns = dofs
            let basis = &aux.cells[c];
            let mut qb = Mat::<f64>::zeros(basis.n_basis(), dofs.len());
            for (j, v) in basis.vectors.iter().enumerate() {
                for (&ud, &x) in basis.u_dofs.iter().zip(v) {
                    let (cols_b, vals_b) = blocks.b.row(ud);
                    for (&sd, &bv) in cols_b.iter().zip(vals_b) {
                        let l = dofs.binary_search(&sd).expect("divergence stays in the cell");
                        qb[(j, l)] += x * bv;
                    }
                }
            }
            let mut qbg = Mat::<f64>::zeros(basis.n_basis(), cols.len());
            matmul(qbg.as_mut(), Accum::Replace, qb.as_ref(), g.as_ref(), 1.0, Par::Seq);
            (gag, qbg)
        })
        .collect();

    let mut a_ms = Mat::<f64>::zeros(n_psi, n_psi);
    let mut b_ms = Mat::<f64>::zeros(n_aux, n_psi);
    for (c, (gag, qbg)) in cell_blocks.iter().enumerate() {
        let cols = &touching[c];
        for (kj, &j) in cols.iter().enumerate() {
            for (ki, &i) in cols.iter().enumerate() {
                a_ms[(i, j)] += gag[(ki, kj)];
            }
        }
        let rows = aux.col_range(c);
        for (kj, &j) in cols.iter().enumerate() {
            for (r, row) in rows.clone().enumerate() {
                b_ms[(row, j)] += qbg[(r, kj)];
            }
        }
    }
    for j in 0..n_psi {
        for i in (j + 1)..n_psi {
            let v = 0.5 * (a_ms[(i, j)] + a_ms[(j, i)]);
            a_ms[(i, j)] = v;
            a_ms[(j, i)] = v;
        }
    }

    let f = aux.q().mul_t_vec(rhs_u_plain);
    let g: Vec<f64> = space
        .columns
        .iter()
        .map(|col| col.support.iter().zip(&col.psi).map(|(&d, &x)| x * rhs_sigma[d]).sum())
        .collect();

    let constraints = (blocks.bc.kind == BcKind::Neumann).then(|| {
        let r = rigid_motions(mesh);
        let mut c = Mat::<f64>::zeros(3, n_aux);
        for (k, rk) in r.iter().enumerate() {
            let mr = blocks.m.mul_vec(rk);
            let row = aux.q().mul_t_vec(&mr);
            for (j, v) in row.iter().enumerate() {
                c[(k, j)] = *v;
            }
        }
        c
    });

    Ok(CoarseSystem {
        a_ms,
        b_ms,
        f,
        g,
        constraints,
    })
}

/// Solves the coarse system densely and reconstructs `σ_ms = Ψc`,
/// `u_ms = Qd`. Stress functions that are numerically dependent (pure
/// traction conditions with whole-domain patches) are removed first.
pub fn solve_coarse(system: &CoarseSystem, space: &MsStressSpace, aux: &AuxSpace, n_sigma: usize) -> Result<MsSolution> {
    let n_psi = system.n_psi();
    let n_aux = system.n_aux();
    let a = &system.a_ms;
    let diag: Vec<f64> = (0..n_psi).map(|i| a[(i, i)]).collect();
    if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            context: "coarse stress matrix has a non-positive diagonal".into(),
        });
    }
    let scaled = Mat::from_fn(n_psi, n_psi, |i, j| a[(i, j)] / (diag[i] * diag[j]).sqrt());
    let sel = select_independent_columns(&scaled, DEPENDENCE_TOL);
    let dropped: Vec<usize> = (0..n_psi).filter(|i| sel.binary_search(i).is_err()).collect();
    if !dropped.is_empty() {
        log::info!("coarse solve: {} dependent stress functions removed", dropped.len());
    }

    let ns = sel.len();
    let nc = system.constraints.as_ref().map_or(0, |c| c.nrows());
    let n = ns + n_aux + nc;
    let mut k = Mat::<f64>::zeros(n, n);
    for (li, &i) in sel.iter().enumerate() {
        for (lj, &j) in sel.iter().enumerate() {
            k[(li, lj)] = a[(i, j)];
        }
        for r in 0..n_aux {
            let v = system.b_ms[(r, i)];
            k[(ns + r, li)] = v;
            k[(li, ns + r)] = v;
        }
    }
    if let Some(c) = &system.constraints {
        for q in 0..nc {
            for r in 0..n_aux {
                k[(ns + n_aux + q, ns + r)] = c[(q, r)];
                k[(ns + r, ns + n_aux + q)] = c[(q, r)];
            }
        }
    }
    let mut rhs = vec![0.0; n];
    for (li, &i) in sel.iter().enumerate() {
        rhs[li] = system.g[i];
    }
    rhs[ns..ns + n_aux].copy_from_slice(&system.f);

    let start = Instant::now();
    let x = dense_solve(&k, &rhs, "coarse multiscale system").map_err(|e| match e {
        Error::Singular { system, estimate } => Error::Singular {
            system: format!("{system} (rigid-motion constraints missing?)"),
            estimate,
        },
        other => other,
    })?;
    let online_seconds = start.elapsed().as_secs_f64();

    let mut res = 0.0_f64;
    for i in 0..n {
        let ki: f64 = (0..n).map(|j| k[(i, j)] * x[j]).sum();
        res = res.max((ki - rhs[i]).abs());
    }
    let residual = res / (1.0 + norm_inf(&rhs));
    if !(residual <= 1e-8) {
        return Err(Error::Residual {
            system: "coarse multiscale system".into(),
            residual,
        });
    }

    let mut c = vec![0.0; n_psi];
    for (li, &i) in sel.iter().enumerate() {
        c[i] = x[li];
    }
    let d = x[ns..ns + n_aux].to_vec();
    let mut sigma = vec![0.0; n_sigma];
    for (col, &ci) in space.columns.iter().zip(&c) {
        if ci != 0.0 {
            for (&dof, &v) in col.support.iter().zip(&col.psi) {
                sigma[dof] += ci * v;
            }
        }
    }
    let u = aux.q().mul_vec(&d);
    Ok(MsSolution {
        c,
        d,
        sigma,
        u,
        dropped,
        residual,
        online_seconds,
    })
}
