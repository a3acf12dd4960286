//! Local spectral problems on the coarse cells and the auxiliary
//! displacement space built from their lowest eigenfunctions.

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, Par, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{restrict_blocks, BcKind, BcSpec, OperatorBlocks};
use crate::geometry::{oversample, MeshHierarchy};
use crate::numerics::{sym_gen_eig, DenseSym, SparseMat};

/// Relative gap below which neighbouring eigenvalues count as one cluster.
const CLUSTER_TOL: f64 = 1e-10;

/// Lowest eigenpairs of one coarse cell.
#[derive(Debug, Clone)]
pub struct AuxBasis {
    pub cell: usize,
    /// Global displacement DOFs of the cell, ascending.
    pub u_dofs: Vec<usize>,
    /// All eigenvalues of the cell problem, ascending.
    pub eigenvalues: Vec<f64>,
    /// The retained eigenvectors over `u_dofs`, `S`-orthonormal.
    pub vectors: Vec<Vec<f64>>,
}

impl AuxBasis {
    /// Number of retained eigenvectors.
    pub fn n_basis(&self) -> usize {
        self.vectors.len()
    }

    /// First eigenvalue left out of the basis.
    pub fn next_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.n_basis()]
    }
}

/// Solves `B A⁻¹ Bᵀ p = λ S p` on cell `cell` with zero traction on its whole
/// boundary and keeps the `nbf` lowest eigenvectors, extended to the end of
/// a degenerate cluster straddling the cut. `n_extra` more eigenvalues must
/// exist beyond the kept ones.
pub fn solve_cell_eig(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    cell: usize,
    nbf: usize,
    n_extra: usize,
) -> Result<AuxBasis> {
    if nbf < 3 {
        return Err(Error::InvalidInput(format!(
            "at least 3 basis functions are needed to span rigid motions, got {nbf}"
        )));
    }
    let patch = oversample(mesh, cell, 0);
    let local = restrict_blocks(mesh, blocks, &patch, &BcSpec::new(BcKind::Neumann));
    let n_u = local.u_dofs.len();
    if nbf + n_extra > n_u {
        return Err(Error::InvalidInput(format!(
            "{nbf} + {n_extra} eigenpairs requested on a cell with {n_u} displacement DOFs"
        )));
    }
    let a = local.a.to_dense();
    let llt = a.llt(Side::Lower).map_err(|e| Error::NotPositiveDefinite {
        context: format!("local compliance matrix of cell {cell} ({e:?})"),
    })?;
    // Y = L⁻¹ Bᵀ, K = Yᵀ Y
    let mut y = local.b.transpose().to_dense();
    solve_lower_triangular_in_place(llt.L(), y.as_mut(), Par::Seq);
    let mut k = Mat::<f64>::zeros(n_u, n_u);
    matmul(k.as_mut(), Accum::Replace, y.transpose(), y.as_ref(), 1.0, Par::Seq);
    let k = DenseSym::symmetrized(k);
    let s = DenseSym::symmetrized(local.s.to_dense());

    let pairs = sym_gen_eig(&k, &s, n_u).map_err(|e| e.context(format!("cell {cell}")))?;
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    let mut count = nbf;
    while count < n_u
        && (eigenvalues[count] - eigenvalues[count - 1]).abs()
            <= CLUSTER_TOL * (1.0 + eigenvalues[count - 1].abs())
    {
        count += 1;
    }
    if count + n_extra > n_u {
        return Err(Error::Eigen(format!(
            "cell {cell}: eigenvalue cluster exhausts the local space"
        )));
    }
    if count > nbf {
        log::info!("cell {cell}: basis count raised from {nbf} to {count} to close a cluster");
    }
    let vectors = pairs.into_iter().take(count).map(|p| p.vector).collect();
    Ok(AuxBasis {
        cell,
        u_dofs: local.u_dofs,
        eigenvalues,
        vectors,
    })
}

/// Auxiliary displacement space over all coarse cells.
#[derive(Debug, Clone)]
pub struct AuxSpace {
    pub cells: Vec<AuxBasis>,
    /// Requested basis count per cell.
    pub nbf: usize,
    /// `min_i λ^i_{l_i + 1}`.
    pub lambda: f64,
    q: SparseMat,
    col_offsets: Vec<usize>,
}

impl AuxSpace {
    /// Column map `n_u × Σ l_i`, cell-major.
    pub fn q(&self) -> &SparseMat {
        &self.q
    }

    pub fn n_cols(&self) -> usize {
        self.q.ncols()
    }

    /// Columns `col_offsets[i]..col_offsets[i+1]` belong to cell `i`.
    pub fn col_range(&self, cell: usize) -> std::ops::Range<usize> {
        self.col_offsets[cell]..self.col_offsets[cell + 1]
    }

    /// Whether any cell kept more than `nbf` vectors.
    pub fn adjusted_cells(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .filter(|c| c.n_basis() != self.nbf)
            .map(|c| (c.cell, c.n_basis()))
            .collect()
    }

    /// Global coefficient vector of column `col`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        let cell = self.col_offsets.partition_point(|&o| o <= col) - 1;
        let basis = &self.cells[cell];
        let mut v = vec![0.0; self.q.nrows()];
        for (&d, &x) in basis.u_dofs.iter().zip(&basis.vectors[col - self.col_offsets[cell]]) {
            v[d] = x;
        }
        v
    }
}

/// Runs the cell eigenproblems over all coarse cells.
pub fn build_aux_space(mesh: &MeshHierarchy, blocks: &OperatorBlocks, nbf: usize) -> Result<AuxSpace> {
    let cells: Vec<AuxBasis> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| solve_cell_eig(mesh, blocks, c, nbf, 1))
        .collect::<Result<_>>()?;
    let lambda = cells
        .iter()
        .map(AuxBasis::next_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    if !(lambda > 0.0) {
        return Err(Error::Eigen(format!("first excluded eigenvalue {lambda:e} is not positive")));
    }
    let mut col_offsets = vec![0];
    let mut trips = Vec::new();
    for b in &cells {
        let off = *col_offsets.last().unwrap();
        for (j, v) in b.vectors.iter().enumerate() {
            for (&d, &x) in b.u_dofs.iter().zip(v) {
                trips.push((d, off + j, x));
            }
        }
        col_offsets.push(off + b.n_basis());
    }
    let q = SparseMat::from_triplets(blocks.n_u(), *col_offsets.last().unwrap(), trips)?;
    Ok(AuxSpace {
        cells,
        nbf,
        lambda,
        q,
        col_offsets,
    })
}

/// `π v = Q Qᵀ S v`.
pub fn project_pi(aux: &AuxSpace, s: &SparseMat, v: &[f64]) -> Vec<f64> {
    let c = aux.q().mul_t_vec(&s.mul_vec(v));
    aux.q().mul_vec(&c)
}
