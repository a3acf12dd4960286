//! Localized multiscale stress basis functions on oversampled patches.
//!
//! For an auxiliary function `p` of cell `i`, the patch problem is
//!
//! ```text
//! [ A   Bᵀ   0  ] [ψ]   [  0  ]
//! [ B   0   −SQ ] [q] = [ −Sp ]
//! [ 0  −QᵀS  I  ] [w]   [  0  ]
//! ```
//!
//! where `Q` holds the auxiliary vectors of the cells inside the patch.
//! Eliminating `w = QᵀS q` gives the relaxed constraint `Bψ − SQQᵀS q = −Sp`
//! while keeping the matrix sparse.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{restrict_blocks, LocalBlocks, OperatorBlocks};
use crate::geometry::{oversample, MeshHierarchy, PatchRegion};
use crate::numerics::{factorize, norm_inf, Factorization, SparseSym};
use crate::spectral::AuxSpace;

/// One multiscale stress function with its companion displacement.
#[derive(Debug, Clone)]
pub struct MsBasisFn {
    /// Owning coarse cell.
    pub cell: usize,
    /// Global auxiliary column.
    pub column: usize,
    pub layers: usize,
    /// Global stress DOFs carrying `psi`, ascending.
    pub support: Arc<Vec<usize>>,
    pub psi: Vec<f64>,
    /// Global displacement DOFs carrying `q`, ascending.
    pub q_support: Arc<Vec<usize>>,
    /// Empty when dropped after a bulk build.
    pub q: Vec<f64>,
    /// Backward error of the patch solve.
    pub residual: f64,
}

impl MsBasisFn {
    /// Stress coefficients in global numbering.
    pub fn psi_global(&self, n_sigma: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_sigma];
        for (&d, &x) in self.support.iter().zip(&self.psi) {
            v[d] = x;
        }
        v
    }

    /// Displacement coefficients in global numbering.
    pub fn q_global(&self, n_u: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_u];
        for (&d, &x) in self.q_support.iter().zip(&self.q) {
            v[d] = x;
        }
        v
    }

    /// Coefficient on global stress DOF `d` (zero off the support).
    pub fn value_at(&self, d: usize) -> f64 {
        match self.support.binary_search(&d) {
            Ok(k) => self.psi[k],
            Err(_) => 0.0,
        }
    }
}

/// Factored patch problem shared by all functions of one cell.
pub struct PatchSystem {
    pub patch: PatchRegion,
    pub local: LocalBlocks,
    /// Auxiliary columns of the patch cells, ascending.
    pub cols: Vec<usize>,
    /// `S Q` restricted to the patch, one local vector per column.
    sq: Vec<Vec<f64>>,
    matrix: SparseSym,
    fact: Factorization,
}

impl PatchSystem {
    pub fn new(
        mesh: &MeshHierarchy,
        blocks: &OperatorBlocks,
        aux: &AuxSpace,
        center: usize,
        layers: usize,
    ) -> Result<Self> {
        let patch = oversample(mesh, center, layers);
        let local = restrict_blocks(mesh, blocks, &patch, &blocks.bc);
        let (ns, nu) = (local.sigma_dofs.len(), local.u_dofs.len());

        let mut cols = Vec::new();
        let mut sq = Vec::new();
        for &c in &patch.cells {
            let basis = &aux.cells[c];
            let lpos: Vec<usize> = basis
                .u_dofs
                .iter()
                .map(|d| patch.local_u(*d).expect("cell DOFs lie in the patch"))
                .collect();
            for (j, v) in basis.vectors.iter().enumerate() {
                let mut qv = vec![0.0; nu];
                for (&l, &x) in lpos.iter().zip(v) {
                    qv[l] = x;
                }
                sq.push(local.s.mul_vec(&qv));
                cols.push(aux.col_range(c).start + j);
            }
        }
        let nw = cols.len();
        let n = ns + nu + nw;
        let mut trips = Vec::with_capacity(local.a.nnz() + 2 * local.b.nnz() + 2 * nw * 64 + nw);
        trips.extend(local.a.triplets());
        for (i, j, v) in local.b.triplets() {
            trips.push((ns + i, j, v));
            trips.push((j, ns + i, v));
        }
        for (k, col) in sq.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    trips.push((ns + i, ns + nu + k, -v));
                    trips.push((ns + nu + k, ns + i, -v));
                }
            }
            trips.push((ns + nu + k, ns + nu + k, 1.0));
        }
        let matrix = SparseSym::from_triplets(n, trips)?;
        let label = format!("basis patch of cell {center} with {layers} layers");
        let signs: Vec<i8> = (0..n).map(|i| if (ns..ns + nu).contains(&i) { -1 } else { 1 }).collect();
        let fact = factorize(&matrix, &signs, &label)?;
        Ok(Self {
            patch,
            local,
            cols,
            sq,
            matrix,
            fact,
        })
    }

    /// Solves for the given global auxiliary columns (all inside the patch).
    pub fn solve(&self, columns: &[usize], owner: usize) -> Result<Vec<MsBasisFn>> {
        let (ns, nu, nw) = (self.local.sigma_dofs.len(), self.local.u_dofs.len(), self.cols.len());
        let mut rhs = Vec::with_capacity(columns.len());
        for &c in columns {
            let k = self.cols.binary_search(&c).map_err(|_| {
                Error::InvalidInput(format!("auxiliary column {c} is outside the patch"))
            })?;
            let mut b = vec![0.0; ns + nu + nw];
            for (i, &v) in self.sq[k].iter().enumerate() {
                b[ns + i] = -v;
            }
            rhs.push(b);
        }
        let xs = self.fact.solve_many(&rhs)?;
        let support = Arc::new(self.local.sigma_dofs.clone());
        let q_support = Arc::new(self.local.u_dofs.clone());
        Ok(columns
            .iter()
            .zip(xs.iter().zip(&rhs))
            .map(|(&c, (x, b))| {
                let r = self.matrix.as_mat().mul_vec(x);
                let res = r.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
                MsBasisFn {
                    cell: owner,
                    column: c,
                    layers: self.patch.layers,
                    support: Arc::clone(&support),
                    psi: x[..ns].to_vec(),
                    q_support: Arc::clone(&q_support),
                    q: x[ns..ns + nu].to_vec(),
                    residual: res / (1.0 + norm_inf(b)),
                }
            })
            .collect())
    }
}

/// Basis function for auxiliary column `j` of cell `i` on the patch with
/// `layers` layers.
pub fn solve_ms_basis(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    aux: &AuxSpace,
    i: usize,
    j: usize,
    layers: usize,
) -> Result<MsBasisFn> {
    let range = aux.col_range(i);
    if j >= range.len() {
        return Err(Error::InvalidInput(format!("cell {i} has {} auxiliary functions", range.len())));
    }
    let sys = PatchSystem::new(mesh, blocks, aux, i, layers)?;
    Ok(sys.solve(&[range.start + j], i)?.pop().unwrap())
}

/// Global (non-localized) basis function: the patch is the whole domain.
pub fn solve_global_basis(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    aux: &AuxSpace,
    i: usize,
    j: usize,
) -> Result<MsBasisFn> {
    solve_ms_basis(mesh, blocks, aux, i, j, mesh.nc())
}

/// All multiscale stress functions for one layer count.
#[derive(Debug, Clone)]
pub struct MsStressSpace {
    pub layers: usize,
    /// Ordered by auxiliary column (cell-major, then eigen-index).
    pub columns: Vec<MsBasisFn>,
}

impl MsStressSpace {
    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

/// Builds every basis function with `layers` oversampling layers. With
/// `keep_q = false` the companion displacements are dropped to save memory.
pub fn build_ms_space(
    mesh: &MeshHierarchy,
    blocks: &OperatorBlocks,
    aux: &AuxSpace,
    layers: usize,
    keep_q: bool,
) -> Result<MsStressSpace> {
    let per_cell: Vec<Vec<MsBasisFn>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|i| -> Result<Vec<MsBasisFn>> {
            let sys = PatchSystem::new(mesh, blocks, aux, i, layers)?;
            let cols: Vec<usize> = aux.col_range(i).collect();
            let mut fns = sys.solve(&cols, i)?;
            for f in &mut fns {
                if f.psi.iter().all(|&v| v == 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "basis function {} of cell {i} vanishes",
                        f.column
                    )));
                }
                if !keep_q {
                    f.q = Vec::new();
                    f.q_support = Arc::new(Vec::new());
                }
            }
            Ok(fns)
        })
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.context(format!("multiscale basis of cell {i}"))))
        .collect::<Result<_>>()?;
    Ok(MsStressSpace {
        layers,
        columns: per_cell.into_iter().flatten().collect(),
    })
}

/// Energies `e_m = ‖ψ‖²_𝒜` outside the patch with `m` layers around cell
/// `i`, for `m = 0..=nc`.
pub fn decay_profile(mesh: &MeshHierarchy, blocks: &OperatorBlocks, i: usize, psi: &MsBasisFn) -> Vec<f64> {
    let sigma = psi.psi_global(blocks.n_sigma());
    let energy: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| blocks.triangle_energy(mesh, t, &sigma))
        .collect();
    (0..=mesh.nc())
        .map(|m| {
            let patch = oversample(mesh, i, m);
            energy
                .iter()
                .enumerate()
                .filter(|(t, _)| !patch.contains_triangle(*t))
                .map(|(_, e)| e)
                .sum()
        })
        .collect()
}
