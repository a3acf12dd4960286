use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::prelude::*;
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};

/// Dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseSym {
    mat: Mat<f64>,
}

impl DenseSym {
    /// Wraps `mat`, checking that it is square, finite and symmetric to
    /// `1e-12` relative to its largest entry. The stored matrix is the exact
    /// symmetric part.
    pub fn new(mat: Mat<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                n,
                mat.ncols()
            )));
        }
        let mut scale = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                let v = mat[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("dense entry ({i}, {j})")));
                }
                scale = scale.max(v.abs());
            }
        }
        for j in 0..n {
            for i in (j + 1)..n {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(mat))
    }

    /// Wraps `mat` after replacing it by `(mat + matᵀ) / 2`, without the
    /// symmetry check. Used for products such as `B A⁻¹ Bᵀ` whose asymmetry
    /// is pure rounding.
    pub fn symmetrized(mut mat: Mat<f64>) -> Self {
        let n = mat.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (mat[(i, j)] + mat[(j, i)]);
                mat[(i, j)] = v;
                mat[(j, i)] = v;
            }
        }
        Self { mat }
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Self::new(Mat::from_fn(n, n, |i, j| entries[i * n + j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 }),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.mat
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.mat[(i, j)] * x[j]).sum())
            .collect()
    }

    /// Row-sum (infinity) norm.
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.mat[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// One generalized eigenpair.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Smallest `n_ev` eigenpairs of `K v = λ S v`, eigenvalues ascending,
/// eigenvectors `S`-orthonormal and sign-fixed so that their
/// largest-magnitude entry is positive.
///
/// `S` is reduced by Cholesky, `C = L⁻¹ K L⁻ᵀ` is diagonalized densely and the
/// eigenvectors are mapped back with `L⁻ᵀ`.
pub fn sym_gen_eig(k: &DenseSym, s: &DenseSym, n_ev: usize) -> Result<Vec<EigenPair>> {
    let n = k.dim();
    if s.dim() != n {
        return Err(Error::Dimension(format!(
            "pencil dimensions differ: {} vs {}",
            n,
            s.dim()
        )));
    }
    if n_ev > n {
        return Err(Error::InvalidInput(format!(
            "requested {n_ev} eigenpairs of a {n}x{n} pencil"
        )));
    }
    for m in [k.as_mat(), s.as_mat()] {
        if (0..n).any(|j| (0..n).any(|i| !m[(i, j)].is_finite())) {
            return Err(Error::NonFinite("eigenproblem input".into()));
        }
    }
    let llt = s
        .as_mat()
        .llt(Side::Lower)
        .map_err(|e| Error::NotPositiveDefinite {
            context: format!("mass matrix of generalized eigenproblem ({e:?})"),
        })?;
    let l = llt.L();

    // C = L⁻¹ K L⁻ᵀ, computed as L⁻¹ (L⁻¹ K)ᵀ.
    let mut c = k.as_mat().clone();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let mut c = c.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = DenseSym::symmetrized(c);

    let evd = c
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let mut vectors = evd.U().to_owned();
    solve_upper_triangular_in_place(l.transpose(), vectors.as_mut(), Par::Seq);

    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|j| {
            let mut vector: Vec<f64> = (0..n).map(|i| vectors[(i, j)]).collect();
            fix_sign(&mut vector);
            EigenPair {
                value: values[j],
                vector,
            }
        })
        .collect();
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    pairs.truncate(n_ev);
    Ok(pairs)
}

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// a relative `1e-8` of the maximum count as ties; the first one decides.
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .copied()
        .find(|x| x.abs() >= (1.0 - 1e-8) * max)
        .unwrap_or(0.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dense square solve with partial-pivoting LU. Fails on non-finite output.
pub fn dense_solve(m: &Mat<f64>, rhs: &[f64], label: &str) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n || rhs.len() != n {
        return Err(Error::Dimension(format!("dense solve `{label}`")));
    }
    let lu = m.partial_piv_lu();
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let mut out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            system: label.to_string(),
            estimate: f64::INFINITY,
        });
    }
    // one step of iterative refinement
    let mut r = rhs.to_vec();
    for j in 0..n {
        let xj = out[j];
        if xj != 0.0 {
            for i in 0..n {
                r[i] -= m[(i, j)] * xj;
            }
        }
    }
    let corr = lu.solve(&Mat::from_fn(n, 1, |i, _| r[i]));
    for (i, o) in out.iter_mut().enumerate() {
        *o += corr[(i, 0)];
    }
    Ok(out)
}

/// Greedy pivoted Cholesky on a symmetric positive semidefinite Gram matrix.
///
/// Returns the indices of a maximal numerically independent set of columns,
/// in ascending order. A column is dropped once the largest remaining Schur
/// diagonal falls below `rel_tol` times the largest initial diagonal.
pub fn select_independent_columns(gram: &Mat<f64>, rel_tol: f64) -> Vec<usize> {
    let n = gram.nrows();
    let mut diag: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    let scale = diag.iter().copied().fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Vec::new();
    }
    let mut l = Mat::<f64>::zeros(n, n);
    let mut used = vec![false; n];
    let mut chosen = Vec::new();
    for k in 0..n {
        let mut best = None;
        let mut best_val = rel_tol * scale;
        for i in 0..n {
            if !used[i] && diag[i] > best_val {
                best_val = diag[i];
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        used[p] = true;
        chosen.push(p);
        let pivot = best_val.sqrt();
        for i in 0..n {
            if used[i] && i != p {
                continue;
            }
            let mut v = gram[(i, p)];
            for m in 0..k {
                v -= l[(i, m)] * l[(p, m)];
            }
            l[(i, k)] = v / pivot;
        }
        for i in 0..n {
            if !used[i] {
                diag[i] -= l[(i, k)] * l[(i, k)];
            }
        }
    }
    chosen.sort_unstable();
    chosen
}
