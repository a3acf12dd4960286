use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Par, Side};

use super::norm_inf;
use crate::error::{Error, Result};

/// Compressed-row sparse matrix with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMat {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in a
    /// fixed order (stable sort on `(row, col)`), so identical input yields
    /// bitwise identical matrices. Explicit zeros are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("triplet ({r}, {c})")));
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = self * x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `selfᵀ x`
    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transposed matvec input length");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `xᵀ self x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] * cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum::<f64>()
            })
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let k = next[j];
                col_idx[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Extracts `self[rows, cols]`. Output row/column `k` corresponds to
    /// `rows[k]`/`cols[k]`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            buf.clear();
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                let k = col_map[c];
                if k != usize::MAX {
                    buf.push((k, v));
                }
            }
            buf.sort_by_key(|&(k, _)| k);
            for &(k, v) in &buf {
                col_idx.push(k);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: rows.len(),
            ncols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Linear combination `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Dimension("sparse sum of mismatched shapes".into()));
        }
        let trips = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, trips)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Row-sum (infinity) norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest `|self - selfᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }
}

/// Square sparse matrix with symmetric sparsity pattern.
#[derive(Debug, Clone)]
pub struct SparseSym {
    mat: SparseMat,
}

impl SparseSym {
    /// Checks that `mat` is square with a symmetric pattern.
    pub fn new(mat: SparseMat) -> Result<Self> {
        if mat.nrows != mat.ncols {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                mat.nrows, mat.ncols
            )));
        }
        for (i, j, _) in mat.triplets() {
            let (cols, _) = mat.row(j);
            if cols.binary_search(&i).is_err() {
                return Err(Error::InvalidInput(format!(
                    "pattern not symmetric: ({i}, {j}) present, ({j}, {i}) missing"
                )));
            }
        }
        Ok(Self { mat })
    }

    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::new(SparseMat::from_triplets(n, n, triplets)?)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows
    }

    pub fn as_mat(&self) -> &SparseMat {
        &self.mat
    }

    pub fn into_mat(self) -> SparseMat {
        self.mat
    }
}

const MAX_REFINEMENT: usize = 20;
/// Upper bound on the estimated condition number of the scaled matrix.
const SINGULAR_THRESHOLD: f64 = 1e15;
/// Pivots of the scaled matrix below this size are replaced by
/// `±PIVOT_DELTA` with the expected sign.
const PIVOT_EPSILON: f64 = 1e-12;
const PIVOT_DELTA: f64 = 1e-12;
/// Relative residual the condition probe must reach.
const PROBE_RESIDUAL: f64 = 1e-6;

/// Factored symmetric sparse matrix supporting repeated solves.
///
/// The matrix is equilibrated symmetrically to `D M D`, reordered by
/// approximate minimum degree and factored as `L D Lᵀ` without pivoting. Zero or tiny pivots are
/// replaced by small values of the sign the caller expects (`+1` on the
/// positive definite block of a saddle-point matrix, `-1` on the constraint
/// block), which makes the factorization that of a nearby quasi-definite
/// matrix. Every solve is followed by iterative refinement against the
/// original matrix, which removes that perturbation.
pub struct Factorization {
    label: String,
    matrix: SparseMat,
    scale: Vec<f64>,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    solve_scratch: StackReq,
    /// `‖M‖∞`
    norm: f64,
    cond_estimate: f64,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("label", &self.label)
            .field("n", &self.matrix.nrows)
            .field("nnz", &self.matrix.nnz())
            .field("factor_nnz", &self.values.len())
            .field("cond_estimate", &self.cond_estimate)
            .finish()
    }
}

/// Symmetric scaling `d` with unit diagonal on rows that have a diagonal
/// entry; rows with an empty diagonal (constraints) are scaled so that their
/// already-scaled couplings have unit Euclidean norm. `None` if a row is
/// empty.
fn equilibrate(mat: &SparseMat) -> Option<Vec<f64>> {
    let n = mat.nrows;
    let mut scale = vec![0.0; n];
    for (i, s) in scale.iter_mut().enumerate() {
        let d = mat.get(i, i).abs();
        if d > 0.0 {
            *s = 1.0 / d.sqrt();
        }
    }
    for i in 0..n {
        if scale[i] > 0.0 {
            continue;
        }
        let (cols, vals) = mat.row(i);
        let mut sq: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(&j, _)| scale[j] > 0.0)
            .map(|(&j, v)| (v * scale[j]).powi(2))
            .sum();
        if sq == 0.0 {
            // couplings only to other constraint rows
            sq = vals.iter().map(|v| v * v).sum();
        }
        if sq == 0.0 {
            return None;
        }
        scale[i] = 1.0 / sq.sqrt();
    }
    Some(scale)
}

/// Factors `m` with expected pivot signs `signs`. `label` names the system
/// in errors.
pub fn factorize(m: &SparseSym, signs: &[i8], label: &str) -> Result<Factorization> {
    let mat = m.as_mat();
    let n = mat.nrows;
    if signs.len() != n {
        return Err(Error::Dimension(format!("{label}: {} pivot signs for dimension {n}", signs.len())));
    }
    if signs.iter().any(|s| s.abs() != 1) {
        return Err(Error::InvalidInput(format!("{label}: pivot signs must be ±1")));
    }
    let scale = equilibrate(mat).ok_or_else(|| Error::Singular {
        system: label.to_string(),
        estimate: f64::INFINITY,
    })?;
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(label.to_string()));
    }

    // lower triangle of the scaled matrix, column-major = upper triangle of
    // the CSR rows, with every diagonal entry present
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::with_capacity(mat.nnz() / 2 + n);
    let mut vals = Vec::with_capacity(mat.nnz() / 2 + n);
    col_ptr.push(0);
    for j in 0..n {
        let (cols, v) = mat.row(j);
        if cols.binary_search(&j).is_err() {
            row_idx.push(j);
            vals.push(0.0);
        }
        for (&i, &x) in cols.iter().zip(v) {
            if i >= j {
                row_idx.push(i);
                vals.push(scale[i] * x * scale[j]);
            }
        }
        col_ptr.push(row_idx.len());
    }
    let lower = SparseColMat::new(SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx), vals);

    let symbolic = factorize_symbolic_cholesky(
        lower.symbolic(),
        Side::Lower,
        SymmetricOrdering::Amd,
        CholeskySymbolicParams::default(),
    )
    .map_err(|e| Error::Singular {
        system: format!("{label} (symbolic analysis: {e:?})"),
        estimate: f64::INFINITY,
    })?;
    let mut values = vec![0.0; symbolic.len_val()];
    let params = Default::default();
    let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, params));
    symbolic
        .factorize_numeric_ldlt(
            &mut values,
            lower.as_ref(),
            Side::Lower,
            LdltRegularization {
                dynamic_regularization_signs: Some(signs),
                dynamic_regularization_delta: PIVOT_DELTA,
                dynamic_regularization_epsilon: PIVOT_EPSILON,
            },
            Par::Seq,
            MemStack::new(&mut mem),
            params,
        )
        .map_err(|e| Error::Singular {
            system: format!("{label} ({e:?})"),
            estimate: f64::INFINITY,
        })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            system: label.to_string(),
            estimate: f64::INFINITY,
        });
    }
    let solve_scratch = symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
    let mut fact = Factorization {
        label: label.to_string(),
        matrix: mat.clone(),
        scale,
        symbolic,
        values,
        solve_scratch,
        norm: mat.norm_inf(),
        cond_estimate: f64::NAN,
    };

    // Condition probe: ‖M̃‖∞ ‖M̃⁻¹ b‖∞ / ‖b‖∞ bounds cond(M̃) from below. A
    // probe that refinement cannot solve means the matrix is singular.
    let probe: Vec<f64> = (0..n)
        .map(|i| {
            let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            ((h >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    let rhs: Vec<f64> = probe.iter().zip(&fact.scale).map(|(p, d)| p / d).collect();
    let singular = |estimate| Error::Singular {
        system: label.to_string(),
        estimate,
    };
    let y = fact.solve(&rhs).map_err(|_| singular(f64::INFINITY))?;
    // a regularized singular matrix leaves a residual of the size of b
    let r: Vec<f64> = fact.matrix.mul_vec(&y).iter().zip(&rhs).map(|(a, b)| a - b).collect();
    if !(norm_inf(&r) <= PROBE_RESIDUAL * norm_inf(&rhs)) {
        return Err(singular(f64::INFINITY));
    }
    let y_scaled: Vec<f64> = y.iter().zip(&fact.scale).map(|(v, d)| v / d).collect();
    let scaled_norm = (0..n)
        .map(|i| {
            let (cols, v) = fact.matrix.row(i);
            cols.iter().zip(v).map(|(&j, x)| (fact.scale[i] * x * fact.scale[j]).abs()).sum::<f64>()
        })
        .fold(0.0, f64::max);
    let cond_estimate = scaled_norm * norm_inf(&y_scaled) / norm_inf(&probe).max(f64::MIN_POSITIVE);
    if !cond_estimate.is_finite() || cond_estimate > SINGULAR_THRESHOLD {
        return Err(singular(cond_estimate));
    }
    fact.cond_estimate = cond_estimate;
    log::debug!(
        "factorized `{label}`: n = {n}, factor nnz {}, cond estimate {cond_estimate:.3e}",
        fact.values.len()
    );
    Ok(fact)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Lower bound on the condition number of the equilibrated matrix.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Number of stored factor entries.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `M x = b`, refining until the residual stops shrinking. Fails
    /// if the normwise backward error `‖Mx − b‖∞ / (‖M‖∞‖x‖∞ + ‖b‖∞)`
    /// exceeds `1e-10`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_many(&[b.to_vec()])?;
        Ok(x.pop().unwrap())
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        if rhs.iter().any(|b| b.len() != n) {
            return Err(Error::Dimension(format!(
                "right-hand side length differs from `{}` dimension {n}",
                self.label
            )));
        }
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        let mut xs = self.raw_solve(rhs);
        let bnorms: Vec<f64> = rhs.iter().map(|b| norm_inf(b)).collect();
        let residual = |x: &[f64], b: &[f64]| -> Vec<f64> {
            let mx = self.matrix.mul_vec(x);
            b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect()
        };
        let mut res: Vec<Vec<f64>> = xs.iter().zip(rhs).map(|(x, b)| residual(x, b)).collect();
        let mut rnorms: Vec<f64> = res.iter().map(|r| norm_inf(r)).collect();
        let mut active: Vec<usize> = (0..rhs.len()).collect();
        for _ in 0..MAX_REFINEMENT {
            active.retain(|&k| rnorms[k] > 1e-15 * bnorms[k] && rnorms[k].is_finite());
            if active.is_empty() {
                break;
            }
            let corr = self.raw_solve(&active.iter().map(|&k| res[k].clone()).collect::<Vec<_>>());
            let mut progress = Vec::with_capacity(active.len());
            for (&k, c) in active.iter().zip(&corr) {
                let trial: Vec<f64> = xs[k].iter().zip(c).map(|(x, c)| x + c).collect();
                let r = residual(&trial, &rhs[k]);
                let rn = norm_inf(&r);
                // stop once refinement no longer reduces the residual
                if rn < 0.5 * rnorms[k] {
                    progress.push(k);
                }
                if rn < rnorms[k] {
                    xs[k] = trial;
                    res[k] = r;
                    rnorms[k] = rn;
                }
            }
            active = progress;
        }
        for (k, bn) in bnorms.iter().enumerate() {
            let denom = self.norm * norm_inf(&xs[k]) + bn;
            let backward = if denom > 0.0 { rnorms[k] / denom } else { 0.0 };
            if !backward.is_finite() || backward > 1e-10 {
                return Err(Error::Residual {
                    system: self.label.clone(),
                    residual: backward,
                });
            }
        }
        Ok(xs)
    }

    fn raw_solve(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = Mat::from_fn(n, rhs.len(), |i, k| self.scale[i] * rhs[k][i]);
        let ldlt = LdltRef::new(&self.symbolic, &self.values);
        let req = self.symbolic.solve_in_place_scratch::<f64>(rhs.len(), Par::Seq);
        let mut mem = MemBuffer::new(req.or(self.solve_scratch));
        ldlt.solve_in_place_with_conj(Conj::No, m.as_mut(), Par::Seq, MemStack::new(&mut mem));
        (0..rhs.len())
            .map(|k| (0..n).map(|i| self.scale[i] * m[(i, k)]).collect())
            .collect()
    }
}
