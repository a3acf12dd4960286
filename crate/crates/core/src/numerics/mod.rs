//! Linear-algebra kernels: dense symmetric generalized eigensolves and
//! sparse symmetric-indefinite factorization.
//!
//! Dense work goes through `faer`; sparse matrices are kept in a small
//! compressed-row type so that assembly, extraction and products stay
//! deterministic and cheap to reason about.

mod dense;
mod sparse;

pub use dense::{
    dense_solve, select_independent_columns, sym_gen_eig, DenseSym, EigenPair,
};
pub use sparse::{factorize, Factorization, SparseMat, SparseSym};

/// Maximum absolute entry of a slice.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
