mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use common::*;
use mixcem::fem::BcKind;
use mixcem::materials::PatternSpec;
use mixcem::fem::BcSpec;
use mixcem::numerics::dot;
use mixcem::spectral::{project_pi, solve_cell_eig};

/// Assembles the cell problem for the coarse cell `[0, H]²` from element
/// matrices with its own DOF bookkeeping and solves it with nalgebra.
fn brute_force_spectrum(s: &Setup) -> Vec<f64> {
    let mesh = &s.mesh;
    let hc = mesh.coarse_h();
    let layout = mesh.dofs();
    let inside = |p: [f64; 2]| p[0] < hc && p[1] < hc;
    let tris: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| inside(barycenter(mesh, t))).collect();
    let on_cell_boundary = |e: usize| {
        let [a, b] = mesh.edge(e).vertices.map(|v| mesh.vertex(v));
        let same = |k: usize, c: f64| (a[k] - c).abs() < 1e-12 && (b[k] - c).abs() < 1e-12;
        same(0, 0.0) || same(0, hc) || same(1, 0.0) || same(1, hc)
    };
    let mut sdofs: Vec<usize> = tris
        .iter()
        .flat_map(|&t| layout.triangle_sigma_dofs(mesh, t))
        .filter(|&d| d >= 4 * mesh.n_edges() || !on_cell_boundary(d / 4))
        .collect();
    sdofs.sort_unstable();
    sdofs.dedup();
    let ns = sdofs.len();
    let nu = 6 * tris.len();
    let mut a = DMatrix::<f64>::zeros(ns, ns);
    let mut b = DMatrix::<f64>::zeros(nu, ns);
    let mut m = DMatrix::<f64>::zeros(nu, nu);
    for (lt, &t) in tris.iter().enumerate() {
        let g = layout.triangle_sigma_dofs(mesh, t);
        let l: Vec<Option<usize>> = g.iter().map(|d| sdofs.binary_search(d).ok()).collect();
        let ea = s.blocks.element_a(t);
        let eb = s.blocks.element_b(t);
        for i in 0..15 {
            let Some(li) = l[i] else { continue };
            for j in 0..15 {
                if let Some(lj) = l[j] {
                    a[(li, lj)] += ea[i][j];
                }
            }
            for r in 0..6 {
                b[(6 * lt + r, li)] += eb[r][i];
            }
        }
        let w = s.field.of_triangle(t).k_tilde * mesh.triangle_area() / 12.0;
        for p in 0..3 {
            for q in 0..3 {
                for c in 0..2 {
                    m[(6 * lt + 2 * p + c, 6 * lt + 2 * q + c)] += if p == q { 2.0 * w } else { w };
                }
            }
        }
    }
    let k = &b * a.try_inverse().unwrap() * b.transpose();
    let l = m.cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * k * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn lowest_nonrigid_eigenvalue_matches_dense_oracle() {
    let s = setup(4, 8, &PatternSpec::uniform(1.0, 0.35), BcSpec::new(BcKind::Neumann));
    let basis = solve_cell_eig(&s.mesh, &s.blocks, 0, 3, 1).unwrap();
    let oracle = brute_force_spectrum(&s);
    assert_eq!(oracle.len(), basis.eigenvalues.len());
    assert_relative_eq!(basis.eigenvalues[3], oracle[3], max_relative = 1e-9);
    for (a, b) in basis.eigenvalues.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn kernel_is_exactly_the_rigid_motions() {
    for s in [uniform(4, 16, BcKind::Neumann), inclusions(4, 16, 1e4, BcKind::Neumann), inclusions(4, 16, 1e6, BcKind::Neumann)] {
        let aux = aux_space(&s, 4);
        for cell in &aux.cells {
            let ev = &cell.eigenvalues;
            assert!(ev[2] <= 1e-8, "cell {}: λ₃ = {:e}", cell.cell, ev[2]);
            assert!(ev[3] > 1e-6, "cell {}: λ₄ = {:e}", cell.cell, ev[3]);
            assert!(ev.iter().all(|&l| l >= -1e-10));
        }
    }
}

#[test]
fn congruent_cells_share_spectra() {
    let s = uniform(4, 16, BcKind::Neumann);
    let e0 = solve_cell_eig(&s.mesh, &s.blocks, 0, 6, 1).unwrap().eigenvalues;
    for cell in [5, 10, 15] {
        let e = solve_cell_eig(&s.mesh, &s.blocks, cell, 6, 1).unwrap().eigenvalues;
        for (a, b) in e.iter().zip(&e0) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "cell {cell}: {a} vs {b}");
        }
    }
}

#[test]
fn column_map_is_s_orthonormal() {
    let s = inclusions(2, 4, 1e4, BcKind::Neumann);
    let aux = aux_space(&s, 3);
    assert_eq!(aux.n_cols(), 12);
    for i in 0..12 {
        let si = s.blocks.s.mul_vec(&aux.column(i));
        for j in 0..12 {
            let g = dot(&aux.column(j), &si);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g - want).abs() <= 1e-8, "({i},{j}): {g}");
        }
    }
}

#[test]
fn lambda_is_the_smallest_excluded_eigenvalue() {
    let s = uniform(4, 8, BcKind::Neumann);
    let aux = aux_space(&s, 5);
    let common = aux.cells[0].eigenvalues[5];
    assert_relative_eq!(aux.lambda, common, max_relative = 1e-9);

    let s = inclusions(4, 16, 1e4, BcKind::Neumann);
    let aux = aux_space(&s, 6);
    let min = aux.cells.iter().map(|c| c.eigenvalues[c.n_basis()]).fold(f64::INFINITY, f64::min);
    assert!(aux.lambda > 0.0);
    assert_eq!(aux.lambda, min);
}

#[test]
fn spectra_are_deterministic() {
    let s = inclusions(4, 16, 1e4, BcKind::Neumann);
    let a = aux_space(&s, 6);
    let b = aux_space(&s, 6);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.eigenvalues, y.eigenvalues);
        assert_eq!(x.vectors, y.vectors);
    }
}

#[test]
fn projection_fixes_its_range() {
    let s = inclusions(4, 8, 1e4, BcKind::Neumann);
    let aux = aux_space(&s, 4);
    let coeffs = random_vec(aux.n_cols(), 7);
    let v = aux.q().mul_vec(&coeffs);
    let pv = project_pi(&aux, &s.blocks.s, &v);
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for (a, b) in pv.iter().zip(&v) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn projection_properties(seed in any::<u64>(), other in any::<u64>()) {
        let s = inclusions(2, 4, 1e4, BcKind::Neumann);
        let aux = aux_space(&s, 4);
        let sm = &s.blocks.s;
        let snorm2 = |v: &[f64]| dot(v, &sm.mul_vec(v));
        let v = random_vec(s.blocks.n_u(), seed);
        let w = random_vec(s.blocks.n_u(), other);
        let pv = project_pi(&aux, sm, &v);
        let ppv = project_pi(&aux, sm, &pv);
        let d = sub(&ppv, &pv).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(d <= 1e-10 * pv.iter().fold(0.0_f64, |m, x| m.max(x.abs())));

        let rest = sub(&v, &pv);
        let total = snorm2(&v);
        prop_assert!((snorm2(&pv) + snorm2(&rest) - total).abs() <= 1e-9 * total);

        let pw = project_pi(&aux, sm, &w);
        let lhs = dot(&pv, &sm.mul_vec(&w));
        let rhs = dot(&v, &sm.mul_vec(&pw));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (total * snorm2(&w)).sqrt());
    }
}
