mod common;

use common::*;
use mixcem::coarse::{assemble_coarse, solve_coarse};
use mixcem::fem::{assemble_rhs, BcKind, RhsMode, VectorFn};
use mixcem::metrics::{norm_s, rel_errors, remove_rigid_motion, ErrorReport};
use mixcem::msbasis::build_ms_space;
use mixcem::numerics::dot;
use mixcem::spectral::{project_pi, AuxSpace};

struct Run {
    report: ErrorReport,
    /// `‖u_ms − π u_h‖_s / ‖u_h‖_s`
    u_gap: f64,
}

fn run(s: &Setup, aux: &AuxSpace, layers: usize, f: &VectorFn) -> Run {
    let (fine, rs, plain) = reference(s, aux, f);
    let space = build_ms_space(&s.mesh, &s.blocks, aux, layers, false).unwrap();
    let sys = assemble_coarse(&s.mesh, &s.blocks, &space, aux, &rs, &plain).unwrap();
    let ms = solve_coarse(&sys, &space, aux, s.blocks.n_sigma()).unwrap();
    let report = rel_errors(&fine, &ms, &s.blocks).unwrap();
    let mut pu = project_pi(aux, &s.blocks.s, &fine.u);
    let mut um = ms.u.clone();
    if s.blocks.bc.kind == BcKind::Neumann {
        pu = remove_rigid_motion(&s.mesh, &s.blocks.m, &pu);
        um = remove_rigid_motion(&s.mesh, &s.blocks.m, &um);
    }
    let u_gap = norm_s(&s.blocks.s, &sub(&um, &pu)).unwrap() / norm_s(&s.blocks.s, &fine.u).unwrap();
    Run { report, u_gap }
}

#[test]
fn coarse_blocks_match_global_triple_products() {
    let s = inclusions(4, 8, 1e4, BcKind::Neumann);
    let aux = aux_space(&s, 3);
    let space = build_ms_space(&s.mesh, &s.blocks, &aux, 1, false).unwrap();
    let (rs, ru) = assemble_rhs(&s.mesh, &s.blocks, &trig, RhsMode::Plain, None).unwrap();
    let sys = assemble_coarse(&s.mesh, &s.blocks, &space, &aux, &rs, &ru).unwrap();
    let n = space.n_cols();
    let psi: Vec<Vec<f64>> = space.columns.iter().map(|f| f.psi_global(s.blocks.n_sigma())).collect();
    let a_psi: Vec<Vec<f64>> = psi.iter().map(|p| s.blocks.a.mul_vec(p)).collect();
    let b_psi: Vec<Vec<f64>> = psi.iter().map(|p| s.blocks.b.mul_vec(p)).collect();
    let a_max = (0..n).map(|i| sys.a_ms[(i, i)]).fold(0.0, f64::max);
    let mut asym = 0.0_f64;
    for i in 0..n {
        let qi = aux.column(i);
        for j in 0..n {
            asym = asym.max((sys.a_ms[(i, j)] - sys.a_ms[(j, i)]).abs());
            let want = dot(&psi[i], &a_psi[j]);
            assert!((sys.a_ms[(i, j)] - want).abs() <= 1e-10 * a_max, "A_ms({i},{j})");
            let want = dot(&qi, &b_psi[j]);
            assert!((sys.b_ms[(i, j)] - want).abs() <= 1e-9 * (1.0 + want.abs()), "B_ms({i},{j})");
        }
    }
    assert!(asym <= 1e-10 * a_max);
}

#[test]
fn coarse_load_is_the_pullback_of_the_plain_load() {
    let s = inclusions(4, 8, 1e4, BcKind::Dirichlet);
    let aux = aux_space(&s, 3);
    let space = build_ms_space(&s.mesh, &s.blocks, &aux, 1, false).unwrap();
    let (rs, ru) = assemble_rhs(&s.mesh, &s.blocks, &ones, RhsMode::Plain, None).unwrap();
    let sys = assemble_coarse(&s.mesh, &s.blocks, &space, &aux, &rs, &ru).unwrap();
    // ∫ p·(1, 1) with exact P1 integration: |T|/3 times the vertex sum
    let third = s.mesh.triangle_area() / 3.0;
    for j in 0..aux.n_cols() {
        let want: f64 = aux.column(j).iter().sum::<f64>() * third;
        assert!((sys.f[j] - want).abs() <= 1e-12 * (1.0 + want.abs()), "F_{j}: {} vs {want}", sys.f[j]);
    }
}

#[test]
fn zero_source_gives_zero_multiscale_solution() {
    let s = inclusions(4, 8, 1e4, BcKind::Dirichlet);
    let aux = aux_space(&s, 3);
    let space = build_ms_space(&s.mesh, &s.blocks, &aux, 1, false).unwrap();
    let (rs, ru) = assemble_rhs(&s.mesh, &s.blocks, &|_, _| [0.0, 0.0], RhsMode::Plain, None).unwrap();
    let sys = assemble_coarse(&s.mesh, &s.blocks, &space, &aux, &rs, &ru).unwrap();
    assert!(sys.f.iter().all(|v| *v == 0.0));
    let ms = solve_coarse(&sys, &space, &aux, s.blocks.n_sigma()).unwrap();
    assert!(ms.sigma.iter().chain(&ms.u).all(|v| *v == 0.0));
}

#[test]
fn online_dimension() {
    for kind in [BcKind::Neumann, BcKind::Dirichlet] {
        let s = inclusions(4, 8, 1e4, kind);
        let aux = aux_space(&s, 3);
        let space = build_ms_space(&s.mesh, &s.blocks, &aux, 1, false).unwrap();
        let (rs, ru) = assemble_rhs(&s.mesh, &s.blocks, &trig, RhsMode::Plain, None).unwrap();
        let sys = assemble_coarse(&s.mesh, &s.blocks, &space, &aux, &rs, &ru).unwrap();
        let extra = if kind == BcKind::Neumann { 3 } else { 0 };
        assert_eq!(sys.dim(), 2 * 16 * 3 + extra);
    }
}

#[test]
fn saturated_patches_reproduce_the_reference() {
    for (kind, contrast) in [(BcKind::Neumann, 1e4), (BcKind::Mixed, 1.0), (BcKind::Dirichlet, 1e4)] {
        let s = inclusions(4, 16, contrast, kind);
        let aux = aux_space(&s, 4);
        let r = run(&s, &aux, 4, source_for(kind).as_ref());
        assert!(r.report.e_sigma <= 1e-8, "{kind:?}: e_σ = {:e}", r.report.e_sigma);
        assert!(r.u_gap <= 1e-8, "{kind:?}: u gap {:e}", r.u_gap);
        assert_eq!(r.report.e_u.is_none(), kind == BcKind::Neumann);
    }
}

#[test]
fn stress_error_decreases_with_layers() {
    for kind in [BcKind::Neumann, BcKind::Dirichlet] {
        let s = inclusions(4, 16, 1e4, kind);
        let aux = aux_space(&s, 4);
        let errs: Vec<f64> = (1..=4).map(|l| run(&s, &aux, l, source_for(kind).as_ref()).report.e_sigma).collect();
        assert!(errs.windows(2).all(|w| w[1] <= 1.05 * w[0]), "{kind:?}: {errs:?}");
    }
}

#[test]
fn relative_errors_ignore_source_scaling() {
    let s = inclusions(4, 16, 1e4, BcKind::Dirichlet);
    let aux = aux_space(&s, 4);
    let a = run(&s, &aux, 1, &ones).report;
    let b = run(&s, &aux, 1, &|_, _| [10.0, 10.0]).report;
    assert!((a.e_sigma - b.e_sigma).abs() <= 1e-10 * a.e_sigma.max(1e-300));
    assert!((a.e_u.unwrap() - b.e_u.unwrap()).abs() <= 1e-10);
}

#[test]
fn relative_errors_ignore_modulus_scaling() {
    // a uniform modulus only rescales A, S and u; nothing relative may change
    use mixcem::fem::BcSpec;
    use mixcem::materials::PatternSpec;
    let errs: Vec<f64> = [1.0, 1e9]
        .iter()
        .map(|&e| {
            let s = setup(4, 16, &PatternSpec::uniform(e, 0.499), BcSpec::new(BcKind::Neumann));
            let aux = aux_space(&s, 4);
            run(&s, &aux, 1, &trig).report.e_sigma
        })
        .collect();
    assert!((errs[0] - errs[1]).abs() <= 1e-8 * errs[0], "{errs:?}");
}
