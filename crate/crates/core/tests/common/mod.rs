#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mixcem::fem::{
    assemble_blocks, assemble_rhs, constant_stress_dofs, solve_fine, BcKind, BcSpec, OperatorBlocks, RhsMode,
    SolutionPair, VectorFn,
};
use mixcem::geometry::{build_mesh, MeshHierarchy};
use mixcem::materials::{build_field, MaterialField, PatternSpec, Phase};
use mixcem::spectral::{build_aux_space, AuxSpace};

pub struct Setup {
    pub mesh: MeshHierarchy,
    pub field: MaterialField,
    pub blocks: OperatorBlocks,
}

pub fn setup(nc: usize, nf: usize, pattern: &PatternSpec, bc: BcSpec) -> Setup {
    let mesh = build_mesh(nc, nf).unwrap();
    let field = build_field(&mesh, pattern).unwrap();
    let blocks = assemble_blocks(&mesh, &field, &bc).unwrap();
    Setup { mesh, field, blocks }
}

pub fn uniform(nc: usize, nf: usize, kind: BcKind) -> Setup {
    setup(nc, nf, &PatternSpec::uniform(1.0, 0.3), BcSpec::new(kind))
}

/// Inclusion layout with `E₁ = contrast`, `E₂ = 1`, `ν = 0.3`.
pub fn inclusions(nc: usize, nf: usize, contrast: f64, kind: BcKind) -> Setup {
    let pattern = PatternSpec::model_a(nf, Phase { e: contrast, nu: 0.3 }, Phase { e: 1.0, nu: 0.3 });
    setup(nc, nf, &pattern, BcSpec::new(kind))
}

pub fn aux_space(s: &Setup, nbf: usize) -> AuxSpace {
    build_aux_space(&s.mesh, &s.blocks, nbf).unwrap()
}

pub fn trig(x: f64, y: f64) -> [f64; 2] {
    [(PI * x).cos() * (PI * y).sin(), 0.0]
}

pub fn ones(_: f64, _: f64) -> [f64; 2] {
    [1.0, 1.0]
}

/// Trig source under pure traction, constant source otherwise.
pub fn source_for(kind: BcKind) -> Arc<VectorFn> {
    match kind {
        BcKind::Neumann => Arc::new(trig),
        _ => Arc::new(ones),
    }
}

/// Fine reference with the projected source, plus the plain load vector.
pub fn reference(s: &Setup, aux: &AuxSpace, f: &VectorFn) -> (SolutionPair, Vec<f64>, Vec<f64>) {
    let (rs, ru) = assemble_rhs(&s.mesh, &s.blocks, f, RhsMode::Projected, Some(aux)).unwrap();
    let (_, plain) = assemble_rhs(&s.mesh, &s.blocks, f, RhsMode::Plain, None).unwrap();
    let fine = solve_fine(&s.mesh, &s.blocks, &rs, &ru).unwrap();
    (fine, rs, plain)
}

/// Global coefficient vector of the constant stress `t = (xx, xy, yy)`.
pub fn constant_stress(s: &Setup, t: [f64; 3]) -> Vec<f64> {
    let layout = s.mesh.dofs();
    let mut v = vec![0.0; layout.n_sigma()];
    for tri in 0..s.mesh.n_triangles() {
        let local = constant_stress_dofs(s.blocks.element(tri), t);
        for (d, x) in layout.triangle_sigma_dofs(&s.mesh, tri).iter().zip(local) {
            v[*d] = x;
        }
    }
    v
}

/// Displacement coefficients of the nodal interpolant of `g`.
pub fn interpolate(mesh: &MeshHierarchy, g: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let layout = mesh.dofs();
    let mut v = vec![0.0; layout.n_u()];
    for t in 0..mesh.n_triangles() {
        for (m, p) in mesh.triangle_coords(t).iter().enumerate() {
            let gx = g(p[0], p[1]);
            v[layout.u_dof(t, m, 0)] = gx[0];
            v[layout.u_dof(t, m, 1)] = gx[1];
        }
    }
    v
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn barycenter(mesh: &MeshHierarchy, t: usize) -> [f64; 2] {
    let p = mesh.triangle_coords(t);
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

/// Seeded uniform vector on `[-0.5, 0.5)`.
pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}
