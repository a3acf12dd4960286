//! Quick consistency checks on tiny meshes, shared with the acceptance suite.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mixcem::fem::{
    assemble_blocks, assemble_rhs, constant_stress_dofs, solve_fine, BcKind, BcSpec, JmElement, RhsMode,
};
use mixcem::geometry::build_mesh;
use mixcem::materials::{build_field, lame_from_e_nu, PatternSpec, Phase};
use mixcem::metrics::norm_a;
use mixcem::spectral::build_aux_space;

use crate::config::{BcName, ExperimentConfig, OneOrMany, Pattern, RhsName, Source};
use crate::error::Result;
use crate::experiment::run_experiment;

/// Largest `|φ_i(ψ_j) − δ_ij|` over `n` random nondegenerate triangles.
pub fn duality_defect(n: usize, seed: u64) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < n {
        let mut p: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        // skip slivers: smallest angle well away from zero
        let edges = [0, 1, 2].map(|k| {
            let (a, b) = (p[k], p[(k + 1) % 3]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        });
        let longest = edges.iter().fold(0.0_f64, |m, e| m.max(*e));
        if area.abs() < 0.05 * longest * longest {
            continue;
        }
        if area < 0.0 {
            p.swap(1, 2);
        }
        let orient = [rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5)];
        let el = JmElement::new(p, orient)?;
        for s in 0..15 {
            for (i, v) in el.apply_functionals(el.shape(s)).iter().enumerate() {
                let want = if i == s { 1.0 } else { 0.0 };
                worst = worst.max((v - want).abs());
            }
        }
        done += 1;
    }
    Ok(worst)
}

/// Relative 𝒜-norm error of a Dirichlet problem with exact constant stress
/// `t` on a uniform material.
pub fn patch_test_error(nc: usize, nf: usize, e: f64, nu: f64, t: [f64; 3]) -> Result<f64> {
    let (lambda, mu) = lame_from_e_nu(e, nu)?;
    let tr = t[0] + t[2];
    let c = lambda / (2.0 * (lambda + mu));
    let eps = [(t[0] - c * tr) / (2.0 * mu), t[1] / (2.0 * mu), (t[2] - c * tr) / (2.0 * mu)];
    let u0 = move |x: f64, y: f64| [eps[0] * x + eps[1] * y, eps[1] * x + eps[2] * y];
    let mesh = build_mesh(nc, nf)?;
    let field = build_field(&mesh, &PatternSpec::uniform(e, nu))?;
    let blocks = assemble_blocks(&mesh, &field, &BcSpec::with_displacement(BcKind::Dirichlet, Arc::new(u0)))?;
    let (rs, ru) = assemble_rhs(&mesh, &blocks, &|_, _| [0.0, 0.0], RhsMode::Plain, None)?;
    let sol = solve_fine(&mesh, &blocks, &rs, &ru)?;
    let layout = mesh.dofs();
    let mut exact = vec![0.0; layout.n_sigma()];
    for tri in 0..mesh.n_triangles() {
        let local = constant_stress_dofs(blocks.element(tri), t);
        for (d, x) in layout.triangle_sigma_dofs(&mesh, tri).iter().zip(local) {
            exact[*d] = x;
        }
    }
    let diff: Vec<f64> = sol.sigma.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(norm_a(&blocks.a, &diff)? / norm_a(&blocks.a, &exact)?)
}

/// Spectral summary over all cells: largest third eigenvalue, smallest
/// fourth eigenvalue and smallest eigenvalue overall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSummary {
    pub max_third: f64,
    pub min_fourth: f64,
    pub min_any: f64,
    /// Cells with exactly three eigenvalues at or below `1e-8`.
    pub cells_with_three: usize,
    pub cells: usize,
}

impl KernelSummary {
    pub fn ok(&self) -> bool {
        self.cells_with_three == self.cells && self.min_fourth > 1e-6 && self.min_any >= -1e-10
    }
}

/// Cell spectra of the inclusion layout (`contrast = 1` is uniform).
pub fn kernel_summary(nc: usize, nf: usize, contrast: f64, nbf: usize) -> Result<KernelSummary> {
    let mesh = build_mesh(nc, nf)?;
    let pattern = PatternSpec::model_a(nf, Phase { e: contrast, nu: 0.3 }, Phase { e: 1.0, nu: 0.3 });
    let field = build_field(&mesh, &pattern)?;
    let blocks = assemble_blocks(&mesh, &field, &BcSpec::new(BcKind::Neumann))?;
    let aux = build_aux_space(&mesh, &blocks, nbf)?;
    let mut s = KernelSummary {
        max_third: f64::NEG_INFINITY,
        min_fourth: f64::INFINITY,
        min_any: f64::INFINITY,
        cells_with_three: 0,
        cells: aux.cells.len(),
    };
    for c in &aux.cells {
        let ev = &c.eigenvalues;
        s.max_third = s.max_third.max(ev[2]);
        s.min_fourth = s.min_fourth.min(ev[3]);
        s.min_any = ev.iter().fold(s.min_any, |m, v| m.min(*v));
        if ev.iter().filter(|v| **v <= 1e-8).count() == 3 {
            s.cells_with_three += 1;
        }
    }
    Ok(s)
}

/// Smallest inclusion config: saturated oversampling.
pub fn smoke_config(bc: BcName, contrast: f64) -> ExperimentConfig {
    ExperimentConfig {
        nf: 16,
        nc: OneOrMany::One(4),
        nbf: 4,
        osly: vec![4],
        contrast: vec![contrast],
        nu1: 0.3,
        nu2: 0.3,
        bc,
        source: if bc == BcName::Neumann { Source::Trig } else { Source::Constant },
        pattern: Pattern::ModelA,
        rhs_mode: RhsName::Projected,
        out: None,
        workers: None,
        seed: 0,
        snapshot: false,
        record_timings: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs all checks; the caller decides how to report them.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(Check { name, passed, detail });
    };
    push(
        "element duality",
        duality_defect(20, seed).map(|d| (d <= 1e-10, format!("max defect {d:.3e}"))),
    );
    push(
        "patch test",
        patch_test_error(2, 8, 1.0, 0.3, [1.0, 0.5, -0.25]).map(|e| (e <= 1e-9, format!("relative error {e:.3e}"))),
    );
    push(
        "cell spectrum kernel",
        kernel_summary(2, 8, 1e4, 4).map(|s| {
            (
                s.ok(),
                format!("lambda3 <= {:.3e}, lambda4 >= {:.3e}", s.max_third, s.min_fourth),
            )
        }),
    );
    for bc in [BcName::Neumann, BcName::Dirichlet] {
        let name = if bc == BcName::Neumann {
            "saturation (traction)"
        } else {
            "saturation (displacement)"
        };
        push(
            name,
            run_experiment(&smoke_config(bc, 1e4)).map(|o| match o.rows[0].measurement() {
                Some(m) => (m.e_sigma <= 1e-8, format!("e_sigma {:.3e}", m.e_sigma)),
                None => (false, format!("{:?}", o.rows[0].outcome)),
            }),
        );
    }
    out
}
