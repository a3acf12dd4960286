//! Parameter sweeps: one fine reference per `(nc, contrast)` pair, one
//! multiscale solve per oversampling size.

use std::time::Instant;

use mixcem::coarse::{assemble_coarse, solve_coarse};
use mixcem::fem::{assemble_blocks, assemble_rhs, solve_fine, BcSpec, OperatorBlocks, RhsMode, SolutionPair};
use mixcem::geometry::{build_mesh, MeshHierarchy};
use mixcem::materials::build_field;
use mixcem::metrics::rel_errors;
use mixcem::msbasis::{build_ms_space, decay_profile, PatchSystem};
use mixcem::spectral::{build_aux_space, AuxSpace};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::Snapshot;

/// Measured quantities of one successful tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub e_sigma: f64,
    pub e_u: Option<f64>,
    pub lambda: f64,
    pub dofs_fine: usize,
    pub dofs_ms: usize,
    pub t_fine_s: f64,
    pub t_offline_s: f64,
    pub t_online_s: f64,
}

/// One CSV line. A failed tuple keeps its parameters and the error text.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub bc: String,
    pub coarse_h: f64,
    pub fine_h: f64,
    pub e1: f64,
    pub e2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nbf: usize,
    pub osly: usize,
    pub outcome: std::result::Result<Measurement, String>,
}

impl ReportRow {
    pub fn measurement(&self) -> Option<&Measurement> {
        self.outcome.as_ref().ok()
    }
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ReportRow>,
    /// Plain-text run log, one entry per line.
    pub log: Vec<String>,
    pub snapshots: Vec<Snapshot>,
}

impl RunOutput {
    fn note(&mut self, line: String) {
        log::info!("{line}");
        self.log.push(line);
    }
}

/// Runs `f` inside a pool of `workers` threads (the global pool if unset).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

struct Problem {
    mesh: MeshHierarchy,
    blocks: OperatorBlocks,
    aux: AuxSpace,
    t_aux: f64,
    fine: SolutionPair,
    t_fine: f64,
    rhs_sigma: Vec<f64>,
    plain_u: Vec<f64>,
}

fn setup(cfg: &ExperimentConfig, nc: usize, contrast: f64) -> Result<Problem> {
    let mesh = build_mesh(nc, cfg.nf)?;
    let field = build_field(&mesh, &cfg.pattern_spec(contrast)?)?;
    let blocks = assemble_blocks(&mesh, &field, &BcSpec::new(cfg.bc.kind()))?;
    let t0 = Instant::now();
    let aux = build_aux_space(&mesh, &blocks, cfg.nbf)?;
    let t_aux = t0.elapsed().as_secs_f64();
    let source = cfg.source;
    let f = move |x: f64, y: f64| source.eval(x, y);
    let (rhs_sigma, rhs_u) = assemble_rhs(&mesh, &blocks, &f, cfg.rhs_mode.mode(), Some(&aux))?;
    let (_, plain_u) = assemble_rhs(&mesh, &blocks, &f, RhsMode::Plain, None)?;
    let t0 = Instant::now();
    let fine = solve_fine(&mesh, &blocks, &rhs_sigma, &rhs_u)?;
    let t_fine = t0.elapsed().as_secs_f64();
    Ok(Problem {
        mesh,
        blocks,
        aux,
        t_aux,
        fine,
        t_fine,
        rhs_sigma,
        plain_u,
    })
}

fn solve_layers(p: &Problem, layers: usize) -> Result<(Measurement, mixcem::coarse::MsSolution)> {
    let t0 = Instant::now();
    let space = build_ms_space(&p.mesh, &p.blocks, &p.aux, layers, false)?;
    let system = assemble_coarse(&p.mesh, &p.blocks, &space, &p.aux, &p.rhs_sigma, &p.plain_u)?;
    let t_offline = p.t_aux + t0.elapsed().as_secs_f64();
    let ms = solve_coarse(&system, &space, &p.aux, p.blocks.n_sigma())?;
    let report = rel_errors(&p.fine, &ms, &p.blocks)?;
    let m = Measurement {
        e_sigma: report.e_sigma,
        e_u: report.e_u,
        lambda: p.aux.lambda,
        dofs_fine: p.blocks.free_sigma_dofs().len() + p.blocks.n_u(),
        dofs_ms: system.n_psi() + system.n_aux(),
        t_fine_s: p.t_fine,
        t_offline_s: t_offline,
        t_online_s: ms.online_seconds,
    };
    Ok((m, ms))
}

fn contrast_label(c: f64) -> String {
    format!("{c:e}")
}

/// Runs every `(nc, contrast, osly)` tuple of `cfg`. Errors inside a tuple
/// become failure rows; only an invalid config aborts the whole run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    with_workers(cfg.workers, || run_sequential(cfg))
}

fn run_sequential(cfg: &ExperimentConfig) -> RunOutput {
    let mut out = RunOutput::default();
    for nc in cfg.nc.values() {
        for &contrast in &cfg.contrast {
            let row = |osly: usize, outcome| ReportRow {
                model: cfg.pattern.name().to_string(),
                bc: cfg.bc.kind().name().to_string(),
                coarse_h: 1.0 / nc as f64,
                fine_h: 1.0 / cfg.nf as f64,
                e1: contrast,
                e2: cfg.e2(contrast),
                nu1: cfg.nu1,
                nu2: cfg.nu2,
                nbf: cfg.nbf,
                osly,
                outcome,
            };
            let tag = format!("nc={nc} nf={} E1={} Nbf={}", cfg.nf, contrast_label(contrast), cfg.nbf);
            let p = match setup(cfg, nc, contrast) {
                Ok(p) => p,
                Err(e) => {
                    out.note(format!("{tag} FAILED: {e}"));
                    for &l in &cfg.osly {
                        out.rows.push(row(l, Err(e.to_string())));
                    }
                    continue;
                }
            };
            out.note(format!(
                "{tag} Lambda={:.6e} t_aux={:.3}s t_fine={:.3}s",
                p.aux.lambda, p.t_aux, p.t_fine
            ));
            let adjusted = p.aux.adjusted_cells();
            if !adjusted.is_empty() {
                out.note(format!("{tag} extended bases at clustered eigenvalues: {adjusted:?}"));
            }
            if cfg.snapshot {
                let label = format!("nc{nc}_E{}_reference", contrast_label(contrast));
                out.snapshots.push(Snapshot::from_solution(label, &p.mesh, &p.fine.sigma, &p.fine.u));
            }
            for &l in &cfg.osly {
                match solve_layers(&p, l) {
                    Ok((mut m, ms)) => {
                        let e_u = m.e_u.map_or("-".to_string(), |v| format!("{v:.6e}"));
                        out.note(format!(
                            "{tag} osly={l} e_sigma={:.6e} e_u={e_u} dofs_ms={} t_offline={:.3}s t_online={:.3}s",
                            m.e_sigma, m.dofs_ms, m.t_offline_s, m.t_online_s
                        ));
                        if cfg.snapshot {
                            let label = format!("nc{nc}_E{}_osly{l}", contrast_label(contrast));
                            out.snapshots.push(Snapshot::from_solution(label, &p.mesh, &ms.sigma, &ms.u));
                        }
                        if !cfg.record_timings {
                            m.t_fine_s = 0.0;
                            m.t_offline_s = 0.0;
                            m.t_online_s = 0.0;
                        }
                        out.rows.push(row(l, Ok(m)));
                    }
                    Err(e) => {
                        out.note(format!("{tag} osly={l} FAILED: {e}"));
                        out.rows.push(row(l, Err(e.to_string())));
                    }
                }
            }
        }
    }
    out
}

/// Layers needed for the ratios `e_{m+1}/e_m`, `m = 1, 2`.
pub const DECAY_LAYERS: usize = 3;

/// Annulus energies of one global basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub contrast: f64,
    pub cell: (usize, usize),
    pub basis: usize,
    /// `e_m` for `m = 0..=nc`.
    pub energies: Vec<f64>,
}

impl DecayProfile {
    /// `e_{m+1}/e_m`, or `None` once `e_m` vanishes.
    pub fn ratio(&self, m: usize) -> Option<f64> {
        let (a, b) = (self.energies[m], *self.energies.get(m + 1)?);
        (a > 0.0).then(|| b / a)
    }
}

/// Cells whose `DECAY_LAYERS` patch is not clipped by ∂Ω, or the center
/// cell if there is none.
pub fn interior_cells(nc: usize) -> Vec<(usize, usize)> {
    let range: Vec<usize> = (DECAY_LAYERS..nc.saturating_sub(DECAY_LAYERS)).collect();
    if range.is_empty() {
        return vec![(nc / 2, nc / 2)];
    }
    range.iter().flat_map(|&j| range.iter().map(move |&i| (i, j))).collect()
}

/// Decay of the global basis functions of the interior cells, for the first
/// `nc` of the config and every contrast.
pub fn run_decay(cfg: &ExperimentConfig) -> Result<Vec<DecayProfile>> {
    cfg.validate()?;
    let nc = cfg.nc.values()[0];
    with_workers(cfg.workers, || -> Result<Vec<DecayProfile>> {
        let mut out = Vec::new();
        let mesh = build_mesh(nc, cfg.nf)?;
        for &contrast in &cfg.contrast {
            let field = build_field(&mesh, &cfg.pattern_spec(contrast)?)?;
            let blocks = assemble_blocks(&mesh, &field, &BcSpec::new(cfg.bc.kind()))?;
            let aux = build_aux_space(&mesh, &blocks, cfg.nbf)?;
            for (i, j) in interior_cells(nc) {
                let cell = mesh.cell_index(i, j);
                let system = PatchSystem::new(&mesh, &blocks, &aux, cell, nc)?;
                let cols: Vec<usize> = aux.col_range(cell).collect();
                for (basis, f) in system.solve(&cols, cell)?.iter().enumerate() {
                    let energies = decay_profile(&mesh, &blocks, cell, f);
                    let shown: Vec<String> = energies.iter().map(|e| format!("{e:.3e}")).collect();
                    log::info!("E1={} cell=({i},{j}) basis={basis} e=[{}]", contrast_label(contrast), shown.join(" "));
                    out.push(DecayProfile {
                        contrast,
                        cell: (i, j),
                        basis,
                        energies,
                    });
                }
            }
        }
        Ok(out)
    })?
}
