use mixcem::fem::{assemble_blocks, constant_stress_dofs, BcKind, BcSpec};
use mixcem::geometry::build_mesh;
use mixcem::materials::{build_field, PatternSpec};
use mixcem_cli::experiment::{Measurement, ReportRow};
use mixcem_cli::report::{csv_string, emit_snapshots, render_svg, Metric, Snapshot, CSV_HEADER, SNAPSHOT_FIELDS};

fn row(e1: f64, osly: usize, e_sigma: f64, e_u: Option<f64>) -> ReportRow {
    ReportRow {
        model: "model_a".into(),
        bc: "dirichlet".into(),
        coarse_h: 1.0 / 16.0,
        fine_h: 1.0 / 64.0,
        e1,
        e2: 1.0,
        nu1: 0.3,
        nu2: 0.3,
        nbf: 6,
        osly,
        outcome: Ok(Measurement {
            e_sigma,
            e_u,
            lambda: 0.0123456789123,
            dofs_fine: 61952,
            dofs_ms: 1536,
            t_fine_s: 12.5,
            t_offline_s: 40.25,
            t_online_s: 0.0625,
        }),
    }
}

fn sweep() -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (k, c) in [1e3, 1e4, 1e5, 1e6].into_iter().enumerate() {
        for l in 1..=5 {
            let e = 0.5 * 10f64.powi(-(l as i32)) * (1.0 + k as f64);
            rows.push(row(c, l, e, Some(2.0 * e)));
        }
    }
    rows
}

#[test]
fn csv_roundtrips_through_a_reader() {
    let rows = sweep();
    let text = csv_string(&rows).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let records: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(&rows) {
        assert_eq!(rec.len(), 18);
        let f = |i: usize| rec[i].parse::<f64>().unwrap();
        let m = row.measurement().unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * b.abs();
        assert_eq!(&rec[0], "model_a");
        assert!(close(f(2), row.coarse_h) && close(f(4), row.e1));
        assert_eq!(rec[9].parse::<usize>().unwrap(), row.osly);
        assert!(close(f(10), m.e_sigma) && close(f(11), m.e_u.unwrap()) && close(f(12), m.lambda));
        assert_eq!(rec[13].parse::<usize>().unwrap(), m.dofs_fine);
        assert!(close(f(16), m.t_offline_s));
    }
}

#[test]
fn absent_displacement_error_is_an_empty_field() {
    let text = csv_string(&[row(1.0, 1, 0.1, None)]).unwrap();
    let line = text.lines().nth(1).unwrap();
    let cols: Vec<&str> = line.split(',').collect();
    assert_eq!(cols.len(), 18);
    assert_eq!(cols[11], "");
    assert_eq!(cols[10], "1.00000000e-1");
}

fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn svg_has_one_polyline_per_contrast() {
    let rows = sweep();
    let svg = render_svg(&rows, Metric::Sigma, "sweep").unwrap();
    let lines = polylines(&svg);
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.len() == 5));
    for c in ["1e3", "1e4", "1e5", "1e6"] {
        assert!(svg.contains(&format!("E1 = {c}")), "legend entry {c}");
    }
    assert!(svg.contains("oversampling layers") && svg.contains(">e_sigma<"));

    // screen y grows with −log₁₀(e), exactly linearly
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .zip(lines.iter().flatten())
        .map(|(r, p)| (-r.measurement().unwrap().e_sigma.log10(), p.1))
        .collect();
    for a in &pts {
        for b in &pts {
            if a.0 < b.0 - 1e-9 {
                assert!(a.1 < b.1, "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn svg_is_byte_deterministic() {
    let rows = sweep();
    let a = render_svg(&rows, Metric::U, "u").unwrap();
    let b = render_svg(&rows, Metric::U, "u").unwrap();
    assert_eq!(a, b);
}

#[test]
fn svg_skips_failed_rows() {
    let mut rows = sweep();
    rows[0].outcome = Err("failed".into());
    let lines = polylines(&render_svg(&rows, Metric::Sigma, "t").unwrap());
    assert_eq!(lines[0].len(), 4);
}

#[test]
fn constant_stress_gives_constant_rasters() {
    let mesh = build_mesh(2, 8).unwrap();
    let field = build_field(&mesh, &PatternSpec::uniform(1.0, 0.3)).unwrap();
    let blocks = assemble_blocks(&mesh, &field, &BcSpec::new(BcKind::Dirichlet)).unwrap();
    let layout = mesh.dofs();
    let t = [1.5, -0.25, 0.75];
    let mut sigma = vec![0.0; layout.n_sigma()];
    for tri in 0..mesh.n_triangles() {
        let local = constant_stress_dofs(blocks.element(tri), t);
        for (d, x) in layout.triangle_sigma_dofs(&mesh, tri).iter().zip(local) {
            sigma[*d] = x;
        }
    }
    let u: Vec<f64> = (0..layout.n_u()).map(|d| if d % 2 == 0 { 2.0 } else { -1.0 }).collect();
    let snap = Snapshot::from_solution("c".into(), &mesh, &sigma, &u);
    let want = [t[0], t[1], t[2], 2.0, -1.0];
    for (vals, w) in snap.fields.iter().zip(want) {
        assert_eq!(vals.len(), 64);
        assert!(vals.iter().all(|v| (v - w).abs() <= 1e-12), "{w}");
    }

    let dir = tempfile::tempdir().unwrap();
    emit_snapshots(&[snap], dir.path()).unwrap();
    for name in SNAPSHOT_FIELDS {
        let text = std::fs::read_to_string(dir.path().join(format!("c_{name}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
        let first = lines[0].split(',').next().unwrap();
        assert!(lines.iter().all(|l| l.split(',').all(|v| v == first)), "{name}");
    }
}
