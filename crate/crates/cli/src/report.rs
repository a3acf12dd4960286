//! CSV tables, SVG error plots and field rasters.

use std::fmt::Write as _;
use std::path::Path;

use mixcem::geometry::MeshHierarchy;

use crate::error::{io_err, CliError, Result};
use crate::experiment::{DecayProfile, ReportRow};

pub const CSV_HEADER: [&str; 18] = [
    "model",
    "bc",
    "H",
    "h",
    "E1",
    "E2",
    "nu1",
    "nu2",
    "Nbf",
    "osly",
    "e_sigma",
    "e_u",
    "Lambda",
    "dofs_fine",
    "dofs_ms",
    "t_fine_s",
    "t_offline_s",
    "t_online_s",
];

/// Nine significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn record(row: &ReportRow) -> Vec<String> {
    let mut r = vec![
        row.model.clone(),
        row.bc.clone(),
        fmt_float(row.coarse_h),
        fmt_float(row.fine_h),
        fmt_float(row.e1),
        fmt_float(row.e2),
        fmt_float(row.nu1),
        fmt_float(row.nu2),
        row.nbf.to_string(),
        row.osly.to_string(),
    ];
    match row.measurement() {
        Some(m) => r.extend([
            fmt_float(m.e_sigma),
            m.e_u.map(fmt_float).unwrap_or_default(),
            fmt_float(m.lambda),
            m.dofs_fine.to_string(),
            m.dofs_ms.to_string(),
            fmt_float(m.t_fine_s),
            fmt_float(m.t_offline_s),
            fmt_float(m.t_online_s),
        ]),
        None => r.extend(std::iter::repeat_n(String::new(), 8)),
    }
    r
}

/// The whole table as text; failed tuples keep their parameters and leave
/// the measured columns empty.
pub fn csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(record(row))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn emit_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows)?).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Sigma,
    U,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Sigma => "e_sigma",
            Metric::U => "e_u",
        }
    }

    fn of(self, row: &ReportRow) -> Option<f64> {
        let m = row.measurement()?;
        let v = match self {
            Metric::Sigma => Some(m.e_sigma),
            Metric::U => m.e_u,
        }?;
        (v.is_finite() && v > 0.0).then_some(v)
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Log-scale plot of `metric` against the oversampling size with one
/// polyline per contrast.
pub fn render_svg(rows: &[ReportRow], metric: Metric, title: &str) -> Result<String> {
    let mut series: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for row in rows {
        let Some(v) = metric.of(row) else { continue };
        match series.iter_mut().find(|(c, _)| *c == row.e1) {
            Some((_, pts)) => pts.push((row.osly, v)),
            None => series.push((row.e1, vec![(row.osly, v)])),
        }
    }
    if series.is_empty() {
        return Err(CliError::EmptyPlot(format!("no positive {} values", metric.label())));
    }
    for (_, pts) in &mut series {
        pts.sort_by_key(|p| p.0);
    }
    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let x_min = all().map(|p| p.0).min().unwrap_or(0) as f64;
    let x_max = all().map(|p| p.0).max().unwrap_or(0) as f64;
    let lo = all().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min).floor();
    let mut hi = all().map(|p| p.1.log10()).fold(f64::NEG_INFINITY, f64::max).ceil();
    if hi <= lo {
        hi = lo + 1.0;
    }
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| {
        if x_max > x_min {
            LEFT + (x - x_min) / (x_max - x_min) * pw
        } else {
            LEFT + 0.5 * pw
        }
    };
    let py = |v: f64| TOP + (hi - v.log10()) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + 0.5 * pw, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in (lo as i64)..=(hi as i64) {
        let y = py(10f64.powi(d as i32));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let mut ticks: Vec<usize> = all().map(|p| p.0).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for t in ticks {
        let x = px(t as f64);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, TOP + ph + 16.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">oversampling layers</text>"#,
        LEFT + 0.5 * pw,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + 0.5 * ph,
        TOP + 0.5 * ph,
        metric.label()
    );
    for (k, (contrast, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, v)| format!("{:.2},{:.2}", px(x as f64), py(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, v) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x as f64), py(v));
        }
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">E1 = {contrast:e}</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg(rows: &[ReportRow], metric: Metric, title: &str, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(rows, metric, title)?).map_err(io_err(path))
}

pub const SNAPSHOT_FIELDS: [&str; 5] = ["sigma11", "sigma12", "sigma22", "u1", "u2"];

/// Per-square means of the five solution components, stored row by row
/// with row 0 at `y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub label: String,
    pub nf: usize,
    pub fields: [Vec<f64>; 5],
}

impl Snapshot {
    pub fn from_solution(label: String, mesh: &MeshHierarchy, sigma: &[f64], u: &[f64]) -> Self {
        let layout = mesh.dofs();
        let nf = mesh.nf();
        let mut fields: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; nf * nf]);
        for t in 0..mesh.n_triangles() {
            let s = mesh.square_of_triangle(t);
            // two triangles of equal area per square
            for c in 0..3 {
                fields[c][s] += 0.5 * sigma[layout.cell_dof(t, c)];
            }
            for c in 0..2 {
                let mean: f64 = (0..3).map(|v| u[layout.u_dof(t, v, c)]).sum::<f64>() / 3.0;
                fields[3 + c][s] += 0.5 * mean;
            }
        }
        Self { label, nf, fields }
    }
}

/// Writes `<label>_<field>.csv` rasters into `dir`.
pub fn emit_snapshots(snapshots: &[Snapshot], dir: &Path) -> Result<()> {
    for snap in snapshots {
        for (name, values) in SNAPSHOT_FIELDS.iter().zip(&snap.fields) {
            let mut text = String::new();
            for row in values.chunks(snap.nf) {
                let line: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
                text.push_str(&line.join(","));
                text.push('\n');
            }
            let path = dir.join(format!("{}_{name}.csv", snap.label));
            std::fs::write(&path, text).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

/// `contrast,cell_i,cell_j,basis,m,e_m,ratio` with `ratio = e_{m+1}/e_m`.
pub fn emit_decay_csv(profiles: &[DecayProfile], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["contrast", "cell_i", "cell_j", "basis", "m", "e_m", "ratio"])?;
    for p in profiles {
        for (m, e) in p.energies.iter().enumerate() {
            w.write_record([
                fmt_float(p.contrast),
                p.cell.0.to_string(),
                p.cell.1.to_string(),
                p.basis.to_string(),
                m.to_string(),
                fmt_float(*e),
                p.ratio(m).map(fmt_float).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))
}
