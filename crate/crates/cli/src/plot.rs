//! SVG rendering of two-dimensional Pareto sets.
//!
//! The set is drawn through its parametrization by weights: every lattice
//! point `beta` with denominator `m` is mapped to `x*(beta)`, and lattice
//! points sharing one coordinate are joined, so the lines show how each weight
//! sweeps across the set. Objective contours are ellipses of the quadratic
//! model at each minimizer, which is exact for quadratic objectives.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DVector, SymmetricEigen};
use pareto_mm::oracle::{grid_values, GridPoint};
use pareto_mm::problem::ProblemInstance;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 32.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A path read from a trace or trajectory CSV; its last point is the endpoint.
pub struct Overlay {
    pub label: String,
    pub path: Vec<[f64; 2]>,
}

impl Overlay {
    pub fn read(file: &Path) -> anyhow::Result<Self> {
        let mut reader = csv::Reader::from_path(file).with_context(|| format!("reading {}", file.display()))?;
        let headers = reader.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("{}: no column {name}", file.display()))
        };
        let (cx, cy) = (column("x_0")?, column("x_1")?);
        let mut path = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let value = |c: usize| -> anyhow::Result<f64> {
                record[c]
                    .parse()
                    .with_context(|| format!("{}: row {}: bad number {:?}", file.display(), row + 1, &record[c]))
            };
            path.push([value(cx)?, value(cy)?]);
        }
        if path.is_empty() {
            bail!("{}: no rows", file.display());
        }
        let label = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { label, path })
    }
}

/// Maps data coordinates to pixels with equal scales on both axes.
struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let pad = 0.2 * span;
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half = span / 2.0 + pad;
        Frame {
            lo: [center[0] - half, center[1] - half],
            scale: (SIZE - 2.0 * MARGIN) / (2.0 * half),
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }

    fn points(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.px(*p);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.trim_end().to_string()
    }
}

fn xy(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

/// Lattice points joined along lines of constant weight. With two objectives
/// the single line is the Pareto curve itself.
fn coordinate_lines(points: &[GridPoint], n: usize, m: usize) -> Vec<Vec<[f64; 2]>> {
    let level = |p: &GridPoint, i: usize| (p.beta.weights()[i] * m as f64).round() as usize;
    if n == 2 {
        let mut line: Vec<&GridPoint> = points.iter().collect();
        line.sort_by_key(|p| level(p, 0));
        return vec![line.iter().map(|p| xy(&p.x)).collect()];
    }
    if n != 3 {
        // Higher simplices are drawn through their edges, where only two
        // weights are nonzero.
        let mut lines = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let mut edge: Vec<&GridPoint> = points
                    .iter()
                    .filter(|p| (0..n).all(|k| k == i || k == j || level(p, k) == 0))
                    .collect();
                edge.sort_by_key(|p| level(p, i));
                lines.push(edge.iter().map(|p| xy(&p.x)).collect());
            }
        }
        return lines;
    }
    let mut lines = Vec::new();
    for i in 0..3 {
        let next = (i + 1) % 3;
        for k in 0..m {
            let mut line: Vec<&GridPoint> = points.iter().filter(|p| level(p, i) == k).collect();
            line.sort_by_key(|p| level(p, next));
            if line.len() >= 2 {
                lines.push(line.iter().map(|p| xy(&p.x)).collect());
            }
        }
    }
    lines
}

/// Ellipse `{x : 1/2 (x - c)^T H (x - c) = level}` sampled as a closed path.
fn ellipse(center: &DVector<f64>, hessian: &nalgebra::DMatrix<f64>, level: f64) -> Vec<[f64; 2]> {
    let eig = SymmetricEigen::new(hessian.clone());
    (0..72)
        .map(|k| {
            let t = k as f64 / 72.0 * std::f64::consts::TAU;
            let mut p = center.clone();
            for (axis, (lambda, dir)) in eig.eigenvalues.iter().zip(eig.eigenvectors.column_iter()).enumerate() {
                let r = (2.0 * level / lambda).sqrt();
                let c = if axis == 0 { t.cos() } else { t.sin() };
                p += dir * (r * c);
            }
            xy(&p)
        })
        .collect()
}

pub fn render(problem: &ProblemInstance, m: usize, overlays: &[Overlay]) -> anyhow::Result<String> {
    let objectives = problem.objectives();
    let n = objectives.len();
    let points = grid_values(problem, m)?;
    let minimizers = objectives.minimizers();
    let frame = Frame::fit(
        points
            .iter()
            .map(|p| xy(&p.x))
            .chain(minimizers.iter().map(xy))
            .chain(overlays.iter().flat_map(|o| o.path.iter().copied())),
    );

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )?;
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;

    writeln!(svg, r#"<g id="contours" fill="none" stroke-width="0.8" stroke-opacity="0.5">"#)?;
    for (i, (f, center)) in objectives.objectives().iter().zip(minimizers).enumerate() {
        let hessian = f.hessian(center);
        let color = COLORS[i % COLORS.len()];
        // Contours through the other minimizers, and halfway there.
        let model = |x: &DVector<f64>| 0.5 * (x - center).dot(&(&hessian * (x - center)));
        let far = minimizers.iter().map(model).fold(0.0, f64::max);
        let levels = if far > 0.0 { vec![far / 4.0, far] } else { vec![0.5] };
        for level in levels {
            writeln!(
                svg,
                r#"<polygon class="contour" stroke="{color}" points="{}"/>"#,
                frame.points(&ellipse(center, &hessian, level))
            )?;
        }
    }
    writeln!(svg, "</g>")?;

    writeln!(svg, r##"<g id="pareto-set" fill="none" stroke="#333" stroke-width="1.2">"##)?;
    for line in coordinate_lines(&points, n, m) {
        writeln!(svg, r#"<polyline class="grid" points="{}"/>"#, frame.points(&line))?;
    }
    writeln!(svg, "</g>")?;

    writeln!(svg, r#"<g id="minimizers">"#)?;
    for (i, z) in minimizers.iter().enumerate() {
        let (x, y) = frame.px(xy(z));
        let color = COLORS[i % COLORS.len()];
        writeln!(svg, r#"<circle class="minimizer" cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#)?;
        writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12">f{}</text>"#, x + 6.0, y - 6.0, i + 1)?;
    }
    writeln!(svg, "</g>")?;

    writeln!(svg, r#"<g id="overlays">"#)?;
    for (k, o) in overlays.iter().enumerate() {
        let color = COLORS[(n + k) % COLORS.len()];
        writeln!(
            svg,
            r#"<polyline class="overlay-path" fill="none" stroke="{color}" stroke-width="1" stroke-dasharray="3 2" points="{}"/>"#,
            frame.points(&o.path)
        )?;
        let (x, y) = frame.px(*o.path.last().expect("overlays are nonempty"));
        writeln!(
            svg,
            r#"<rect class="endpoint" x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#,
            x - 4.0,
            y - 4.0
        )?;
        writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#, x + 6.0, y + 14.0, escape(&o.label))?;
    }
    writeln!(svg, "</g>")?;
    writeln!(svg, "</svg>")?;
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
