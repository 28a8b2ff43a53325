//! Output files for a benchmark run: summary, curve and scaling tables, the invariant
//! report, and two SVG charts.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::experiment::{AlgoChoice, CellReport, ExperimentOutcome};

pub const SUMMARY_HEADER: [&str; 13] = [
    "dataset",
    "algo",
    "trial",
    "epsilon",
    "gamma",
    "delta",
    "n",
    "iterations",
    "rounded_cost",
    "exact_cost",
    "gap",
    "theorem_bound",
    "invariant_violations",
];

fn na<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Trial-averaged gap curve for one (algorithm, ε) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCurve {
    pub algo: AlgoChoice,
    pub epsilon: f64,
    /// `(iteration, mean gap, trials still running)`; finished trials carry their final gap forward.
    pub points: Vec<(usize, f64, usize)>,
}

pub fn averaged_curves(outcome: &ExperimentOutcome) -> Vec<AveragedCurve> {
    let mut out = Vec::new();
    for &algo in &outcome.spec.algorithms {
        for epsilon in cell_epsilons(outcome) {
            let curves: Vec<&Vec<(usize, f64)>> = outcome
                .cells
                .iter()
                .filter(|c| c.row.algo == algo && c.row.epsilon == epsilon)
                .filter_map(|c| c.curve.as_ref().map(|cv| &cv.points))
                .filter(|p| !p.is_empty())
                .collect();
            if curves.is_empty() {
                continue;
            }
            let grid: BTreeSet<usize> = curves.iter().flat_map(|c| c.iter().map(|p| p.0)).collect();
            let mut cursors = vec![0usize; curves.len()];
            let mut points = Vec::with_capacity(grid.len());
            for k in grid {
                let mut sum = 0.0;
                let mut running = 0;
                for (curve, cursor) in curves.iter().zip(cursors.iter_mut()) {
                    while *cursor + 1 < curve.len() && curve[*cursor + 1].0 <= k {
                        *cursor += 1;
                    }
                    sum += curve[*cursor].1;
                    if curve.last().is_some_and(|last| last.0 > k) {
                        running += 1;
                    }
                }
                points.push((k, sum / curves.len() as f64, running));
            }
            out.push(AveragedCurve { algo, epsilon, points });
        }
    }
    out
}

/// Distinct ε values in the order the cells use them.
fn cell_epsilons(outcome: &ExperimentOutcome) -> Vec<f64> {
    let mut eps: Vec<f64> = Vec::new();
    for c in &outcome.cells {
        if !eps.contains(&c.row.epsilon) {
            eps.push(c.row.epsilon);
        }
    }
    eps
}

/// Least-squares line `y = slope·x + intercept` and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two distinct `x` values. A perfect fit to constant `y` has `R² = 1`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let len = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit { slope, intercept, r_squared })
}

/// Mean iterations per ε for one algorithm, regressed against `1/ε²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub algo: AlgoChoice,
    /// `(ε, 1/ε², mean iterations, mean gap)`.
    pub points: Vec<(f64, f64, f64, Option<f64>)>,
    pub fit: Option<LinearFit>,
}

pub fn scaling(outcome: &ExperimentOutcome) -> Vec<Scaling> {
    outcome
        .spec
        .algorithms
        .iter()
        .map(|&algo| {
            let points: Vec<_> = cell_epsilons(outcome)
                .into_iter()
                .map(|eps| {
                    let rows: Vec<_> = outcome
                        .rows()
                        .filter(|r| r.algo == algo && r.epsilon == eps)
                        .collect();
                    let count = rows.len() as f64;
                    let iterations = rows.iter().map(|r| r.iterations as f64).sum::<f64>() / count;
                    let gap = rows
                        .iter()
                        .map(|r| r.gap)
                        .sum::<Option<f64>>()
                        .map(|g| g / count);
                    (eps, 1.0 / (eps * eps), iterations, gap)
                })
                .collect();
            let fit = linear_fit(&points.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>());
            Scaling { algo, points, fit }
        })
        .collect()
}

/// Whether iterations are nonincreasing as ε grows, per (trial, algorithm).
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityCheck {
    pub trial: usize,
    pub algo: AlgoChoice,
    pub nonincreasing_in_epsilon: bool,
}

fn monotonicity(outcome: &ExperimentOutcome) -> Vec<MonotonicityCheck> {
    let mut out = Vec::new();
    for trial in 0..outcome.spec.trials {
        for &algo in &outcome.spec.algorithms {
            let mut runs: Vec<(f64, usize)> = outcome
                .rows()
                .filter(|r| r.trial == trial && r.algo == algo)
                .map(|r| (r.epsilon, r.iterations))
                .collect();
            runs.sort_by(|x, y| x.0.total_cmp(&y.0));
            out.push(MonotonicityCheck {
                trial,
                algo,
                nonincreasing_in_epsilon: runs.windows(2).all(|w| w[1].1 <= w[0].1),
            });
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct InvariantFile<'a> {
    total_checks: usize,
    total_violations: usize,
    oracle: bool,
    invariants: bool,
    cells: Vec<&'a CellReport>,
    iterations_monotone: Vec<MonotonicityCheck>,
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub summary: PathBuf,
    pub curves: PathBuf,
    pub scaling: PathBuf,
    pub invariants: PathBuf,
    pub curves_svg: PathBuf,
    pub scaling_svg: PathBuf,
}

impl OutputFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            summary: dir.join("summary.csv"),
            curves: dir.join("curves.csv"),
            scaling: dir.join("scaling.csv"),
            invariants: dir.join("invariants.json"),
            curves_svg: dir.join("curves.svg"),
            scaling_svg: dir.join("scaling.svg"),
        }
    }
}

pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let files = OutputFiles::in_dir(dir);
    let dataset = outcome.spec.dataset.to_string();

    let mut w = csv_writer(&files.summary)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in outcome.rows() {
        w.write_record([
            dataset.clone(),
            r.algo.to_string(),
            r.trial.to_string(),
            r.epsilon.to_string(),
            r.gamma.to_string(),
            r.delta.to_string(),
            r.n.to_string(),
            r.iterations.to_string(),
            r.rounded_cost.to_string(),
            na(r.exact_cost),
            na(r.gap),
            r.theorem_bound.to_string(),
            na(r.invariant_violations),
        ])?;
    }
    flush(w, &files.summary)?;

    let curves = averaged_curves(outcome);
    let mut w = csv_writer(&files.curves)?;
    w.write_record(["dataset", "algo", "epsilon", "iteration", "mean_gap", "running_trials"])?;
    for c in &curves {
        for &(k, gap, running) in &c.points {
            w.write_record([
                dataset.clone(),
                c.algo.to_string(),
                c.epsilon.to_string(),
                k.to_string(),
                gap.to_string(),
                running.to_string(),
            ])?;
        }
    }
    flush(w, &files.curves)?;

    let scalings = scaling(outcome);
    let mut w = csv_writer(&files.scaling)?;
    w.write_record([
        "dataset",
        "algo",
        "epsilon",
        "inv_eps_sq",
        "mean_iterations",
        "mean_gap",
        "slope",
        "intercept",
        "r_squared",
    ])?;
    for s in &scalings {
        for &(eps, x, y, gap) in &s.points {
            w.write_record([
                dataset.clone(),
                s.algo.to_string(),
                eps.to_string(),
                x.to_string(),
                y.to_string(),
                na(gap),
                na(s.fit.map(|f| f.slope)),
                na(s.fit.map(|f| f.intercept)),
                na(s.fit.map(|f| f.r_squared)),
            ])?;
        }
    }
    flush(w, &files.scaling)?;

    let reports: Vec<&CellReport> = outcome.cells.iter().map(|c| &c.report).collect();
    let file = InvariantFile {
        total_checks: reports
            .iter()
            .filter_map(|r| r.invariants.as_ref())
            .map(|r| r.total_checks())
            .sum(),
        total_violations: outcome.total_violations(),
        oracle: outcome.spec.oracle,
        invariants: outcome.spec.invariants,
        cells: reports,
        iterations_monotone: monotonicity(outcome),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| BenchError::Format(e.to_string()))?;
    write_file(&files.invariants, &json)?;

    write_file(&files.curves_svg, &curves_svg(&curves))?;
    write_file(&files.scaling_svg, &scaling_svg(&scalings))?;
    Ok(files)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| BenchError::io(path, e))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    markers: bool,
    dashed: bool,
}

/// Static line chart. With `log_y`, `y` values are plotted as `log10(max(y, floor))`.
fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let floor = 1e-12;
    let ty = |y: f64| if log_y { y.max(floor).log10() } else { y };
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(ty(p.1)), hi.max(ty(p.1)))
    });
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if log_y {
        y0 = y0.floor();
        y1 = y1.ceil().max(y0 + 1.0);
    } else {
        y0 = y0.min(0.0);
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
    }
    let plot_w = WIDTH - 2.0 * MARGIN - 150.0;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * plot_h;
    let sy_raw = |t: f64| HEIGHT - MARGIN - (t - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let x = x0 + (x1 - x0) * t as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(x),
            HEIGHT - MARGIN + 16.0,
            tick(x)
        );
    }
    let y_ticks: Vec<f64> = if log_y {
        let step = ((y1 - y0) / 6.0).ceil().max(1.0);
        let mut v = Vec::new();
        let mut t = y0;
        while t <= y1 + 1e-9 {
            v.push(t);
            t += step;
        }
        v
    } else {
        (0..=4).map(|t| y0 + (y1 - y0) * t as f64 / 4.0).collect()
    };
    for t in y_ticks {
        let label = if log_y { format!("1e{}", t as i64) } else { tick(t) };
        let y = sy_raw(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
            MARGIN + plot_w,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            path.join(" ")
        );
        if s.markers {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = MARGIN + 8.0 + 18.0 * idx as f64;
        let lx = MARGIN + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn curves_svg(curves: &[AveragedCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: format!("{} ε={}", c.algo, tick(c.epsilon)),
            points: c.points.iter().map(|p| (p.0 as f64, p.1)).collect(),
            markers: false,
            dashed: matches!(c.algo, AlgoChoice::SinkhornLifted | AlgoChoice::GreenkhornLifted),
        })
        .collect();
    line_chart(
        "Transport cost error of the rounded iterate",
        "iteration",
        "mean gap (log scale)",
        &series,
        true,
    )
}

pub fn scaling_svg(scalings: &[Scaling]) -> String {
    let mut series = Vec::new();
    for s in scalings {
        let mut pts: Vec<(f64, f64)> = s.points.iter().map(|p| (p.1, p.2)).collect();
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let label = match s.fit {
            Some(f) => format!("{} (R²={:.3})", s.algo, f.r_squared),
            None => s.algo.to_string(),
        };
        if let (Some(f), Some(first), Some(last)) = (s.fit, pts.first(), pts.last()) {
            series.push(Series {
                label: format!("{} fit", s.algo),
                points: vec![
                    (first.0, f.slope * first.0 + f.intercept),
                    (last.0, f.slope * last.0 + f.intercept),
                ],
                markers: false,
                dashed: true,
            });
        }
        series.push(Series {
            label,
            points: pts,
            markers: true,
            dashed: false,
        });
    }
    line_chart(
        "Iterations to termination against 1/ε²",
        "1/ε²",
        "mean iterations",
        &series,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r_squared() {
        let fit = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[(1.0, 3.0)]).is_none());
        assert!(linear_fit(&[(1.0, 3.0), (1.0, 4.0)]).is_none());
    }

    #[test]
    fn r_squared_hand_value() {
        let pts = [(0.0, 0.0), (1.0, 3.0), (2.0, 3.0)];
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        // SS_res = 0.25 + 1 + 0.25 = 1.5, SS_tot = 4 + 1 + 1 = 6.
        assert!((fit.r_squared - 0.75).abs() < 1e-12);
    }

    #[test]
    fn svg_is_well_formed_without_data() {
        let svg = curves_svg(&[]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn na_formatting() {
        assert_eq!(na::<f64>(None), "NA");
        assert_eq!(na(Some(0.5)), "0.5");
    }
}
