//! Hand-written SVG figures on a fixed 800×600 canvas.
//!
//! Output depends only on the fit, so the same artifact always renders to
//! the same bytes.

use std::fmt::Write as _;

use crate::diagnostics::{self, group_smd_by_label, pbr, weight_cv};
use crate::error::{BalError, Result};
use crate::family::ArmLabel;
use crate::path::{BalNetFit, PathFit};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 80.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PBR_COLOR: &str = "#1f77b4";
const ESS_COLOR: &str = "#d62728";
const CV_COLOR: &str = "#2ca02c";
const UNWEIGHTED_COLOR: &str = "#7f7f7f";
const WEIGHTED_COLOR: &str = "#1f77b4";

struct Svg {
    buf: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(buf, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let mut svg = Svg { buf };
        svg.text(WIDTH / 2.0, 25.0, title, "middle", 15.0);
        svg
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: Option<&str>) {
        let dash = dash.map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        let _ = writeln!(
            self.buf,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn polyline(&mut self, id: &str, pts: &[(f64, f64)], stroke: &str, dash: Option<&str>) {
        let mut d = String::new();
        for (k, (x, y)) in pts.iter().enumerate() {
            if k > 0 {
                d.push(' ');
            }
            let _ = write!(d, "{x:.2},{y:.2}");
        }
        let dash = dash.map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        let _ = writeln!(
            self.buf,
            r#"<polyline id="{id}" points="{d}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.buf,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="white"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.buf,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn vtext(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.buf,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
            escape(s)
        );
    }

    fn frame(&mut self) {
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            self.buf,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y1 - y0
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Affine map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if d1 == d0 { (d0 - 0.5, d1 + 0.5) } else { (d0, d1) };
        Scale { d0, d1, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn dash_for(label: ArmLabel) -> Option<&'static str> {
    match label {
        ArmLabel::Control => None,
        ArmLabel::Treated => Some("6,4"),
    }
}

/// One curve point of the path figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub pbr: f64,
    pub ess: f64,
    pub weight_cv: f64,
}

pub fn path_points(path: &PathFit) -> Vec<PathPoint> {
    path.summary
        .iter()
        .map(|row| PathPoint {
            lambda: row.lambda,
            pbr: pbr(row.avg_abs_smd, path.baseline_avg_abs_smd).0,
            ess: row.ess,
            weight_cv: weight_cv(row.ess),
        })
        .collect()
}

/// PBR and ESS against λ on a descending log axis, with the weight CV on
/// the right axis. Each balancing model gets its own line style.
pub fn path_plot(fit: &BalNetFit) -> Result<String> {
    let series: Vec<(ArmLabel, Vec<PathPoint>)> = fit
        .paths
        .iter()
        .map(|p| (p.label, path_points(p)))
        .collect();
    let all: Vec<&PathPoint> = series.iter().flat_map(|(_, s)| s).collect();
    if all.is_empty() {
        return Err(BalError::numerical("no converged path points to plot"));
    }
    let lmax = all.iter().map(|p| p.lambda).fold(f64::MIN, f64::max);
    let lmin = all.iter().map(|p| p.lambda).fold(f64::MAX, f64::min);
    let logx = |l: f64| l.max(f64::MIN_POSITIVE).log10();
    // descending λ: λ_max on the left
    let xs = Scale::new(logx(lmax), logx(lmin), MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let pct_lo = all.iter().map(|p| p.pbr).fold(0.0, f64::min).floor();
    let ys = Scale::new(pct_lo, 100.0, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let cv_hi = all.iter().map(|p| p.weight_cv).fold(0.0, f64::max);
    let cv_hi = if cv_hi > 0.0 { cv_hi * 1.05 } else { 1.0 };
    let ycv = Scale::new(0.0, cv_hi, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let mut svg = Svg::new("Balance along the regularization path");
    svg.frame();
    let bottom = HEIGHT - MARGIN_BOTTOM;
    let right = WIDTH - MARGIN_RIGHT;
    for t in nice_ticks(pct_lo, 100.0, 5) {
        let y = ys.map(t);
        svg.line(MARGIN_LEFT - 5.0, y, MARGIN_LEFT, y, "#333", None);
        svg.text(MARGIN_LEFT - 8.0, y + 4.0, &fmt_tick(t), "end", 11.0);
    }
    for t in nice_ticks(0.0, cv_hi, 5) {
        let y = ycv.map(t);
        svg.line(right, y, right + 5.0, y, "#333", None);
        svg.text(right + 8.0, y + 4.0, &fmt_tick(t), "start", 11.0);
    }
    let (a, b) = (logx(lmin).floor() as i32, logx(lmax).ceil() as i32);
    for e in a..=b {
        let v = e as f64;
        if v >= logx(lmin) && v <= logx(lmax) {
            let x = xs.map(v);
            svg.line(x, bottom, x, bottom + 5.0, "#333", None);
            svg.text(x, bottom + 18.0, &fmt_tick(10f64.powi(e)), "middle", 11.0);
        }
    }
    for v in [lmax, lmin] {
        let x = xs.map(logx(v));
        svg.line(x, bottom, x, bottom + 8.0, "#333", None);
        svg.text(x, bottom + 32.0, &format!("{v:.5}"), "middle", 10.0);
    }
    svg.text((MARGIN_LEFT + right) / 2.0, HEIGHT - 15.0, "lambda (log scale, decreasing)", "middle", 12.0);
    svg.vtext(25.0, (MARGIN_TOP + bottom) / 2.0, "PBR / ESS (%)");
    svg.vtext(WIDTH - 20.0, (MARGIN_TOP + bottom) / 2.0, "weight CV");

    for (label, pts) in &series {
        let name = label.title().to_lowercase();
        let dash = dash_for(*label);
        let map = |f: &dyn Fn(&PathPoint) -> f64, s: &Scale| -> Vec<(f64, f64)> {
            pts.iter().map(|p| (xs.map(logx(p.lambda)), s.map(f(p)))).collect()
        };
        svg.polyline(&format!("pbr-{name}"), &map(&|p| p.pbr, &ys), PBR_COLOR, dash);
        svg.polyline(&format!("ess-{name}"), &map(&|p| p.ess, &ys), ESS_COLOR, dash);
        svg.polyline(&format!("cv-{name}"), &map(&|p| p.weight_cv, &ycv), CV_COLOR, dash);
    }
    let mut ly = MARGIN_TOP + 15.0;
    for (text, color) in [("PBR", PBR_COLOR), ("ESS", ESS_COLOR), ("weight CV", CV_COLOR)] {
        svg.line(MARGIN_LEFT + 10.0, ly - 4.0, MARGIN_LEFT + 35.0, ly - 4.0, color, None);
        svg.text(MARGIN_LEFT + 40.0, ly, text, "start", 11.0);
        ly += 15.0;
    }
    if series.len() > 1 {
        for (label, _) in &series {
            svg.line(MARGIN_LEFT + 10.0, ly - 4.0, MARGIN_LEFT + 35.0, ly - 4.0, "#333", dash_for(*label));
            svg.text(MARGIN_LEFT + 40.0, ly, label.title(), "start", 11.0);
            ly += 15.0;
        }
    }
    Ok(svg.finish())
}

/// One row of the SMD figure.
#[derive(Debug, Clone, PartialEq)]
pub struct SmdRow {
    pub name: String,
    pub unweighted: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmdPanel {
    pub label: ArmLabel,
    pub lambda: f64,
    /// Rows hold signed SMDs, or mean |SMD| per group when grouped.
    pub rows: Vec<SmdRow>,
    pub grouped: bool,
}

/// Data behind the SMD figure: the `max` covariates with the largest
/// unweighted imbalance, or per-group aggregates when `groups` assigns a
/// group label to every feature.
pub fn smd_panels(
    fit: &BalNetFit,
    lambda: f64,
    max: usize,
    groups: Option<&[String]>,
) -> Result<Vec<SmdPanel>> {
    let top = diagnostics::report(fit, f64::INFINITY)?;
    let at = diagnostics::report(fit, lambda)?;
    let names = &fit.feature_names;
    top.iter()
        .zip(&at)
        .map(|(u, w)| {
            let rows = match groups {
                Some(g) => {
                    let gu = group_smd_by_label(&u.smd, g)?;
                    let gw = group_smd_by_label(&w.smd, g)?;
                    gu.into_iter()
                        .zip(gw)
                        .map(|(a, b)| SmdRow {
                            name: a.name,
                            unweighted: a.mean_abs,
                            weighted: b.mean_abs,
                        })
                        .collect()
                }
                None => {
                    let mut order: Vec<usize> = (0..u.smd.len()).collect();
                    order.sort_by(|&a, &b| u.smd[b].abs().total_cmp(&u.smd[a].abs()).then(a.cmp(&b)));
                    order.truncate(max.max(1));
                    order
                        .into_iter()
                        .map(|j| SmdRow {
                            name: names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                            unweighted: u.smd[j],
                            weighted: w.smd[j],
                        })
                        .collect()
                }
            };
            Ok(SmdPanel {
                label: w.label,
                lambda: w.lambda,
                rows,
                grouped: groups.is_some(),
            })
        })
        .collect()
}

/// Dot plot of unweighted and weighted SMDs with guides at ±λ.
pub fn smd_plot(panels: &[SmdPanel]) -> Result<String> {
    if panels.is_empty() {
        return Err(BalError::numerical("nothing to plot"));
    }
    let mut svg = Svg::new(if panels[0].grouped {
        "Mean absolute SMD by covariate group"
    } else {
        "Standardized mean differences"
    });
    let name_w = 150.0;
    let left = MARGIN_LEFT + name_w - 60.0;
    let right = WIDTH - 40.0;
    let avail = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let panel_h = avail / panels.len() as f64;
    let extent = panels
        .iter()
        .flat_map(|p| {
            p.rows
                .iter()
                .flat_map(|r| [r.unweighted.abs(), r.weighted.abs()])
                .chain([p.lambda])
        })
        .fold(0.0, f64::max)
        .max(1e-3)
        * 1.1;
    let lo = if panels[0].grouped { 0.0 } else { -extent };
    let xs = Scale::new(lo, extent, left, right);
    for (k, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + k as f64 * panel_h;
        let bottom = top + panel_h - 30.0;
        let _ = writeln!(
            svg.buf,
            r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            right - left,
            bottom - top
        );
        svg.text(
            left,
            top - 6.0,
            &format!("{} (lambda = {:.5})", panel.label.title(), panel.lambda),
            "start",
            12.0,
        );
        let guides: Vec<f64> = if panel.grouped {
            vec![panel.lambda]
        } else {
            vec![-panel.lambda, panel.lambda]
        };
        for g in guides {
            let x = xs.map(g);
            svg.line(x, top, x, bottom, "#999", Some("4,3"));
        }
        if !panel.grouped {
            let x = xs.map(0.0);
            svg.line(x, top, x, bottom, "#ccc", None);
        }
        for t in nice_ticks(lo, extent, 6) {
            let x = xs.map(t);
            svg.line(x, bottom, x, bottom + 4.0, "#333", None);
            svg.text(x, bottom + 16.0, &fmt_tick(t), "middle", 10.0);
        }
        let m = panel.rows.len().max(1) as f64;
        let step = (bottom - top) / m;
        for (i, row) in panel.rows.iter().enumerate() {
            let y = top + step * (i as f64 + 0.5);
            svg.text(left - 6.0, y + 4.0, &row.name, "end", 10.0);
            svg.circle(xs.map(row.weighted), y, 3.5, WEIGHTED_COLOR, WEIGHTED_COLOR);
            svg.circle(xs.map(row.unweighted), y, 4.5, "none", UNWEIGHTED_COLOR);
        }
    }
    svg.text(
        (left + right) / 2.0,
        HEIGHT - 15.0,
        "open: unweighted, filled: weighted, dashed: lambda",
        "middle",
        11.0,
    );
    Ok(svg.finish())
}

/// Histogram of the fitted arm weights at `lambda`, one panel per model.
pub fn weights_plot(fit: &BalNetFit, lambda: f64, bins: usize) -> Result<String> {
    let bins = bins.max(1);
    let reports = diagnostics::report(fit, lambda)?;
    let configs = fit.arm_configs();
    let mut svg = Svg::new("Distribution of balancing weights");
    let panel_h = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / reports.len() as f64;
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    for (k, (rep, cfg)) in reports.iter().zip(&configs).enumerate() {
        let w: Vec<f64> = rep
            .weights
            .iter()
            .zip(&cfg.arm)
            .filter(|(_, &a)| a)
            .map(|(&v, _)| v)
            .collect();
        let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
        let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if wmax > wmin { wmax - wmin } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in &w {
            let b = (((v - wmin) / span) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let cmax = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
        let top = MARGIN_TOP + k as f64 * panel_h + 10.0;
        let bottom = top + panel_h - 45.0;
        let xs = Scale::new(wmin, wmin + span, left, right);
        let ys = Scale::new(0.0, cmax, bottom, top);
        svg.text(
            left,
            top - 4.0,
            &format!("{} (lambda = {:.5}, ESS = {:.1}%)", rep.label.title(), rep.lambda, rep.ess),
            "start",
            12.0,
        );
        let bw = (right - left) / bins as f64;
        for (b, &c) in counts.iter().enumerate() {
            if c > 0 {
                let y = ys.map(c as f64);
                svg.rect(left + b as f64 * bw, y, bw, bottom - y, WEIGHTED_COLOR);
            }
        }
        svg.line(left, bottom, right, bottom, "#333", None);
        for t in nice_ticks(wmin, wmin + span, 6) {
            let x = xs.map(t);
            svg.line(x, bottom, x, bottom + 4.0, "#333", None);
            svg.text(x, bottom + 16.0, &fmt_tick(t), "middle", 10.0);
        }
        svg.text(left - 8.0, top + 8.0, &format!("{}", cmax as usize), "end", 10.0);
        svg.text(left - 8.0, bottom, "0", "end", 10.0);
    }
    svg.text((left + right) / 2.0, HEIGHT - 15.0, "weight", "middle", 12.0);
    Ok(svg.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, FeatureGroups, Matrix, Target};
    use crate::path::{fit_balnet, PathOptions};
    use crate::penalty::PenaltySpec;
    use crate::solver::SolverConfig;

    fn fit() -> BalNetFit {
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.71).sin(), (t * 0.13).cos(), (t * 1.7).sin() * 0.5]
            })
            .collect();
        let w: Vec<bool> = (0..80).map(|i| (i * 7) % 5 < 2).collect();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), w, names).unwrap();
        let pen = PenaltySpec::grouped(FeatureGroups::singletons(ds.feature_names()), 1.0);
        fit_balnet(
            &ds,
            Target::Ate,
            &pen,
            &PathOptions { nlambda: 20, ..Default::default() },
            &SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn plots_are_deterministic_and_well_formed() {
        let f = fit();
        let a = path_plot(&f).unwrap();
        assert_eq!(a, path_plot(&f).unwrap());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains(r#"viewBox="0 0 800 600""#));
        assert!(a.contains(r#"id="pbr-treated""#) && a.contains(r#"id="ess-control""#));
        let lam = f.paths[0].solutions[10].lambda;
        let s = smd_plot(&smd_panels(&f, lam, 2, None).unwrap()).unwrap();
        assert_eq!(s, smd_plot(&smd_panels(&f, lam, 2, None).unwrap()).unwrap());
        let h = weights_plot(&f, lam, 20).unwrap();
        assert!(h.contains("<rect"));
    }

    #[test]
    fn smd_markers_respect_guides() {
        let f = fit();
        for k in [0, 5, 19] {
            let lam = f.paths[0].solutions[k.min(f.paths[0].len() - 1)].lambda;
            for panel in smd_panels(&f, lam, 10, None).unwrap() {
                assert_eq!(panel.rows.len(), 3);
                for r in &panel.rows {
                    assert!(r.weighted.abs() <= panel.lambda + 1e-6);
                }
            }
        }
        let g: Vec<String> = vec!["ab".into(), "c".into(), "ab".into()];
        let grouped = smd_panels(&f, 0.0, 10, Some(&g)).unwrap();
        assert_eq!(grouped[0].rows.len(), 2);
        assert!(smd_plot(&grouped).unwrap().contains("by covariate group"));
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_ticks(0.0, 100.0, 5), vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(fmt_tick(0.5), "0.5");
    }
}
