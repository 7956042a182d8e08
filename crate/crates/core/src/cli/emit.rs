//! Report writers: nested JSON, one CSV row per check, and an SVG of margins against `t`.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::config::Format;
use super::suite::SuiteReport;
use crate::inequalities::{CheckReport, InequalityId, Variant, Verdict};

pub const JSON_NAME: &str = "report.json";
pub const CSV_NAME: &str = "report.csv";
pub const SVG_NAME: &str = "margins.svg";

pub const CSV_HEADER: [&str; 13] = [
    "inequality_id",
    "variant",
    "t",
    "x",
    "y",
    "lhs",
    "lhs_stderr",
    "rhs",
    "rhs_stderr",
    "margin",
    "margin_stderr",
    "verdict",
    "seed",
];

pub fn to_json(report: &SuiteReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

pub fn read_report(path: &Path) -> io::Result<SuiteReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";")
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Skip => "skip",
    }
}

pub fn to_csv(report: &SuiteReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &report.reports {
        let c = &r.context;
        w.write_record([
            r.inequality_id.name().to_string(),
            r.variant.name().to_string(),
            fmt_num(c.t),
            fmt_vec(&c.x),
            c.y.as_deref().map(fmt_vec).unwrap_or_default(),
            fmt_num(r.lhs.value),
            fmt_num(r.lhs.stderr),
            fmt_num(r.rhs.value),
            fmt_num(r.rhs.stderr),
            fmt_num(r.margin),
            fmt_num(r.margin_stderr),
            verdict_name(r.verdict).to_string(),
            c.seeds.first().map(|s| s.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const PAD_L: f64 = 64.0;
const PAD_R: f64 = 16.0;
const PAD_T: f64 = 28.0;
const PAD_B: f64 = 56.0;

struct Series<'a> {
    name: String,
    points: Vec<&'a CheckReport>,
}

/// Panels keyed by (inequality, variant) in order of first appearance, each
/// with one series per test function.
fn panels(report: &SuiteReport) -> Vec<((InequalityId, Variant), Vec<Series<'_>>)> {
    let mut out: Vec<((InequalityId, Variant), Vec<Series>)> = Vec::new();
    for r in &report.reports {
        if r.verdict == Verdict::Skip {
            continue;
        }
        let key = (r.inequality_id, r.variant);
        let name = r.context.f_id.clone().unwrap_or_else(|| "exact".into());
        let idx = match out.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                out.push((key, Vec::new()));
                out.len() - 1
            }
        };
        let series = &mut out[idx].1;
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(r),
            None => series.push(Series { name, points: vec![r] }),
        }
    }
    for (_, series) in out.iter_mut() {
        for s in series.iter_mut() {
            s.points.retain(|r| r.margin.is_finite() && r.context.t.is_finite());
            s.points.sort_by(|a, b| a.context.t.total_cmp(&b.context.t));
        }
    }
    out
}

fn band(r: &CheckReport, k: f64) -> f64 {
    if r.margin_stderr.is_finite() {
        k * r.margin_stderr
    } else {
        0.0
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo <= 1e-300 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Margin `± k·σ` bands against `t`, one panel per (inequality, variant).
pub fn to_svg(report: &SuiteReport, k: f64) -> String {
    let panels = panels(report);
    let cols = if panels.len() > 1 { 2 } else { 1 };
    let rows = panels.len().div_ceil(cols).max(1);
    let width = cols as f64 * PANEL_W;
    let height = rows as f64 * PANEL_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    if panels.is_empty() {
        let _ = writeln!(s, r#"<text x="20" y="40">no checks to plot</text>"#);
    }
    for (pi, ((id, variant), series)) in panels.iter().enumerate() {
        let ox = (pi % cols) as f64 * PANEL_W;
        let oy = (pi / cols) as f64 * PANEL_H;
        let all: Vec<&CheckReport> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
        let (t0, t1) = range(all.iter().map(|r| r.context.t));
        let (m0, m1) = range(
            all.iter()
                .flat_map(|r| [r.margin - band(r, k), r.margin + band(r, k)])
                .chain(std::iter::once(0.0)),
        );
        let plot_w = PANEL_W - PAD_L - PAD_R;
        let plot_h = PANEL_H - PAD_T - PAD_B;
        let px = |t: f64| ox + PAD_L + (t - t0) / (t1 - t0) * plot_w;
        let py = |m: f64| oy + PAD_T + (m1 - m) / (m1 - m0) * plot_h;
        let _ = writeln!(s, r#"<g class="panel" data-inequality="{}" data-variant="{}">"#, id.name(), variant.name());
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-weight="bold">{} ({})</text>"#,
            ox + PAD_L,
            oy + 18.0,
            id.name(),
            variant.name()
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#999"/>"##,
            ox + PAD_L,
            oy + PAD_T
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#444" stroke-dasharray="4 3"/>"##,
            px(t0),
            py(0.0),
            px(t1),
            py(0.0)
        );
        for (label, v, y) in [("min", m0, py(m0)), ("max", m1, py(m1))] {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" class="{label}">{}</text>"#,
                ox + PAD_L - 4.0,
                y + 4.0,
                short(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">t = {}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ox + PAD_L,
            oy + PAD_T + plot_h + 14.0,
            short(t0),
            ox + PAD_L + plot_w,
            oy + PAD_T + plot_h + 14.0,
            short(t1)
        );
        for (si, ser) in series.iter().enumerate() {
            let colour = PALETTE[si % PALETTE.len()];
            if !ser.points.is_empty() {
                let upper: Vec<String> = ser
                    .points
                    .iter()
                    .map(|r| format!("{:.2},{:.2}", px(r.context.t), py(r.margin + band(r, k))))
                    .collect();
                let lower: Vec<String> = ser
                    .points
                    .iter()
                    .rev()
                    .map(|r| format!("{:.2},{:.2}", px(r.context.t), py(r.margin - band(r, k))))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.15" stroke="none"/>"#,
                    upper.join(" "),
                    lower.join(" ")
                );
            }
            let line: Vec<String> = ser
                .points
                .iter()
                .map(|r| format!("{:.2},{:.2}", px(r.context.t), py(r.margin)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-testfn="{}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                escape(&ser.name),
                line.join(" ")
            );
            for r in &ser.points {
                let fill = if r.verdict == Verdict::Fail { "black" } else { colour };
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}"/>"#, px(r.context.t), py(r.margin));
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{}</text>"#,
                ox + PAD_L + 90.0 * si as f64,
                oy + PANEL_H - 14.0,
                escape(&ser.name)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn emit_report(report: &SuiteReport, formats: &[Format], dir: &Path, k: f64) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            Format::Json => (JSON_NAME, to_json(report)),
            Format::Csv => (CSV_NAME, to_csv(report)),
            Format::Svg => (SVG_NAME, to_svg(report, k)),
        };
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the SVG for an existing report.
pub fn plot_margins(report: &SuiteReport, dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let k = report
        .reports
        .iter()
        .map(|r| r.context.sigma_level)
        .find(|k| *k > 0.0)
        .unwrap_or(3.0);
    let path = dir.join(SVG_NAME);
    std::fs::write(&path, to_svg(report, k))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config_str;
    use crate::cli::suite::{run_suite, PlanEcho, Summary, SCHEMA_VERSION};

    fn empty() -> SuiteReport {
        let plan = parse_config_str(
            "[model]\nr = 1\ndims = [1, 1]\na0 = [1.0]\nblocks = [[1.0]]\n[mc]\nn = 10\nseed = 1\n",
        )
        .unwrap();
        SuiteReport {
            schema_version: SCHEMA_VERSION,
            plan: PlanEcho {
                hash: plan.hash,
                config: plan.raw,
            },
            reports: vec![],
            summary: Summary::default(),
            wall_time: 0.0,
        }
    }

    #[test]
    fn empty_report() {
        let r = empty();
        let v: serde_json::Value = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(v["reports"].as_array().unwrap().len(), 0);
        assert_eq!(v["schema_version"], 1);
        assert_eq!(to_csv(&r), CSV_HEADER.join(",") + "\n");
        assert!(to_svg(&r, 3.0).starts_with("<svg"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn skipped_checks_survive_json() {
        let text = "[model]\nr = 1\ndims = [1, 1]\na0 = [1.0]\nblocks = [[1.0]]\n[mc]\nn = 10\nseed = 1\n\
                    [[testfn]]\nid = \"f\"\nkind = \"linear\"\na = [1.0, 0.0]\n[[grid]]\nt = 1.0\nx = [0.0, 0.0]\n\
                    [[suite]]\ncheck = \"lsi\"\n";
        let plan = parse_config_str(text).unwrap();
        let report = run_suite(&plan, None);
        assert_eq!(report.summary.skip, 2);
        let back: SuiteReport = serde_json::from_str(&to_json(&report)).unwrap();
        assert!(back.reports[0].margin.is_nan());
        assert_eq!(back.reports[0].context, report.reports[0].context);
    }
}
