//! CSV and SVG output for sweep records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::sweep::SweepRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "metric", "kernel", "n", "d", "c", "gamma", "lambda", "reps", "mean", "ci_half_width", "seed", "error",
];

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Records as CSV text.
pub fn to_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Csv { row: 0, col: 0, msg: e.to_string() };
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.metric.id().to_string(),
            r.kernel.clone(),
            r.n.to_string(),
            r.d.to_string(),
            num(r.c),
            num(r.gamma),
            num(r.lambda),
            r.reps.to_string(),
            num(r.mean),
            num(r.ci_half_width),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv { row: 0, col: 0, msg: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes the CSV and, when `svg` is given, a line chart.
pub fn emit(records: &[SweepRecord], csv_path: &Path, svg: Option<&Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("no records to emit".into()));
    }
    write_file(csv_path, &to_csv(records)?)?;
    if let Some(p) = svg {
        write_file(p, &to_svg(records))?;
    }
    Ok(())
}

/// Line chart with one polyline per (γ, λ-series), x = d when n is
/// constant and c otherwise, with vertical CI whiskers.
pub fn to_svg(records: &[SweepRecord]) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let single_n = records.windows(2).all(|p| p[0].n == p[1].n);
    let x_of = |r: &SweepRecord| if single_n { r.d as f64 } else { r.c };
    let ok: Vec<&SweepRecord> = records.iter().filter(|r| r.mean.is_finite()).collect();

    let mut series: BTreeMap<String, Vec<&SweepRecord>> = BTreeMap::new();
    for r in &ok {
        let fixed = records
            .iter()
            .filter(|o| o.gamma == r.gamma)
            .all(|o| o.lambda == r.lambda || !o.lambda.is_finite());
        let key = if fixed {
            format!("gamma={} lambda={}", r.gamma, r.lambda)
        } else {
            format!("gamma={} lambda=resolved", r.gamma)
        };
        series.entry(key).or_default().push(r);
    }

    let lo_hi = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (x0, x1) = lo_hi(&mut ok.iter().map(|r| x_of(r)));
    let (y0, y1) = lo_hi(&mut ok.iter().flat_map(|r| {
        let ci = if r.ci_half_width.is_finite() { r.ci_half_width } else { 0.0 };
        [r.mean - ci, r.mean + ci]
    }));
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let sx = |x: f64| pad + (x - x0) / span(x0, x1) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / span(y0, y1) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} L{pad} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = h - pad,
        r = w - pad
    );
    if ok.is_empty() {
        let _ = writeln!(s, "</svg>");
        return s;
    }
    let axis = if single_n { "d" } else { "c" };
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">{axis}</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{x0:.4}</text>"#, pad, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{x1:.4}</text>"#, w - pad - 30.0, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="10">{y1:.4}</text>"#, pad);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="10">{y0:.4}</text>"#, h - pad);
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = pts.clone();
        pts.sort_by(|a, b| x_of(a).total_cmp(&x_of(b)));
        let coords: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(x_of(r)), sy(r.mean))).collect();
        let _ = writeln!(s, r#"<g stroke="{color}" fill="none">"#);
        let _ = writeln!(s, r#"<title>{name}</title>"#);
        let _ = writeln!(s, r#"<polyline points="{}"/>"#, coords.join(" "));
        for r in &pts {
            if r.ci_half_width.is_finite() {
                let x = sx(x_of(r));
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
                    sy(r.mean - r.ci_half_width),
                    sy(r.mean + r.ci_half_width)
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{name}</text>"#,
            w - pad - 150.0,
            pad + 12.0 * i as f64
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}
