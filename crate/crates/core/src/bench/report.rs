//! Aggregation of result rows into summary tables and SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::ResultRow;
use super::task::Task;
use crate::error::Result;

/// Mean and standard error of one method at one budget point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub subset: String,
    /// Goal horizon parsed from the task ids, 0 when absent.
    pub horizon: usize,
    pub iters: usize,
    pub samples: usize,
    pub n: usize,
    pub mean_mje_m: f64,
    pub stderr_m: f64,
    /// Mean per-task drop from the initial distance.
    pub reduction_m: f64,
    pub mean_cost: f64,
    pub mean_wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: usize,
    pub method: String,
    pub n: usize,
    pub initial_mje_m: f64,
    pub mean_mje_m: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn horizon_of(row: &ResultRow) -> usize {
    Task::horizon_from_id(&row.task_id).unwrap_or(0)
}

/// Initial distance per (subset, task).
fn baseline(rows: &[ResultRow]) -> BTreeMap<(&str, &str), f64> {
    rows.iter()
        .filter(|r| r.method == "initial")
        .map(|r| ((r.subset.as_str(), r.task_id.as_str()), r.mje_m))
        .collect()
}

/// One row per (method, subset, horizon, iters, samples), sorted by key.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let base = baseline(rows);
    let mut groups: BTreeMap<(&str, &str, usize, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method.as_str(), r.subset.as_str(), horizon_of(r), r.iters, r.samples))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((method, subset, horizon, iters, samples), g)| {
            let values: Vec<f64> = g.iter().map(|r| r.mje_m).collect();
            let (mean, stderr) = mean_stderr(&values);
            let drops: Vec<f64> = g
                .iter()
                .filter_map(|r| base.get(&(subset, r.task_id.as_str())).map(|b| b - r.mje_m))
                .collect();
            let reduction = if drops.is_empty() { f64::NAN } else { mean_stderr(&drops).0 };
            SummaryRow {
                method: method.to_string(),
                subset: subset.to_string(),
                horizon,
                iters,
                samples,
                n: g.len(),
                mean_mje_m: mean,
                stderr_m: stderr,
                reduction_m: reduction,
                mean_cost: g.iter().map(|r| r.cost).sum::<f64>() / g.len() as f64,
                mean_wall_ms: g.iter().map(|r| r.wall_ms as f64).sum::<f64>() / g.len() as f64,
            }
        })
        .collect()
}

/// Rows of `method` at its largest budget in the file.
fn final_budget<'a>(rows: &'a [ResultRow], method: &str) -> impl Iterator<Item = &'a ResultRow> + 'a {
    let last = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.samples, r.iters))
        .max()
        .unwrap_or_default();
    let method = method.to_string();
    rows.iter()
        .filter(move |r| r.method == method && (r.samples, r.iters) == last)
}

/// Tasks split into `count` equal-count buckets by initial all-joint error,
/// with each method's mean all-joint error per bucket at its final budget.
pub fn quantile_buckets(rows: &[ResultRow], count: usize) -> Vec<BucketRow> {
    let mut initial: Vec<(f64, &str)> = rows
        .iter()
        .filter(|r| r.method == "initial" && r.subset == "all")
        .map(|r| (r.mje_m, r.task_id.as_str()))
        .collect();
    if initial.is_empty() || count == 0 {
        return Vec::new();
    }
    initial.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let n = initial.len();
    let bucket_of: BTreeMap<&str, (usize, f64)> = initial
        .iter()
        .enumerate()
        .map(|(rank, (v, id))| (*id, (rank * count / n, *v)))
        .collect();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for method in methods {
        let mut acc: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
        for r in final_budget(rows, method).filter(|r| r.subset == "all") {
            if let Some(&(b, init)) = bucket_of.get(r.task_id.as_str()) {
                let e = acc.entry(b).or_default();
                e.0 += 1;
                e.1 += init;
                e.2 += r.mje_m;
            }
        }
        for (bucket, (k, init, m)) in acc {
            out.push(BucketRow {
                bucket,
                method: method.to_string(),
                n: k,
                initial_mje_m: init / k as f64,
                mean_mje_m: m / k as f64,
            });
        }
    }
    out
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A minimal SVG line chart with axes, ticks and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 55.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 *= 1.05;
    let (pw, ph) = (w - left - right, h - top - bottom);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="lightgray"/>"#,
            left - 6.0,
            sy(yv) + 4.0,
            tick(yv),
            left + pw,
            sy(yv),
            sy(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for p in &path {
                let (cx, cy) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw + 12.0,
            left + pw + 32.0,
            left + pw + 38.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 10.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean all-joint error against iterations, one line per method and sample count.
pub fn budget_chart(summary: &[SummaryRow]) -> Option<String> {
    let mut lines: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in summary.iter().filter(|r| r.subset == "all" && r.iters > 0) {
        lines
            .entry((r.method.clone(), r.samples))
            .or_default()
            .push((r.iters as f64, r.mean_mje_m));
    }
    if lines.values().all(|p| p.len() < 2) {
        return None;
    }
    let series: Vec<Series> = lines
        .into_iter()
        .map(|((m, n), points)| Series {
            label: format!("{m} N={n}"),
            points,
        })
        .collect();
    Some(line_chart("CEM budget", "iterations", "mean all-joint MJE (m)", &series))
}

/// Mean all-joint error against goal horizon at each method's final budget.
pub fn horizon_chart(summary: &[SummaryRow]) -> Option<String> {
    let mut last: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in summary.iter().filter(|r| r.subset == "all") {
        let e = last.entry(&r.method).or_default();
        *e = (*e).max((r.samples, r.iters));
    }
    let mut lines: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in summary.iter().filter(|r| r.subset == "all" && last[r.method.as_str()] == (r.samples, r.iters)) {
        lines.entry(&r.method).or_default().push((r.horizon as f64, r.mean_mje_m));
    }
    if lines.values().all(|p| p.len() < 2) {
        return None;
    }
    let series: Vec<Series> = lines
        .into_iter()
        .map(|(m, points)| Series {
            label: m.to_string(),
            points,
        })
        .collect();
    Some(line_chart("Goal horizon", "goal horizon (steps)", "mean all-joint MJE (m)", &series))
}

/// Mean error per initial-error bucket.
pub fn bucket_chart(buckets: &[BucketRow]) -> Option<String> {
    let mut lines: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for b in buckets {
        lines.entry(&b.method).or_default().push((b.initial_mje_m, b.mean_mje_m));
    }
    if lines.is_empty() {
        return None;
    }
    let series: Vec<Series> = lines
        .into_iter()
        .map(|(m, points)| Series {
            label: m.to_string(),
            points,
        })
        .collect();
    Some(line_chart(
        "Initial-distance quantile buckets",
        "bucket mean initial MJE (m)",
        "mean all-joint MJE (m)",
        &series,
    ))
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::error::invalid(format!("csv: {e}")))?;
    for r in rows {
        w.serialize(r).map_err(|e| crate::error::invalid(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.csv`, `buckets.csv` and, with `plots`, whichever SVG
/// charts the rows support. Returns the written paths.
pub fn write_report(dir: &Path, rows: &[ResultRow], plots: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let summary = summarize(rows);
    let buckets = quantile_buckets(rows, 20);
    let mut written = vec![dir.join("summary.csv"), dir.join("buckets.csv")];
    write_csv_rows(&written[0], &summary)?;
    write_csv_rows(&written[1], &buckets)?;
    if plots {
        let charts = [
            ("budget.svg", budget_chart(&summary)),
            ("horizon.svg", horizon_chart(&summary)),
            ("buckets.svg", bucket_chart(&buckets)),
        ];
        for (name, chart) in charts {
            if let Some(svg) = chart {
                let path = dir.join(name);
                std::fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Plain-text table of the all-joint summary.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<14} {:>3} {:>5} {:>7} {:>4} {:>9} {:>8} {:>9} {:>8}\n",
        "method", "h", "iters", "samples", "n", "mje_m", "stderr", "reduction", "cost"
    );
    for r in summary.iter().filter(|r| r.subset == "all") {
        let _ = writeln!(
            s,
            "{:<14} {:>3} {:>5} {:>7} {:>4} {:>9.4} {:>8.4} {:>9.4} {:>8.4}",
            r.method, r.horizon, r.iters, r.samples, r.n, r.mean_mje_m, r.stderr_m, r.reduction_m, r.mean_cost
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, task: &str, mje: f64, iters: usize) -> ResultRow {
        ResultRow {
            method: method.into(),
            task_id: task.into(),
            subset: "all".into(),
            mje_m: mje,
            cost: 0.0,
            iters,
            samples: if iters > 0 { 16 } else { 0 },
            wall_ms: 0,
            seed: 0,
        }
    }

    #[test]
    fn summary_reports_mean_stderr_and_reduction() {
        let rows = vec![
            row("initial", "s-h8-0000", 1.0, 0),
            row("initial", "s-h8-0001", 0.6, 0),
            row("ll", "s-h8-0000", 0.8, 6),
            row("ll", "s-h8-0001", 0.4, 6),
        ];
        let s = summarize(&rows);
        let ll = s.iter().find(|r| r.method == "ll").unwrap();
        assert_eq!((ll.n, ll.horizon), (2, 8));
        assert!((ll.mean_mje_m - 0.6).abs() < 1e-12);
        assert!((ll.stderr_m - 0.2).abs() < 1e-12);
        assert!((ll.reduction_m - 0.2).abs() < 1e-12);
    }

    #[test]
    fn buckets_have_equal_counts() {
        let rows: Vec<ResultRow> = (0..40)
            .map(|i| row("initial", &format!("s-h8-{i:04}"), (40 - i) as f64 * 0.01, 0))
            .collect();
        let b = quantile_buckets(&rows, 20);
        assert_eq!(b.len(), 20);
        assert!(b.iter().all(|x| x.n == 2));
        assert!(b.windows(2).all(|w| w[0].initial_mje_m < w[1].initial_mje_m));
    }

    #[test]
    fn charts_are_well_formed() {
        let svg = line_chart(
            "t <1>",
            "x",
            "y",
            &[Series {
                label: "a".into(),
                points: vec![(1.0, 0.5), (3.0, 0.25)],
            }],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("t &lt;1&gt;") && svg.contains("<polyline"));
    }
}
