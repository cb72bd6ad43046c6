//! CSV and SVG output for a set of benchmark runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use limes_core::workloads::Workload;

use crate::harness::LatencySamples;
use crate::plan::Mode;
use crate::stats::{compute_ecdf, summarize, EcdfTable, SummaryStats};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const BREAKDOWN_FILE: &str = "breakdown.svg";
pub const SAMPLES_HEADER: &str = "iteration,latency_ms";
pub const ECDF_HEADER: &str = "latency_ms,cum_prob";
pub const SUMMARY_HEADER: &str = "workload,mode,iterations,warmup,n,mean_ms,p50_ms,p90_ms,p99_ms,min_ms,max_ms,stddev_ms,warmup_mean_ms,aborted,recorded_at,host_info";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no sample sets to report")]
    NoSamples,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub fn samples_file(workload: Workload, mode: Mode) -> String {
    format!("samples_{workload}_{mode}.csv")
}

pub fn ecdf_csv_file(workload: Workload, mode: Mode) -> String {
    format!("ecdf_{workload}_{mode}.csv")
}

pub fn ecdf_svg_file(workload: Workload) -> String {
    format!("ecdf_{workload}.svg")
}

/// Writes every report for `sets` into `dir` and returns the paths written.
pub fn emit_reports(dir: &Path, sets: &[LatencySamples]) -> Result<Vec<PathBuf>, ReportError> {
    if sets.is_empty() {
        return Err(ReportError::NoSamples);
    }
    let mut files: Vec<(String, String)> = Vec::new();
    for s in sets {
        files.push((samples_file(s.plan.workload, s.plan.mode), samples_csv(&s.values_ms)));
        let ecdf = compute_ecdf(&s.values_ms).ok();
        files.push((ecdf_csv_file(s.plan.workload, s.plan.mode), ecdf_csv(ecdf.as_ref())));
    }
    files.push((SUMMARY_FILE.to_string(), summary_csv(sets)));
    for (workload, group) in by_workload(sets) {
        files.push((ecdf_svg_file(workload), ecdf_svg(workload, &group)));
    }
    if let Some(svg) = breakdown_svg(sets) {
        files.push((BREAKDOWN_FILE.to_string(), svg));
    }

    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

pub fn samples_csv(values_ms: &[f64]) -> String {
    let mut out = format!("{SAMPLES_HEADER}\n");
    for (i, v) in values_ms.iter().enumerate() {
        let _ = writeln!(out, "{},{v:.3}", i + 1);
    }
    out
}

pub fn ecdf_csv(table: Option<&EcdfTable>) -> String {
    let mut out = format!("{ECDF_HEADER}\n");
    for (x, p) in table.map_or(&[][..], |t| &t.points) {
        let _ = writeln!(out, "{x:.3},{p:.3}");
    }
    out
}

/// Reads back the latency column of a samples CSV.
pub fn parse_samples_csv(text: &str) -> Result<Vec<f64>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, SAMPLES_HEADER)) => {}
        _ => {
            return Err(ReportError::Parse {
                line: 1,
                reason: format!("expected header {SAMPLES_HEADER:?}"),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let err = |reason: &str| ReportError::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (_, value) = line.split_once(',').ok_or_else(|| err("missing comma"))?;
            value.parse::<f64>().map_err(|_| err("bad latency"))
        })
        .collect()
}

pub fn summary_csv(sets: &[LatencySamples]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in sets {
        let stats = summarize(&s.values_ms).ok();
        let cols = stats.map_or_else(|| vec![String::new(); 7], |st| {
            [st.mean_ms, st.p50_ms, st.p90_ms, st.p99_ms, st.min_ms, st.max_ms, st.stddev_ms]
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect()
        });
        let warmup_mean = if s.warmup_ms.is_empty() {
            String::new()
        } else {
            format!("{:.3}", s.warmup_ms.iter().sum::<f64>() / s.warmup_ms.len() as f64)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.plan.workload,
            s.plan.mode,
            s.plan.iterations,
            s.plan.warmup_iterations,
            s.values_ms.len(),
            cols.join(","),
            warmup_mean,
            s.aborted,
            s.recorded_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            s.host_info.replace([',', '\n', '\r'], " "),
        );
    }
    out
}

fn by_workload(sets: &[LatencySamples]) -> BTreeMap<Workload, Vec<&LatencySamples>> {
    let mut map: BTreeMap<Workload, Vec<&LatencySamples>> = BTreeMap::new();
    for s in sets {
        map.entry(s.plan.workload).or_default().push(s);
    }
    map
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PLOT_W: f64 = WIDTH - LEFT - RIGHT;
const PLOT_H: f64 = HEIGHT - TOP - BOTTOM;
/// Floor for the log axis; sub-microsecond samples are drawn at this value.
const MIN_MS: f64 = 1e-3;

fn color(mode: Mode) -> &'static str {
    match mode {
        Mode::ColdJit => "#d62728",
        Mode::ColdCached => "#1f77b4",
        Mode::Execution => "#2ca02c",
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// ECDF step curves of every run of one workload on a log-scaled latency
/// axis. Curves are drawn in a y-up coordinate group, so the `points` of
/// each polyline have non-decreasing y.
pub fn ecdf_svg(workload: Workload, sets: &[&LatencySamples]) -> String {
    let curves: Vec<(Mode, EcdfTable)> = sets
        .iter()
        .filter_map(|s| compute_ecdf(&s.values_ms).ok().map(|t| (s.plan.mode, t)))
        .collect();
    let xs = curves.iter().flat_map(|(_, t)| t.points.iter().map(|p| p.0.max(MIN_MS)));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (lo, hi) = if lo.is_finite() {
        let lo = lo.log10().floor();
        let hi = hi.log10().ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    } else {
        (0.0, 1.0)
    };
    let sx = |x: f64| (x.max(MIN_MS).log10() - lo) / (hi - lo) * PLOT_W;

    let mut out = String::new();
    svg_open(&mut out, &format!("Cold start / execution latency ECDF: {workload}"));
    let bottom = TOP + PLOT_H;
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );
    for decade in (lo as i32)..=(hi as i32) {
        let x = LEFT + sx(10f64.powi(decade));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{bottom}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            bottom + 16.0,
            axis_label(10f64.powi(decade))
        );
    }
    for tick in 0..=4 {
        let p = tick as f64 / 4.0;
        let y = bottom - p * PLOT_H;
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{p:.2}</text>"##,
            LEFT + PLOT_W,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">latency (ms, log scale)</text>"#,
        LEFT + PLOT_W / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">cumulative probability</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );

    let _ = writeln!(out, r#"<g transform="translate({LEFT},{bottom}) scale(1,-1)">"#);
    for (mode, table) in &curves {
        let mut pts = Vec::with_capacity(table.points.len() * 2);
        let mut prev = 0.0;
        for &(x, p) in &table.points {
            let px = sx(x);
            pts.push(format!("{px:.2},{:.2}", prev * PLOT_H));
            pts.push(format!("{px:.2},{:.2}", p * PLOT_H));
            prev = p;
        }
        let _ = writeln!(
            out,
            r#"<polyline class="ecdf" data-mode="{mode}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            color(*mode),
            pts.join(" ")
        );
    }
    let _ = writeln!(out, "</g>");

    for (i, (mode, _)) in curves.iter().enumerate() {
        let y = TOP + 14.0 + i as f64 * 18.0;
        let x = LEFT + PLOT_W + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{:.2}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{mode}</text>"#,
            x + 20.0,
            color(*mode),
            x + 26.0,
            y + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Mean cold start and mean execution per workload, one stacked bar each.
/// Cold start comes from the cold-jit run when there is one, otherwise the
/// cold-cached run. Returns `None` unless some workload has both parts.
pub fn breakdown_svg(sets: &[LatencySamples]) -> Option<String> {
    let mut bars: Vec<(Workload, Mode, f64, f64)> = Vec::new();
    for (workload, group) in by_workload(sets) {
        let mean = |mode: Mode| -> Option<SummaryStats> {
            group
                .iter()
                .find(|s| s.plan.mode == mode)
                .and_then(|s| summarize(&s.values_ms).ok())
        };
        let cold = mean(Mode::ColdJit)
            .map(|s| (Mode::ColdJit, s))
            .or_else(|| mean(Mode::ColdCached).map(|s| (Mode::ColdCached, s)));
        if let (Some((mode, cold)), Some(exec)) = (cold, mean(Mode::Execution)) {
            bars.push((workload, mode, cold.mean_ms, exec.mean_ms));
        }
    }
    if bars.is_empty() {
        return None;
    }
    let max = bars.iter().map(|b| b.2 + b.3).fold(0.0, f64::max).max(MIN_MS);
    let scale = PLOT_H / (max * 1.1);
    let slot = PLOT_W / bars.len() as f64;
    let bar_w = slot * 0.6;
    let bottom = TOP + PLOT_H;

    let mut out = String::new();
    svg_open(&mut out, "Mean cold start + execution (ms)");
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{bottom}" x2="{:.2}" y2="{bottom}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bottom}" stroke="black"/>"#,
        LEFT + PLOT_W
    );
    for tick in 0..=4 {
        let v = max * 1.1 * tick as f64 / 4.0;
        let y = bottom - v * scale;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            axis_label(v)
        );
    }
    let _ = writeln!(out, r#"<g transform="translate({LEFT},{bottom}) scale(1,-1)">"#);
    for (i, (workload, mode, cold, exec)) in bars.iter().enumerate() {
        let x = i as f64 * slot + (slot - bar_w) / 2.0;
        let _ = writeln!(
            out,
            r#"<rect class="cold-start" data-workload="{workload}" data-mode="{mode}" x="{x:.2}" y="0" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
            cold * scale,
            color(*mode)
        );
        let _ = writeln!(
            out,
            r#"<rect class="execution" data-workload="{workload}" x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
            cold * scale,
            exec * scale,
            color(Mode::Execution)
        );
    }
    let _ = writeln!(out, "</g>");
    for (i, (workload, _, cold, exec)) in bars.iter().enumerate() {
        let cx = LEFT + i as f64 * slot + slot / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{workload}</text><text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{:.3}</text>"#,
            bottom + 16.0,
            bottom - (cold + exec) * scale - 4.0,
            cold + exec
        );
    }
    for (i, (label, mode)) in [("cold start (jit)", Mode::ColdJit), ("cold start (cached)", Mode::ColdCached), ("execution", Mode::Execution)]
        .into_iter()
        .enumerate()
    {
        let y = TOP + 14.0 + i as f64 * 18.0;
        let x = LEFT + PLOT_W + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{:.2}" width="14" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{label}</text>"#,
            y - 6.0,
            color(mode),
            x + 20.0,
            y + 4.0
        );
    }
    out.push_str("</svg>\n");
    Some(out)
}

/// Extracts `(x, y)` pairs from each `<polyline points="...">` in `svg`.
pub fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.match_indices("<polyline")
        .filter_map(|(at, _)| {
            let rest = &svg[at..];
            let start = rest.find("points=\"")? + "points=\"".len();
            let len = rest[start..].find('"')?;
            Some(
                rest[start..start + len]
                    .split_whitespace()
                    .filter_map(|pair| {
                        let (x, y) = pair.split_once(',')?;
                        Some((x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_csv_layout() {
        let csv = samples_csv(&[1.0, 2.5, 0.0004]);
        assert_eq!(csv, "iteration,latency_ms\n1,1.000\n2,2.500\n3,0.000\n");
        assert_eq!(parse_samples_csv(&csv).unwrap(), vec![1.0, 2.5, 0.0]);
    }

    #[test]
    fn ecdf_csv_layout() {
        let t = compute_ecdf(&[7.0, 7.0, 9.0]).unwrap();
        assert_eq!(ecdf_csv(Some(&t)), "latency_ms,cum_prob\n7.000,0.667\n9.000,1.000\n");
        assert_eq!(ecdf_csv(None), "latency_ms,cum_prob\n");
    }

    #[test]
    fn parse_rejects_bad_header() {
        assert!(parse_samples_csv("i,l\n1,2\n").is_err());
    }

    #[test]
    fn axis_labels_are_trimmed() {
        assert_eq!(axis_label(100.0), "100");
        assert_eq!(axis_label(0.01), "0.01");
    }
}
