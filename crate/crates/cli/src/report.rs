use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use anyhow::Result;
use satrace::cpa::{ByteReport, CpaResult};
use satrace::traces::ColumnSummary;
use serde::Serialize;

use crate::files::write_text;

#[derive(Serialize)]
struct PeakJson {
    sample: usize,
    guess: String,
    rho: f64,
}

#[derive(Serialize)]
struct ByteJson {
    byte: usize,
    best_guess: String,
    best_sample: usize,
    best_rho: f64,
    score: f64,
    peak_guesses: Vec<String>,
    peaks: Vec<PeakJson>,
    undefined_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_rank: Option<usize>,
}

#[derive(Serialize)]
struct SummaryJson {
    model: String,
    n_traces: usize,
    window: [usize; 2],
    key_known: bool,
    /// Distinct peak winners over all attacked bytes.
    recovered_values: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    all_recovered: Option<bool>,
    bytes: Vec<ByteJson>,
}

fn hex(b: u8) -> String {
    format!("{b:02x}")
}

fn byte_json(r: &ByteReport) -> ByteJson {
    ByteJson {
        byte: r.byte_index,
        best_guess: hex(r.best_guess),
        best_sample: r.best_sample,
        best_rho: r.best_rho,
        score: r.scores[r.best_guess as usize],
        peak_guesses: r.peak_guesses().into_iter().map(hex).collect(),
        peaks: r
            .peaks
            .iter()
            .map(|p| PeakJson {
                sample: p.sample,
                guess: hex(p.guess),
                rho: p.rho,
            })
            .collect(),
        undefined_cells: r.undefined_cells,
        true_key: r.true_key.map(hex),
        true_rank: r.true_rank,
    }
}

fn ranking_csv(r: &ByteReport) -> String {
    let mut s = String::from("rank,guess,score\n");
    for (rank, &g) in r.ranking.iter().enumerate() {
        let _ = writeln!(s, "{rank},{},{}", hex(g), r.scores[g as usize]);
    }
    s
}

fn curve_csv(start: usize, values: &[f64]) -> String {
    let mut s = String::from("cycle,value\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", start + k);
    }
    s
}

fn results_csv(result: &CpaResult, key_known: bool) -> String {
    let mut s = String::from("byte,best_guess,best_sample,best_rho,score");
    if key_known {
        s.push_str(",true_key,true_rank");
    }
    s.push('\n');
    for r in &result.bytes {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.byte_index,
            hex(r.best_guess),
            r.best_sample,
            r.best_rho,
            r.scores[r.best_guess as usize]
        );
        if key_known {
            let _ = write!(
                s,
                ",{},{}",
                r.true_key.map(hex).unwrap_or_default(),
                r.true_rank.map(|x| x.to_string()).unwrap_or_default()
            );
        }
        s.push('\n');
    }
    s
}

fn trace_summary_csv(summary: &[ColumnSummary]) -> String {
    let mut s = String::from("cycle,mean,min,max\n");
    for (t, c) in summary.iter().enumerate() {
        let _ = writeln!(s, "{t},{},{},{}", c.mean, c.min, c.max);
    }
    s
}

/// Minimal self-contained line plot.
fn svg_plot(title: &str, y_label: &str, x0: usize, series: &[(&str, &[f64])]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let n = series
        .iter()
        .map(|(_, v)| v.len())
        .max()
        .unwrap_or(0)
        .max(2);
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (0.0, 1.0)
    };
    let x = |k: usize| M + (W - 2.0 * M) * k as f64 / (n - 1) as f64;
    let y = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);
    let colors = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" stroke="black" fill="none"/>"#,
        H - M,
        W - M
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">cycle ({x0}..{})</text>"#,
        W / 2.0,
        H - 15.0,
        x0 + n - 1
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})">{y_label} ({lo:.3}..{hi:.3})</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, values)) in series.iter().enumerate() {
        let mut points = String::new();
        for (k, &v) in values.iter().enumerate() {
            let _ = write!(points, "{:.1},{:.1} ", x(k), y(v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"><title>{name}</title></polyline>"#,
            colors[i % colors.len()],
            points.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

pub struct ReportInput<'a> {
    pub result: &'a CpaResult,
    pub window: Range<usize>,
    pub trace_summary: &'a [ColumnSummary],
    pub key_known: bool,
    pub svg: bool,
}

pub fn write_report(dir: &Path, input: &ReportInput<'_>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let result = input.result;
    for r in &result.bytes {
        let nn = format!("{:02}", r.byte_index);
        write_text(&dir.join(format!("ranking_byte{nn}.csv")), &ranking_csv(r))?;
        write_text(
            &dir.join(format!("maxcorr_byte{nn}.csv")),
            &curve_csv(r.window.start, &r.max_curve),
        )?;
    }
    write_text(
        &dir.join("results.csv"),
        &results_csv(result, input.key_known),
    )?;
    write_text(
        &dir.join("trace_summary.csv"),
        &trace_summary_csv(input.trace_summary),
    )?;

    let mut recovered: Vec<u8> = result.bytes.iter().flat_map(|r| r.peak_guesses()).collect();
    recovered.sort_unstable();
    recovered.dedup();
    let summary = SummaryJson {
        model: result.model.to_string(),
        n_traces: result.n_traces,
        window: [input.window.start, input.window.end],
        key_known: input.key_known,
        recovered_values: recovered.into_iter().map(hex).collect(),
        all_recovered: result.all_recovered(),
        bytes: result.bytes.iter().map(byte_json).collect(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_text(&dir.join("summary.json"), &json)?;

    if input.svg {
        let names: Vec<String> = result
            .bytes
            .iter()
            .map(|r| format!("byte {}", r.byte_index))
            .collect();
        let curves: Vec<(&str, &[f64])> = names
            .iter()
            .zip(&result.bytes)
            .map(|(n, r)| (n.as_str(), r.max_curve.as_slice()))
            .collect();
        write_text(
            &dir.join("maxcorr.svg"),
            &svg_plot(
                "Maximum correlation over time",
                "max |rho|",
                input.window.start,
                &curves,
            ),
        )?;
        let mean: Vec<f64> = input.trace_summary.iter().map(|c| c.mean).collect();
        let min: Vec<f64> = input.trace_summary.iter().map(|c| c.min).collect();
        let max: Vec<f64> = input.trace_summary.iter().map(|c| c.max).collect();
        write_text(
            &dir.join("traces.svg"),
            &svg_plot(
                "Switching activity per cycle",
                "bit flips",
                0,
                &[("mean", &mean), ("min", &min), ("max", &max)],
            ),
        )?;
    }
    Ok(())
}
