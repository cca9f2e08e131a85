//! On-disk formats: aggregated CSV, JSON-lines trajectory records, run
//! manifests and SVG spacetime heatmaps.
//!
//! CSV schema version 1, header
//! `mode,L,p,q,theta,t,observable,mean,sem,n`, one row per
//! `(t, observable)`. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, Mode, Observable};
use crate::harness::{AggregatedSeries, TrajectoryRecord};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "mode,L,p,q,theta,t,observable,mean,sem,n";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("record line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trajectory has no z_profile; record it with observables = zprofile")]
    MissingProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub mode: Mode,
    pub l: usize,
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub t: usize,
    pub observable: Observable,
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

/// Rows for one configuration, ordered by time then observable.
pub fn rows_for(config: &ExperimentConfig, series: &[AggregatedSeries]) -> Vec<CsvRow> {
    let Some(first) = series.first() else { return Vec::new() };
    let mut rows = Vec::with_capacity(first.times.len() * series.len());
    for (k, &t) in first.times.iter().enumerate() {
        for s in series {
            rows.push(CsvRow {
                mode: config.mode,
                l: config.l,
                p: config.p,
                q: config.q,
                theta: config.theta,
                t,
                observable: s.observable,
                mean: s.mean[k],
                sem: s.sem[k],
                n: s.n,
            });
        }
    }
    rows
}

pub fn write_csv(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{},{},{:?},{:?},{}",
            r.mode, r.l, r.p, r.q, r.theta, r.t, r.observable, r.mean, r.sem, r.n
        )
        .unwrap();
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(IoError::Csv {
                line: other.map_or(1, |(i, _)| i + 1),
                msg: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let err = |msg: String| IoError::Csv { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, got {}", f.len())));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| err(format!("bad number `{}`", f[k])));
            let int = |k: usize| f[k].parse::<usize>().map_err(|_| err(format!("bad integer `{}`", f[k])));
            Ok(CsvRow {
                mode: f[0].parse().map_err(|e| err(format!("{e}")))?,
                l: int(1)?,
                p: num(2)?,
                q: num(3)?,
                theta: num(4)?,
                t: int(5)?,
                observable: f[6].parse().map_err(|e| err(format!("{e}")))?,
                mean: num(7)?,
                sem: num(8)?,
                n: int(9)?,
            })
        })
        .collect()
}

/// Writes one JSON object per line.
pub fn write_records<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| IoError::Json { line: 0, source: e })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TrajectoryRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IoError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}

/// Provenance of a run. Timing fields differ between reruns; everything
/// needed to reproduce the data is in `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub csv_schema: u32,
    pub master_seed: u64,
    pub points: usize,
    pub samples_per_point: usize,
    pub workers: usize,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    /// The sweep file contents that produced the run.
    pub config: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// `<Z>` in `[-1, 1]` to a fill colour: white at −1, dark blue at +1.
pub fn heat_colour(z: f64) -> String {
    let w = ((z.clamp(-1.0, 1.0) + 1.0) / 2.0).clamp(0.0, 1.0);
    let (r, g, b) = (255.0 * (1.0 - w), 255.0 * (1.0 - w) + 40.0 * w, 255.0 * (1.0 - w) + 139.0 * w);
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Spacetime plot: time runs down, site 1 is the left column. One `<rect>`
/// per cell.
pub fn render_heatmap(record: &TrajectoryRecord, cell: u32) -> Result<String, IoError> {
    let rows = record.z_profile.as_ref().ok_or(IoError::MissingProfile)?;
    let l = rows.first().map_or(0, Vec::len);
    let (w, h) = (l as u32 * cell, rows.len() as u32 * cell);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#).unwrap();
    for (t, row) in rows.iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                j as u32 * cell,
                t as u32 * cell,
                heat_colour(z)
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
