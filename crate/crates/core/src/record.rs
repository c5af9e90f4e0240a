//! CSV emission for run records.
//!
//! `trace.csv`, one row per step:
//! `k, x1..xn, u1..um, r, stage, j_temporal, j_spatial, j_approx, branch,
//! iterations, evaluations, j_opt, offer, data_size`.
//! `j_spatial` is `NaN` when the learner gave no warm start, `j_approx` is
//! `inf` when the point was unknown to it.
//!
//! `summary.csv`, one row per segment (reset run, reference period, or the
//! whole run): `segment, start, steps, accumulated_cost, mean_tracking_error,
//! spatial_steps, mean_iterations`. The tracking error is `|x1 - r|`.
//!
//! `suboptimality.csv`: `k, j_star, temporal, spatial, converged`.
//!
//! Floats are written in shortest round-trip form, so every summary can be
//! recomputed exactly from the parsed trace.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::controller::{Branch, RunRecord, StepRow, Suboptimality};
use crate::error::{Error, Result};
use crate::learner::OfferOutcome;

/// Flat view of a trace row, as written and as parsed back.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub reference: f64,
    pub stage: f64,
    pub j_temporal: f64,
    pub j_spatial: f64,
    pub j_approx: f64,
    pub spatial: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub j_opt: f64,
    pub offer: String,
    pub data_size: usize,
}

fn offer_label(o: Option<OfferOutcome>) -> &'static str {
    match o {
        None => "none",
        Some(OfferOutcome::Added) => "added",
        Some(OfferOutcome::Started) => "started",
        Some(OfferOutcome::Queued) => "queued",
        Some(OfferOutcome::SkippedSmall) => "skipped-small",
        Some(OfferOutcome::Rejected) => "rejected",
    }
}

impl From<&StepRow> for TraceRow {
    fn from(r: &StepRow) -> Self {
        Self {
            k: r.k,
            x: r.x.iter().copied().collect(),
            u: r.u.iter().copied().collect(),
            reference: r.reference,
            stage: r.stage,
            j_temporal: r.j_temporal,
            j_spatial: r.j_spatial,
            j_approx: r.j_approx,
            spatial: r.branch == Branch::Spatial,
            iterations: r.iterations,
            evaluations: r.evaluations,
            j_opt: r.j_opt,
            offer: offer_label(r.offered).into(),
            data_size: r.data_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub segment: usize,
    pub start: usize,
    pub steps: usize,
    pub accumulated_cost: f64,
    pub mean_tracking_error: f64,
    pub spatial_steps: usize,
    pub mean_iterations: f64,
}

pub fn summarize(rows: &[TraceRow], segment_len: usize) -> Vec<SegmentSummary> {
    rows.chunks(segment_len.max(1))
        .enumerate()
        .map(|(i, c)| {
            let len = c.len() as f64;
            SegmentSummary {
                segment: i,
                start: c[0].k,
                steps: c.len(),
                accumulated_cost: c.iter().map(|r| r.stage).sum(),
                mean_tracking_error: c.iter().map(|r| (r.x[0] - r.reference).abs()).sum::<f64>() / len,
                spatial_steps: c.iter().filter(|r| r.spatial).count(),
                mean_iterations: c.iter().map(|r| r.iterations as f64).sum::<f64>() / len,
            }
        })
        .collect()
}

/// Reset run length, else reference period, else the whole run.
pub fn segment_len(rec: &RunRecord) -> usize {
    rec.run_length.or(rec.reference_period).unwrap_or(rec.rows.len())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn trace_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    for c in [
        "r", "stage", "j_temporal", "j_spatial", "j_approx", "branch", "iterations", "evaluations", "j_opt",
        "offer", "data_size",
    ] {
        h.push(c.into());
    }
    h
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (n, m) = rows.first().map_or((0, 0), |r| (r.x.len(), r.u.len()));
    w.write_record(trace_header(n, m)).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend(r.x.iter().chain(&r.u).map(f64::to_string));
        rec.extend([
            r.reference.to_string(),
            r.stage.to_string(),
            r.j_temporal.to_string(),
            r.j_spatial.to_string(),
            r.j_approx.to_string(),
            if r.spatial { "spatial" } else { "temporal" }.into(),
            r.iterations.to_string(),
            r.evaluations.to_string(),
            r.j_opt.to_string(),
            r.offer.clone(),
            r.data_size.to_string(),
        ]);
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).ok_or_else(|| Error::Parse(format!("missing column {i}")))?;
    s.parse().map_err(|_| Error::Parse(format!("bad value `{s}` in column {i}")))
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('u')).count();
    if header.len() != n + m + 12 {
        return Err(Error::Parse(format!("unexpected trace header with {} columns", header.len())));
    }
    let base = 1 + n + m;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let floats = |a: usize, len: usize| (a..a + len).map(|i| field(&rec, i)).collect::<Result<Vec<f64>>>();
        rows.push(TraceRow {
            k: field(&rec, 0)?,
            x: floats(1, n)?,
            u: floats(1 + n, m)?,
            reference: field(&rec, base)?,
            stage: field(&rec, base + 1)?,
            j_temporal: field(&rec, base + 2)?,
            j_spatial: field(&rec, base + 3)?,
            j_approx: field(&rec, base + 4)?,
            spatial: field::<String>(&rec, base + 5)? == "spatial",
            iterations: field(&rec, base + 6)?,
            evaluations: field(&rec, base + 7)?,
            j_opt: field(&rec, base + 8)?,
            offer: field(&rec, base + 9)?,
            data_size: field(&rec, base + 10)?,
        });
    }
    Ok(rows)
}

const SUMMARY_HEADER: [&str; 7] = [
    "segment",
    "start",
    "steps",
    "accumulated_cost",
    "mean_tracking_error",
    "spatial_steps",
    "mean_iterations",
];

pub fn write_summary<W: Write>(out: W, segments: &[SegmentSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for s in segments {
        w.write_record([
            s.segment.to_string(),
            s.start.to_string(),
            s.steps.to_string(),
            s.accumulated_cost.to_string(),
            s.mean_tracking_error.to_string(),
            s.spatial_steps.to_string(),
            s.mean_iterations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary<R: std::io::Read>(input: R) -> Result<Vec<SegmentSummary>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        out.push(SegmentSummary {
            segment: field(&rec, 0)?,
            start: field(&rec, 1)?,
            steps: field(&rec, 2)?,
            accumulated_cost: field(&rec, 3)?,
            mean_tracking_error: field(&rec, 4)?,
            spatial_steps: field(&rec, 5)?,
            mean_iterations: field(&rec, 6)?,
        });
    }
    Ok(out)
}

pub fn write_suboptimality<W: Write>(out: W, subs: &[Suboptimality]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "j_star", "temporal", "spatial", "converged"])
        .map_err(csv_err)?;
    for s in subs {
        w.write_record([
            s.k.to_string(),
            s.j_star.to_string(),
            s.temporal.to_string(),
            s.spatial.to_string(),
            s.converged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `key,value` lines: totals, learner statistics, invariant counters, timing.
pub fn stats_lines(rec: &RunRecord) -> Vec<(&'static str, String)> {
    let c = rec.counts;
    let s = rec.stats;
    vec![
        ("scenario", rec.scenario.clone()),
        ("steps", rec.rows.len().to_string()),
        ("accumulated_cost", rec.accumulated_cost().to_string()),
        ("spatial_steps", rec.spatial_count().to_string()),
        ("final_state_norm", rec.final_state.norm().to_string()),
        ("offered", s.offered.to_string()),
        ("added", s.added.to_string()),
        ("skipped_small", s.skipped_small.to_string()),
        ("skipped_busy", s.skipped_busy.to_string()),
        ("rejected", s.rejected.to_string()),
        ("selection_violations", c.selection_violations.to_string()),
        ("monotone_violations", c.monotone_violations.to_string()),
        ("decrease_checked", c.decrease_checked.to_string()),
        ("decrease_violations", c.decrease_violations.to_string()),
        ("chain_checked", c.chain_checked.to_string()),
        ("chain_violations", c.chain_violations.to_string()),
        ("elapsed_seconds", rec.elapsed.as_secs_f64().to_string()),
    ]
}

/// Writes `trace.csv`, `summary.csv`, `stats.csv`, and `suboptimality.csv`
/// when given, into `dir`.
pub fn write_run(dir: &Path, rec: &RunRecord, subs: Option<&[Suboptimality]>) -> Result<Vec<SegmentSummary>> {
    fs::create_dir_all(dir)?;
    let rows: Vec<TraceRow> = rec.rows.iter().map(TraceRow::from).collect();
    write_trace(fs::File::create(dir.join("trace.csv"))?, &rows)?;
    let segments = summarize(&rows, segment_len(rec));
    write_summary(fs::File::create(dir.join("summary.csv"))?, &segments)?;
    let mut w = csv::Writer::from_path(dir.join("stats.csv")).map_err(csv_err)?;
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in stats_lines(rec) {
        w.write_record([k, v.as_str()]).map_err(csv_err)?;
    }
    w.flush()?;
    if let Some(subs) = subs {
        write_suboptimality(fs::File::create(dir.join("suboptimality.csv"))?, subs)?;
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, x1: f64, r: f64, stage: f64, spatial: bool) -> TraceRow {
        TraceRow {
            k,
            x: vec![x1, -0.5],
            u: vec![0.25],
            reference: r,
            stage,
            j_temporal: 1.0 / 3.0,
            j_spatial: f64::NAN,
            j_approx: f64::INFINITY,
            spatial,
            iterations: 2,
            evaluations: 7,
            j_opt: 0.1,
            offer: "added".into(),
            data_size: k,
        }
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let rows: Vec<_> = (0..5).map(|k| row(k, 0.1 * k as f64, 1.0, 1e-17 * k as f64, k % 2 == 0)).collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert!(b.j_spatial.is_nan());
            assert_eq!(a.x, b.x);
            assert_eq!(a.stage.to_bits(), b.stage.to_bits());
            assert_eq!(a.j_temporal.to_bits(), b.j_temporal.to_bits());
            assert_eq!(b.j_approx, f64::INFINITY);
            assert_eq!(a.spatial, b.spatial);
        }
    }

    #[test]
    fn summary_segments() {
        let rows: Vec<_> = (0..5).map(|k| row(k, 1.5, 1.0, 1.0, k == 1)).collect();
        let s = summarize(&rows, 2);
        assert_eq!(s.len(), 3);
        assert_eq!(s[2].steps, 1);
        assert_eq!(s[0].accumulated_cost, 2.0);
        assert_eq!(s[0].mean_tracking_error, 0.5);
        assert_eq!(s[0].spatial_steps, 1);
        let mut buf = Vec::new();
        write_summary(&mut buf, &s).unwrap();
        assert_eq!(read_summary(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_malformed_trace() {
        assert!(read_trace("k,x1,u1\n0,1,2\n".as_bytes()).is_err());
    }
}
