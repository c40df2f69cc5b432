use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use align_eval::io::{self, ReportRecord};
use align_eval::metrics::pearson;
use align_eval::svg::{self, ScatterLabels};

use crate::commands::CsvRow;
use crate::{ReportArgs, ScatterArgs};

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Every metric report under `dir`, sorted by (feature, pair). Other JSON
/// documents (alignments, manifests) are skipped.
pub fn collect_reports(dir: &Path) -> Result<Vec<ReportRecord>> {
    let mut files = Vec::new();
    json_files(dir, &mut files)?;
    let parsed: Vec<Option<ReportRecord>> = files
        .par_iter()
        .map(|p| -> Result<Option<ReportRecord>> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let value: serde_json::Value = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(_) => return Ok(None),
            };
            if value.get("mad_ms").is_none() {
                return Ok(None);
            }
            let record = io::read_report(p).with_context(|| format!("malformed report {}", p.display()))?;
            Ok(Some(record))
        })
        .collect::<Result<_>>()?;
    let mut reports: Vec<ReportRecord> = parsed.into_iter().flatten().collect();
    if reports.is_empty() {
        bail!("no reports found in {}", dir.display());
    }
    reports.sort_by(|a, b| (&a.feature, &a.pair_id).cmp(&(&b.feature, &b.pair_id)));
    Ok(reports)
}

fn drop_outliers(reports: Vec<ReportRecord>, limit: Option<f64>) -> (Vec<ReportRecord>, usize) {
    let Some(limit) = limit else {
        return (reports, 0);
    };
    let before = reports.len();
    let kept: Vec<_> = reports.into_iter().filter(|r| r.metrics.mad_ms <= limit).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn by_feature(reports: &[ReportRecord]) -> BTreeMap<&str, Vec<&ReportRecord>> {
    let mut groups: BTreeMap<&str, Vec<&ReportRecord>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.feature.as_str()).or_default().push(r);
    }
    groups
}

/// Pearson r over the reports where both values are finite; NaN when
/// undefined.
fn correlation(group: &[&ReportRecord], x: fn(&ReportRecord) -> f64, y: fn(&ReportRecord) -> f64) -> (usize, f64) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = group
        .iter()
        .map(|r| (x(r), y(r)))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .unzip();
    (xs.len(), pearson(&xs, &ys).unwrap_or(f64::NAN))
}

fn correlations_path(summary: &Path) -> PathBuf {
    let stem = summary.file_stem().map_or_else(|| "summary".into(), |s| s.to_string_lossy().into_owned());
    summary.with_file_name(format!("{stem}.correlations.csv"))
}

pub fn report(a: ReportArgs) -> Result<()> {
    let reports = collect_reports(&a.dir)?;
    let (reports, dropped) = drop_outliers(reports, a.outlier_mad_ms);
    if reports.is_empty() {
        bail!("every report was excluded as an outlier");
    }
    let groups = by_feature(&reports);

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &reports {
        w.serialize(CsvRow::from(r))?;
    }
    for (feature, group) in &groups {
        let m = |f: fn(&ReportRecord) -> f64| mean(group.iter().map(|r| f(r)));
        w.serialize(CsvRow {
            pair_id: "mean".into(),
            feature: feature.to_string(),
            mad_ms: m(|r| r.metrics.mad_ms),
            rmse_ms: m(|r| r.metrics.rmse_ms),
            note_mad_ms: m(|r| r.metrics.note_mad_ms),
            note_rmse_ms: m(|r| r.metrics.note_rmse_ms),
            recognition_rate_50ms: m(|r| r.metrics.recognition_rate),
            matched_fraction: m(|r| r.metrics.matched_fraction),
        })?;
    }
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::write_atomic(&a.output, &w.into_inner()?)?;

    println!("{:<8} {:>5} {:>10} {:>10} {:>10} {:>10}", "feature", "n", "MAD", "RMSE", "noteMAD", "noteRMSE");
    for (feature, group) in &groups {
        let m = |f: fn(&ReportRecord) -> f64| mean(group.iter().map(|r| f(r)));
        println!(
            "{:<8} {:>5} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
            feature,
            group.len(),
            m(|r| r.metrics.mad_ms),
            m(|r| r.metrics.rmse_ms),
            m(|r| r.metrics.note_mad_ms),
            m(|r| r.metrics.note_rmse_ms)
        );
    }
    if dropped > 0 {
        println!("excluded {dropped} outliers with MAD > {} ms", a.outlier_mad_ms.unwrap_or_default());
    }

    if a.correlations {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "n", "mad_vs_note_mad", "rmse_vs_note_rmse"])?;
        for (feature, group) in &groups {
            let (n, r_mad) = correlation(group, |r| r.metrics.mad_ms, |r| r.metrics.note_mad_ms);
            let (_, r_rmse) = correlation(group, |r| r.metrics.rmse_ms, |r| r.metrics.note_rmse_ms);
            w.write_record([feature.to_string(), n.to_string(), r_mad.to_string(), r_rmse.to_string()])?;
            println!("{feature}: r(MAD, noteMAD) = {r_mad:.3}, r(RMSE, noteRMSE) = {r_rmse:.3} over {n} pairs");
        }
        io::write_atomic(correlations_path(&a.output), &w.into_inner()?)?;
    }
    Ok(())
}

fn metric(name: &str) -> Result<fn(&ReportRecord) -> f64> {
    Ok(match name {
        "mad_ms" => |r| r.metrics.mad_ms,
        "rmse_ms" => |r| r.metrics.rmse_ms,
        "note_mad_ms" => |r| r.metrics.note_mad_ms,
        "note_rmse_ms" => |r| r.metrics.note_rmse_ms,
        "recognition_rate" => |r| r.metrics.recognition_rate,
        "matched_fraction" => |r| r.metrics.matched_fraction,
        other => bail!("unknown metric {other:?}"),
    })
}

pub fn scatter(a: ScatterArgs) -> Result<()> {
    let (fx, fy) = (metric(&a.x)?, metric(&a.y)?);
    let reports = collect_reports(&a.dir)?;
    let (reports, _) = drop_outliers(reports, a.outlier_mad_ms);
    let selected: Vec<&ReportRecord> = reports
        .iter()
        .filter(|r| a.feature.as_deref().is_none_or(|f| r.feature == f))
        .collect();
    if selected.is_empty() {
        bail!("no reports match the selection");
    }
    let xs: Vec<f64> = selected.iter().map(|r| fx(r)).collect();
    let ys: Vec<f64> = selected.iter().map(|r| fy(r)).collect();
    let names: Vec<String> = selected.iter().map(|r| format!("{} ({})", r.pair_id, r.feature)).collect();
    let labels = ScatterLabels {
        title: a.feature.clone().unwrap_or_default(),
        x: a.x.clone(),
        y: a.y.clone(),
    };
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    svg::render_scatter_svg(&xs, &ys, &names, &labels, &a.output)?;
    Ok(())
}
