//! Metrics files and their aggregation into reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::agent::StepMetrics;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
/// Written next to a seed's metrics when that seed aborted; holds the error message.
pub const FAILED_MARKER: &str = "FAILED";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub const METRICS_HEADER: &str =
    "run,seed,step,loss_v,loss_q,loss_actor,loss_fwd,loss_pred,mean_q,max_q,eval_return,norm_score";

/// One line of a metrics CSV. Empty fields mean "not measured at this step".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: String,
    pub seed: u64,
    pub step: u64,
    pub loss_v: Option<f64>,
    pub loss_q: Option<f64>,
    pub loss_actor: Option<f64>,
    pub loss_fwd: Option<f64>,
    pub loss_pred: Option<f64>,
    pub mean_q: Option<f64>,
    pub max_q: Option<f64>,
    pub eval_return: Option<f64>,
    pub norm_score: Option<f64>,
}

impl MetricsRow {
    pub fn new(run: &str, seed: u64, step: u64) -> Self {
        MetricsRow {
            run: run.to_string(),
            seed,
            step,
            loss_v: None,
            loss_q: None,
            loss_actor: None,
            loss_fwd: None,
            loss_pred: None,
            mean_q: None,
            max_q: None,
            eval_return: None,
            norm_score: None,
        }
    }

    pub fn with_step_metrics(mut self, m: &StepMetrics) -> Self {
        self.loss_v = m.loss_v;
        self.loss_q = m.loss_q;
        self.loss_actor = m.loss_actor;
        self.loss_fwd = m.loss_fwd;
        self.loss_pred = m.loss_pred;
        self.mean_q = m.mean_q;
        self.max_q = m.max_q;
        self
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(Error::MalformedHeader(format!(
            "{}: unexpected metrics header {:?}",
            path.display(),
            header.join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Mean of the last `k` normalized scores in `rows` (fewer if fewer exist).
pub fn final_score(rows: &[MetricsRow], k: usize) -> Option<f64> {
    let scores: Vec<f64> = rows.iter().filter_map(|r| r.norm_score).collect();
    let tail = &scores[scores.len().saturating_sub(k)..];
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub final_score: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub seeds: Vec<SeedScore>,
    /// Over the seeds that did not fail.
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl ReportRow {
    pub fn from_seeds(run: &str, mut seeds: Vec<SeedScore>) -> Self {
        seeds.sort_by_key(|s| s.seed);
        let scores: Vec<f64> = seeds
            .iter()
            .filter(|s| !s.failed)
            .filter_map(|s| s.final_score)
            .collect();
        let (mean, std) = match mean_std(&scores) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        ReportRow {
            run: run.to_string(),
            seeds,
            mean,
            std,
        }
    }

    pub fn n_failed(&self) -> usize {
        self.seeds.iter().filter(|s| s.failed).count()
    }

    /// `mean ± std` with one decimal, or `n/a`.
    pub fn score_cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.1} ± {s:.1}"),
            _ => "n/a".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub final_evals: usize,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn to_table(&self) -> String {
        let headers = ["run", "seeds", "failed", "normalized score"];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.run.clone(),
                    r.seeds.len().to_string(),
                    r.n_failed().to_string(),
                    r.score_cell(),
                ]
            })
            .collect();
        let mut widths = headers.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: [&str; 4]| {
            let mut out = format!("{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let pad = w - c.chars().count();
                out.push_str("  ");
                out.push_str(&" ".repeat(pad));
                out.push_str(c);
            }
            out.trim_end().to_string() + "\n"
        };
        let mut out = line(headers);
        for row in &cells {
            out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join(REPORT_JSON);
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join(REPORT_TXT);
        std::fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))
    }
}

fn find_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            find_metrics(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == METRICS_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Aggregates every `metrics.csv` below `dir`, grouping rows by run id and seed.
pub fn aggregate_dir(dir: &Path, final_evals: usize) -> Result<Report> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "metrics directory not found"),
        ));
    }
    let mut files = Vec::new();
    find_metrics(dir, &mut files)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {METRICS_FILE} under {}",
            dir.display()
        )));
    }
    files.sort();
    let mut groups: BTreeMap<String, BTreeMap<u64, (Vec<MetricsRow>, bool)>> = BTreeMap::new();
    for file in files {
        let failed = file.with_file_name(FAILED_MARKER).exists();
        for row in read_metrics(&file)? {
            let entry = groups
                .entry(row.run.clone())
                .or_default()
                .entry(row.seed)
                .or_default();
            entry.1 |= failed;
            entry.0.push(row);
        }
    }
    let rows = groups
        .into_iter()
        .map(|(run, seeds)| {
            let seeds = seeds
                .into_iter()
                .map(|(seed, (rows, failed))| SeedScore {
                    seed,
                    final_score: final_score(&rows, final_evals),
                    failed,
                })
                .collect();
            ReportRow::from_seeds(&run, seeds)
        })
        .collect();
    Ok(Report { final_evals, rows })
}
