//! The append-only metrics table and its aggregation.
//!
//! One row per completed run, fixed column schema, `NA` for metrics that do
//! not apply. Aggregation over seeds produces a per-(task, method, N) mean
//! and 95% normal-approximation confidence interval for each metric.

use crate::error::{CliError, Result};
use pli_core::evaluation::EvalReport;
use pli_core::textio::{format_f64, parse_f64};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

pub const METRICS_HEADER: &str = "task,method,n_obs,sims_per_param,seed,iteration_count,\
mmd2_posterior,w2_posterior,ppc_mmd2,ppc_w2,furuta_sync_error,wall_seconds";

fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format_f64(x),
        None => "NA".to_string(),
    }
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        Ok(Some(parse_f64(s).map_err(|e| CliError::Config(e.to_string()))?))
    }
}

pub fn format_metrics_row(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.task,
        r.method,
        r.n_obs,
        r.sims_per_param,
        r.seed,
        r.iteration_count,
        opt_cell(r.mmd2_posterior),
        opt_cell(r.w2_posterior),
        opt_cell(r.ppc_mmd2),
        opt_cell(r.ppc_w2),
        opt_cell(r.furuta_sync_error),
        format_f64(r.wall_seconds),
    )
}

pub fn parse_metrics_row(line: &str) -> Result<EvalReport> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 12 {
        return Err(CliError::Config(format!(
            "metrics row has {} cells, expected 12: `{line}`",
            parts.len()
        )));
    }
    let int = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|e| CliError::Config(format!("bad integer `{s}`: {e}")))
    };
    Ok(EvalReport {
        task: parts[0].to_string(),
        method: parts[1].to_string(),
        n_obs: int(parts[2])?,
        sims_per_param: int(parts[3])?,
        seed: parts[4]
            .parse()
            .map_err(|e| CliError::Config(format!("bad seed `{}`: {e}", parts[4])))?,
        iteration_count: int(parts[5])?,
        mmd2_posterior: parse_cell(parts[6])?,
        w2_posterior: parse_cell(parts[7])?,
        ppc_mmd2: parse_cell(parts[8])?,
        ppc_w2: parse_cell(parts[9])?,
        furuta_sync_error: parse_cell(parts[10])?,
        wall_seconds: parse_f64(parts[11]).map_err(|e| CliError::Config(e.to_string()))?,
    })
}

/// Append one row, writing the header first on a fresh file.
pub fn append_metrics_row(path: &Path, report: &EvalReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display().to_string(), e))?;
    }
    let fresh = !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    if fresh {
        writeln!(file, "{METRICS_HEADER}").map_err(|e| CliError::io("metrics header", e))?;
    }
    writeln!(file, "{}", format_metrics_row(report))
        .map_err(|e| CliError::io("metrics row", e))?;
    Ok(())
}

pub fn read_metrics_table(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        rows.push(parse_metrics_row(line)?);
    }
    Ok(rows)
}

/// Mean and 95% CI half-width of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub ci95: f64,
    pub count: usize,
}

fn stat(values: &[f64]) -> Option<MetricStat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ci95 = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        f64::NAN
    };
    Some(MetricStat {
        mean,
        ci95,
        count: values.len(),
    })
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub task: String,
    pub method: String,
    pub n_obs: usize,
    pub seeds: usize,
    pub mmd2_posterior: Option<MetricStat>,
    pub w2_posterior: Option<MetricStat>,
    pub ppc_mmd2: Option<MetricStat>,
    pub ppc_w2: Option<MetricStat>,
    pub furuta_sync_error: Option<MetricStat>,
    pub wall_seconds: Option<MetricStat>,
}

pub const SUMMARY_HEADER: &str = "task,method,n_obs,seeds,\
mmd2_posterior_mean,mmd2_posterior_ci95,w2_posterior_mean,w2_posterior_ci95,\
ppc_mmd2_mean,ppc_mmd2_ci95,ppc_w2_mean,ppc_w2_ci95,\
furuta_sync_error_mean,furuta_sync_error_ci95,wall_seconds_mean";

pub fn format_aggregate_row(r: &AggregateRow) -> String {
    let pair = |s: &Option<MetricStat>| -> String {
        match s {
            Some(st) => {
                let ci = if st.ci95.is_nan() {
                    "NA".to_string()
                } else {
                    format_f64(st.ci95)
                };
                format!("{},{}", format_f64(st.mean), ci)
            }
            None => "NA,NA".to_string(),
        }
    };
    let wall = match &r.wall_seconds {
        Some(st) => format_f64(st.mean),
        None => "NA".to_string(),
    };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.task,
        r.method,
        r.n_obs,
        r.seeds,
        pair(&r.mmd2_posterior),
        pair(&r.w2_posterior),
        pair(&r.ppc_mmd2),
        pair(&r.ppc_w2),
        pair(&r.furuta_sync_error),
    ) + &format!(",{wall}")
}

/// Group rows by (task, method, n_obs) and aggregate each metric over seeds.
pub fn aggregate(rows: &[EvalReport]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for r in rows {
        let key = (r.task.clone(), r.method.clone(), r.n_obs);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort();
    keys.iter()
        .map(|(task, method, n_obs)| {
            let cell: Vec<&EvalReport> = rows
                .iter()
                .filter(|r| &r.task == task && &r.method == method && r.n_obs == *n_obs)
                .collect();
            let collect = |f: fn(&EvalReport) -> Option<f64>| -> Vec<f64> {
                cell.iter().filter_map(|r| f(r)).collect()
            };
            AggregateRow {
                task: task.clone(),
                method: method.clone(),
                n_obs: *n_obs,
                seeds: cell.len(),
                mmd2_posterior: stat(&collect(|r| r.mmd2_posterior)),
                w2_posterior: stat(&collect(|r| r.w2_posterior)),
                ppc_mmd2: stat(&collect(|r| r.ppc_mmd2)),
                ppc_w2: stat(&collect(|r| r.ppc_w2)),
                furuta_sync_error: stat(&collect(|r| r.furuta_sync_error)),
                wall_seconds: stat(&collect(|r| Some(r.wall_seconds))),
            }
        })
        .collect()
}
