//! Grid sweeps and table reporting.
//!
//! A grid file lists tasks, methods, observation counts, and seeds, plus an
//! optional base config whose settings every cell inherits. Completed cells
//! (already present in the metrics table) are reused, missing ones are
//! executed unless `execute = false`, and the aggregate table reports the
//! per-cell mean and 95% confidence interval over seeds.

use crate::config::{Method, RunConfig};
use crate::error::{CliError, Result};
use crate::metrics::{
    aggregate, format_aggregate_row, read_metrics_table, AggregateRow, SUMMARY_HEADER,
};
use crate::run::run;
use pli_core::evaluation::EvalReport;
use pli_core::textio::{write_atomic, KvBlock};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub tasks: Vec<String>,
    pub methods: Vec<Method>,
    pub n_obs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: Option<PathBuf>,
    pub execute: bool,
}

impl GridSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let kv = KvBlock::read(path).map_err(|e| CliError::Config(e.to_string()))?;
        let list = |key: &str| -> Result<Vec<String>> {
            Ok(kv
                .get_str(key)
                .map_err(|e| CliError::Config(e.to_string()))?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect())
        };
        let tasks = list("tasks")?;
        let methods = list("methods")?
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>>>()?;
        let n_obs = list("n_obs")?
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| CliError::Config(format!("bad n_obs `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let seeds = list("seeds")?
            .iter()
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|e| CliError::Config(format!("bad seed `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let base = kv.get_opt("base").map(|b| {
            let p = PathBuf::from(b);
            if p.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p
            }
        });
        let execute = match kv.get_opt("execute") {
            None | Some("true") => true,
            Some("false") => false,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "execute must be true or false, got `{other}`"
                )))
            }
        };
        if tasks.is_empty() || methods.is_empty() || n_obs.is_empty() || seeds.is_empty() {
            // An empty grid is legal; it aggregates to an empty table.
        }
        Ok(GridSpec {
            tasks,
            methods,
            n_obs,
            seeds,
            base,
            execute,
        })
    }

    fn cell_config(&self, task: &str, method: Method, n: usize, seed: u64) -> Result<RunConfig> {
        let mut kv = match &self.base {
            Some(path) => KvBlock::read(path).map_err(|e| CliError::Config(e.to_string()))?,
            None => KvBlock::new(),
        };
        kv.set_str("task", task);
        kv.set_str("method", method.name());
        kv.set_usize("n_obs", n);
        kv.set_u64("seed", seed);
        // The per-parameter simulation count follows N unless the base pins it.
        if self.base.is_none() || !kv.contains("sims_per_param") {
            kv.set_usize("sims_per_param", n);
        }
        RunConfig::from_kv(&kv)
    }
}

pub struct SweepOutcome {
    pub table: Vec<AggregateRow>,
    pub missing: Vec<String>,
    pub executed: usize,
    pub reused: usize,
}

/// Run (or collect) every cell of the grid and aggregate.
pub fn sweep(spec: &GridSpec, out_root: &Path) -> Result<SweepOutcome> {
    let metrics_path = out_root.join("metrics.csv");
    let mut rows: Vec<EvalReport> = if metrics_path.exists() {
        read_metrics_table(&metrics_path)?
    } else {
        Vec::new()
    };

    let mut missing = Vec::new();
    let mut executed = 0;
    let mut reused = 0;
    for task in &spec.tasks {
        for &method in &spec.methods {
            for &n in &spec.n_obs {
                for &seed in &spec.seeds {
                    let have = rows.iter().any(|r| {
                        r.task == *task
                            && r.method == method.name()
                            && r.n_obs == n
                            && r.seed == seed
                    });
                    if have {
                        reused += 1;
                        continue;
                    }
                    if !spec.execute {
                        missing.push(format!("{task}/{}/n{}/seed{}", method.name(), n, seed));
                        continue;
                    }
                    let cfg = spec.cell_config(task, method, n, seed)?;
                    let outcome = run(&cfg, out_root)?;
                    rows.push(outcome.report);
                    executed += 1;
                }
            }
        }
    }

    // Aggregate only the grid's cells, not unrelated table rows.
    let in_grid: Vec<EvalReport> = rows
        .iter()
        .filter(|r| {
            spec.tasks.contains(&r.task)
                && spec.methods.iter().any(|m| m.name() == r.method)
                && spec.n_obs.contains(&r.n_obs)
                && spec.seeds.contains(&r.seed)
        })
        .cloned()
        .collect();
    let table = aggregate(&in_grid);

    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for row in &table {
        text.push_str(&format_aggregate_row(row));
        text.push('\n');
    }
    write_atomic(&out_root.join("summary.csv"), text.as_bytes())?;

    Ok(SweepOutcome {
        table,
        missing,
        executed,
        reused,
    })
}

/// Aggregate an existing metrics table without executing anything.
pub fn report(out_root: &Path) -> Result<Vec<AggregateRow>> {
    let metrics_path = out_root.join("metrics.csv");
    if !metrics_path.exists() {
        return Ok(Vec::new());
    }
    let rows = read_metrics_table(&metrics_path)?;
    Ok(aggregate(&rows))
}

pub fn render_table(table: &[AggregateRow]) -> String {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for row in table {
        text.push_str(&format_aggregate_row(row));
        text.push('\n');
    }
    text
}
