//! Single-run orchestration: reference, inference, evaluation, artifacts.
//!
//! A run writes into `<out>/runs/<task>_<method>_n<N>_seed<S>/`:
//! `manifest.txt` (status, config echo, wall time), `states/iter_NNNN.txt`
//! per-iteration summaries, `posterior.txt` with the final posterior
//! samples, and `metrics.txt` mirroring the row appended to
//! `<out>/metrics.csv`. The manifest is rewritten atomically at the end;
//! a crash leaves it in the `running` state, flagging a partial run.

use crate::config::{Method, RunConfig};
use crate::error::{CliError, Result};
use crate::metrics::{append_metrics_row, format_metrics_row, METRICS_HEADER};
use crate::refgen::ensure_reference;
use pli_core::abc::{pmc_abc_run, smc_abc_run, ParticlePopulation};
use pli_core::distributions::DensityModel;
use pli_core::evaluation::{
    furuta_sync_error, gaussian_location_reference, gmm_task_reference_samples, ParamSource,
    posterior_predictive_check, posterior_sample_metrics, EvalReport,
};
use pli_core::pli::pli_run;
use pli_core::textio::{write_atomic, write_matrix, KvBlock};
use pli_core::{Matrix, RngStream};
use std::path::{Path, PathBuf};
use std::time::Instant;

const INFERENCE_STREAM: u64 = 2;
const EVALUATION_STREAM: u64 = 3;

pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub report: EvalReport,
}

enum Posterior {
    Model(Box<dyn DensityModel>),
    Particles(ParticlePopulation),
}

impl ParamSource for Posterior {
    fn param_dim(&self) -> usize {
        match self {
            Posterior::Model(m) => m.dim(),
            Posterior::Particles(p) => p.param_dim(),
        }
    }

    fn draw_params(&self, count: usize, rng: &mut RngStream) -> Matrix {
        match self {
            Posterior::Model(m) => m.sample(count, rng),
            Posterior::Particles(p) => p.draw_params(count, rng),
        }
    }
}

fn write_manifest(
    run_dir: &Path,
    cfg: &RunConfig,
    status: &str,
    wall_seconds: Option<f64>,
    iterations: Option<usize>,
    error: Option<&str>,
) -> Result<()> {
    let mut kv = KvBlock::new();
    kv.set_str("status", status);
    kv.set_str("code_version", env!("CARGO_PKG_VERSION"));
    kv.set_u64("rng_master_seed", cfg.seed);
    if let Some(w) = wall_seconds {
        kv.set_f64("wall_seconds", w);
    }
    if let Some(n) = iterations {
        kv.set_usize("state_files", n);
    }
    if let Some(e) = error {
        kv.set_str("error", e);
    }
    let echo = cfg.to_kv();
    for key in echo.keys().map(str::to_string).collect::<Vec<_>>() {
        kv.set_str(&format!("config.{key}"), echo.get_str(&key).unwrap());
    }
    kv.write(&run_dir.join("manifest.txt")).map_err(CliError::from)
}

/// Execute one configured run end to end.
pub fn run(cfg: &RunConfig, out_root: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let run_dir = out_root.join("runs").join(cfg.run_name());
    std::fs::create_dir_all(run_dir.join("states"))
        .map_err(|e| CliError::io(run_dir.display().to_string(), e))?;
    write_manifest(&run_dir, cfg, "running", None, None, None)?;

    let started = Instant::now();
    match execute(cfg, out_root, &run_dir) {
        Ok((mut report, iterations)) => {
            report.wall_seconds = started.elapsed().as_secs_f64();
            append_metrics_row(&out_root.join("metrics.csv"), &report)?;
            write_atomic(
                &run_dir.join("metrics.txt"),
                format!("{METRICS_HEADER}\n{}\n", format_metrics_row(&report)).as_bytes(),
            )?;
            write_manifest(
                &run_dir,
                cfg,
                "completed",
                Some(report.wall_seconds),
                Some(iterations),
                None,
            )?;
            Ok(RunOutcome { run_dir, report })
        }
        Err(e) => {
            let chain = format!("{e}");
            let _ = write_manifest(
                &run_dir,
                cfg,
                "failed",
                Some(started.elapsed().as_secs_f64()),
                None,
                Some(&chain),
            );
            Err(e)
        }
    }
}

fn execute(cfg: &RunConfig, out_root: &Path, run_dir: &Path) -> Result<(EvalReport, usize)> {
    let reference = ensure_reference(&cfg.task, &cfg.options, cfg.n_obs, cfg.seed, out_root)?;
    let task = cfg.build_task()?;
    let metric = cfg.metric();
    let root = RngStream::new(cfg.seed);
    let infer_rng = root.split(INFERENCE_STREAM);
    let eval_rng = root.split(EVALUATION_STREAM);

    let states_dir = run_dir.join("states");
    let (posterior, iteration_count) = match cfg.method {
        Method::MmdPli | Method::WPli => {
            let (model, states) = pli_run(
                task.as_ref(),
                &reference.observations,
                &metric,
                &cfg.pli,
                &infer_rng,
            )?;
            for state in &states {
                state
                    .to_kv()
                    .write(&states_dir.join(format!("iter_{:04}.txt", state.iteration)))?;
            }
            (Posterior::Model(model), states.len())
        }
        Method::MmdAbcSmc | Method::WAbcSmc => {
            let (pop, summaries) = smc_abc_run(
                task.as_ref(),
                &reference.observations,
                &metric,
                &cfg.abc,
                &infer_rng,
            )?;
            for s in &summaries {
                s.to_kv()
                    .write(&states_dir.join(format!("iter_{:04}.txt", s.iteration)))?;
            }
            (Posterior::Particles(pop), summaries.len())
        }
        Method::MmdAbcPmc | Method::WAbcPmc => {
            let (pop, summaries) = pmc_abc_run(
                task.as_ref(),
                &reference.observations,
                &metric,
                &cfg.abc,
                &infer_rng,
            )?;
            for s in &summaries {
                s.to_kv()
                    .write(&states_dir.join(format!("iter_{:04}.txt", s.iteration)))?;
            }
            (Posterior::Particles(pop), summaries.len())
        }
    };

    let posterior_samples = posterior.draw_params(cfg.eval_samples, &mut eval_rng.split(0));
    write_matrix(&run_dir.join("posterior.txt"), &posterior_samples)?;

    // Posterior-space metrics where a reference posterior exists.
    let (mmd2_posterior, w2_posterior) = match cfg.task.as_str() {
        "gaussian_location" => {
            let analytic = gaussian_location_reference(&reference.observations)?;
            let ref_samples = analytic.sample(cfg.eval_samples, &mut eval_rng.split(1));
            let (mmd2, w2) = posterior_sample_metrics(
                &posterior_samples,
                &ref_samples,
                &cfg.mmd,
                &cfg.sinkhorn,
            )?;
            (Some(mmd2), Some(w2))
        }
        "gmm" => {
            let ref_samples = gmm_task_reference_samples(
                &reference.observations,
                cfg.eval_samples,
                &mut eval_rng.split(1),
            )?;
            let (mmd2, w2) = posterior_sample_metrics(
                &posterior_samples,
                &ref_samples,
                &cfg.mmd,
                &cfg.sinkhorn,
            )?;
            (Some(mmd2), Some(w2))
        }
        _ => (None, None),
    };

    let ppc = posterior_predictive_check(
        &posterior,
        task.as_ref(),
        &reference.observations,
        cfg.ppc_sims,
        cfg.sims_per_param,
        cfg.ppc_mode,
        &cfg.mmd,
        &cfg.sinkhorn,
        &mut eval_rng.split(2),
    )?;

    let sync_error = if cfg.task == "furuta" {
        let furuta = cfg.build_furuta();
        let states = reference
            .initial_states
            .as_ref()
            .expect("furuta reference carries initial states");
        Some(furuta_sync_error(
            &posterior,
            &furuta,
            states,
            &reference.observations,
            cfg.sync_error_sims,
            &mut eval_rng.split(3),
        )?)
    } else {
        None
    };

    let report = EvalReport {
        task: cfg.task.clone(),
        method: cfg.method.name().to_string(),
        n_obs: cfg.n_obs,
        sims_per_param: cfg.sims_per_param,
        seed: cfg.seed,
        iteration_count,
        mmd2_posterior,
        w2_posterior,
        ppc_mmd2: ppc.mmd2,
        ppc_w2: Some(ppc.w2),
        furuta_sync_error: sync_error,
        wall_seconds: 0.0,
    };
    Ok((report, iteration_count))
}
