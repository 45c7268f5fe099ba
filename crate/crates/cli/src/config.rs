//! Run configuration: a flat key/value file with typed keys.
//!
//! Required keys are `task`, `method`, and `n_obs`; everything else has a
//! documented default. The shipped profiles under `configs/` carry every
//! budget explicitly so a run is reproducible from the file alone.

use crate::error::{CliError, Result};
use pli_core::ipm::{Metric, MmdConfig, SinkhornConfig};
use pli_core::pli::{default_bandwidth, EstimatorSpec, PliConfig};
use pli_core::abc::AbcConfig;
use pli_core::evaluation::PpcMode;
use pli_core::simulators::{
    FurutaConfig, FurutaObsEncoding, FurutaTask, GaussianLocationTask, GaussianMixtureTask,
    Simulator, SirTask, SlcpTask,
};
use pli_core::textio::KvBlock;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MmdPli,
    WPli,
    MmdAbcSmc,
    WAbcSmc,
    MmdAbcPmc,
    WAbcPmc,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mmd-pli" => Ok(Method::MmdPli),
            "w-pli" => Ok(Method::WPli),
            "mmd-abc-smc" => Ok(Method::MmdAbcSmc),
            "w-abc-smc" => Ok(Method::WAbcSmc),
            "mmd-abc-pmc" => Ok(Method::MmdAbcPmc),
            "w-abc-pmc" => Ok(Method::WAbcPmc),
            other => Err(CliError::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::MmdPli => "mmd-pli",
            Method::WPli => "w-pli",
            Method::MmdAbcSmc => "mmd-abc-smc",
            Method::WAbcSmc => "w-abc-smc",
            Method::MmdAbcPmc => "mmd-abc-pmc",
            Method::WAbcPmc => "w-abc-pmc",
        }
    }

    pub fn is_pli(&self) -> bool {
        matches!(self, Method::MmdPli | Method::WPli)
    }

    pub fn uses_mmd(&self) -> bool {
        matches!(self, Method::MmdPli | Method::MmdAbcSmc | Method::MmdAbcPmc)
    }
}

/// Simulator knobs that alter a task's observable behaviour (and hence the
/// reference files it produces).
#[derive(Debug, Clone)]
pub struct TaskOptions {
    pub sir_bins: usize,
    pub furuta: FurutaConfig,
}

impl Default for TaskOptions {
    fn default() -> Self {
        TaskOptions {
            sir_bins: 10,
            furuta: FurutaConfig::default(),
        }
    }
}

impl TaskOptions {
    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        let get_f64_or = |key: &str, default: f64| -> Result<f64> {
            match kv.get_opt(key) {
                Some(_) => kv.get_f64(key).map_err(cfg_err),
                None => Ok(default),
            }
        };
        let sir_bins = match kv.get_opt("sir.bins") {
            Some(_) => kv.get_usize("sir.bins").map_err(cfg_err)?,
            None => 10,
        };
        let mut furuta = FurutaConfig {
            damping_r: get_f64_or("furuta.damping_r", 0.0)?,
            damping_p: get_f64_or("furuta.damping_p", 0.0)?,
            ..FurutaConfig::default()
        };
        if kv.get_opt("furuta.init_std").is_some() {
            let list = kv.get_f64_list("furuta.init_std").map_err(cfg_err)?;
            if list.len() != 4 {
                return Err(CliError::Config("furuta.init_std needs 4 entries".into()));
            }
            furuta.init_std = [list[0], list[1], list[2], list[3]];
        }
        furuta.encoding = match kv.get_opt("furuta.encoding").unwrap_or("sincos") {
            "sincos" => FurutaObsEncoding::SinCos,
            "raw" => FurutaObsEncoding::RawAngles,
            other => {
                return Err(CliError::Config(format!(
                    "unknown furuta encoding `{other}` (expected sincos|raw)"
                )))
            }
        };
        Ok(TaskOptions { sir_bins, furuta })
    }

    pub fn build_task(&self, name: &str) -> Result<Box<dyn Simulator>> {
        match name {
            "gaussian_location" => Ok(Box::new(GaussianLocationTask::new(10))),
            "gmm" => Ok(Box::new(GaussianMixtureTask::new())),
            "slcp" => Ok(Box::new(SlcpTask::new())),
            "sir" => {
                if self.sir_bins < 1 || self.sir_bins > 20 {
                    return Err(CliError::Config("sir.bins must be in 1..=20".into()));
                }
                Ok(Box::new(SirTask::new(self.sir_bins)))
            }
            "furuta" => Ok(Box::new(self.build_furuta())),
            other => Err(CliError::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn build_furuta(&self) -> FurutaTask {
        FurutaTask::new(self.furuta)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: String,
    pub method: Method,
    pub n_obs: usize,
    pub sims_per_param: usize,
    pub seed: u64,
    pub eval_samples: usize,
    pub ppc_sims: usize,
    pub ppc_mode: PpcMode,
    pub sync_error_sims: usize,
    pub pli: PliConfig,
    pub abc: AbcConfig,
    pub mmd: MmdConfig,
    pub sinkhorn: SinkhornConfig,
    pub options: TaskOptions,
}

fn cfg_err(e: pli_core::CoreError) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let kv = KvBlock::read(path).map_err(cfg_err)?;
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        let task = kv.get_str("task").map_err(cfg_err)?.to_string();
        let method = Method::parse(kv.get_str("method").map_err(cfg_err)?)?;
        let n_obs = kv.get_usize("n_obs").map_err(cfg_err)?;
        let sims_per_param = match kv.get_opt("sims_per_param") {
            Some(_) => kv.get_usize("sims_per_param").map_err(cfg_err)?,
            None => n_obs,
        };
        let seed = match kv.get_opt("seed") {
            Some(_) => kv.get_u64("seed").map_err(cfg_err)?,
            None => 0,
        };

        let get_usize_or = |key: &str, default: usize| -> Result<usize> {
            match kv.get_opt(key) {
                Some(_) => kv.get_usize(key).map_err(cfg_err),
                None => Ok(default),
            }
        };
        let get_f64_or = |key: &str, default: f64| -> Result<f64> {
            match kv.get_opt(key) {
                Some("auto") => Ok(default),
                Some(_) => kv.get_f64(key).map_err(cfg_err),
                None => Ok(default),
            }
        };

        let mut pli = PliConfig::for_reference_size(n_obs);
        pli.epsilon = get_f64_or("pli.epsilon", pli.epsilon)?;
        pli.base_bandwidth = get_f64_or("pli.base_bandwidth", default_bandwidth(n_obs))?;
        pli.eta_min = get_f64_or("pli.eta_min", pli.eta_min)?;
        pli.eta_max = get_f64_or("pli.eta_max", pli.eta_max)?;
        pli.iterations = get_usize_or("pli.iterations", pli.iterations)?;
        pli.samples_per_iter = get_usize_or("pli.samples_per_iter", pli.samples_per_iter)?;
        pli.sims_per_param = sims_per_param;
        pli.estimator = match kv.get_opt("pli.estimator").unwrap_or("gaussian") {
            "gaussian" => EstimatorSpec::Gaussian,
            "gmm" => EstimatorSpec::Gmm {
                components: get_usize_or("pli.gmm_components", 5)?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown estimator `{other}` (expected gaussian|gmm)"
                )))
            }
        };

        let mut abc = AbcConfig::new(sims_per_param);
        abc.particles = get_usize_or("abc.particles", abc.particles)?;
        abc.iterations = get_usize_or("abc.iterations", abc.iterations)?;
        abc.alpha = get_f64_or("abc.alpha", abc.alpha)?;
        abc.resample_threshold = match kv.get_opt("abc.resample_threshold") {
            None | Some("auto") => None,
            Some(_) => Some(kv.get_f64("abc.resample_threshold").map_err(cfg_err)?),
        };
        abc.kernel_components = get_usize_or("abc.kernel_components", abc.kernel_components)?;

        let mmd = match kv.get_opt("mmd.bandwidths") {
            Some(_) => MmdConfig {
                bandwidths: kv.get_f64_list("mmd.bandwidths").map_err(cfg_err)?,
            },
            None => MmdConfig::default(),
        };
        let sinkhorn = SinkhornConfig {
            epsilon_scale: get_f64_or("sinkhorn.epsilon_scale", 0.01)?,
            max_iters: get_usize_or("sinkhorn.max_iters", 1000)?,
            marginal_tol: get_f64_or("sinkhorn.marginal_tol", 1e-6)?,
        };

        let options = TaskOptions::from_kv(kv)?;

        let cfg = RunConfig {
            task,
            method,
            n_obs,
            sims_per_param,
            seed,
            eval_samples: get_usize_or("eval_samples", 10_000)?,
            ppc_sims: get_usize_or("ppc_sims", 1000)?,
            ppc_mode: match kv.get_opt("ppc_mode").unwrap_or("per_param") {
                "per_param" => PpcMode::PerParameterMean,
                "pooled" => PpcMode::Pooled,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown ppc_mode `{other}` (expected per_param|pooled)"
                    )))
                }
            },
            sync_error_sims: get_usize_or("sync_error_sims", 1000)?,
            pli,
            abc,
            mmd,
            sinkhorn,
            options,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.build_task()?; // rejects unknown task names
        if self.n_obs < 1 {
            return Err(CliError::Config("n_obs must be at least 1".into()));
        }
        if self.method.uses_mmd() && (self.n_obs < 2 || self.sims_per_param < 2) {
            return Err(CliError::Config(
                "mmd methods need n_obs >= 2 and sims_per_param >= 2 \
                 (the unbiased estimator requires two samples per set)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Instantiate the task with this config's knobs.
    pub fn build_task(&self) -> Result<Box<dyn Simulator>> {
        self.options.build_task(&self.task)
    }

    pub fn build_furuta(&self) -> FurutaTask {
        self.options.build_furuta()
    }

    /// The scoring metric selected by the method.
    pub fn metric(&self) -> Metric {
        if self.method.uses_mmd() {
            Metric::Mmd(self.mmd.clone())
        } else {
            Metric::Wasserstein(self.sinkhorn.clone())
        }
    }

    pub fn run_name(&self) -> String {
        format!(
            "{}_{}_n{}_seed{}",
            self.task,
            self.method.name(),
            self.n_obs,
            self.seed
        )
    }

    /// Resolved configuration, echoed into manifests.
    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("task", &self.task);
        kv.set_str("method", self.method.name());
        kv.set_usize("n_obs", self.n_obs);
        kv.set_usize("sims_per_param", self.sims_per_param);
        kv.set_u64("seed", self.seed);
        kv.set_usize("eval_samples", self.eval_samples);
        kv.set_usize("ppc_sims", self.ppc_sims);
        kv.set_str(
            "ppc_mode",
            match self.ppc_mode {
                PpcMode::PerParameterMean => "per_param",
                PpcMode::Pooled => "pooled",
            },
        );
        kv.set_usize("sync_error_sims", self.sync_error_sims);
        kv.set_f64("pli.epsilon", self.pli.epsilon);
        kv.set_f64("pli.base_bandwidth", self.pli.base_bandwidth);
        kv.set_f64("pli.eta_min", self.pli.eta_min);
        kv.set_f64("pli.eta_max", self.pli.eta_max);
        kv.set_usize("pli.iterations", self.pli.iterations);
        kv.set_usize("pli.samples_per_iter", self.pli.samples_per_iter);
        match self.pli.estimator {
            EstimatorSpec::Gaussian => kv.set_str("pli.estimator", "gaussian"),
            EstimatorSpec::Gmm { components } => {
                kv.set_str("pli.estimator", "gmm");
                kv.set_usize("pli.gmm_components", components);
            }
        }
        kv.set_usize("abc.particles", self.abc.particles);
        kv.set_usize("abc.iterations", self.abc.iterations);
        kv.set_f64("abc.alpha", self.abc.alpha);
        match self.abc.resample_threshold {
            None => kv.set_str("abc.resample_threshold", "auto"),
            Some(v) => kv.set_f64("abc.resample_threshold", v),
        }
        kv.set_usize("abc.kernel_components", self.abc.kernel_components);
        kv.set_f64_list("mmd.bandwidths", &self.mmd.bandwidths);
        kv.set_f64("sinkhorn.epsilon_scale", self.sinkhorn.epsilon_scale);
        kv.set_usize("sinkhorn.max_iters", self.sinkhorn.max_iters);
        kv.set_f64("sinkhorn.marginal_tol", self.sinkhorn.marginal_tol);
        kv.set_usize("sir.bins", self.options.sir_bins);
        kv.set_f64("furuta.damping_r", self.options.furuta.damping_r);
        kv.set_f64("furuta.damping_p", self.options.furuta.damping_p);
        kv.set_f64_list("furuta.init_std", &self.options.furuta.init_std);
        kv.set_str(
            "furuta.encoding",
            match self.options.furuta.encoding {
                FurutaObsEncoding::SinCos => "sincos",
                FurutaObsEncoding::RawAngles => "raw",
            },
        );
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(task: &str, method: &str, n: usize) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("task", task);
        kv.set_str("method", method);
        kv.set_usize("n_obs", n);
        kv
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = RunConfig::from_kv(&minimal("gaussian_location", "mmd-pli", 100)).unwrap();
        assert_eq!(cfg.sims_per_param, 100);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.pli.iterations, 20);
        assert_eq!(cfg.pli.samples_per_iter, 5000);
        assert!((cfg.pli.epsilon - 0.5).abs() < 1e-15);
        assert!((cfg.pli.base_bandwidth - 1.0 / 200.0).abs() < 1e-15);
        assert_eq!(cfg.abc.particles, 1000);
        assert_eq!(cfg.abc.iterations, 200);
        assert!((cfg.abc.alpha - 0.1).abs() < 1e-15);
        assert_eq!(cfg.mmd.bandwidths.len(), 11);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        assert!(RunConfig::from_kv(&minimal("nope", "mmd-pli", 10)).is_err());
        assert!(RunConfig::from_kv(&minimal("gmm", "magic", 10)).is_err());
    }

    #[test]
    fn mmd_methods_reject_single_observation() {
        assert!(RunConfig::from_kv(&minimal("gmm", "mmd-pli", 1)).is_err());
        // Wasserstein methods accept N = 1.
        assert!(RunConfig::from_kv(&minimal("gmm", "w-pli", 1)).is_ok());
    }

    #[test]
    fn config_echo_round_trips() {
        let mut kv = minimal("furuta", "w-abc-pmc", 10);
        kv.set_str("pli.estimator", "gmm");
        kv.set_usize("pli.gmm_components", 3);
        kv.set_str("furuta.encoding", "raw");
        kv.set_usize("abc.particles", 123);
        let cfg = RunConfig::from_kv(&kv).unwrap();
        let echo = cfg.to_kv();
        let back = RunConfig::from_kv(&echo).unwrap();
        assert_eq!(back.abc.particles, 123);
        assert_eq!(back.options.furuta.encoding, FurutaObsEncoding::RawAngles);
        assert_eq!(back.pli.estimator, EstimatorSpec::Gmm { components: 3 });
        assert_eq!(back.run_name(), cfg.run_name());
    }
}
