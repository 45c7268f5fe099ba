//! The five benchmark stochastic simulators.
//!
//! Each task bundles a prior, a fixed ground-truth parameter, and a batch
//! simulator `p(x|ξ)`. Batches parallelize over rollouts with a child rng
//! split per rollout index, so results do not depend on thread scheduling.

mod furuta;
mod gaussian_location;
mod gaussian_mixture;
mod sir;
mod slcp;

pub use furuta::{FurutaConfig, FurutaObsEncoding, FurutaTask};
pub use gaussian_location::GaussianLocationTask;
pub use gaussian_mixture::GaussianMixtureTask;
pub use sir::SirTask;
pub use slcp::SlcpTask;

use crate::distributions::DensityModel;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;

/// One benchmark task: simulator, prior, and ground truth.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;
    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn prior(&self) -> Box<dyn DensityModel>;
    fn ground_truth(&self) -> Vec<f64>;

    /// `count` observations drawn at parameter `params`, one per row.
    /// Deterministic given the rng state on entry.
    fn simulate(&self, params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix>;
}

/// Look up a task by its registry name with default settings.
pub fn task_by_name(name: &str) -> Result<Box<dyn Simulator>> {
    match name {
        "gaussian_location" => Ok(Box::new(GaussianLocationTask::new(10))),
        "gmm" => Ok(Box::new(GaussianMixtureTask::new())),
        "slcp" => Ok(Box::new(SlcpTask::new())),
        "sir" => Ok(Box::new(SirTask::new(10))),
        "furuta" => Ok(Box::new(FurutaTask::new(FurutaConfig::default()))),
        other => Err(CoreError::Config(format!("unknown task `{other}`"))),
    }
}

pub fn task_names() -> &'static [&'static str] {
    &["gaussian_location", "gmm", "slcp", "sir", "furuta"]
}
