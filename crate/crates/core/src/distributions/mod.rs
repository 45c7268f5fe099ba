//! Priors and fittable posterior density models.
//!
//! A [`DensityModel`] is anything that can be sampled, evaluated in log
//! density, and serialized. The fitting entry points ([`fit_gaussian_weighted`],
//! [`fit_gmm_weighted_em`]) turn weighted particles into the next proposal
//! distribution; the interface is deliberately minimal so richer estimators
//! (e.g. flows) can slot in later.

mod box_uniform;
mod gaussian;
mod log_normal;
mod mixture;
mod point_mass;

pub use box_uniform::BoxUniform;
pub use gaussian::{fit_gaussian_weighted, GaussianFull};
pub use log_normal::LogNormalDiag;
pub use mixture::{fit_gmm_weighted_em, GaussianMixture};
pub use point_mass::PointMass;

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::textio::KvBlock;

/// Covariance jitter floor applied by every Gaussian fit.
///
/// Degenerate weights (few effective particles) otherwise yield singular
/// covariances.
pub const JITTER_FLOOR: f64 = 1e-6;

/// A sampleable, evaluable distribution over parameter vectors.
pub trait DensityModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `count` i.i.d. draws, one per row. Deterministic given `rng`.
    fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix;

    /// Exact log density; `-inf` outside the support.
    fn log_prob(&self, x: &[f64]) -> f64;

    fn clone_box(&self) -> Box<dyn DensityModel>;

    /// Serialize into the key/value block format.
    fn to_kv(&self) -> KvBlock;
}

impl Clone for Box<dyn DensityModel> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Reconstruct a model from its key/value block (dispatch on `kind`).
pub fn model_from_kv(kv: &KvBlock) -> Result<Box<dyn DensityModel>> {
    match kv.get_str("kind")? {
        "box_uniform" => Ok(Box::new(BoxUniform::from_kv(kv)?)),
        "gaussian" => Ok(Box::new(GaussianFull::from_kv(kv)?)),
        "log_normal_diag" => Ok(Box::new(LogNormalDiag::from_kv(kv)?)),
        "gaussian_mixture" => Ok(Box::new(GaussianMixture::from_kv(kv)?)),
        "point_mass" => Ok(Box::new(PointMass::from_kv(kv)?)),
        other => Err(CoreError::parse("model", format!("unknown kind `{other}`"))),
    }
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(CoreError::InvalidWeights);
    }
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(CoreError::InvalidWeights);
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidWeights);
    }
    Ok(())
}
