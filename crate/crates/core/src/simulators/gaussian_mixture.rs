use super::Simulator;
use crate::distributions::{BoxUniform, DensityModel};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

/// Bimodal-scale Gaussian mixture task: an equal-weight mixture of
/// `N(x|ξ, I)` and `N(x|ξ, 0.01·I)` in two dimensions, prior `U(-10, 10)²`.
#[derive(Debug, Clone, Default)]
pub struct GaussianMixtureTask;

const WIDE_SD: f64 = 1.0;
const NARROW_SD: f64 = 0.1;
const GROUND_TRUTH: [f64; 2] = [2.0, -1.0];

impl GaussianMixtureTask {
    pub fn new() -> Self {
        GaussianMixtureTask
    }

    /// Log density of one observation given the parameter; used by the
    /// grid-quadrature reference posterior.
    pub fn obs_log_density(params: &[f64], x: &[f64]) -> f64 {
        let comp = |sd: f64| -> f64 {
            let z0 = (x[0] - params[0]) / sd;
            let z1 = (x[1] - params[1]) / sd;
            -(sd.ln()) * 2.0 - 1.8378770664093453 - 0.5 * (z0 * z0 + z1 * z1)
        };
        let a = comp(WIDE_SD);
        let b = comp(NARROW_SD);
        let hi = a.max(b);
        // log(½eᵃ + ½eᵇ)
        hi + ((a - hi).exp() + (b - hi).exp()).ln() - 2.0f64.ln()
    }
}

impl Simulator for GaussianMixtureTask {
    fn name(&self) -> &'static str {
        "gmm"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn prior(&self) -> Box<dyn DensityModel> {
        Box::new(
            BoxUniform::new(vec![-10.0, -10.0], vec![10.0, 10.0]).expect("valid prior box"),
        )
    }

    fn ground_truth(&self) -> Vec<f64> {
        GROUND_TRUTH.to_vec()
    }

    fn simulate(&self, params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix> {
        let mut out = Matrix::zeros(count, 2);
        let mut batch = rng.fork();
        for i in 0..count {
            let sd = if batch.uniform() < 0.5 { WIDE_SD } else { NARROW_SD };
            let row = out.row_mut(i);
            for j in 0..2 {
                let z: f64 = batch.sample(StandardNormal);
                row[j] = params[j] + sd * z;
            }
        }
        Ok(out)
    }
}
