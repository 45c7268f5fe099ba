use super::Simulator;
use crate::distributions::{BoxUniform, DensityModel};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

/// Simple-likelihood complex-posterior task.
///
/// One observation is the concatenation of four i.i.d. draws from a
/// 2-D Gaussian with mean `(ξ₁, ξ₂)`, standard deviations `ξ₃²`, `ξ₄²` and
/// correlation `tanh(ξ₅)`; squaring and tanh make the parameter-to-moment
/// map many-to-one, hence the multi-modal posterior.
#[derive(Debug, Clone, Default)]
pub struct SlcpTask;

const GROUND_TRUTH: [f64; 5] = [0.7, 1.5, -1.0, -0.9, 0.6];

impl SlcpTask {
    pub fn new() -> Self {
        SlcpTask
    }

    /// Cholesky factor of the observation covariance with the singular-scale
    /// jitter guard.
    fn chol_entries(params: &[f64]) -> [f64; 3] {
        let s1 = params[2] * params[2];
        let s2 = params[3] * params[3];
        let rho = params[4].tanh();
        if params[2].abs() < 1e-6 || params[3].abs() < 1e-6 {
            // Σ + 1e-8·I, factored directly.
            let v1 = s1 * s1 + 1e-8;
            let v2 = s2 * s2 + 1e-8;
            let cov = rho * s1 * s2;
            let l11 = v1.sqrt();
            let l21 = cov / l11;
            let l22 = (v2 - l21 * l21).sqrt();
            return [l11, l21, l22];
        }
        [s1, rho * s2, s2 * (1.0 - rho * rho).sqrt()]
    }
}

impl Simulator for SlcpTask {
    fn name(&self) -> &'static str {
        "slcp"
    }

    fn param_dim(&self) -> usize {
        5
    }

    fn obs_dim(&self) -> usize {
        8
    }

    fn prior(&self) -> Box<dyn DensityModel> {
        Box::new(BoxUniform::new(vec![-3.0; 5], vec![3.0; 5]).expect("valid prior box"))
    }

    fn ground_truth(&self) -> Vec<f64> {
        GROUND_TRUTH.to_vec()
    }

    fn simulate(&self, params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix> {
        let [l11, l21, l22] = Self::chol_entries(params);
        let mu = [params[0], params[1]];
        let mut out = Matrix::zeros(count, 8);
        let mut batch = rng.fork();
        for i in 0..count {
            let row = out.row_mut(i);
            for part in 0..4 {
                let z0: f64 = batch.sample(StandardNormal);
                let z1: f64 = batch.sample(StandardNormal);
                row[2 * part] = mu[0] + l11 * z0;
                row[2 * part + 1] = mu[1] + l21 * z0 + l22 * z1;
            }
        }
        Ok(out)
    }
}
