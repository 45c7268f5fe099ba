use super::DensityModel;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::textio::KvBlock;
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// Log-normal with independent coordinates; support is the positive orthant.
#[derive(Debug, Clone)]
pub struct LogNormalDiag {
    log_mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl LogNormalDiag {
    pub fn new(log_mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if log_mean.len() != log_std.len() {
            return Err(CoreError::DimensionMismatch {
                expected: log_mean.len(),
                got: log_std.len(),
            });
        }
        if log_std.iter().any(|s| !(*s > 0.0)) {
            return Err(CoreError::Config("log_std must be positive".into()));
        }
        Ok(LogNormalDiag { log_mean, log_std })
    }

    pub(crate) fn from_kv(kv: &KvBlock) -> Result<Self> {
        LogNormalDiag::new(kv.get_f64_list("log_mean")?, kv.get_f64_list("log_std")?)
    }
}

impl DensityModel for LogNormalDiag {
    fn dim(&self) -> usize {
        self.log_mean.len()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(count, d);
        for i in 0..count {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                out.set(i, j, (self.log_mean[j] + self.log_std[j] * z).exp());
            }
        }
        out
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.dim() {
            let v = x[j];
            if !(v > 0.0) {
                return f64::NEG_INFINITY;
            }
            let s = self.log_std[j];
            let z = (v.ln() - self.log_mean[j]) / s;
            total += -v.ln() - s.ln() - 0.5 * (LN_2PI + z * z);
        }
        total
    }

    fn clone_box(&self) -> Box<dyn DensityModel> {
        Box::new(self.clone())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("kind", "log_normal_diag");
        kv.set_f64_list("log_mean", &self.log_mean);
        kv.set_f64_list("log_std", &self.log_std);
        kv
    }
}
