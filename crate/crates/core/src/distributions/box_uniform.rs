use super::DensityModel;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::textio::KvBlock;

/// Uniform distribution on an axis-aligned box.
#[derive(Debug, Clone)]
pub struct BoxUniform {
    lower: Vec<f64>,
    upper: Vec<f64>,
    log_density: f64,
}

impl BoxUniform {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(CoreError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(CoreError::Config(
                "box bounds must satisfy lower < upper".into(),
            ));
        }
        let log_density = -lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| (u - l).ln())
            .sum::<f64>();
        Ok(BoxUniform {
            lower,
            upper,
            log_density,
        })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    pub(crate) fn from_kv(kv: &KvBlock) -> Result<Self> {
        BoxUniform::new(kv.get_f64_list("lower")?, kv.get_f64_list("upper")?)
    }
}

impl DensityModel for BoxUniform {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(count, d);
        for i in 0..count {
            for j in 0..d {
                let u = rng.uniform();
                out.set(i, j, self.lower[j] + (self.upper[j] - self.lower[j]) * u);
            }
        }
        out
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            self.log_density
        } else {
            f64::NEG_INFINITY
        }
    }

    fn clone_box(&self) -> Box<dyn DensityModel> {
        Box::new(self.clone())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("kind", "box_uniform");
        kv.set_f64_list("lower", &self.lower);
        kv.set_f64_list("upper", &self.upper);
        kv
    }
}
