use super::DensityModel;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::textio::KvBlock;
use crate::error::Result;

/// Degenerate distribution concentrated on one point.
///
/// Used for ground-truth baselines in evaluation (e.g. the simulator-noise
/// floor of a posterior predictive check). `log_prob` is a support indicator,
/// not a density: 0 at the point, `-inf` elsewhere.
#[derive(Debug, Clone)]
pub struct PointMass {
    point: Vec<f64>,
}

impl PointMass {
    pub fn new(point: Vec<f64>) -> Self {
        PointMass { point }
    }

    pub(crate) fn from_kv(kv: &KvBlock) -> Result<Self> {
        Ok(PointMass::new(kv.get_f64_list("point")?))
    }
}

impl DensityModel for PointMass {
    fn dim(&self) -> usize {
        self.point.len()
    }

    fn sample(&self, count: usize, _rng: &mut RngStream) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..count).map(|_| self.point.clone()).collect();
        Matrix::from_rows(&rows)
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        if x == self.point.as_slice() {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn clone_box(&self) -> Box<dyn DensityModel> {
        Box::new(self.clone())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("kind", "point_mass");
        kv.set_f64_list("point", &self.point);
        kv
    }
}
