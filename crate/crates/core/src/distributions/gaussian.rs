use super::{check_weights, DensityModel, JITTER_FLOOR};
use crate::error::{CoreError, Result};
use crate::linalg::{cholesky_spd, solve_lower, Matrix};
use crate::rng::RngStream;
use crate::textio::KvBlock;
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// Multivariate Gaussian with a full covariance matrix.
///
/// The covariance is symmetrized and, if needed, lifted by an escalating
/// jitter until the Cholesky factorization succeeds, so a constructed value
/// always samples and evaluates cleanly.
#[derive(Debug, Clone)]
pub struct GaussianFull {
    mean: Vec<f64>,
    cov: Matrix,
    chol: Matrix,
    log_det: f64,
}

impl GaussianFull {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        let d = mean.len();
        if cov.rows() != d || cov.cols() != d {
            return Err(CoreError::DimensionMismatch {
                expected: d,
                got: cov.rows(),
            });
        }
        // Symmetrize before factorizing.
        let mut sym = cov;
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (sym.get(i, j) + sym.get(j, i));
                sym.set(i, j, avg);
                sym.set(j, i, avg);
            }
        }
        let mut jitter = 0.0;
        for attempt in 0..4 {
            let candidate = if jitter == 0.0 {
                sym.clone()
            } else {
                let mut c = sym.clone();
                for i in 0..d {
                    c.set(i, i, c.get(i, i) + jitter);
                }
                c
            };
            match cholesky_spd(&candidate) {
                Ok(chol) => {
                    let log_det = 2.0 * (0..d).map(|i| chol.get(i, i).ln()).sum::<f64>();
                    return Ok(GaussianFull {
                        mean,
                        cov: candidate,
                        chol,
                        log_det,
                    });
                }
                Err(_) if attempt < 3 => {
                    jitter = if jitter == 0.0 {
                        JITTER_FLOOR
                    } else {
                        jitter * 100.0
                    };
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        GaussianFull::new(mean, Matrix::identity(d).scale(variance))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    /// One draw written into `out` (length `dim`).
    pub fn sample_into(&self, out: &mut [f64], rng: &mut RngStream) {
        let d = self.mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            let mut v = self.mean[i];
            for k in 0..=i {
                v += self.chol.get(i, k) * z[k];
            }
            out[i] = v;
        }
    }

    pub(crate) fn from_kv(kv: &KvBlock) -> Result<Self> {
        let mean = kv.get_f64_list("mean")?;
        let d = mean.len();
        let cov_data = kv.get_f64_list("cov")?;
        if cov_data.len() != d * d {
            return Err(CoreError::parse("gaussian", "cov length != dim^2"));
        }
        GaussianFull::new(mean, Matrix::from_vec(d, d, cov_data))
    }
}

impl DensityModel for GaussianFull {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let mut out = Matrix::zeros(count, self.dim());
        for i in 0..count {
            self.sample_into(out.row_mut(i), rng);
        }
        out
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let y = solve_lower(&self.chol, &centered);
        let maha: f64 = y.iter().map(|v| v * v).sum();
        -0.5 * (d as f64 * LN_2PI + self.log_det + maha)
    }

    fn clone_box(&self) -> Box<dyn DensityModel> {
        Box::new(self.clone())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("kind", "gaussian");
        kv.set_f64_list("mean", &self.mean);
        kv.set_f64_list("cov", self.cov.as_slice());
        kv
    }
}

pub(crate) fn weighted_mean(points: &Matrix, weights: &[f64]) -> Vec<f64> {
    let d = points.cols();
    let mut mean = vec![0.0; d];
    for (row, &w) in points.iter_rows().zip(weights) {
        for j in 0..d {
            mean[j] += w * row[j];
        }
    }
    mean
}

pub(crate) fn weighted_cov(points: &Matrix, weights: &[f64], mean: &[f64]) -> Matrix {
    let d = points.cols();
    let mut cov = Matrix::zeros(d, d);
    for (row, &w) in points.iter_rows().zip(weights) {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..=a {
                let v = w * da * (row[b] - mean[b]);
                cov.set(a, b, cov.get(a, b) + v);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov.set(b, a, cov.get(a, b));
        }
    }
    cov
}

/// Closed-form weighted maximum-likelihood Gaussian fit.
///
/// `mean = Σ wᵢ xᵢ`, `cov = Σ wᵢ (xᵢ-μ)(xᵢ-μ)ᵀ + λI` with the jitter floor
/// λ = [`JITTER_FLOOR`]. Weights must be a simplex (Σ = 1 within 1e-9).
pub fn fit_gaussian_weighted(points: &Matrix, weights: &[f64]) -> Result<GaussianFull> {
    if points.rows() == 0 || points.rows() != weights.len() {
        return Err(CoreError::InvalidWeights);
    }
    check_weights(weights)?;
    let mean = weighted_mean(points, weights);
    let mut cov = weighted_cov(points, weights, &mean);
    for i in 0..points.cols() {
        cov.set(i, i, cov.get(i, i) + JITTER_FLOOR);
    }
    GaussianFull::new(mean, cov)
}
