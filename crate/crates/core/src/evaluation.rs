//! Posterior evaluation: reference posteriors, sample-space metrics,
//! posterior predictive checks, and the synchronized Furuta error.
//!
//! Methods are compared on 10000 posterior samples against reference
//! posterior samples where a reference exists (closed form for Gaussian
//! location, grid quadrature for the 2-D mixture task), and on posterior
//! predictive discrepancies otherwise. Evaluation never mutates models or
//! reference data.

use crate::abc::ParticlePopulation;
use crate::distributions::{DensityModel, GaussianFull};
use crate::error::{CoreError, Result};
use crate::ipm::{mmd2_unbiased, sinkhorn_w2, MmdConfig, SinkhornConfig};
use crate::linalg::Matrix;
use crate::math::log_sum_exp;
use crate::rng::RngStream;
use crate::simulators::{FurutaTask, GaussianMixtureTask, Simulator};
use rayon::prelude::*;

/// Anything that can produce posterior parameter draws: fitted density
/// models and weighted particle populations.
pub trait ParamSource: Send + Sync {
    fn param_dim(&self) -> usize;
    fn draw_params(&self, count: usize, rng: &mut RngStream) -> Matrix;
}

impl<T: DensityModel + ?Sized> ParamSource for T {
    fn param_dim(&self) -> usize {
        self.dim()
    }

    fn draw_params(&self, count: usize, rng: &mut RngStream) -> Matrix {
        self.sample(count, rng)
    }
}

impl ParamSource for ParticlePopulation {
    fn param_dim(&self) -> usize {
        self.particles.cols()
    }

    fn draw_params(&self, count: usize, rng: &mut RngStream) -> Matrix {
        self.sample_params(count, rng)
    }
}

/// One evaluation row; `None` marks metrics that do not apply to the run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub task: String,
    pub method: String,
    pub n_obs: usize,
    pub sims_per_param: usize,
    pub seed: u64,
    pub iteration_count: usize,
    pub mmd2_posterior: Option<f64>,
    pub w2_posterior: Option<f64>,
    pub ppc_mmd2: Option<f64>,
    pub ppc_w2: Option<f64>,
    pub furuta_sync_error: Option<f64>,
    pub wall_seconds: f64,
}

/// Conjugate posterior of the Gaussian location task: prior `N(0, 0.1·I)`
/// and likelihood `N(ξ, 0.1·I)` give `N(Σx/(N+1), 0.1/(N+1)·I)`.
pub fn gaussian_location_reference(reference: &Matrix) -> Result<GaussianFull> {
    let n = reference.rows();
    let d = reference.cols();
    let mut mean = vec![0.0; d];
    for row in reference.iter_rows() {
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64 + 1.0;
    }
    GaussianFull::isotropic(mean, 0.1 / (n as f64 + 1.0))
}

/// Exact posterior of the 2-D mixture task on a regular grid over the prior
/// box, with log-domain cell masses.
pub struct GmmGridPosterior {
    log_mass: Vec<f64>,
    cells: usize,
    lo: f64,
    hi: f64,
}

pub const GMM_GRID_CELLS: usize = 400;

impl GmmGridPosterior {
    /// Tabulate the posterior `p(ξ|x*) ∝ Π_i p(x*_i|ξ)` at cell centers.
    pub fn tabulate(reference: &Matrix) -> Result<Self> {
        if reference.cols() != 2 {
            return Err(CoreError::DimensionMismatch {
                expected: 2,
                got: reference.cols(),
            });
        }
        let cells = GMM_GRID_CELLS;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / cells as f64;
        let rows: Vec<Vec<f64>> = (0..cells)
            .into_par_iter()
            .map(|iy| {
                let y = lo + (iy as f64 + 0.5) * h;
                (0..cells)
                    .map(|ix| {
                        let x = lo + (ix as f64 + 0.5) * h;
                        let params = [x, y];
                        reference
                            .iter_rows()
                            .map(|obs| GaussianMixtureTask::obs_log_density(&params, obs))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut log_mass: Vec<f64> = rows.into_iter().flatten().collect();
        let norm = log_sum_exp(&log_mass)?;
        for v in &mut log_mass {
            *v -= norm;
        }
        Ok(GmmGridPosterior {
            log_mass,
            cells,
            lo,
            hi,
        })
    }

    fn cell_center(&self, idx: usize) -> [f64; 2] {
        let h = (self.hi - self.lo) / self.cells as f64;
        let iy = idx / self.cells;
        let ix = idx % self.cells;
        [
            self.lo + (ix as f64 + 0.5) * h,
            self.lo + (iy as f64 + 0.5) * h,
        ]
    }

    pub fn mode(&self) -> [f64; 2] {
        let best = self
            .log_mass
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        self.cell_center(best)
    }

    pub fn mean(&self) -> [f64; 2] {
        let mut mean = [0.0; 2];
        for (idx, &lm) in self.log_mass.iter().enumerate() {
            let p = lm.exp();
            let c = self.cell_center(idx);
            mean[0] += p * c[0];
            mean[1] += p * c[1];
        }
        mean
    }

    pub fn std(&self) -> [f64; 2] {
        let mean = self.mean();
        let mut var = [0.0; 2];
        for (idx, &lm) in self.log_mass.iter().enumerate() {
            let p = lm.exp();
            let c = self.cell_center(idx);
            var[0] += p * (c[0] - mean[0]) * (c[0] - mean[0]);
            var[1] += p * (c[1] - mean[1]) * (c[1] - mean[1]);
        }
        [var[0].sqrt(), var[1].sqrt()]
    }

    /// Draw samples by cell mass with uniform jitter inside the cell.
    pub fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let cumulative: Vec<f64> = self
            .log_mass
            .iter()
            .scan(0.0, |acc, &lm| {
                *acc += lm.exp();
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().unwrap();
        let h = (self.hi - self.lo) / self.cells as f64;
        let mut out = Matrix::zeros(count, 2);
        for i in 0..count {
            let u = rng.uniform() * total;
            let idx = match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(p) | Err(p) => p.min(cumulative.len() - 1),
            };
            let c = self.cell_center(idx);
            out.set(i, 0, c[0] + (rng.uniform() - 0.5) * h);
            out.set(i, 1, c[1] + (rng.uniform() - 0.5) * h);
        }
        out
    }
}

/// Exact-posterior samples for the 2-D mixture task.
pub fn gmm_task_reference_samples(
    reference: &Matrix,
    count: usize,
    rng: &mut RngStream,
) -> Result<Matrix> {
    Ok(GmmGridPosterior::tabulate(reference)?.sample(count, rng))
}

/// MMD² (raw, unbiased) and entropic W² between posterior and reference
/// samples.
pub fn posterior_sample_metrics(
    model_samples: &Matrix,
    reference_samples: &Matrix,
    mmd_cfg: &MmdConfig,
    w2_cfg: &SinkhornConfig,
) -> Result<(f64, f64)> {
    let mmd2 = mmd2_unbiased(model_samples, reference_samples, mmd_cfg)?;
    let w2 = sinkhorn_w2(model_samples, reference_samples, w2_cfg)?.cost;
    Ok((mmd2, w2))
}

/// How the per-parameter discrepancies of a PPC are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpcMode {
    /// Mean of `D(x*, x^{(s)}_{1:M})` over posterior draws s.
    PerParameterMean,
    /// Pool every simulated observation into one set, one discrepancy.
    Pooled,
}

#[derive(Debug, Clone, Copy)]
pub struct PpcScores {
    /// `None` when fewer than two simulations per parameter are available.
    pub mmd2: Option<f64>,
    pub w2: f64,
}

/// Draw `count` parameters from `source`, rejecting draws outside the prior
/// support. More than 90% rejections (a 10x oversampling budget) is an
/// error.
pub fn draw_within_prior(
    source: &(impl ParamSource + ?Sized),
    prior: &dyn DensityModel,
    count: usize,
    rng: &mut RngStream,
) -> Result<Matrix> {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..10 {
        let batch = source.draw_params(count, rng);
        for row in batch.iter_rows() {
            if prior.log_prob(row) > f64::NEG_INFINITY {
                kept.push(row.to_vec());
                if kept.len() == count {
                    return Ok(Matrix::from_rows(&kept));
                }
            }
        }
    }
    Err(CoreError::ModelMassOutsidePrior)
}

/// Posterior predictive check: expected discrepancy between the reference
/// data and simulations from posterior-drawn parameters.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predictive_check(
    source: &(impl ParamSource + ?Sized),
    task: &dyn Simulator,
    reference: &Matrix,
    sims: usize,
    sims_per_param: usize,
    mode: PpcMode,
    mmd_cfg: &MmdConfig,
    w2_cfg: &SinkhornConfig,
    rng: &mut RngStream,
) -> Result<PpcScores> {
    let prior = task.prior();
    let params = draw_within_prior(source, prior.as_ref(), sims, rng)?;
    let sim_base = rng.fork();

    match mode {
        PpcMode::PerParameterMean => {
            let scores: Vec<(Option<f64>, f64)> = (0..sims)
                .into_par_iter()
                .map(|i| {
                    let mut sim_rng = sim_base.split(i as u64);
                    let obs = task.simulate(params.row(i), sims_per_param, &mut sim_rng)?;
                    let mmd = if sims_per_param >= 2 {
                        Some(mmd2_unbiased(&obs, reference, mmd_cfg)?)
                    } else {
                        None
                    };
                    let w2 = sinkhorn_w2(&obs, reference, w2_cfg)?.cost;
                    Ok((mmd, w2))
                })
                .collect::<Result<_>>()?;
            let w2 = scores.iter().map(|s| s.1).sum::<f64>() / sims as f64;
            let mmd2 = if sims_per_param >= 2 {
                Some(scores.iter().map(|s| s.0.unwrap()).sum::<f64>() / sims as f64)
            } else {
                None
            };
            Ok(PpcScores { mmd2, w2 })
        }
        PpcMode::Pooled => {
            let batches: Vec<Matrix> = (0..sims)
                .into_par_iter()
                .map(|i| {
                    let mut sim_rng = sim_base.split(i as u64);
                    task.simulate(params.row(i), sims_per_param, &mut sim_rng)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Matrix> = batches.iter().collect();
            let pooled = Matrix::vstack(&refs);
            let mmd2 = if pooled.rows() >= 2 {
                Some(mmd2_unbiased(&pooled, reference, mmd_cfg)?)
            } else {
                None
            };
            let w2 = sinkhorn_w2(&pooled, reference, w2_cfg)?.cost;
            Ok(PpcScores { mmd2, w2 })
        }
    }
}

/// Mean accumulated error `Σ_i |x*_i - x_i|` over rollouts that share the
/// reference trajectories' initial states; rollout r replays reference
/// trajectory `r mod N` at a posterior-drawn parameter.
pub fn furuta_sync_error(
    source: &(impl ParamSource + ?Sized),
    task: &FurutaTask,
    reference_states: &Matrix,
    reference_trajs: &Matrix,
    sims: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if reference_states.rows() != reference_trajs.rows() {
        return Err(CoreError::DimensionMismatch {
            expected: reference_states.rows(),
            got: reference_trajs.rows(),
        });
    }
    let prior = task.prior();
    let params = draw_within_prior(source, prior.as_ref(), sims, rng)?;
    let n_ref = reference_states.rows();
    let errors: Vec<f64> = (0..sims)
        .into_par_iter()
        .map(|i| {
            let ref_idx = i % n_ref;
            let s = reference_states.row(ref_idx);
            let states = Matrix::from_rows(&[s.to_vec()]);
            let rollout = task.simulate_synced(params.row(i), &states)?;
            let err: f64 = rollout
                .row(0)
                .iter()
                .zip(reference_trajs.row(ref_idx))
                .map(|(a, b)| (a - b).abs())
                .sum();
            Ok(err)
        })
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum::<f64>() / sims as f64)
}
