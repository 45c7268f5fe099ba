//! SMC-ABC and PMC-ABC baseline samplers.
//!
//! Both approximate the ABC posterior with weighted particles under the
//! uniform indicator kernel `1{score ≤ β_t}` and share the IPM scoring path
//! with the inference engine. SMC tightens β by matching a fraction α of the
//! previous effective sample size; PMC keeps the α-quantile best particles
//! and refreshes the rest from an adaptive perturbation kernel.

use crate::distributions::{
    fit_gaussian_weighted, fit_gmm_weighted_em, DensityModel, GaussianFull, JITTER_FLOOR,
};
use crate::error::{CoreError, Result};
use crate::ipm::Metric;
use crate::linalg::{cholesky_spd, Matrix};
use crate::math::five_point_summary;
use crate::rng::RngStream;
use crate::simulators::Simulator;
use crate::textio::KvBlock;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Weighted particle approximation of the ABC posterior.
#[derive(Debug, Clone)]
pub struct ParticlePopulation {
    pub particles: Matrix,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
    pub bandwidth: f64,
}

impl ParticlePopulation {
    pub fn weighted_mean(&self) -> Vec<f64> {
        let d = self.particles.cols();
        let mut mean = vec![0.0; d];
        for (row, &w) in self.particles.iter_rows().zip(&self.weights) {
            for j in 0..d {
                mean[j] += w * row[j];
            }
        }
        mean
    }

    /// Weighted draws with replacement (posterior samples).
    pub fn sample_params(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let mut out = Matrix::zeros(count, self.particles.cols());
        for i in 0..count {
            let pick = weighted_index(&self.weights, rng.uniform());
            out.row_mut(i).copy_from_slice(self.particles.row(pick));
        }
        out
    }
}

fn weighted_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[derive(Debug, Clone)]
pub struct AbcConfig {
    /// Particles K.
    pub particles: usize,
    pub iterations: usize,
    /// Survival fraction / quantile level α.
    pub alpha: f64,
    /// Simulations per particle M.
    pub sims_per_param: usize,
    /// SMC resample threshold V; defaults to K/2.
    pub resample_threshold: Option<f64>,
    /// Components of the PMC perturbation mixture.
    pub kernel_components: usize,
}

impl AbcConfig {
    pub fn new(sims_per_param: usize) -> Self {
        AbcConfig {
            particles: 1000,
            iterations: 200,
            alpha: 0.1,
            sims_per_param,
            resample_threshold: None,
            kernel_components: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::Config("alpha must lie in (0, 1)".into()));
        }
        if self.particles < 2 {
            return Err(CoreError::Config("need at least 2 particles".into()));
        }
        if self.sims_per_param < 1 {
            return Err(CoreError::Config("need at least 1 simulation per particle".into()));
        }
        Ok(())
    }

    fn threshold(&self) -> f64 {
        self.resample_threshold
            .unwrap_or(self.particles as f64 / 2.0)
    }
}

/// Effective sample size `1/Σ wᵢ²` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Per-iteration diagnostics of an ABC run.
#[derive(Debug, Clone)]
pub struct AbcIterationSummary {
    pub iteration: usize,
    pub bandwidth: f64,
    pub ess: f64,
    pub score_summary: [f64; 5],
}

impl AbcIterationSummary {
    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_usize("iteration", self.iteration);
        kv.set_f64("beta_t", self.bandwidth);
        kv.set_f64("ess", self.ess);
        kv.set_f64_list("score_quantiles", &self.score_summary);
        kv
    }
}

/// Solve the SMC-ABC bandwidth update: the smallest candidate β (over the
/// sorted unique scores) whose indicator-reweighted ESS reaches
/// `α·ESS(prev_weights)`. Returns the bandwidth and the renormalized
/// weights `w ∝ w_prev·1{s ≤ β}`.
pub fn smc_bandwidth_update(
    scores: &[f64],
    prev_weights: &[f64],
    _prev_bandwidth: f64,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    debug_assert_eq!(scores.len(), prev_weights.len());
    let target = alpha * ess(prev_weights);
    let mut candidates: Vec<f64> = scores.iter().cloned().filter(|s| s.is_finite()).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    for &beta in &candidates {
        let mut masked: Vec<f64> = scores
            .iter()
            .zip(prev_weights)
            .map(|(&s, &w)| if s <= beta { w } else { 0.0 })
            .collect();
        let total: f64 = masked.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for w in &mut masked {
            *w /= total;
        }
        if ess(&masked) >= target {
            return Ok((beta, masked));
        }
    }
    Err(CoreError::AllParticlesRejected)
}

/// Systematic resampling: `count` indices with expected multiplicities
/// proportional to the weights.
pub fn systematic_resample(weights: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut u = rng.uniform() * step;
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut i = 0;
    for _ in 0..count {
        while acc + weights[i] < u && i + 1 < weights.len() {
            acc += weights[i];
            i += 1;
        }
        out.push(i);
        u += step;
    }
    out
}

fn score_rows(
    task: &dyn Simulator,
    particles: &Matrix,
    reference: &Matrix,
    metric: &Metric,
    sims: usize,
    base: &RngStream,
) -> Result<Vec<f64>> {
    (0..particles.rows())
        .into_par_iter()
        .map(|i| {
            let mut rng = base.split(i as u64);
            let obs = task.simulate(particles.row(i), sims, &mut rng)?;
            metric.score(&obs, reference)
        })
        .collect()
}

/// SMC-ABC (ESS-driven bandwidth, indicator kernel, prior-invariant
/// random-walk moves).
pub fn smc_abc_run(
    task: &dyn Simulator,
    reference: &Matrix,
    metric: &Metric,
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<(ParticlePopulation, Vec<AbcIterationSummary>)> {
    cfg.validate()?;
    let k = cfg.particles;
    let prior = task.prior();
    let mut particles = prior.sample(k, &mut rng.split(0));
    let mut weights = vec![1.0 / k as f64; k];
    let mut bandwidth = f64::INFINITY;
    let mut scores = vec![f64::INFINITY; k];
    let mut summaries = Vec::with_capacity(cfg.iterations);

    for t in 1..=cfg.iterations {
        let t_rng = rng.split(t as u64);
        scores = score_rows(task, &particles, reference, metric, cfg.sims_per_param, &t_rng.split(0))
            .map_err(|e| e.at_iteration(t))?;
        let (beta, new_weights) = smc_bandwidth_update(&scores, &weights, bandwidth, cfg.alpha)
            .map_err(|e| e.at_iteration(t))?;
        bandwidth = beta;
        weights = new_weights;
        summaries.push(AbcIterationSummary {
            iteration: t,
            bandwidth,
            ess: ess(&weights),
            score_summary: five_point_summary(&scores)?,
        });

        if ess(&weights) < cfg.threshold() {
            let idx = systematic_resample(&weights, k, &mut t_rng.split(1));
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| particles.row(i).to_vec()).collect();
            scores = idx.iter().map(|&i| scores[i]).collect();
            particles = Matrix::from_rows(&rows);
            weights = vec![1.0 / k as f64; k];
        }

        // Forward kernel: Gaussian random walk with twice the weighted
        // population covariance, accepted by a prior-Metropolis step so the
        // move leaves the prior invariant (an uninformative likelihood then
        // keeps the population on the prior).
        let kernel_chol = {
            let mean = weighted_mean_of(&particles, &weights);
            let mut cov = weighted_cov_of(&particles, &weights, &mean).scale(2.0);
            for i in 0..cov.rows() {
                cov.set(i, i, cov.get(i, i) + JITTER_FLOOR);
            }
            cholesky_spd(&cov).map_err(|e| e.at_iteration(t))?
        };
        let move_base = t_rng.split(2);
        let moved: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                let mut move_rng = move_base.split(i as u64);
                let current = particles.row(i);
                let d = current.len();
                let z: Vec<f64> = (0..d).map(|_| move_rng.sample(StandardNormal)).collect();
                let mut proposal = current.to_vec();
                for a in 0..d {
                    for b in 0..=a {
                        proposal[a] += kernel_chol.get(a, b) * z[b];
                    }
                }
                let log_ratio = prior.log_prob(&proposal) - prior.log_prob(current);
                if log_ratio >= 0.0 || move_rng.uniform().ln() < log_ratio {
                    proposal
                } else {
                    current.to_vec()
                }
            })
            .collect();
        particles = Matrix::from_rows(&moved);
    }

    Ok((
        ParticlePopulation {
            particles,
            weights,
            scores,
            bandwidth,
        },
        summaries,
    ))
}

/// Lower empirical α-quantile: sort ascending, take index ⌈α·n⌉-1.
pub fn pmc_quantile_bandwidth(scores_pool: &[f64], alpha: f64) -> f64 {
    debug_assert!(!scores_pool.is_empty());
    let mut sorted = scores_pool.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = (alpha * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize - 1;
    sorted[idx.min(sorted.len() - 1)]
}

/// Perturbation kernel fitted to the kept particles: a weighted
/// `k`-component mixture by default, or a single Gaussian with twice the
/// weighted covariance when the kept set is too small to support one
/// component per five dimensions.
pub fn fit_perturbation_kernel(
    kept: &Matrix,
    kept_weights: &[f64],
    components: usize,
    rng: &mut RngStream,
) -> Result<Box<dyn DensityModel>> {
    let d = kept.cols();
    let n = kept.rows();
    if n < 2 {
        return Err(CoreError::Config("need at least 2 kept particles".into()));
    }
    let use_mixture = n >= components * d && distinct_rows(kept) >= components && components > 1;
    if use_mixture {
        let mix = fit_gmm_weighted_em(kept, kept_weights, components, rng, 100, 1e-6)?;
        return Ok(Box::new(mix));
    }
    let gauss = inflated_gaussian(kept, kept_weights)?;
    Ok(Box::new(gauss))
}

fn inflated_gaussian(points: &Matrix, weights: &[f64]) -> Result<GaussianFull> {
    let base = fit_gaussian_weighted(points, weights)?;
    // Twice the empirical covariance (the jitter floor rides along).
    GaussianFull::new(base.mean().to_vec(), base.cov().scale(2.0))
}

fn distinct_rows(points: &Matrix) -> usize {
    let mut distinct: Vec<&[f64]> = Vec::new();
    for row in points.iter_rows() {
        if !distinct.contains(&row) {
            distinct.push(row);
        }
    }
    distinct.len()
}

/// Importance weights of PMC proposals: prior density over the fitted
/// kernel-mixture density.
pub fn pmc_importance_weights(
    proposals: &Matrix,
    prior: &dyn DensityModel,
    kernel: &dyn DensityModel,
) -> Vec<f64> {
    proposals
        .iter_rows()
        .map(|p| {
            let num = prior.log_prob(p);
            if num == f64::NEG_INFINITY {
                0.0
            } else {
                (num - kernel.log_prob(p)).exp()
            }
        })
        .collect()
}

/// PMC-ABC: keep the α-quantile best particles, refresh the rest from the
/// perturbation kernel, reweight proposals by prior over kernel density.
pub fn pmc_abc_run(
    task: &dyn Simulator,
    reference: &Matrix,
    metric: &Metric,
    cfg: &AbcConfig,
    rng: &RngStream,
) -> Result<(ParticlePopulation, Vec<AbcIterationSummary>)> {
    cfg.validate()?;
    let k = cfg.particles;
    // Ceil keeps the α-quantile of the pooled scores within the kept set, so
    // the bandwidth sequence cannot increase.
    let k_alpha = ((cfg.alpha * k as f64) - 1e-9).ceil() as usize;
    if k_alpha < 2 {
        return Err(CoreError::Config("alpha·K must be at least 2".into()));
    }
    let prior = task.prior();

    let mut particles = prior.sample(k, &mut rng.split(0));
    let mut scores = score_rows(
        task,
        &particles,
        reference,
        metric,
        cfg.sims_per_param,
        &rng.split(1),
    )?;
    let mut weights = vec![1.0 / k as f64; k];
    let mut bandwidth = f64::INFINITY;
    let mut summaries = Vec::with_capacity(cfg.iterations);

    for t in 1..=cfg.iterations {
        let t_rng = rng.split(1000 + t as u64);

        // Elect the k_alpha lowest-score particles.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
        let kept_idx = &order[..k_alpha];
        let kept_rows: Vec<Vec<f64>> = kept_idx.iter().map(|&i| particles.row(i).to_vec()).collect();
        let kept = Matrix::from_rows(&kept_rows);
        let kept_scores: Vec<f64> = kept_idx.iter().map(|&i| scores[i]).collect();
        let kept_raw: Vec<f64> = kept_idx.iter().map(|&i| weights[i]).collect();
        let kept_total: f64 = kept_raw.iter().sum();
        if kept_total <= 0.0 {
            return Err(CoreError::PriorKernelMismatch.at_iteration(t));
        }
        let kept_weights: Vec<f64> = kept_raw.iter().map(|w| w / kept_total).collect();

        let kernel = fit_perturbation_kernel(
            &kept,
            &kept_weights,
            cfg.kernel_components,
            &mut t_rng.split(0),
        )
        .map_err(|e| e.at_iteration(t))?;

        let proposals = kernel.sample(k - k_alpha, &mut t_rng.split(1));
        let prop_scores = score_rows(
            task,
            &proposals,
            reference,
            metric,
            cfg.sims_per_param,
            &t_rng.split(2),
        )
        .map_err(|e| e.at_iteration(t))?;
        let prop_weights = pmc_importance_weights(&proposals, prior.as_ref(), kernel.as_ref());

        let pool_scores: Vec<f64> = kept_scores
            .iter()
            .chain(prop_scores.iter())
            .cloned()
            .collect();
        bandwidth = pmc_quantile_bandwidth(&pool_scores, cfg.alpha);

        particles = Matrix::vstack(&[&kept, &proposals]);
        scores = pool_scores;
        let mut new_weights: Vec<f64> = kept_weights
            .iter()
            .cloned()
            .chain(prop_weights.iter().cloned())
            .collect();
        let total: f64 = new_weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(CoreError::PriorKernelMismatch.at_iteration(t));
        }
        for w in &mut new_weights {
            *w /= total;
        }
        weights = new_weights;
        summaries.push(AbcIterationSummary {
            iteration: t,
            bandwidth,
            ess: ess(&weights),
            score_summary: five_point_summary(&scores)?,
        });
    }

    Ok((
        ParticlePopulation {
            particles,
            weights,
            scores,
            bandwidth,
        },
        summaries,
    ))
}

fn weighted_mean_of(points: &Matrix, weights: &[f64]) -> Vec<f64> {
    let d = points.cols();
    let mut mean = vec![0.0; d];
    for (row, &w) in points.iter_rows().zip(weights) {
        for j in 0..d {
            mean[j] += w * row[j];
        }
    }
    mean
}

fn weighted_cov_of(points: &Matrix, weights: &[f64], mean: &[f64]) -> Matrix {
    let d = points.cols();
    let mut cov = Matrix::zeros(d, d);
    for (row, &w) in points.iter_rows().zip(weights) {
        for a in 0..d {
            for b in 0..=a {
                let v = w * (row[a] - mean[a]) * (row[b] - mean[b]);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BoxUniform, GaussianMixture};
    use crate::ipm::MmdConfig;
    use crate::simulators::GaussianLocationTask;

    #[test]
    fn ess_fixture_values() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((ess(&[1.0, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.5, 0.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn smc_bandwidth_step_function_fixture() {
        let scores = [1.0, 2.0, 3.0, 4.0];
        let w = [0.25; 4];
        let (beta, new_w) = smc_bandwidth_update(&scores, &w, f64::INFINITY, 0.5).unwrap();
        assert_eq!(beta, 2.0);
        assert_eq!(new_w, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn smc_bandwidth_no_tightening_limit() {
        let scores = [1.0, 2.0, 3.0, 4.0];
        let w = [0.25; 4];
        let (beta, new_w) = smc_bandwidth_update(&scores, &w, f64::INFINITY, 0.9999999).unwrap();
        assert_eq!(beta, 4.0);
        assert_eq!(new_w, vec![0.25; 4]);
    }

    #[test]
    fn smc_bandwidth_maximal_tightening_limit() {
        let scores = [1.0, 2.0, 3.0, 4.0];
        let w = [0.25; 4];
        let (beta, _) = smc_bandwidth_update(&scores, &w, f64::INFINITY, 1e-9).unwrap();
        assert_eq!(beta, 1.0);
    }

    #[test]
    fn pmc_quantile_fixtures() {
        let pool: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(pmc_quantile_bandwidth(&pool, 0.1), 1.0);
        assert_eq!(pmc_quantile_bandwidth(&pool, 0.9999), 10.0);
        assert_eq!(pmc_quantile_bandwidth(&[3.0; 7], 0.25), 3.0);
    }

    #[test]
    fn systematic_resample_preserves_weighted_mean() {
        let mut rng = RngStream::new(30);
        let values: Vec<f64> = (0..20).map(|_| rng.uniform() * 10.0).collect();
        let raw: Vec<f64> = (0..20).map(|_| rng.uniform() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let target: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();

        let trials = 100;
        let means: Vec<f64> = (0..trials)
            .map(|t| {
                let idx = systematic_resample(&weights, 20, &mut rng.split(t));
                idx.iter().map(|&i| values[i]).sum::<f64>() / 20.0
            })
            .collect();
        let grand = means.iter().sum::<f64>() / trials as f64;
        let var = means
            .iter()
            .map(|m| (m - grand) * (m - grand))
            .sum::<f64>()
            / trials as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            (grand - target).abs() <= 4.0 * se.max(1e-9),
            "grand mean {grand} vs target {target} (se {se})"
        );
    }

    #[test]
    fn pmc_weights_match_backward_kernel_formula() {
        // Three kept particles with a shared Gaussian random-walk kernel:
        // the mixture density over the kept set is the denominator of the
        // backward-kernel weight formula.
        let kept = [vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 1.0]];
        let w_bar = [0.5, 0.3, 0.2];
        let sigma = Matrix::from_rows(&[vec![0.2, 0.05], vec![0.05, 0.1]]);
        let comps: Vec<GaussianFull> = kept
            .iter()
            .map(|m| GaussianFull::new(m.clone(), sigma.clone()).unwrap())
            .collect();
        let kernel = GaussianMixture::new(w_bar.to_vec(), comps.clone()).unwrap();
        let prior = BoxUniform::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();

        let proposals = Matrix::from_rows(&[vec![0.3, 0.2], vec![-1.0, 0.8], vec![2.0, -2.0]]);
        let got = pmc_importance_weights(&proposals, &prior, &kernel);
        for (i, p) in proposals.iter_rows().enumerate() {
            let denominator: f64 = w_bar
                .iter()
                .zip(&comps)
                .map(|(&w, c)| w * c.log_prob(p).exp())
                .sum();
            let expect = prior.log_prob(p).exp() / denominator;
            assert!(
                (got[i] - expect).abs() < 1e-12 * expect.max(1.0),
                "proposal {i}: {} vs {expect}",
                got[i]
            );
        }
    }

    #[test]
    fn perturbation_kernel_fallback_is_inflated_gaussian() {
        let kept = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]);
        let mut rng = RngStream::new(31);
        let kernel = fit_perturbation_kernel(&kept, &[0.5, 0.5], 5, &mut rng).unwrap();
        let kv = kernel.to_kv();
        assert_eq!(kv.get_str("kind").unwrap(), "gaussian");
        let cov = kv.get_f64_list("cov").unwrap();
        // 2 × (weighted cov + λ) on the first diagonal entry.
        assert!((cov[0] - 2.0 * (1.0 + JITTER_FLOOR)).abs() < 1e-9, "{cov:?}");
        // Kernel density is finite at every kept particle.
        for row in kept.iter_rows() {
            assert!(kernel.log_prob(row).is_finite());
        }
    }

    #[test]
    fn perturbation_kernel_refits_population() {
        use crate::ipm::mmd2_unbiased;
        let mut rng = RngStream::new(32);
        let source = GaussianFull::isotropic(vec![0.0, 0.0], 1.0).unwrap();
        let kept = source.sample(1000, &mut rng);
        let w = vec![1.0 / 1000.0; 1000];
        let kernel = fit_perturbation_kernel(&kept, &w, 5, &mut rng).unwrap();
        let fresh = kernel.sample(1000, &mut rng);
        let stat = mmd2_unbiased(&fresh, &kept, &MmdConfig::default()).unwrap();
        // Same-distribution MMD at n=1000 fluctuates at the 1e-3 scale.
        assert!(stat < 0.01, "kernel resample MMD {stat}");
    }

    fn analytic_posterior(reference: &Matrix) -> (Vec<f64>, f64) {
        let n = reference.rows() as f64;
        let d = reference.cols();
        let mut mean = vec![0.0; d];
        for row in reference.iter_rows() {
            for j in 0..d {
                mean[j] += row[j];
            }
        }
        for m in &mut mean {
            *m /= n + 1.0;
        }
        (mean, 0.1 / (n + 1.0))
    }

    #[test]
    fn smc_recovers_conjugate_posterior_mean() {
        let task = GaussianLocationTask::new(2);
        let mut rng = RngStream::new(33);
        let reference = task.simulate(&task.ground_truth(), 20, &mut rng).unwrap();
        let cfg = AbcConfig {
            particles: 300,
            iterations: 25,
            alpha: 0.3,
            sims_per_param: 20,
            resample_threshold: None,
            kernel_components: 5,
        };
        let (pop, summaries) = smc_abc_run(
            &task,
            &reference,
            &Metric::Mmd(MmdConfig::default()),
            &cfg,
            &RngStream::new(34),
        )
        .unwrap();
        assert_eq!(summaries.len(), cfg.iterations);
        let (post_mean, post_var) = analytic_posterior(&reference);
        let got = pop.weighted_mean();
        for j in 0..2 {
            assert!(
                (got[j] - post_mean[j]).abs() < 3.0 * post_var.sqrt(),
                "dim {j}: {} vs {} (std {})",
                got[j],
                post_mean[j],
                post_var.sqrt()
            );
        }
        let sum: f64 = pop.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pmc_recovers_conjugate_posterior_mean() {
        let task = GaussianLocationTask::new(2);
        let mut rng = RngStream::new(35);
        let reference = task.simulate(&task.ground_truth(), 20, &mut rng).unwrap();
        let cfg = AbcConfig {
            particles: 300,
            iterations: 25,
            alpha: 0.3,
            sims_per_param: 20,
            resample_threshold: None,
            kernel_components: 5,
        };
        let (pop, summaries) = pmc_abc_run(
            &task,
            &reference,
            &Metric::Mmd(MmdConfig::default()),
            &cfg,
            &RngStream::new(36),
        )
        .unwrap();
        assert_eq!(summaries.len(), cfg.iterations);
        let (post_mean, post_var) = analytic_posterior(&reference);
        let got = pop.weighted_mean();
        for j in 0..2 {
            assert!(
                (got[j] - post_mean[j]).abs() < 3.0 * post_var.sqrt(),
                "dim {j}: {} vs {}",
                got[j],
                post_mean[j]
            );
        }
    }

    /// Observations carry no information about the parameter; the SMC
    /// population must stay on the prior.
    struct UninformativeTask;

    impl Simulator for UninformativeTask {
        fn name(&self) -> &'static str {
            "uninformative"
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn prior(&self) -> Box<dyn DensityModel> {
            Box::new(BoxUniform::new(vec![-2.0], vec![2.0]).unwrap())
        }
        fn ground_truth(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn simulate(&self, _params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix> {
            let mut out = Matrix::zeros(count, 1);
            let mut batch = rng.fork();
            for i in 0..count {
                let z: f64 = batch.sample(StandardNormal);
                out.set(i, 0, z);
            }
            Ok(out)
        }
    }

    #[test]
    fn uninformative_likelihood_returns_prior() {
        use crate::ipm::mmd2_unbiased;
        let task = UninformativeTask;
        let mut rng = RngStream::new(37);
        let reference = task.simulate(&[0.0], 20, &mut rng).unwrap();
        let cfg = AbcConfig {
            particles: 400,
            iterations: 15,
            alpha: 0.5,
            sims_per_param: 20,
            resample_threshold: None,
            kernel_components: 5,
        };
        let (pop, _) = smc_abc_run(
            &task,
            &reference,
            &Metric::Mmd(MmdConfig::default()),
            &cfg,
            &RngStream::new(38),
        )
        .unwrap();
        let resampled = pop.sample_params(400, &mut RngStream::new(39));
        let prior_draws = task.prior().sample(400, &mut RngStream::new(40));
        let stat = mmd2_unbiased(&resampled, &prior_draws, &MmdConfig::default()).unwrap();
        // Permutation threshold at this sample size sits near 0.01; an
        // off-prior population lands an order of magnitude above.
        assert!(stat < 0.01, "population drifted off the prior: MMD {stat}");
    }

    #[test]
    fn pmc_bandwidth_and_kept_scores_never_increase() {
        let task = GaussianLocationTask::new(2);
        let mut rng = RngStream::new(41);
        let reference = task.simulate(&task.ground_truth(), 10, &mut rng).unwrap();
        let cfg = AbcConfig {
            particles: 100,
            iterations: 12,
            alpha: 0.2,
            sims_per_param: 10,
            resample_threshold: None,
            kernel_components: 5,
        };
        let (_, summaries) = pmc_abc_run(
            &task,
            &reference,
            &Metric::Mmd(MmdConfig::default()),
            &cfg,
            &RngStream::new(42),
        )
        .unwrap();
        let bandwidths: Vec<f64> = summaries.iter().map(|s| s.bandwidth).collect();
        for pair in bandwidths.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "bandwidth increased: {pair:?}"
            );
        }
    }
}
