use super::gaussian::{weighted_cov, weighted_mean};
use super::{check_weights, DensityModel, GaussianFull, JITTER_FLOOR};
use crate::error::{CoreError, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::math::log_sum_exp;
use crate::rng::RngStream;
use crate::textio::KvBlock;

/// Mixture of full-covariance Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianFull>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianFull>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(CoreError::InvalidWeights);
        }
        check_weights(&weights)?;
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(CoreError::DimensionMismatch { expected: d, got: 0 });
        }
        Ok(GaussianMixture {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianFull] {
        &self.components
    }

    pub(crate) fn from_kv(kv: &KvBlock) -> Result<Self> {
        let k = kv.get_usize("components")?;
        let weights = kv.get_f64_list("weights")?;
        let mut comps = Vec::with_capacity(k);
        for i in 0..k {
            let mean = kv.get_f64_list(&format!("comp{i}.mean"))?;
            let d = mean.len();
            let cov_data = kv.get_f64_list(&format!("comp{i}.cov"))?;
            if cov_data.len() != d * d {
                return Err(CoreError::parse("gaussian_mixture", "cov length != dim^2"));
            }
            comps.push(GaussianFull::new(mean, Matrix::from_vec(d, d, cov_data))?);
        }
        GaussianMixture::new(weights, comps)
    }
}

impl DensityModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let mut out = Matrix::zeros(count, self.dim());
        for i in 0..count {
            let pick = weighted_index(&self.weights, rng.uniform());
            self.components[pick].sample_into(out.row_mut(i), rng);
        }
        out
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| {
                if w > 0.0 {
                    w.ln() + c.log_prob(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        log_sum_exp(&terms).expect("non-empty mixture")
    }

    fn clone_box(&self) -> Box<dyn DensityModel> {
        Box::new(self.clone())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_str("kind", "gaussian_mixture");
        kv.set_usize("components", self.components.len());
        kv.set_f64_list("weights", &self.weights);
        for (i, c) in self.components.iter().enumerate() {
            kv.set_f64_list(&format!("comp{i}.mean"), c.mean());
            kv.set_f64_list(&format!("comp{i}.cov"), c.cov().as_slice());
        }
        kv
    }
}

/// Index drawn from unnormalized non-negative weights by CDF inversion.
pub(crate) fn weighted_index(weights: &[f64], u: f64) -> usize {
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

/// Weighted-EM fit of a `k`-component Gaussian mixture.
///
/// Responsibilities are computed in log domain; pseudo-likelihood weights
/// span many orders of magnitude. Initialization is k-means++-style seeding
/// on weight-resampled points with 3 restarts, keeping the best weighted
/// likelihood, so the fit is deterministic given `rng`.
pub fn fit_gmm_weighted_em(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    rng: &mut RngStream,
    max_iters: usize,
    tol: f64,
) -> Result<GaussianMixture> {
    fit_gmm_weighted_em_with_trace(points, weights, k, rng, max_iters, tol).map(|(m, _)| m)
}

/// As [`fit_gmm_weighted_em`], also returning the weighted log-likelihood
/// trace of the winning restart (one entry per EM iteration).
pub fn fit_gmm_weighted_em_with_trace(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    rng: &mut RngStream,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianMixture, Vec<f64>)> {
    if k == 0 {
        return Err(CoreError::Config("k must be at least 1".into()));
    }
    if points.rows() != weights.len() {
        return Err(CoreError::InvalidWeights);
    }
    check_weights(weights)?;
    if count_distinct_rows(points) < k {
        return Err(CoreError::Config(format!(
            "need at least {k} distinct points for a {k}-component fit"
        )));
    }

    let mut best: Option<(f64, GaussianMixture, Vec<f64>)> = None;
    for restart in 0..3u64 {
        let mut restart_rng = rng.split(restart);
        let (mix, trace) = em_single_run(points, weights, k, &mut restart_rng, max_iters, tol)?;
        let ll = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| ll > *b) {
            best = Some((ll, mix, trace));
        }
    }
    let (_, mix, trace) = best.expect("at least one restart");
    Ok((mix, trace))
}

fn count_distinct_rows(points: &Matrix) -> usize {
    let mut distinct: Vec<&[f64]> = Vec::new();
    for row in points.iter_rows() {
        if !distinct.contains(&row) {
            distinct.push(row);
        }
    }
    distinct.len()
}

fn em_single_run(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    rng: &mut RngStream,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianMixture, Vec<f64>)> {
    let n = points.rows();
    let d = points.cols();

    let global_mean = weighted_mean(points, weights);
    let mut global_cov = weighted_cov(points, weights, &global_mean);
    for i in 0..d {
        global_cov.set(i, i, global_cov.get(i, i) + JITTER_FLOOR);
    }

    let seeds = kmeanspp_seed(points, weights, k, rng);
    let mut comps: Vec<GaussianFull> = seeds
        .iter()
        .map(|&i| GaussianFull::new(points.row(i).to_vec(), global_cov.clone()))
        .collect::<Result<_>>()?;
    let mut mix_w = vec![1.0 / k as f64; k];
    let mut retries = vec![0usize; k];

    let mut trace: Vec<f64> = Vec::new();
    let mut iter = 0;
    while iter < max_iters {
        iter += 1;
        // E step in log domain.
        let mut resp = Matrix::zeros(n, comps.len());
        let mut ll = 0.0;
        for i in 0..n {
            let row = points.row(i);
            let terms: Vec<f64> = mix_w
                .iter()
                .zip(&comps)
                .map(|(&w, c)| {
                    if w > 0.0 {
                        w.ln() + c.log_prob(row)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let li = log_sum_exp(&terms)?;
            ll += weights[i] * li;
            for (c, &t) in terms.iter().enumerate() {
                resp.set(i, c, (t - li).exp());
            }
        }
        if let Some(&prev) = trace.last() {
            if ll < prev - 1e-12 {
                // Numerical stall; keep the previous (monotone) state.
                break;
            }
            trace.push(ll);
            if (ll - prev).abs() <= tol * prev.abs().max(1.0) {
                break;
            }
        } else {
            trace.push(ll);
        }

        // M step with particle weights.
        let mut mass = vec![0.0; comps.len()];
        for i in 0..n {
            for c in 0..comps.len() {
                mass[c] += weights[i] * resp.get(i, c);
            }
        }
        let collapsed: Vec<usize> = (0..comps.len()).filter(|&c| mass[c] < 1e-8).collect();
        if !collapsed.is_empty() {
            let mut dropped = Vec::new();
            for &c in &collapsed {
                if retries[c] < 3 {
                    retries[c] += 1;
                    let pick = weighted_index(weights, rng.uniform());
                    comps[c] = GaussianFull::new(points.row(pick).to_vec(), global_cov.clone())?;
                } else {
                    dropped.push(c);
                }
            }
            for &c in dropped.iter().rev() {
                comps.remove(c);
                mix_w.remove(c);
                retries.remove(c);
            }
            if comps.is_empty() {
                return Err(CoreError::InvalidWeights);
            }
            let total: f64 = mix_w.iter().sum();
            for w in &mut mix_w {
                *w /= total;
            }
            // Restart the likelihood tracker after surgery.
            trace.clear();
            continue;
        }

        for c in 0..comps.len() {
            let mut rw: Vec<f64> = (0..n).map(|i| weights[i] * resp.get(i, c) / mass[c]).collect();
            // Guard tiny negative round-off.
            for w in &mut rw {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
            let mean = weighted_mean(points, &rw);
            let mut cov = weighted_cov(points, &rw, &mean);
            for i in 0..d {
                cov.set(i, i, cov.get(i, i) + JITTER_FLOOR);
            }
            comps[c] = GaussianFull::new(mean, cov)?;
        }
        mix_w = mass;
        let total: f64 = mix_w.iter().sum();
        for w in &mut mix_w {
            *w /= total;
        }
    }

    let total: f64 = mix_w.iter().sum();
    for w in &mut mix_w {
        *w /= total;
    }
    Ok((GaussianMixture::new(mix_w, comps)?, trace))
}

/// k-means++-style seeding: the first center is a weighted draw, each next
/// center is drawn with probability proportional to weight times squared
/// distance to the closest chosen center.
fn kmeanspp_seed(points: &Matrix, weights: &[f64], k: usize, rng: &mut RngStream) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(weighted_index(weights, rng.uniform()));
    while chosen.len() < k {
        let scores: Vec<f64> = (0..n)
            .map(|i| {
                let d2 = chosen
                    .iter()
                    .map(|&c| sq_dist(points.row(i), points.row(c)))
                    .fold(f64::INFINITY, f64::min);
                weights[i] * d2
            })
            .collect();
        let total: f64 = scores.iter().sum();
        let pick = if total > 0.0 {
            weighted_index(&scores, rng.uniform())
        } else {
            weighted_index(weights, rng.uniform())
        };
        chosen.push(pick);
    }
    chosen
}
