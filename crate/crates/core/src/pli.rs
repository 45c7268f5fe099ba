//! Pseudo-likelihood inference with trust-region bandwidth adaptation.
//!
//! Each iteration draws particles from the current proposal, scores their
//! simulations against the reference data with an IPM, and reweights them by
//! the tempered pseudo-likelihood `exp(-s/(2β_t))` times the prior/proposal
//! correction. The temperature `η_t` (and with it the bandwidth
//! `β_t = (1+η_t)·β`) is chosen by maximizing the dual of a KL trust-region
//! problem, so the reweighted particles never move more than `ε` nats from
//! the proposal. A density model fitted to the weighted particles becomes the
//! next proposal.

use crate::distributions::{
    fit_gaussian_weighted, fit_gmm_weighted_em, DensityModel,
};
use crate::error::{CoreError, Result};
use crate::ipm::Metric;
use crate::linalg::Matrix;
use crate::math::{five_point_summary, log_sum_exp};
use crate::rng::RngStream;
use crate::simulators::Simulator;
use crate::textio::KvBlock;
use rayon::prelude::*;

/// Posterior family fitted by weighted maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSpec {
    Gaussian,
    Gmm { components: usize },
}

#[derive(Debug, Clone)]
pub struct PliConfig {
    /// Trust-region bound ε (nats per iteration).
    pub epsilon: f64,
    /// Base bandwidth β of the pseudo-likelihood kernel.
    pub base_bandwidth: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Iterations T.
    pub iterations: usize,
    /// Particles per iteration K.
    pub samples_per_iter: usize,
    /// Simulations per particle M.
    pub sims_per_param: usize,
    pub estimator: EstimatorSpec,
}

impl PliConfig {
    /// Defaults for a reference set of `n_obs` observations: ε = 0.5,
    /// T = 20, K = 5000, M = n_obs, β = 1/(2·n_obs).
    pub fn for_reference_size(n_obs: usize) -> Self {
        PliConfig {
            epsilon: 0.5,
            base_bandwidth: default_bandwidth(n_obs),
            eta_min: 1e-6,
            eta_max: 1e6,
            iterations: 20,
            samples_per_iter: 5000,
            sims_per_param: n_obs,
            estimator: EstimatorSpec::Gaussian,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(CoreError::Config("epsilon must be positive".into()));
        }
        if !(self.base_bandwidth > 0.0) {
            return Err(CoreError::Config("base_bandwidth must be positive".into()));
        }
        if !(self.eta_min > 0.0 && self.eta_min < self.eta_max) {
            return Err(CoreError::Config("need 0 < eta_min < eta_max".into()));
        }
        if self.samples_per_iter < 2 {
            return Err(CoreError::Config("need at least 2 particles".into()));
        }
        if self.sims_per_param < 1 {
            return Err(CoreError::Config("need at least 1 simulation per particle".into()));
        }
        Ok(())
    }
}

/// β = 1/(2N), the bandwidth at which a KL-kernel pseudo-likelihood matches
/// the true likelihood of N observations.
pub fn default_bandwidth(n_obs: usize) -> f64 {
    1.0 / (2.0 * n_obs.max(1) as f64)
}

/// Snapshot of one inference iteration.
pub struct InferenceState {
    pub iteration: usize,
    pub particles: Matrix,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub eta: f64,
    pub beta_t: f64,
    pub dual_value: f64,
    pub weight_ess: f64,
    pub empirical_kl: f64,
    pub score_summary: [f64; 5],
    /// The fitted proposal π_t.
    pub model: Box<dyn DensityModel>,
    /// Times the base bandwidth was doubled to escape degenerate weights.
    pub bandwidth_retries: u32,
    /// False when the dual was flat and η was pinned at its upper bound.
    pub constraint_active: bool,
}

impl InferenceState {
    /// Summary persisted per iteration (particle arrays stay in memory only).
    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set_usize("iteration", self.iteration);
        kv.set_f64("eta", self.eta);
        kv.set_f64("beta_t", self.beta_t);
        kv.set_f64("dual_value", self.dual_value);
        kv.set_f64("weight_ess", self.weight_ess);
        kv.set_f64("empirical_kl", self.empirical_kl);
        kv.set_f64_list("score_quantiles", &self.score_summary);
        kv.set_u64("bandwidth_retries", self.bandwidth_retries as u64);
        kv.set_str(
            "constraint_active",
            if self.constraint_active { "true" } else { "false" },
        );
        let model_kv = self.model.to_kv();
        for key in model_kv.keys().map(str::to_string).collect::<Vec<_>>() {
            kv.set_str(&format!("model.{key}"), model_kv.get_str(&key).unwrap());
        }
        kv
    }
}

/// Unnormalized log of the tempered pseudo-likelihood: `-score/(2·β_t)`.
///
/// The partition constant is dropped; only ratios across particles matter.
pub fn pseudo_log_likelihood(score: f64, beta_t: f64) -> f64 {
    debug_assert!(beta_t > 0.0);
    -score / (2.0 * beta_t)
}

/// Empirical dual of the trust-region problem at temperature `eta`.
///
/// `g(η) = -ηε - (1+η)·(lse_k[(r_k - s_k/(2β)) / (1+η)] - log K)` where
/// `r_k` is the log prior/proposal ratio of particle k and the expectation
/// over the proposal is replaced by the mean over its K draws.
pub fn dual_value(
    eta: f64,
    scores: &[f64],
    log_prior_ratio: &[f64],
    epsilon: f64,
    base_bandwidth: f64,
) -> f64 {
    debug_assert!(eta > 0.0);
    debug_assert_eq!(scores.len(), log_prior_ratio.len());
    let k = scores.len() as f64;
    let u = 1.0 / (1.0 + eta);
    let terms: Vec<f64> = scores
        .iter()
        .zip(log_prior_ratio)
        .map(|(&s, &r)| u * (r - s / (2.0 * base_bandwidth)))
        .collect();
    let lse = log_sum_exp(&terms).expect("non-empty scores");
    -eta * epsilon - (1.0 + eta) * (lse - k.ln())
}

/// Solution of the dual maximization.
#[derive(Debug, Clone, Copy)]
pub struct EtaSolution {
    pub eta: f64,
    pub beta_t: f64,
    pub dual_value: f64,
    pub constraint_active: bool,
}

/// Maximize the dual over `η ∈ [η_min, η_max]` by golden-section search on
/// log η (the dual is unimodal in η). A flat dual — every particle weighted
/// identically no matter the temperature — pins η at the upper bound and is
/// flagged as constraint-inactive.
pub fn optimize_eta(
    scores: &[f64],
    log_prior_ratio: &[f64],
    cfg: &PliConfig,
) -> Result<EtaSolution> {
    optimize_eta_with_bandwidth(scores, log_prior_ratio, cfg, cfg.base_bandwidth)
}

fn optimize_eta_with_bandwidth(
    scores: &[f64],
    log_prior_ratio: &[f64],
    cfg: &PliConfig,
    bandwidth: f64,
) -> Result<EtaSolution> {
    if scores.len() < 2 {
        return Err(CoreError::Config("dual needs at least 2 particles".into()));
    }
    if log_prior_ratio.iter().all(|r| *r == f64::NEG_INFINITY) {
        return Err(CoreError::DegenerateWeights);
    }
    let g = |ln_eta: f64| dual_value(ln_eta.exp(), scores, log_prior_ratio, cfg.epsilon, bandwidth);

    let lo = cfg.eta_min.ln();
    let hi = cfg.eta_max.ln();
    let g_lo = g(lo);
    let g_hi = g(hi);
    let g_mid = g(0.5 * (lo + hi));
    let spread = (g_lo.max(g_hi).max(g_mid)) - (g_lo.min(g_hi).min(g_mid));
    if spread < 1e-12 * (1.0 + g_mid.abs()) {
        let eta = cfg.eta_max;
        return Ok(EtaSolution {
            eta,
            beta_t: (1.0 + eta) * bandwidth,
            dual_value: g_hi,
            constraint_active: false,
        });
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    let mut evals = 5usize;
    while (b - a) > 1e-6 && evals < 200 {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
        evals += 1;
    }
    let mut ln_eta = 0.5 * (a + b);
    let mut best = g(ln_eta);
    // The maximum may sit exactly on a bound.
    if g_lo > best {
        ln_eta = lo;
        best = g_lo;
    }
    if g_hi > best {
        ln_eta = hi;
        best = g_hi;
    }
    let eta = ln_eta.exp();
    Ok(EtaSolution {
        eta,
        beta_t: (1.0 + eta) * bandwidth,
        dual_value: best,
        constraint_active: true,
    })
}

/// Self-normalized weighted-maximum-likelihood weights
/// `w̃_k ∝ exp((log p_k - log π_k)/(1+η) - s_k/(2β_t))`, plus their
/// effective sample size.
pub fn wml_weights(
    scores: &[f64],
    log_prior: &[f64],
    log_proposal: &[f64],
    eta: f64,
    beta_t: f64,
) -> Result<(Vec<f64>, f64)> {
    let u = 1.0 / (1.0 + eta);
    let log_w: Vec<f64> = scores
        .iter()
        .zip(log_prior.iter().zip(log_proposal))
        .map(|(&s, (&lp, &lq))| u * (lp - lq) + pseudo_log_likelihood(s, beta_t))
        .collect();
    if log_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(CoreError::DegenerateWeights);
    }
    let norm = log_sum_exp(&log_w)?;
    let weights: Vec<f64> = log_w.iter().map(|w| (w - norm).exp()).collect();
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    Ok((weights, ess))
}

/// `Σ w̃ log(K·w̃)`, the plug-in KL divergence of the reweighted particles
/// from the (uniform) proposal draws.
pub fn empirical_weight_kl(weights: &[f64]) -> f64 {
    let k = weights.len() as f64;
    weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|&w| w * (k * w).ln())
        .sum()
}

/// One inference iteration. `proposal` is π_{t-1} (the prior at t = 1).
pub fn pli_step(
    proposal: &dyn DensityModel,
    iteration: usize,
    task: &dyn Simulator,
    reference: &Matrix,
    metric: &Metric,
    cfg: &PliConfig,
    rng: &RngStream,
) -> Result<InferenceState> {
    cfg.validate()?;
    let k = cfg.samples_per_iter;
    let prior = task.prior();

    let mut sample_rng = rng.split(0);
    let particles = proposal.sample(k, &mut sample_rng);

    let sim_base = rng.split(1);
    let scores: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut sim_rng = sim_base.split(i as u64);
            let obs = task.simulate(particles.row(i), cfg.sims_per_param, &mut sim_rng)?;
            metric.score(&obs, reference)
        })
        .collect::<Result<_>>()?;

    let log_prior: Vec<f64> = particles.iter_rows().map(|p| prior.log_prob(p)).collect();
    let log_proposal: Vec<f64> = particles.iter_rows().map(|p| proposal.log_prob(p)).collect();
    let log_ratio: Vec<f64> = log_prior
        .iter()
        .zip(&log_proposal)
        .map(|(&lp, &lq)| lp - lq)
        .collect();

    // One automatic retry with a doubled base bandwidth before giving up on
    // degenerate weights.
    let mut outcome: Option<(EtaSolution, Vec<f64>, f64, u32)> = None;
    let mut last_err = None;
    for attempt in 0..2u32 {
        let bandwidth = cfg.base_bandwidth * f64::powi(2.0, attempt as i32);
        let solved = match optimize_eta_with_bandwidth(&scores, &log_ratio, cfg, bandwidth) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        match wml_weights(&scores, &log_prior, &log_proposal, solved.eta, solved.beta_t) {
            Ok((weights, ess)) => {
                outcome = Some((solved, weights, ess, attempt));
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (solution, weights, ess, retries) =
        outcome.ok_or_else(|| last_err.unwrap_or(CoreError::DegenerateWeights))?;

    let mut fit_rng = rng.split(2);
    let model: Box<dyn DensityModel> = match cfg.estimator {
        EstimatorSpec::Gaussian => Box::new(fit_gaussian_weighted(&particles, &weights)?),
        EstimatorSpec::Gmm { components } => Box::new(fit_gmm_weighted_em(
            &particles,
            &weights,
            components,
            &mut fit_rng,
            200,
            1e-8,
        )?),
    };

    let empirical_kl = empirical_weight_kl(&weights);
    let score_summary = five_point_summary(&scores)?;
    Ok(InferenceState {
        iteration,
        particles,
        scores,
        weights,
        eta: solution.eta,
        beta_t: solution.beta_t,
        dual_value: solution.dual_value,
        weight_ess: ess,
        empirical_kl,
        score_summary,
        model,
        bandwidth_retries: retries,
        constraint_active: solution.constraint_active,
    })
}

/// Full inference loop: T sequential steps starting from the prior.
/// Returns the final proposal and every per-iteration snapshot.
pub fn pli_run(
    task: &dyn Simulator,
    reference: &Matrix,
    metric: &Metric,
    cfg: &PliConfig,
    rng: &RngStream,
) -> Result<(Box<dyn DensityModel>, Vec<InferenceState>)> {
    cfg.validate()?;
    let mut proposal: Box<dyn DensityModel> = task.prior();
    let mut states = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let step_rng = rng.split(t as u64);
        let state = pli_step(
            proposal.as_ref(),
            t,
            task,
            reference,
            metric,
            cfg,
            &step_rng,
        )
        .map_err(|e| e.at_iteration(t))?;
        proposal = state.model.clone();
        states.push(state);
    }
    Ok((proposal, states))
}
