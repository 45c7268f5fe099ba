//! Integral probability metrics between empirical observation sets.
//!
//! Two estimators score the discrepancy between a simulated batch and the
//! reference data: the unbiased multi-bandwidth MMD U-statistic and the
//! entropic-regularized squared 2-Wasserstein cost solved by log-domain
//! Sinkhorn iterations. Both parallelize over rows with per-row sequential
//! reductions, so results are independent of thread scheduling.

use crate::error::{CoreError, Result};
use crate::linalg::{sq_dist, Matrix};
use rayon::prelude::*;

/// Gaussian-kernel bandwidths for the MMD; the kernel is the sum over all
/// bandwidths `k(x,y) = Σ_ℓ exp(-‖x-y‖²/(2ℓ))`.
#[derive(Debug, Clone)]
pub struct MmdConfig {
    pub bandwidths: Vec<f64>,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            bandwidths: vec![
                1.0, 10.0, 20.0, 40.0, 80.0, 100.0, 130.0, 200.0, 400.0, 800.0, 1000.0,
            ],
        }
    }
}

impl MmdConfig {
    pub fn single(bandwidth: f64) -> Self {
        MmdConfig {
            bandwidths: vec![bandwidth],
        }
    }
}

/// Entropic OT solver settings. The regularization is `epsilon_scale` times
/// the mean of the cost matrix; absolute values would not transfer across
/// tasks whose observation scales differ by orders of magnitude.
#[derive(Debug, Clone)]
pub struct SinkhornConfig {
    pub epsilon_scale: f64,
    pub max_iters: usize,
    pub marginal_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon_scale: 0.01,
            max_iters: 1000,
            marginal_tol: 1e-6,
        }
    }
}

/// Result of a Sinkhorn solve: the transport cost `⟨P, C⟩` (no entropy term)
/// plus convergence diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SinkhornOutcome {
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_violation: f64,
}

/// Matrix of squared Euclidean distances `C[i][j] = ‖xᵢ - yⱼ‖²`.
pub fn pairwise_sq_dist(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(CoreError::DimensionMismatch {
            expected: x.cols(),
            got: y.cols(),
        });
    }
    let m = y.rows();
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..m).map(|j| sq_dist(xi, y.row(j))).collect()
        })
        .collect();
    Ok(Matrix::from_rows(&rows))
}

#[inline]
fn kernel_sum(c: f64, neg_inv_2l: &[f64]) -> f64 {
    neg_inv_2l.iter().map(|&a| (c * a).exp()).sum()
}

/// Unbiased MMD² estimate between two sample sets.
///
/// Three-term U-statistic; the diagonal is excluded from the within-set
/// sums, so the estimate can be slightly negative.
pub fn mmd2_unbiased(x: &Matrix, y: &Matrix, cfg: &MmdConfig) -> Result<f64> {
    let n = x.rows();
    let m = y.rows();
    if n < 2 || m < 2 {
        return Err(CoreError::NeedTwoSamples);
    }
    if x.cols() != y.cols() {
        return Err(CoreError::DimensionMismatch {
            expected: x.cols(),
            got: y.cols(),
        });
    }
    let neg_inv_2l: Vec<f64> = cfg.bandwidths.iter().map(|&l| -1.0 / (2.0 * l)).collect();

    // Per-row partial sums collected in order keep the reduction
    // deterministic under any thread schedule.
    let xx: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (i + 1..n)
                .map(|j| kernel_sum(sq_dist(xi, x.row(j)), &neg_inv_2l))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let yy: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            (i + 1..m)
                .map(|j| kernel_sum(sq_dist(yi, y.row(j)), &neg_inv_2l))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let xy: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..m)
                .map(|j| kernel_sum(sq_dist(xi, y.row(j)), &neg_inv_2l))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    let n_f = n as f64;
    let m_f = m as f64;
    Ok(2.0 * xx / (n_f * (n_f - 1.0)) - 2.0 * xy / (n_f * m_f) + 2.0 * yy / (m_f * (m_f - 1.0)))
}

/// Entropic-regularized squared 2-Wasserstein between uniform empirical
/// measures, solved by Sinkhorn iterations in log domain.
///
/// The regularization is annealed from the cost scale down to the target;
/// convergence is declared when both marginal L1 violations drop below
/// `marginal_tol`. On hitting `max_iters` the best iterate is returned with
/// `converged = false`.
pub fn sinkhorn_w2(x: &Matrix, y: &Matrix, cfg: &SinkhornConfig) -> Result<SinkhornOutcome> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(CoreError::NeedTwoSamples);
    }
    if x.cols() != y.cols() {
        return Err(CoreError::DimensionMismatch {
            expected: x.cols(),
            got: y.cols(),
        });
    }
    let n = x.rows();
    let m = y.rows();

    // Materialize the cost matrix when it fits comfortably; otherwise
    // recompute rows on the fly (only large low-dimensional sample sets land
    // there, where recomputation is cheap).
    let materialize = n * m <= 4_000_000;
    let cost = if materialize {
        Some(pairwise_sq_dist(x, y)?)
    } else {
        None
    };
    let cost_row = |i: usize, buf: &mut Vec<f64>| {
        if let Some(c) = &cost {
            buf.clear();
            buf.extend_from_slice(c.row(i));
        } else {
            let xi = x.row(i);
            buf.clear();
            buf.extend((0..m).map(|j| sq_dist(xi, y.row(j))));
        }
    };

    let total_cost: f64 = if let Some(c) = &cost {
        c.as_slice().iter().sum()
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.row(i);
                (0..m).map(|j| sq_dist(xi, y.row(j))).sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    };
    let mean_cost = total_cost / (n * m) as f64;
    if mean_cost == 0.0 {
        // All points identical; the only coupling has zero cost.
        return Ok(SinkhornOutcome {
            cost: 0.0,
            converged: true,
            iterations: 0,
            marginal_violation: 0.0,
        });
    }

    let eps_target = cfg.epsilon_scale * mean_cost;
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];

    // f update: rows become exact w.r.t. the current g.
    let update_f = |f: &mut Vec<f64>, g: &[f64], eps: f64| {
        let new: Vec<f64> = (0..n)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(m),
                |buf, i| {
                    cost_row(i, buf);
                    let max = buf
                        .iter()
                        .zip(g)
                        .map(|(&c, &gj)| (gj - c) / eps)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = buf
                        .iter()
                        .zip(g)
                        .map(|(&c, &gj)| ((gj - c) / eps - max).exp())
                        .sum();
                    eps * (log_a - (max + sum.ln()))
                },
            )
            .collect();
        *f = new;
    };
    // g update via column logic; a transposed pass over rows.
    let update_g = |g: &mut Vec<f64>, f: &[f64], eps: f64| {
        // Accumulate per column deterministically: iterate rows in order.
        let mut max_per_col = vec![f64::NEG_INFINITY; m];
        let mut buf = Vec::with_capacity(m);
        if let Some(c) = &cost {
            for i in 0..n {
                let row = c.row(i);
                for j in 0..m {
                    let v = (f[i] - row[j]) / eps;
                    if v > max_per_col[j] {
                        max_per_col[j] = v;
                    }
                }
            }
            let mut sums = vec![0.0; m];
            for i in 0..n {
                let row = c.row(i);
                for j in 0..m {
                    sums[j] += ((f[i] - row[j]) / eps - max_per_col[j]).exp();
                }
            }
            for j in 0..m {
                g[j] = eps * (log_b - (max_per_col[j] + sums[j].ln()));
            }
        } else {
            for i in 0..n {
                cost_row(i, &mut buf);
                for j in 0..m {
                    let v = (f[i] - buf[j]) / eps;
                    if v > max_per_col[j] {
                        max_per_col[j] = v;
                    }
                }
            }
            let mut sums = vec![0.0; m];
            for i in 0..n {
                cost_row(i, &mut buf);
                for j in 0..m {
                    sums[j] += ((f[i] - buf[j]) / eps - max_per_col[j]).exp();
                }
            }
            for j in 0..m {
                g[j] = eps * (log_b - (max_per_col[j] + sums[j].ln()));
            }
        }
    };

    // Annealing phases warm-start the potentials at the target epsilon.
    let mut eps = mean_cost;
    while eps > eps_target * 1.0000001 {
        for _ in 0..10 {
            update_f(&mut f, &g, eps);
            update_g(&mut g, &f, eps);
        }
        eps = (eps * 0.5).max(eps_target);
    }

    let eps = eps_target;
    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    while iterations < cfg.max_iters {
        iterations += 1;
        // Row violation of the previous iterate is free given the new f.
        let mut f_new = f.clone();
        update_f(&mut f_new, &g, eps);
        let row_violation: f64 = if iterations == 1 {
            f64::INFINITY
        } else {
            f.iter()
                .zip(&f_new)
                .map(|(&old, &new)| (((old - new) / eps).exp() - 1.0).abs() * log_a.exp())
                .sum()
        };
        f = f_new;
        let mut g_new = g.clone();
        update_g(&mut g_new, &f, eps);
        let col_violation: f64 = g
            .iter()
            .zip(&g_new)
            .map(|(&old, &new)| (((old - new) / eps).exp() - 1.0).abs() * log_b.exp())
            .sum();
        g = g_new;
        violation = row_violation.max(col_violation);
        if violation < cfg.marginal_tol {
            converged = true;
            break;
        }
    }

    // Transport cost ⟨P, C⟩ with the final potentials.
    let cost_value: f64 = (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(m),
            |buf, i| {
                cost_row(i, buf);
                buf.iter()
                    .zip(&g)
                    .map(|(&c, &gj)| ((f[i] + gj - c) / eps).exp() * c)
                    .sum::<f64>()
            },
        )
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    Ok(SinkhornOutcome {
        cost: cost_value,
        converged,
        iterations,
        marginal_violation: violation,
    })
}

/// Which discrepancy scores simulations against the reference data.
#[derive(Debug, Clone)]
pub enum Metric {
    Mmd(MmdConfig),
    Wasserstein(SinkhornConfig),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mmd(_) => "mmd",
            Metric::Wasserstein(_) => "w2",
        }
    }

    /// Discrepancy used as the pseudo-likelihood / ABC score. Negative MMD
    /// U-statistic noise is clamped at zero so scores stay non-negative.
    pub fn score(&self, simulated: &Matrix, reference: &Matrix) -> Result<f64> {
        match self {
            Metric::Mmd(cfg) => Ok(mmd2_unbiased(simulated, reference, cfg)?.max(0.0)),
            Metric::Wasserstein(cfg) => Ok(sinkhorn_w2(simulated, reference, cfg)?.cost.max(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| (rng.uniform() - 0.5) * 2.0 * scale)
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn pairwise_hand_values() {
        let x = Matrix::from_rows(&[vec![0.0]]);
        assert_eq!(pairwise_sq_dist(&x, &x).unwrap().get(0, 0), 0.0);

        let x = Matrix::from_rows(&[vec![0.0, 0.0]]);
        let y = Matrix::from_rows(&[vec![3.0, 4.0]]);
        assert_eq!(pairwise_sq_dist(&x, &y).unwrap().get(0, 0), 25.0);
    }

    #[test]
    fn pairwise_symmetry_and_dim_check() {
        let mut rng = RngStream::new(1);
        let x = random_matrix(&mut rng, 4, 3, 1.0);
        let y = random_matrix(&mut rng, 6, 3, 1.0);
        let c = pairwise_sq_dist(&x, &y).unwrap();
        let ct = pairwise_sq_dist(&y, &x).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(c.get(i, j), ct.get(j, i));
            }
        }
        let bad = random_matrix(&mut rng, 4, 2, 1.0);
        assert!(pairwise_sq_dist(&x, &bad).is_err());
    }

    #[test]
    fn mmd_identical_degenerate_sets() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0]]);
        let got = mmd2_unbiased(&x, &x, &MmdConfig::single(1.0)).unwrap();
        assert!(got.abs() < 1e-15);
    }

    #[test]
    fn mmd_hand_value() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0]]);
        let y = Matrix::from_rows(&[vec![2.0], vec![2.0]]);
        let got = mmd2_unbiased(&x, &y, &MmdConfig::single(1.0)).unwrap();
        let expect = 2.0 - 2.0 * (-2.0f64).exp();
        assert!((got - expect).abs() < 1e-14, "got {got}, expect {expect}");
    }

    #[test]
    fn mmd_needs_two_samples() {
        let x = Matrix::from_rows(&[vec![0.0]]);
        let y = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            mmd2_unbiased(&x, &y, &MmdConfig::default()),
            Err(CoreError::NeedTwoSamples)
        ));
    }

    /// Naive O(N²) reference implementation, kept independent of the
    /// production path.
    fn mmd2_naive(x: &Matrix, y: &Matrix, bandwidths: &[f64]) -> f64 {
        let k = |a: &[f64], b: &[f64]| -> f64 {
            let c: f64 = a
                .iter()
                .zip(b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            bandwidths.iter().map(|&l| (-c / (2.0 * l)).exp()).sum()
        };
        let n = x.rows() as f64;
        let m = y.rows() as f64;
        let mut xx = 0.0;
        for i in 0..x.rows() {
            for j in 0..x.rows() {
                if i != j {
                    xx += k(x.row(i), x.row(j));
                }
            }
        }
        let mut yy = 0.0;
        for i in 0..y.rows() {
            for j in 0..y.rows() {
                if i != j {
                    yy += k(y.row(i), y.row(j));
                }
            }
        }
        let mut xy = 0.0;
        for i in 0..x.rows() {
            for j in 0..y.rows() {
                xy += k(x.row(i), y.row(j));
            }
        }
        xx / (n * (n - 1.0)) - 2.0 * xy / (n * m) + yy / (m * (m - 1.0))
    }

    #[test]
    fn mmd_matches_double_loop_oracle() {
        let mut rng = RngStream::new(2);
        let cfg = MmdConfig::default();
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 10, 3, 2.0);
            let y = random_matrix(&mut rng, 10, 3, 2.0);
            let got = mmd2_unbiased(&x, &y, &cfg).unwrap();
            let naive = mmd2_naive(&x, &y, &cfg.bandwidths);
            assert!(
                (got - naive).abs() < 1e-12,
                "got {got}, naive {naive}"
            );
        }
    }

    #[test]
    fn mmd_permutation_invariant_and_symmetric() {
        let mut rng = RngStream::new(3);
        let x = random_matrix(&mut rng, 8, 2, 1.0);
        let y = random_matrix(&mut rng, 9, 2, 1.0);
        let cfg = MmdConfig::default();
        let base = mmd2_unbiased(&x, &y, &cfg).unwrap();

        let mut rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
        rows.reverse();
        let xp = Matrix::from_rows(&rows);
        let permuted = mmd2_unbiased(&xp, &y, &cfg).unwrap();
        assert!((base - permuted).abs() < 1e-12);

        let swapped = mmd2_unbiased(&y, &x, &cfg).unwrap();
        assert!((base - swapped).abs() < 1e-12);
    }

    #[test]
    fn sinkhorn_singleton_coupling() {
        let x = Matrix::from_rows(&[vec![0.0]]);
        let y = Matrix::from_rows(&[vec![1.0]]);
        for scale in [1.0, 0.1, 0.01] {
            let cfg = SinkhornConfig {
                epsilon_scale: scale,
                ..Default::default()
            };
            let out = sinkhorn_w2(&x, &y, &cfg).unwrap();
            assert!((out.cost - 1.0).abs() < 1e-9, "cost {}", out.cost);
        }
    }

    #[test]
    fn sinkhorn_identity_sets_have_small_cost() {
        let mut rng = RngStream::new(4);
        let x = random_matrix(&mut rng, 12, 2, 3.0);
        let cfg = SinkhornConfig {
            epsilon_scale: 0.01,
            ..Default::default()
        };
        let out = sinkhorn_w2(&x, &x, &cfg).unwrap();
        let c = pairwise_sq_dist(&x, &x).unwrap();
        let mean_c: f64 = c.as_slice().iter().sum::<f64>() / (c.rows() * c.cols()) as f64;
        assert!(
            out.cost <= 0.05 * mean_c,
            "cost {} vs bound {}",
            out.cost,
            0.05 * mean_c
        );
    }

    /// Exact optimum over all couplings of two equal-size uniform empirical
    /// measures: by Birkhoff's theorem it is attained at a permutation.
    pub(crate) fn lp_oracle_equal_support(x: &Matrix, y: &Matrix) -> f64 {
        let n = x.rows();
        assert_eq!(n, y.rows());
        let c = pairwise_sq_dist(x, y).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
            if total < best {
                best = total;
            }
        });
        best / n as f64
    }

    fn permute(arr: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == arr.len() {
            visit(arr);
            return;
        }
        for i in k..arr.len() {
            arr.swap(k, i);
            permute(arr, k + 1, visit);
            arr.swap(k, i);
        }
    }

    #[test]
    fn sinkhorn_close_to_lp_on_small_instances() {
        let mut rng = RngStream::new(5);
        let cfg = SinkhornConfig {
            epsilon_scale: 1e-3,
            max_iters: 200_000,
            marginal_tol: 1e-9,
        };
        for _ in 0..5 {
            let x = random_matrix(&mut rng, 5, 2, 1.0);
            let y = random_matrix(&mut rng, 5, 2, 1.0);
            let exact = lp_oracle_equal_support(&x, &y);
            let got = sinkhorn_w2(&x, &y, &cfg).unwrap();
            assert!(
                (got.cost - exact).abs() < 0.05,
                "sinkhorn {} vs lp {exact}",
                got.cost
            );
        }
    }

    #[test]
    fn sinkhorn_symmetric_after_convergence() {
        let mut rng = RngStream::new(6);
        let x = random_matrix(&mut rng, 6, 2, 1.0);
        let y = random_matrix(&mut rng, 6, 2, 1.0);
        let cfg = SinkhornConfig {
            epsilon_scale: 0.05,
            max_iters: 100_000,
            marginal_tol: 1e-13,
        };
        let a = sinkhorn_w2(&x, &y, &cfg).unwrap();
        let b = sinkhorn_w2(&y, &x, &cfg).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.cost - b.cost).abs() < 1e-10, "{} vs {}", a.cost, b.cost);
    }

    #[test]
    fn sinkhorn_cost_decreases_with_epsilon() {
        let mut rng = RngStream::new(7);
        let x = random_matrix(&mut rng, 10, 2, 1.0);
        let y = random_matrix(&mut rng, 10, 2, 1.0);
        let costs: Vec<f64> = [0.5, 0.05, 0.005]
            .iter()
            .map(|&scale| {
                let cfg = SinkhornConfig {
                    epsilon_scale: scale,
                    max_iters: 100_000,
                    marginal_tol: 1e-10,
                };
                sinkhorn_w2(&x, &y, &cfg).unwrap().cost
            })
            .collect();
        assert!(costs[0] > costs[1] && costs[1] > costs[2], "{costs:?}");
    }

    #[test]
    fn sinkhorn_quadratic_scale_property() {
        let mut rng = RngStream::new(8);
        let x = random_matrix(&mut rng, 8, 2, 1.0);
        let y = random_matrix(&mut rng, 8, 2, 1.0);
        let a = 3.0;
        let xs = x.scale(a);
        let ys = y.scale(a);
        let cfg = SinkhornConfig {
            epsilon_scale: 0.005,
            max_iters: 100_000,
            marginal_tol: 1e-10,
        };
        let base = sinkhorn_w2(&x, &y, &cfg).unwrap().cost;
        let scaled = sinkhorn_w2(&xs, &ys, &cfg).unwrap().cost;
        assert!(
            (scaled - a * a * base).abs() <= 0.05 * (a * a * base),
            "scaled {scaled} vs {}",
            a * a * base
        );
    }

    #[test]
    fn mmd_negative_excursions_stay_above_u_statistic_bound() {
        // With the kernel bounded by the bandwidth count L, the unbiased
        // estimate can dip below zero but never below -2L/min(N, M).
        let mut rng = RngStream::new(10);
        let cfg = MmdConfig::default();
        let l = cfg.bandwidths.len() as f64;
        for _ in 0..50 {
            let n = 2 + (rng.next_raw() % 30) as usize;
            let m = 2 + (rng.next_raw() % 30) as usize;
            let x = random_matrix(&mut rng, n, 2, 1.0);
            let y = random_matrix(&mut rng, m, 2, 1.0);
            let got = mmd2_unbiased(&x, &y, &cfg).unwrap();
            let bound = -2.0 * l / n.min(m) as f64;
            assert!(got >= bound, "mmd {got} below bound {bound}");
        }
    }

    #[test]
    fn metric_clamps_negative_mmd() {
        // Two large samples from the same distribution: the unbiased
        // estimate fluctuates around zero, the score never goes below it.
        let mut rng = RngStream::new(9);
        for trial in 0..10 {
            let x = random_matrix(&mut rng, 60, 1, 1.0);
            let y = random_matrix(&mut rng, 60, 1, 1.0);
            let score = Metric::Mmd(MmdConfig::default())
                .score(&x, &y)
                .unwrap();
            assert!(score >= 0.0, "trial {trial}");
        }
    }
}
