use super::Simulator;
use crate::distributions::{DensityModel, LogNormalDiag};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::Binomial;

/// SIR epidemic task: infer contact rate β and recovery rate γ from binomial
/// counts of the infected fraction.
///
/// The ODE `dS = -βSI/P, dI = βSI/P - γI, dR = γI` is integrated with RK4
/// over 160 time units and evaluated at 20 equidistant time points; each
/// emitted bin draws `Binom(1000, I/P)`. The observation dimension is the
/// number of emitted bins (the leading ones), 10 by default.
#[derive(Debug, Clone)]
pub struct SirTask {
    emitted_bins: usize,
}

const POPULATION: f64 = 1e6;
const HORIZON: f64 = 160.0;
const DT: f64 = 0.1;
const EVAL_POINTS: usize = 20;
const TRIALS: u64 = 1000;
const GROUND_TRUTH: [f64; 2] = [0.4, 0.125];

impl SirTask {
    pub fn new(emitted_bins: usize) -> Self {
        assert!((1..=EVAL_POINTS).contains(&emitted_bins));
        SirTask { emitted_bins }
    }

    /// Infected-compartment trajectory at the 20 evaluation points, plus the
    /// worst-case drift of S+I+R from the initial total.
    pub fn infected_at_eval_points(beta: f64, gamma: f64) -> ([f64; EVAL_POINTS], f64) {
        let mut state = [POPULATION - 1.0, 1.0, 0.0];
        let steps_total = (HORIZON / DT).round() as usize;
        let stride = steps_total / EVAL_POINTS;
        let mut infected = [0.0; EVAL_POINTS];
        let mut max_drift: f64 = 0.0;
        for step in 1..=steps_total {
            state = rk4_step(state, beta, gamma);
            let total = state[0] + state[1] + state[2];
            max_drift = max_drift.max((total - POPULATION).abs() / POPULATION);
            if step % stride == 0 {
                infected[step / stride - 1] = state[1];
            }
        }
        (infected, max_drift)
    }
}

fn derivs(state: [f64; 3], beta: f64, gamma: f64) -> [f64; 3] {
    let [s, i, _] = state;
    let infection = beta * s * i / POPULATION;
    let recovery = gamma * i;
    [-infection, infection - recovery, recovery]
}

fn rk4_step(state: [f64; 3], beta: f64, gamma: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], h: f64| {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]]
    };
    let k1 = derivs(state, beta, gamma);
    let k2 = derivs(add(state, k1, DT / 2.0), beta, gamma);
    let k3 = derivs(add(state, k2, DT / 2.0), beta, gamma);
    let k4 = derivs(add(state, k3, DT), beta, gamma);
    let mut next = state;
    for c in 0..3 {
        next[c] += DT / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    next
}

impl Simulator for SirTask {
    fn name(&self) -> &'static str {
        "sir"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        self.emitted_bins
    }

    fn prior(&self) -> Box<dyn DensityModel> {
        Box::new(
            LogNormalDiag::new(vec![0.4f64.ln(), 0.125f64.ln()], vec![0.5, 0.2])
                .expect("valid prior"),
        )
    }

    fn ground_truth(&self) -> Vec<f64> {
        GROUND_TRUTH.to_vec()
    }

    fn simulate(&self, params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix> {
        let (infected, _) = Self::infected_at_eval_points(params[0], params[1]);
        let probs: Vec<f64> = infected[..self.emitted_bins]
            .iter()
            .map(|&i| (i / POPULATION).clamp(0.0, 1.0))
            .collect();
        let mut out = Matrix::zeros(count, self.emitted_bins);
        let mut batch = rng.fork();
        for r in 0..count {
            let row = out.row_mut(r);
            for (j, &p) in probs.iter().enumerate() {
                let draw = batch.sample(Binomial::new(TRIALS, p).expect("p in [0,1]"));
                row[j] = draw as f64;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservation_of_population() {
        for (beta, gamma) in [(0.4, 0.125), (1.5, 0.05), (0.1, 0.4)] {
            let (_, drift) = SirTask::infected_at_eval_points(beta, gamma);
            assert!(drift < 1e-8, "beta {beta} gamma {gamma}: drift {drift}");
        }
    }

    #[test]
    fn no_transmission_decays_monotonically() {
        let (infected, _) = SirTask::infected_at_eval_points(0.0, 0.1);
        for pair in infected.windows(2) {
            assert!(pair[1] < pair[0], "{pair:?}");
        }
        // Against the exact exponential decay I₀·e^(-γt).
        for (k, &i_val) in infected.iter().enumerate() {
            let t = (k + 1) as f64 * HORIZON / EVAL_POINTS as f64;
            let exact = (-0.1 * t).exp();
            assert!(
                (i_val - exact).abs() < 1e-9 * exact.max(1e-12) + 1e-12,
                "bin {k}: {i_val} vs {exact}"
            );
        }
    }

    #[test]
    fn frozen_dynamics_keep_initial_count() {
        let (infected, _) = SirTask::infected_at_eval_points(1e-9, 1e-9);
        for &i_val in &infected {
            assert!((i_val - 1.0).abs() < 1e-6, "infected {i_val}");
        }
    }

    #[test]
    fn observations_are_integer_counts_in_range() {
        let task = SirTask::new(10);
        let draws = task
            .simulate(&[0.9, 0.1], 50, &mut RngStream::new(14))
            .unwrap();
        for row in draws.iter_rows() {
            for &v in row {
                assert!(v >= 0.0 && v <= TRIALS as f64);
                assert_eq!(v, v.round());
            }
        }
    }

    #[test]
    fn twenty_bin_variant_changes_shape() {
        let task = SirTask::new(20);
        assert_eq!(task.obs_dim(), 20);
        let draws = task
            .simulate(&[0.4, 0.125], 2, &mut RngStream::new(15))
            .unwrap();
        assert_eq!(draws.cols(), 20);
    }
}
