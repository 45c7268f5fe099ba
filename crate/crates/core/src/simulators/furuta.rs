use super::Simulator;
use crate::distributions::{BoxUniform, DensityModel};
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Rotary inverted pendulum dynamics, system identification over
/// `ξ = (g, l_r, m_r, l_p, m_p)`.
///
/// The equations of motion couple the rotor angle θ_r and the pole angle θ_p
/// through a configuration-dependent mass matrix plus Coriolis and gravity
/// terms; joint damping and motor torque are fixed (zero by default). One
/// rollout perturbs the initial state around the equilibrium, integrates
/// with RK4 at 1 kHz for one second and records 100 frames at 100 Hz.
#[derive(Debug, Clone)]
pub struct FurutaTask {
    cfg: FurutaConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FurutaObsEncoding {
    /// (sin θ_r, cos θ_r, sin θ_p, cos θ_p, θ̇_r, θ̇_p) per frame — 600 dims.
    SinCos,
    /// (θ_r, θ_p, θ̇_r, θ̇_p) per frame — 400 dims.
    RawAngles,
}

#[derive(Debug, Clone, Copy)]
pub struct FurutaConfig {
    pub damping_r: f64,
    pub damping_p: f64,
    /// Std of the Gaussian initial-state perturbation
    /// (θ_r, θ_p, θ̇_r, θ̇_p); magnitudes are an assumption, not measured.
    pub init_std: [f64; 4],
    pub encoding: FurutaObsEncoding,
}

impl Default for FurutaConfig {
    fn default() -> Self {
        FurutaConfig {
            damping_r: 0.0,
            damping_p: 0.0,
            init_std: [0.05, 0.05, 0.05, 0.05],
            encoding: FurutaObsEncoding::SinCos,
        }
    }
}

const TORQUE: f64 = 0.0;
const DT: f64 = 1e-3;
const STEPS: usize = 1000;
const RECORD_EVERY: usize = 10;
const FRAMES: usize = STEPS / RECORD_EVERY;
const PRIOR_LOWER: [f64; 5] = [9.0, 0.08, 0.08, 0.12, 0.02];
const PRIOR_UPPER: [f64; 5] = [11.0, 0.09, 0.10, 0.135, 0.03];
const GROUND_TRUTH: [f64; 5] = [9.81, 0.085, 0.095, 0.129, 0.024];
const MAX_CONDITION: f64 = 1e12;

impl FurutaTask {
    pub fn new(cfg: FurutaConfig) -> Self {
        FurutaTask { cfg }
    }

    pub fn config(&self) -> &FurutaConfig {
        &self.cfg
    }

    /// Mass matrix entries at pole angle θ_p: [[m11, m12], [m12, m22]].
    pub fn mass_matrix(params: &[f64], theta_p: f64) -> [f64; 3] {
        let [_, l_r, m_r, l_p, m_p] = [params[0], params[1], params[2], params[3], params[4]];
        let sin_p = theta_p.sin();
        let m11 = m_r * l_r * l_r / 12.0 + m_p * l_r * l_r + 0.25 * m_p * l_p * l_p * sin_p * sin_p;
        let m12 = 0.5 * m_p * l_p * l_r * theta_p.cos();
        let m22 = m_p * l_p * l_p / 3.0;
        [m11, m12, m22]
    }

    /// Angular accelerations (θ̈_r, θ̈_p) at the given state.
    pub fn accel(&self, params: &[f64], state: [f64; 4]) -> Result<[f64; 2]> {
        Dynamics::new(&self.cfg, params).accel(state)
    }

    /// Total mechanical energy: kinetic from the mass matrix plus
    /// `½ m_p l_p g (1 - cos θ_p)`. Conserved exactly at zero damping.
    pub fn total_energy(params: &[f64], state: [f64; 4]) -> f64 {
        let [_, theta_p, omega_r, omega_p] = state;
        let [m11, m12, m22] = Self::mass_matrix(params, theta_p);
        let kinetic = 0.5
            * (m11 * omega_r * omega_r + 2.0 * m12 * omega_r * omega_p + m22 * omega_p * omega_p);
        let potential = 0.5 * params[4] * params[3] * params[0] * (1.0 - theta_p.cos());
        kinetic + potential
    }

    /// Integrate from `state0`, recording the state after every step.
    pub fn trajectory(
        &self,
        params: &[f64],
        state0: [f64; 4],
        dt: f64,
        steps: usize,
    ) -> Result<Vec<[f64; 4]>> {
        let dyn_ = Dynamics::new(&self.cfg, params);
        let mut out = Vec::with_capacity(steps);
        let mut state = state0;
        for _ in 0..steps {
            state = dyn_.rk4_step(state, dt)?;
            out.push(state);
        }
        Ok(out)
    }

    fn encode_frame(&self, state: [f64; 4], out: &mut Vec<f64>) {
        match self.cfg.encoding {
            FurutaObsEncoding::SinCos => {
                out.push(state[0].sin());
                out.push(state[0].cos());
                out.push(state[1].sin());
                out.push(state[1].cos());
                out.push(state[2]);
                out.push(state[3]);
            }
            FurutaObsEncoding::RawAngles => {
                out.extend_from_slice(&state);
            }
        }
    }

    fn rollout(&self, params: &[f64], state0: [f64; 4]) -> Result<Vec<f64>> {
        let dyn_ = Dynamics::new(&self.cfg, params);
        let mut obs = Vec::with_capacity(self.obs_dim());
        let mut state = state0;
        for step in 1..=STEPS {
            state = dyn_.rk4_step(state, DT)?;
            if step % RECORD_EVERY == 0 {
                self.encode_frame(state, &mut obs);
            }
        }
        Ok(obs)
    }

    /// Gaussian perturbations of the equilibrium, one initial state per row.
    pub fn sample_initial_states(&self, count: usize, rng: &mut RngStream) -> Matrix {
        let mut states = Matrix::zeros(count, 4);
        let mut batch = rng.fork();
        for i in 0..count {
            let row = states.row_mut(i);
            for (j, &std) in self.cfg.init_std.iter().enumerate() {
                let z: f64 = batch.sample(StandardNormal);
                row[j] = std * z;
            }
        }
        states
    }

    /// Deterministic rollouts from the given initial states.
    pub fn simulate_synced(&self, params: &[f64], initial_states: &Matrix) -> Result<Matrix> {
        if initial_states.cols() != 4 {
            return Err(CoreError::DimensionMismatch {
                expected: 4,
                got: initial_states.cols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..initial_states.rows())
            .into_par_iter()
            .map(|i| {
                let s = initial_states.row(i);
                self.rollout(params, [s[0], s[1], s[2], s[3]])
            })
            .collect::<Result<_>>()?;
        Ok(Matrix::from_rows(&rows))
    }

    /// Batch simulation that also returns the initial states used, so a
    /// reference set can later be re-simulated with synchronized starts.
    pub fn simulate_with_states(
        &self,
        params: &[f64],
        count: usize,
        rng: &mut RngStream,
    ) -> Result<(Matrix, Matrix)> {
        let states = self.sample_initial_states(count, rng);
        let obs = self.simulate_synced(params, &states)?;
        Ok((obs, states))
    }
}

/// Parameter products precomputed once per rollout; the integrator calls
/// the acceleration thousands of times with fixed parameters.
struct Dynamics {
    rotor_inertia: f64,   // m_r·l_r²/12 + m_p·l_r²
    pole_quarter: f64,    // m_p·l_p²/4
    coupling: f64,        // m_p·l_p·l_r/2
    pole_inertia: f64,    // m_p·l_p²/3
    gravity_arm: f64,     // m_p·l_p·g/2
    damping_r: f64,
    damping_p: f64,
}

impl Dynamics {
    fn new(cfg: &FurutaConfig, params: &[f64]) -> Self {
        let [g, l_r, m_r, l_p, m_p] = [params[0], params[1], params[2], params[3], params[4]];
        Dynamics {
            rotor_inertia: m_r * l_r * l_r / 12.0 + m_p * l_r * l_r,
            pole_quarter: 0.25 * m_p * l_p * l_p,
            coupling: 0.5 * m_p * l_p * l_r,
            pole_inertia: m_p * l_p * l_p / 3.0,
            gravity_arm: 0.5 * m_p * l_p * g,
            damping_r: cfg.damping_r,
            damping_p: cfg.damping_p,
        }
    }

    #[inline]
    fn accel(&self, state: [f64; 4]) -> Result<[f64; 2]> {
        let [_, theta_p, omega_r, omega_p] = state;
        let (sin_p, cos_p) = theta_p.sin_cos();
        let sin_2p = 2.0 * sin_p * cos_p;
        let m11 = self.rotor_inertia + self.pole_quarter * sin_p * sin_p;
        let m12 = self.coupling * cos_p;
        let m22 = self.pole_inertia;

        // Condition guard; cannot trigger inside the prior box.
        let tr = m11 + m22;
        let det = m11 * m22 - m12 * m12;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let lo = 0.5 * (tr - disc);
        let hi = 0.5 * (tr + disc);
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            return Err(CoreError::SingularMassMatrix);
        }

        let coriolis_r =
            self.pole_quarter * sin_2p * omega_r * omega_p - self.coupling * sin_p * omega_p * omega_p;
        let coriolis_p =
            -0.5 * self.pole_quarter * sin_2p * omega_r * omega_r + self.gravity_arm * sin_p;
        let rhs_r = -self.damping_r * omega_r + TORQUE - coriolis_r;
        let rhs_p = -self.damping_p * omega_p - coriolis_p;
        Ok([
            (m22 * rhs_r - m12 * rhs_p) / det,
            (m11 * rhs_p - m12 * rhs_r) / det,
        ])
    }

    #[inline]
    fn rk4_step(&self, state: [f64; 4], dt: f64) -> Result<[f64; 4]> {
        let f = |s: [f64; 4]| -> Result<[f64; 4]> {
            let a = self.accel(s)?;
            Ok([s[2], s[3], a[0], a[1]])
        };
        let add = |s: [f64; 4], k: [f64; 4], h: f64| {
            [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
        };
        let k1 = f(state)?;
        let k2 = f(add(state, k1, dt / 2.0))?;
        let k3 = f(add(state, k2, dt / 2.0))?;
        let k4 = f(add(state, k3, dt))?;
        let mut next = state;
        for c in 0..4 {
            next[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        Ok(next)
    }
}

impl Simulator for FurutaTask {
    fn name(&self) -> &'static str {
        "furuta"
    }

    fn param_dim(&self) -> usize {
        5
    }

    fn obs_dim(&self) -> usize {
        match self.cfg.encoding {
            FurutaObsEncoding::SinCos => 6 * FRAMES,
            FurutaObsEncoding::RawAngles => 4 * FRAMES,
        }
    }

    fn prior(&self) -> Box<dyn DensityModel> {
        Box::new(
            BoxUniform::new(PRIOR_LOWER.to_vec(), PRIOR_UPPER.to_vec()).expect("valid prior box"),
        )
    }

    fn ground_truth(&self) -> Vec<f64> {
        GROUND_TRUTH.to_vec()
    }

    fn simulate(&self, params: &[f64], count: usize, rng: &mut RngStream) -> Result<Matrix> {
        self.simulate_with_states(params, count, rng).map(|(obs, _)| obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let task = FurutaTask::new(FurutaConfig::default());
        let states = Matrix::from_rows(&[vec![0.0; 4]]);
        let obs = task.simulate_synced(&GROUND_TRUTH, &states).unwrap();
        for frame in obs.row(0).chunks(6) {
            assert_eq!(frame[0], 0.0); // sin θ_r
            assert_eq!(frame[1], 1.0); // cos θ_r
            assert_eq!(frame[2], 0.0); // sin θ_p
            assert_eq!(frame[3], 1.0); // cos θ_p
            assert_eq!(frame[4], 0.0);
            assert_eq!(frame[5], 0.0);
        }
    }

    #[test]
    fn zero_damping_conserves_energy() {
        let task = FurutaTask::new(FurutaConfig::default());
        let state0 = [0.3, 0.4, 0.5, -0.3];
        let e0 = FurutaTask::total_energy(&GROUND_TRUTH, state0);
        assert!(e0 > 0.0);

        let coarse = task.trajectory(&GROUND_TRUTH, state0, 1e-3, 1000).unwrap();
        let drift_coarse = coarse
            .iter()
            .map(|&s| (FurutaTask::total_energy(&GROUND_TRUTH, s) - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift_coarse < 1e-6, "coarse drift {drift_coarse}");

        // Reference integration at dt = 1e-4.
        let fine = task.trajectory(&GROUND_TRUTH, state0, 1e-4, 10_000).unwrap();
        let drift_fine = fine
            .iter()
            .map(|&s| (FurutaTask::total_energy(&GROUND_TRUTH, s) - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift_fine < 1e-8, "fine drift {drift_fine}");

        // The two integrations agree at the end of the horizon.
        let end_c = coarse.last().unwrap();
        let end_f = fine.last().unwrap();
        for c in 0..4 {
            assert!((end_c[c] - end_f[c]).abs() < 1e-6, "channel {c}");
        }
    }

    #[test]
    fn damping_bleeds_energy() {
        let cfg = FurutaConfig {
            damping_r: 1e-4,
            damping_p: 1e-4,
            ..Default::default()
        };
        let task = FurutaTask::new(cfg);
        let state0 = [0.0, 0.4, 0.3, 0.0];
        let e0 = FurutaTask::total_energy(&GROUND_TRUTH, state0);
        let traj = task.trajectory(&GROUND_TRUTH, state0, 1e-3, 1000).unwrap();
        let e_end = FurutaTask::total_energy(&GROUND_TRUTH, *traj.last().unwrap());
        assert!(e_end < e0, "energy did not decay: {e_end} vs {e0}");
    }

    #[test]
    fn mass_matrix_at_upright_matches_closed_form() {
        let [m11, m12, m22] = FurutaTask::mass_matrix(&GROUND_TRUTH, 0.0);
        let [_, l_r, m_r, l_p, m_p] = GROUND_TRUTH;
        assert!((m11 - (m_r * l_r * l_r / 12.0 + m_p * l_r * l_r)).abs() < 1e-15);
        assert!((m12 - 0.5 * m_p * l_p * l_r).abs() < 1e-15);
        assert!((m22 - m_p * l_p * l_p / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mass_matrix_spd_across_prior() {
        let task = FurutaTask::new(FurutaConfig::default());
        let prior = task.prior();
        let mut rng = RngStream::new(20);
        let draws = prior.sample(10_000, &mut rng);
        for row in draws.iter_rows() {
            for theta_p in [-3.0, -1.0, 0.0, 0.7, 2.5] {
                let [m11, m12, m22] = FurutaTask::mass_matrix(row, theta_p);
                let det = m11 * m22 - m12 * m12;
                assert!(m11 > 0.0 && det > 0.0, "not SPD at {row:?} θ_p={theta_p}");
            }
        }
    }

    #[test]
    fn synced_rollouts_reproduce_batch_simulation() {
        let task = FurutaTask::new(FurutaConfig::default());
        let mut rng = RngStream::new(21);
        let (obs, states) = task.simulate_with_states(&GROUND_TRUTH, 3, &mut rng).unwrap();
        let replay = task.simulate_synced(&GROUND_TRUTH, &states).unwrap();
        assert_eq!(obs, replay);
    }

    #[test]
    fn raw_angle_encoding_shrinks_observation() {
        let cfg = FurutaConfig {
            encoding: FurutaObsEncoding::RawAngles,
            ..Default::default()
        };
        let task = FurutaTask::new(cfg);
        assert_eq!(task.obs_dim(), 400);
        let obs = task
            .simulate(&GROUND_TRUTH, 1, &mut RngStream::new(22))
            .unwrap();
        assert_eq!(obs.cols(), 400);
    }
}
