//! Reference-observation generation.
//!
//! Every method conditioning on the same (task, N, seed) must see the exact
//! same bytes, so references are simulated once at the ground-truth
//! parameter with a seed-derived stream and persisted under the output
//! root. The Furuta task additionally persists the initial states so the
//! synchronized error can replay the reference rollouts.

use crate::config::TaskOptions;
use crate::error::{CliError, Result};
use pli_core::simulators::Simulator;
use pli_core::textio::{read_matrix, write_matrix};
use pli_core::{Matrix, RngStream};
use std::path::{Path, PathBuf};

/// Stream label reserved for reference generation (runs use 2, eval 3).
const REFERENCE_STREAM: u64 = 1;

pub struct ReferenceSet {
    pub observations: Matrix,
    /// Initial states of the reference rollouts; Furuta only.
    pub initial_states: Option<Matrix>,
    pub obs_path: PathBuf,
    pub states_path: Option<PathBuf>,
}

pub fn reference_paths(
    out_root: &Path,
    task: &dyn Simulator,
    n_obs: usize,
    seed: u64,
) -> (PathBuf, PathBuf) {
    let dir = out_root.join("refs");
    let stem = format!("{}_d{}_n{}_seed{}", task.name(), task.obs_dim(), n_obs, seed);
    (
        dir.join(format!("{stem}.obs.txt")),
        dir.join(format!("{stem}.states.txt")),
    )
}

/// Simulate and persist a reference set (idempotent: the same inputs always
/// rewrite the same bytes).
pub fn generate_reference(
    task_name: &str,
    options: &TaskOptions,
    n_obs: usize,
    seed: u64,
    out_root: &Path,
) -> Result<ReferenceSet> {
    if n_obs < 1 {
        return Err(CliError::Config("n_obs must be at least 1".into()));
    }
    let task = options.build_task(task_name)?;
    let (obs_path, states_path) = reference_paths(out_root, task.as_ref(), n_obs, seed);
    let mut rng = RngStream::new(seed).split(REFERENCE_STREAM);
    let gt = task.ground_truth();

    if task_name == "furuta" {
        let furuta = options.build_furuta();
        let (obs, states) = furuta.simulate_with_states(&gt, n_obs, &mut rng)?;
        write_matrix(&obs_path, &obs)?;
        write_matrix(&states_path, &states)?;
        Ok(ReferenceSet {
            observations: obs,
            initial_states: Some(states),
            obs_path,
            states_path: Some(states_path),
        })
    } else {
        let obs = task.simulate(&gt, n_obs, &mut rng)?;
        write_matrix(&obs_path, &obs)?;
        Ok(ReferenceSet {
            observations: obs,
            initial_states: None,
            obs_path,
            states_path: None,
        })
    }
}

/// Load the reference if present, generate it otherwise.
pub fn ensure_reference(
    task_name: &str,
    options: &TaskOptions,
    n_obs: usize,
    seed: u64,
    out_root: &Path,
) -> Result<ReferenceSet> {
    let task = options.build_task(task_name)?;
    let (obs_path, states_path) = reference_paths(out_root, task.as_ref(), n_obs, seed);
    let needs_states = task_name == "furuta";
    if obs_path.exists() && (!needs_states || states_path.exists()) {
        let observations = read_matrix(&obs_path)?;
        if observations.rows() != n_obs || observations.cols() != task.obs_dim() {
            return Err(CliError::Config(format!(
                "reference file {} has shape {}x{}, expected {}x{}",
                obs_path.display(),
                observations.rows(),
                observations.cols(),
                n_obs,
                task.obs_dim()
            )));
        }
        let initial_states = if needs_states {
            Some(read_matrix(&states_path)?)
        } else {
            None
        };
        return Ok(ReferenceSet {
            observations,
            initial_states,
            obs_path,
            states_path: needs_states.then_some(states_path),
        });
    }
    generate_reference(task_name, options, n_obs, seed, out_root)
}
