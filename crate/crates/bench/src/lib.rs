//! Fixtures shared by the benchmarks.

use vaxmpc_core::scenario::ScenarioConfig;
use vaxmpc_core::{rollout, ControlVector, EpidemicState};

/// The preset scenario and its unvaccinated state on `day`.
pub fn preset_at(day: usize) -> (ScenarioConfig, EpidemicState) {
    let cfg = ScenarioConfig::wallonia_2020();
    let x0 = cfg.initial_state().expect("preset is valid");
    let traj = rollout(&x0, &vec![ControlVector::zeros(6); day], &cfg.params).expect("rollout succeeds");
    let x = traj.last().expect("non-empty").clone();
    (cfg, x)
}
