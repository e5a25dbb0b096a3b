use serde::{Deserialize, Serialize};

use crate::certificates::epsilon_valid;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// How the terminal constraint `x(N) ∈ X_f` enters the optimal control problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalMode {
    /// Solutions outside `X_f` are reported infeasible. Internally the solver
    /// escalates a hinge penalty until it finds a feasible sequence.
    Hard,
    /// Hinge penalty with a fixed weight; infeasible solutions are still
    /// applied and flagged.
    #[default]
    Penalty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Iteration cap per start of the projected gradient method.
    pub max_iterations: usize,
    /// Stop once a full step moves no control by more than this fraction of `v_bar`.
    pub step_tolerance: f64,
    /// Stop once ten consecutive iterations improve the objective by less than
    /// this relative amount.
    pub cost_tolerance: f64,
    pub terminal_mode: TerminalMode,
    pub penalty_weight: f64,
    /// Seed for the random starts.
    pub rng_seed: u64,
    /// Random starts on top of the deterministic ones.
    pub restarts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 300,
            step_tolerance: 1e-7,
            cost_tolerance: 1e-9,
            terminal_mode: TerminalMode::Penalty,
            penalty_weight: 1e6,
            rng_seed: 0,
            restarts: 2,
        }
    }
}

/// Receding-horizon settings for the vaccination controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon `N` in days.
    pub horizon: usize,
    pub epsilon: f64,
    /// Daily vaccination capacity.
    pub v_bar: f64,
    /// Vaccination stops for good once every `I_k` drops below this.
    pub eradication_threshold: Vec<f64>,
    /// Number of simulated days `N_v`.
    pub strategy_horizon: usize,
    pub vaccination_start_day: usize,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl MpcConfig {
    /// Defaults used throughout: `N = 40`, `ε = 0.1`, 55191 doses per day,
    /// one person per group as the eradication level, 140 simulated days with
    /// vaccination from day 61.
    pub fn with_defaults(n_groups: usize) -> Self {
        MpcConfig {
            horizon: 40,
            epsilon: 0.1,
            v_bar: 55191.0,
            eradication_threshold: vec![1.0; n_groups],
            strategy_horizon: 140,
            vaccination_start_day: 61,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::validation("mpc.horizon must be at least 1"));
        }
        if !epsilon_valid(self.epsilon, params) {
            return Err(Error::validation(format!(
                "mpc.epsilon = {} must satisfy 0 < epsilon < min_k(gamma_r + gamma_d)",
                self.epsilon
            )));
        }
        if !(self.v_bar.is_finite() && self.v_bar > 0.0) {
            return Err(Error::validation(format!("mpc.v_bar = {} must be positive", self.v_bar)));
        }
        if self.eradication_threshold.len() != params.n_groups() {
            return Err(Error::validation(format!(
                "mpc.eradication_threshold has {} entries, expected {}",
                self.eradication_threshold.len(),
                params.n_groups()
            )));
        }
        if let Some(x) = self.eradication_threshold.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::validation(format!("mpc.eradication_threshold entries must be positive, got {x}")));
        }
        if self.vaccination_start_day > self.strategy_horizon {
            return Err(Error::validation(format!(
                "mpc.vaccination_start_day = {} is after the strategy horizon {}",
                self.vaccination_start_day, self.strategy_horizon
            )));
        }
        let s = &self.solver;
        if s.max_iterations == 0 {
            return Err(Error::validation("mpc.solver.max_iterations must be at least 1"));
        }
        if !(s.penalty_weight.is_finite() && s.penalty_weight > 0.0) {
            return Err(Error::validation("mpc.solver.penalty_weight must be positive"));
        }
        if !(s.step_tolerance >= 0.0 && s.cost_tolerance >= 0.0) {
            return Err(Error::validation("mpc.solver tolerances must be nonnegative"));
        }
        Ok(())
    }
}
