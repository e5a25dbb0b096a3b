use crate::error::{Error, Result};
use crate::model::{ControlVector, EpidemicState, ModelParams};
use crate::mpc::config::MpcConfig;
use crate::mpc::ocp::build_ocp;
use crate::mpc::solver::{solve_ocp, OcpSolution};
use crate::result::{MpcDayRecord, ScenarioResult};
use crate::strategies::{drive, PolicyKind};

/// Receding-horizon controller that warm-starts each solve from the previous
/// solution shifted by one day with a zero dose appended.
#[derive(Clone, Debug)]
pub struct MpcController {
    cfg: MpcConfig,
    params: ModelParams,
    warm: Option<Vec<ControlVector>>,
}

impl MpcController {
    pub fn new(cfg: &MpcConfig, params: &ModelParams) -> Result<Self> {
        cfg.validate(params)?;
        Ok(MpcController { cfg: cfg.clone(), params: params.clone(), warm: None })
    }

    /// The sequence the next solve will start from, if any.
    pub fn warm_start(&self) -> Option<&[ControlVector]> {
        self.warm.as_deref()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Solves at `state` and prepares the shifted warm start for the next day.
    pub fn solve(&mut self, state: &EpidemicState) -> Result<OcpSolution> {
        let problem = build_ocp(state, &self.cfg, &self.params)?;
        let sol = solve_ocp(&problem, self.warm.as_deref())?;
        let mut shifted: Vec<ControlVector> = sol.controls.iter().skip(1).cloned().collect();
        shifted.push(ControlVector::zeros(self.params.n_groups()));
        self.warm = Some(shifted);
        Ok(sol)
    }
}

/// Runs the MPC policy for `N_v` days.
pub fn run_closed_loop(state0: &EpidemicState, cfg: &MpcConfig, params: &ModelParams) -> Result<ScenarioResult> {
    let mut controller = MpcController::new(cfg, params)?;
    drive(PolicyKind::Mpc, state0, cfg, params, |day, state| {
        let sol = controller.solve(state).map_err(|e| match e {
            Error::Solver { day: None, message } => Error::Solver { day: Some(day), message },
            other => other,
        })?;
        log::debug!(
            "day {day}: V_N0 = {:.6}, feasible = {}, slack = {:.3e}, iterations = {}",
            sol.optimal_value,
            sol.feasible,
            sol.terminal_slack,
            sol.iterations
        );
        let first = sol.controls[0].clone();
        let record = MpcDayRecord {
            day,
            v_n0: sol.optimal_value,
            feasible: sol.feasible,
            terminal_slack: sol.terminal_slack,
            applied_u: Vec::new(),
            iterations: sol.iterations,
        };
        Ok((first, Some(record)))
    })
}
