use serde::{Deserialize, Serialize};

use crate::model::{ControlVector, ModelParams, Trajectory};
use crate::mpc::config::MpcConfig;
use crate::strategies::PolicyKind;

/// Diagnostics for one MPC solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcDayRecord {
    pub day: usize,
    #[serde(rename = "V_N0")]
    pub v_n0: f64,
    pub feasible: bool,
    pub terminal_slack: f64,
    /// Dose actually administered, after clamping to the available susceptibles.
    pub applied_u: Vec<f64>,
    pub iterations: usize,
}

/// A completed closed-loop simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub policy: PolicyKind,
    pub params: ModelParams,
    pub config: MpcConfig,
    /// States for days `0..=N_v`.
    pub trajectory: Trajectory,
    /// Applied dose per day, `N_v` entries.
    pub controls: Vec<ControlVector>,
    /// One record per day on which the optimizer ran (MPC runs only).
    pub mpc_log: Vec<MpcDayRecord>,
    /// First day at or after the vaccination start with every `I_k` below its threshold.
    pub eradication_day: Option<usize>,
}
