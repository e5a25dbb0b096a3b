//! Age-structured SIRD epidemic model with receding-horizon vaccination
//! allocation.
//!
//! * [`model`]: the discrete-time dynamics with vaccination.
//! * [`certificates`]: terminal set, Lyapunov and growth checks, and the
//!   closed-loop death-toll audit.
//! * [`mpc`]: the finite-horizon problem, its solver and the closed loop.
//! * [`strategies`]: no vaccination, oldest-first allocation, and dispatch.
//! * [`scenario`]: configuration, contact matrices, metrics and output files.

pub mod certificates;
pub mod error;
pub mod model;
pub mod mpc;
pub mod result;
pub mod scenario;
pub mod strategies;

pub use error::{Error, Result};
pub use model::{
    initial_state, new_infections, rollout, step, ContactMatrix, ControlVector, EpidemicState, ModelParams, Trajectory,
};
pub use mpc::{
    build_ocp, run_closed_loop, solve_ocp, MpcConfig, OcpProblem, OcpSolution, SolverSettings, TerminalMode,
};
pub use result::{MpcDayRecord, ScenarioResult};
pub use scenario::{ScenarioConfig, ScenarioMetrics};
pub use strategies::{apply_policy, national_allocate, no_vaccination, simulate, PolicyKind};
