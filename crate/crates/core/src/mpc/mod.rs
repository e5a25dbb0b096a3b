//! Finite-horizon optimal vaccination and the receding-horizon loop around it.

pub mod closed_loop;
pub mod config;
pub mod ocp;
pub mod solver;

pub use closed_loop::{run_closed_loop, MpcController};
pub use config::{MpcConfig, SolverSettings, TerminalMode};
pub use ocp::{build_ocp, Evaluation, OcpProblem, SiState};
pub use solver::{project_capped_simplex, solve_ocp, OcpSolution};
