//! Finite-horizon vaccination problem on the reduced `(S, I)` state.
//!
//! Recovered and deceased counts enter neither the cost nor the constraints,
//! so the predictor only propagates susceptibles and infected. It uses the
//! same clamped update as the plant, which keeps predicted and realized
//! trajectories identical when the first control is applied.
//!
//! Decision variables are the daily doses `u(0..N)`, flattened step-major
//! (`u[n * n_a + k]`). The objective is
//!
//! ```text
//! V_N(x, u) = Σ_{n<N} γDᵀ I(n) + γDᵀ I(N) / ε  [+ w Σ_j max(0, [CᵀΛ S(N)]_j - Γ_j)]
//! ```
//!
//! where the hinge term is dropped when `‖I(N)‖₁` is negligible.

use serde::{Deserialize, Serialize};

use crate::certificates::{is_disease_free, CertificateParams};
use crate::error::{Error, Result};
use crate::model::{advance_si, dot, force_of_infection, EpidemicState, ModelParams};
use crate::mpc::config::{MpcConfig, SolverSettings};

/// Reduced state used by the predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

/// Cost breakdown for one control sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Stage plus terminal cost, without the penalty.
    pub cost: f64,
    /// Hinge violation of the terminal constraint; zero inside `X_f`.
    pub slack: f64,
    /// `cost + weight * slack`.
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub struct OcpProblem {
    params: ModelParams,
    cert: CertificateParams,
    s0: Vec<f64>,
    i0: Vec<f64>,
    horizon: usize,
    v_bar: f64,
    settings: SolverSettings,
}

/// Sets up the optimal control problem at `state`.
pub fn build_ocp(state: &EpidemicState, cfg: &MpcConfig, params: &ModelParams) -> Result<OcpProblem> {
    params.check_shape()?;
    if state.s.len() != params.n_groups() || state.i.len() != params.n_groups() {
        return Err(Error::contract("state and model disagree on the number of age groups"));
    }
    if cfg.horizon == 0 {
        return Err(Error::validation("mpc.horizon must be at least 1"));
    }
    Ok(OcpProblem {
        params: params.clone(),
        cert: CertificateParams::new(cfg.epsilon, params)?,
        s0: state.s.clone(),
        i0: state.i.clone(),
        horizon: cfg.horizon,
        v_bar: cfg.v_bar,
        settings: cfg.solver.clone(),
    })
}

/// Scratch buffers for forward and adjoint sweeps.
#[derive(Clone, Debug)]
pub(crate) struct Workspace {
    s: Vec<f64>,
    i: Vec<f64>,
    force: Vec<f64>,
    applied: Vec<f64>,
    adj_s: Vec<f64>,
    adj_i: Vec<f64>,
    next_s: Vec<f64>,
    next_i: Vec<f64>,
    q: Vec<f64>,
}

impl OcpProblem {
    pub fn n_groups(&self) -> usize {
        self.params.n_groups()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of decision variables, `N * n_a`.
    pub fn n_vars(&self) -> usize {
        self.horizon * self.n_groups()
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }

    pub fn epsilon(&self) -> f64 {
        self.cert.epsilon
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn certificate(&self) -> &CertificateParams {
        &self.cert
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn initial(&self) -> SiState {
        SiState { s: self.s0.clone(), i: self.i0.clone() }
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let n = self.n_groups();
        let len = (self.horizon + 1) * n;
        Workspace {
            s: vec![0.0; len],
            i: vec![0.0; len],
            force: vec![0.0; self.horizon * n],
            applied: vec![0.0; self.horizon * n],
            adj_s: vec![0.0; n],
            adj_i: vec![0.0; n],
            next_s: vec![0.0; n],
            next_i: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n_vars() {
            return Err(Error::contract(format!(
                "control sequence has {} values, expected {}",
                u.len(),
                self.n_vars()
            )));
        }
        Ok(())
    }

    fn forward(&self, u: &[f64], ws: &mut Workspace) {
        let n = self.n_groups();
        ws.s[..n].copy_from_slice(&self.s0);
        ws.i[..n].copy_from_slice(&self.i0);
        for t in 0..self.horizon {
            let (cur, next) = (t * n, (t + 1) * n);
            force_of_infection(&self.params, &ws.i[cur..next], &mut ws.force[cur..next]);
            let (s_head, s_tail) = ws.s.split_at_mut(next);
            let (i_head, i_tail) = ws.i.split_at_mut(next);
            advance_si(
                &self.params,
                &s_head[cur..],
                &i_head[cur..],
                &u[cur..next],
                &ws.force[cur..next],
                &mut s_tail[..n],
                &mut i_tail[..n],
                &mut ws.applied[cur..next],
            );
        }
    }

    fn summarize(&self, ws: &Workspace, weight: f64) -> Evaluation {
        let n = self.n_groups();
        let gd = &self.params.gamma_d;
        let mut cost = 0.0;
        for t in 0..self.horizon {
            cost += dot(gd, &ws.i[t * n..(t + 1) * n]);
        }
        let (s_n, i_n) = self.terminal_slices(ws);
        cost += dot(gd, i_n) / self.cert.epsilon;
        let (slack, feasible) = self.terminal_status(s_n, i_n);
        Evaluation { cost, slack, objective: cost + weight * slack, feasible }
    }

    fn terminal_slices<'w>(&self, ws: &'w Workspace) -> (&'w [f64], &'w [f64]) {
        let n = self.n_groups();
        let end = self.horizon * n;
        (&ws.s[end..end + n], &ws.i[end..end + n])
    }

    fn terminal_status(&self, s_n: &[f64], i_n: &[f64]) -> (f64, bool) {
        if is_disease_free(i_n) {
            (0.0, true)
        } else {
            let slack = self.cert.terminal_slack(s_n);
            (slack, slack == 0.0)
        }
    }

    pub(crate) fn evaluate_with(&self, u: &[f64], weight: f64, ws: &mut Workspace) -> Evaluation {
        self.forward(u, ws);
        self.summarize(ws, weight)
    }

    /// Cost of a flattened control sequence with penalty weight `weight`.
    pub fn evaluate(&self, u: &[f64], weight: f64) -> Result<Evaluation> {
        self.check_len(u)?;
        Ok(self.evaluate_with(u, weight, &mut self.workspace()))
    }

    /// Predicted `(S, I)` path, `N + 1` entries.
    pub fn predict(&self, u: &[f64]) -> Result<Vec<SiState>> {
        self.check_len(u)?;
        let mut ws = self.workspace();
        self.forward(u, &mut ws);
        let n = self.n_groups();
        Ok((0..=self.horizon)
            .map(|t| SiState { s: ws.s[t * n..(t + 1) * n].to_vec(), i: ws.i[t * n..(t + 1) * n].to_vec() })
            .collect())
    }

    /// Objective and its gradient by an adjoint sweep through the clamped
    /// bilinear dynamics.
    ///
    /// Where a dose is clamped to the remaining susceptibles the derivative
    /// with respect to that dose is zero; the kinks are resolved one-sided
    /// in the direction the forward pass took.
    pub(crate) fn gradient_with(&self, u: &[f64], weight: f64, ws: &mut Workspace, grad: &mut [f64]) -> Evaluation {
        self.forward(u, ws);
        let eval = self.summarize(ws, weight);
        let n = self.n_groups();
        let p = &self.params;
        let eps = self.cert.epsilon;

        let mut adj_s = std::mem::take(&mut ws.adj_s);
        adj_s.iter_mut().for_each(|x| *x = 0.0);
        let (s_n, i_n) = self.terminal_slices(ws);
        if weight > 0.0 && !is_disease_free(i_n) {
            let lhs = self.cert.weighted_susceptibles(s_n);
            for (j, (a, g)) in lhs.iter().zip(&self.cert.gamma_vec).enumerate() {
                if a > g {
                    for k in 0..n {
                        adj_s[k] += weight * self.cert.ct_lam[j * n + k];
                    }
                }
            }
        }
        ws.adj_s = adj_s;
        for k in 0..n {
            ws.adj_i[k] = p.gamma_d[k] / eps;
        }

        for t in (0..self.horizon).rev() {
            let base = t * n;
            let s = &ws.s[base..base + n];
            let force = &ws.force[base..base + n];
            for k in 0..n {
                let infections = p.lambda[k] * s[k] * force[k];
                let available = s[k] - infections;
                // (dS⁺/d available, dS⁺/du)
                let (da, du) = if available <= 0.0 {
                    (1.0, 0.0)
                } else if u[base + k] <= available {
                    (1.0, -1.0)
                } else {
                    (0.0, 0.0)
                };
                let ps = ws.adj_s[k];
                let pi = ws.adj_i[k];
                grad[base + k] = ps * du;
                ws.next_s[k] = ps * da * (1.0 - p.lambda[k] * force[k]) + pi * p.lambda[k] * force[k];
                ws.q[k] = (pi - da * ps) * p.lambda[k] * s[k];
            }
            for j in 0..n {
                let mut acc = p.gamma_d[j] + ws.adj_i[j] * (1.0 - p.removal_rate(j));
                for k in 0..n {
                    acc += ws.q[k] * p.contact.get(k, j);
                }
                ws.next_i[j] = acc;
            }
            std::mem::swap(&mut ws.adj_s, &mut ws.next_s);
            std::mem::swap(&mut ws.adj_i, &mut ws.next_i);
        }
        eval
    }

    /// Objective and gradient for a flattened control sequence.
    pub fn objective_and_gradient(&self, u: &[f64], weight: f64) -> Result<(Evaluation, Vec<f64>)> {
        self.check_len(u)?;
        let mut grad = vec![0.0; u.len()];
        let eval = self.gradient_with(u, weight, &mut self.workspace(), &mut grad);
        Ok((eval, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ContactMatrix;
    use approx::assert_relative_eq;

    fn two_group() -> (ModelParams, EpidemicState) {
        let params = ModelParams {
            lambda: vec![0.3, 0.5],
            gamma_r: vec![0.4, 0.3],
            gamma_d: vec![0.02, 0.15],
            population: vec![1000.0, 600.0],
            contact: ContactMatrix::from_rows(vec![vec![0.0012, 0.0004], vec![0.0004, 0.0010]]).unwrap(),
        };
        let state = EpidemicState {
            s: vec![900.0, 500.0],
            i: vec![60.0, 40.0],
            r: vec![40.0, 60.0],
            d: vec![0.0, 0.0],
            time_step: 0,
            applied_u: vec![0.0; 2],
        };
        (params, state)
    }

    fn cfg(horizon: usize, v_bar: f64) -> MpcConfig {
        MpcConfig { horizon, v_bar, epsilon: 0.1, ..MpcConfig::with_defaults(2) }
    }

    #[test]
    fn decision_vector_size() {
        let (params, state) = two_group();
        let ocp = build_ocp(&state, &cfg(7, 100.0), &params).unwrap();
        assert_eq!(ocp.n_vars(), 14);
        assert!(ocp.evaluate(&[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn adjoint_gradient_matches_central_differences() {
        let (params, state) = two_group();
        let ocp = build_ocp(&state, &cfg(5, 200.0), &params).unwrap();
        // Mid-range doses away from clamping kinks.
        let u: Vec<f64> = (0..ocp.n_vars()).map(|v| 20.0 + 7.0 * v as f64).collect();
        for weight in [0.0, 1e4] {
            let (_, grad) = ocp.objective_and_gradient(&u, weight).unwrap();
            for v in 0..u.len() {
                let h = 1e-3;
                let mut up = u.clone();
                up[v] += h;
                let mut dn = u.clone();
                dn[v] -= h;
                let fd = (ocp.evaluate(&up, weight).unwrap().objective - ocp.evaluate(&dn, weight).unwrap().objective)
                    / (2.0 * h);
                assert_relative_eq!(grad[v], fd, epsilon = 1e-9, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn predicted_cost_matches_definition() {
        let (params, state) = two_group();
        let ocp = build_ocp(&state, &cfg(4, 150.0), &params).unwrap();
        let u = vec![30.0; ocp.n_vars()];
        let pred = ocp.predict(&u).unwrap();
        let eval = ocp.evaluate(&u, 0.0).unwrap();
        let mut expected = 0.0;
        for x in &pred[..4] {
            expected += dot(&params.gamma_d, &x.i);
        }
        expected += dot(&params.gamma_d, &pred[4].i) / 0.1;
        assert_relative_eq!(eval.cost, expected, max_relative = 1e-14);
    }
}
