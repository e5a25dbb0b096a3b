//! Discrete-time age-structured SIRD dynamics with a vaccination input.
//!
//! The continuous model this discretizes, for age group `k`:
//!
//! ```text
//! dS_k/dt = -λ_k S_k Σ_j C_kj I_j - u_k
//! dI_k/dt =  λ_k S_k Σ_j C_kj I_j - (γR_k + γD_k) I_k
//! dR_k/dt =  γR_k I_k + u_k
//! dD_k/dt =  γD_k I_k
//! ```
//!
//! It is only documented here. Everything in this crate runs the forward-Euler
//! discretization with a one-day step:
//!
//! ```text
//! S_k(n+1) = S_k(n) - λ_k S_k(n) Σ_j C_kj I_j(n) - u_k(n)
//! I_k(n+1) = I_k(n) + λ_k S_k(n) Σ_j C_kj I_j(n) - (γR_k + γD_k) I_k(n)
//! R_k(n+1) = R_k(n) + γR_k I_k(n) + u_k(n)
//! D_k(n+1) = D_k(n) + γD_k I_k(n)
//! ```
//!
//! Vaccination is applied to the susceptibles left after the day's infections:
//! the effective dose is `min(u_k, max(0, S_k - new_infections_k))`, so a
//! request larger than the remaining pool never drives `S` negative. The dose
//! actually given is kept on the successor state as `applied_u`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the per-group `S + I + R + D = P` check.
pub const CONSERVATION_RTOL: f64 = 1e-9;

/// Square contact matrix stored row-major; `get(k, j)` is the normalized rate
/// at which a member of group `k` meets members of group `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ContactMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ContactMatrix {
    pub fn zeros(n: usize) -> Self {
        ContactMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "contact matrix row {k} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(ContactMatrix { n, data })
    }

    /// Builds an `n x n` matrix from a closure over `(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n {
            for j in 0..n {
                data.push(f(k, j));
            }
        }
        ContactMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.n + j]
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self, rtol: f64) -> bool {
        (0..self.n).all(|k| {
            (0..k).all(|j| {
                let (a, b) = (self.get(k, j), self.get(j, k));
                (a - b).abs() <= rtol * a.abs().max(b.abs())
            })
        })
    }
}

impl TryFrom<Vec<Vec<f64>>> for ContactMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ContactMatrix::from_rows(rows)
    }
}

impl From<ContactMatrix> for Vec<Vec<f64>> {
    fn from(m: ContactMatrix) -> Self {
        m.rows()
    }
}

/// Per-group epidemic rates, group sizes and the normalized contact matrix.
///
/// Fields are public so callers can assemble parameter sets freely; anything
/// that consumes them through the public operations validates dimensions and
/// finiteness. [`ModelParams::validate`] checks the full set of invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-contact transmission probability.
    pub lambda: Vec<f64>,
    /// Recovery rate per day.
    pub gamma_r: Vec<f64>,
    /// Death rate per day.
    pub gamma_d: Vec<f64>,
    /// Group population.
    pub population: Vec<f64>,
    /// Normalized contacts per person per day.
    pub contact: ContactMatrix,
}

impl ModelParams {
    pub fn new(
        lambda: Vec<f64>,
        gamma_r: Vec<f64>,
        gamma_d: Vec<f64>,
        population: Vec<f64>,
        contact: ContactMatrix,
    ) -> Result<Self> {
        let params = ModelParams { lambda, gamma_r, gamma_d, population, contact };
        params.validate()?;
        Ok(params)
    }

    pub fn n_groups(&self) -> usize {
        self.population.len()
    }

    /// `γR_k + γD_k`, the daily outflow fraction from `I_k`.
    #[inline]
    pub fn removal_rate(&self, k: usize) -> f64 {
        self.gamma_r[k] + self.gamma_d[k]
    }

    pub fn total_population(&self) -> f64 {
        self.population.iter().sum()
    }

    /// Dimension and finiteness checks only.
    pub(crate) fn check_shape(&self) -> Result<()> {
        let n = self.n_groups();
        if n == 0 {
            return Err(Error::validation("model must have at least one age group"));
        }
        for (name, v) in [("lambda", &self.lambda), ("gamma_r", &self.gamma_r), ("gamma_d", &self.gamma_d)] {
            if v.len() != n {
                return Err(Error::contract(format!("{name} has {} entries but population has {n}", v.len())));
            }
        }
        if self.contact.n() != n {
            return Err(Error::contract(format!(
                "contact matrix is {0}x{0} but population has {n} groups",
                self.contact.n()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let unit = |name: &str, v: &[f64]| -> Result<()> {
            for (k, &x) in v.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::validation(format!("{name}[{k}] = {x} is outside [0, 1]")));
                }
            }
            Ok(())
        };
        unit("lambda", &self.lambda)?;
        unit("gamma_r", &self.gamma_r)?;
        unit("gamma_d", &self.gamma_d)?;
        for k in 0..self.n_groups() {
            if self.gamma_d[k] <= 0.0 {
                return Err(Error::validation(format!("gamma_d[{k}] must be positive")));
            }
            if self.removal_rate(k) > 1.0 {
                return Err(Error::validation(format!(
                    "gamma_r[{k}] + gamma_d[{k}] = {} exceeds 1",
                    self.removal_rate(k)
                )));
            }
            let p = self.population[k];
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::validation(format!("population[{k}] = {p} must be positive")));
            }
        }
        for k in 0..self.n_groups() {
            for (j, &c) in self.contact.row(k).iter().enumerate() {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::validation(format!("contact[{k}][{j}] = {c} must be finite and nonnegative")));
                }
            }
        }
        Ok(())
    }

    /// Worst-case daily infection fraction `λ_k Σ_j C_kj P_j` for each group.
    /// Values above one mean a single Euler step could infect more
    /// susceptibles than exist.
    pub fn euler_premise(&self) -> Vec<f64> {
        (0..self.n_groups()).map(|k| self.lambda[k] * dot(self.contact.row(k), &self.population)).collect()
    }

    /// Groups whose worst-case infection fraction exceeds one.
    pub fn euler_premise_violations(&self) -> Vec<(usize, f64)> {
        self.euler_premise().into_iter().enumerate().filter(|&(_, x)| x > 1.0).collect()
    }

    /// Logs a warning for every group that violates the Euler premise.
    pub fn warn_on_euler_premise(&self) {
        for (k, x) in self.euler_premise_violations() {
            log::warn!(
                "group {k}: worst-case daily infection fraction {x:.4} exceeds 1; \
                 susceptibles may go negative"
            );
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Persons vaccinated in each age group on one day.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlVector(pub Vec<f64>);

impl ControlVector {
    pub fn zeros(n: usize) -> Self {
        ControlVector(vec![0.0; n])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Checks `u >= 0`, finiteness, and (when given) `Σ u <= v_bar`.
    pub fn validate(&self, n: usize, v_bar: Option<f64>) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::contract(format!("control has {} entries, expected {n}", self.0.len())));
        }
        for (k, &x) in self.0.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::validation(format!("control[{k}] = {x} must be finite and >= 0")));
            }
        }
        if let Some(cap) = v_bar {
            if self.total() > cap {
                return Err(Error::validation(format!("control total {} exceeds daily capacity {cap}", self.total())));
            }
        }
        Ok(())
    }
}

impl Deref for ControlVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ControlVector {
    fn from(v: Vec<f64>) -> Self {
        ControlVector(v)
    }
}

/// Compartment sizes per age group on one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpidemicState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    /// Days since the outbreak began.
    pub time_step: usize,
    /// Dose actually given on the previous day (after clamping to the
    /// available susceptibles). Zero for an initial state.
    pub applied_u: Vec<f64>,
}

impl EpidemicState {
    pub fn n_groups(&self) -> usize {
        self.s.len()
    }

    pub fn total_infected(&self) -> f64 {
        self.i.iter().sum()
    }

    pub fn total_deceased(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn total_susceptible(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn group_total(&self, k: usize) -> f64 {
        self.s[k] + self.i[k] + self.r[k] + self.d[k]
    }

    pub fn total(&self) -> f64 {
        (0..self.n_groups()).map(|k| self.group_total(k)).sum()
    }

    fn check_shape(&self, n: usize) -> Result<()> {
        for (name, v) in [("s", &self.s), ("i", &self.i), ("r", &self.r), ("d", &self.d)] {
            if v.len() != n {
                return Err(Error::contract(format!("state.{name} has {} entries, expected {n}", v.len())));
            }
        }
        Ok(())
    }

    fn check_values(&self) -> Result<()> {
        for (name, v) in [("s", &self.s), ("i", &self.i), ("r", &self.r), ("d", &self.d)] {
            for (k, &x) in v.iter().enumerate() {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::validation(format!("state.{name}[{k}] = {x} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Full invariant check, including per-group conservation against `P`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        self.check_shape(params.n_groups())?;
        self.check_values()?;
        for (k, &p) in params.population.iter().enumerate() {
            let total = self.group_total(k);
            if (total - p).abs() > CONSERVATION_RTOL * p.max(1.0) {
                return Err(Error::validation(format!("group {k}: S+I+R+D = {total} differs from population {p}")));
            }
        }
        Ok(())
    }
}

/// A sequence of states, `states[t + 1] = step(states[t], controls[t])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EpidemicState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> Option<&EpidemicState> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&EpidemicState> {
        self.states.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EpidemicState> {
        self.states.iter()
    }
}

impl Deref for Trajectory {
    type Target = [EpidemicState];

    fn deref(&self) -> &[EpidemicState] {
        &self.states
    }
}

/// `Σ_j C_kj I_j` for every `k`.
#[inline]
pub(crate) fn force_of_infection(params: &ModelParams, i: &[f64], out: &mut [f64]) {
    for (k, f) in out.iter_mut().enumerate() {
        *f = dot(params.contact.row(k), i);
    }
}

/// Susceptible/infected update shared by the plant and the MPC predictor so
/// both produce bitwise identical `(S, I)` paths.
///
/// `force` must hold `Σ_j C_kj i_j`. Writes the successor into `s_next` and
/// `i_next` and the effective dose into `applied`.
#[inline]
pub(crate) fn advance_si(
    params: &ModelParams,
    s: &[f64],
    i: &[f64],
    u: &[f64],
    force: &[f64],
    s_next: &mut [f64],
    i_next: &mut [f64],
    applied: &mut [f64],
) {
    for k in 0..s.len() {
        let infections = params.lambda[k] * s[k] * force[k];
        let available = s[k] - infections;
        let dose = u[k].min(available.max(0.0));
        s_next[k] = available - dose;
        i_next[k] = i[k] + infections - params.removal_rate(k) * i[k];
        applied[k] = dose;
    }
}

/// Advances the state by one day.
pub fn step(state: &EpidemicState, u: &ControlVector, params: &ModelParams) -> Result<EpidemicState> {
    params.check_shape()?;
    let n = params.n_groups();
    state.check_shape(n)?;
    state.check_values()?;
    u.validate(n, None)?;

    let mut force = vec![0.0; n];
    force_of_infection(params, &state.i, &mut force);
    let mut s = vec![0.0; n];
    let mut i = vec![0.0; n];
    let mut applied = vec![0.0; n];
    advance_si(params, &state.s, &state.i, u, &force, &mut s, &mut i, &mut applied);

    let r = (0..n).map(|k| state.r[k] + params.gamma_r[k] * state.i[k] + applied[k]).collect();
    let d = (0..n).map(|k| state.d[k] + params.gamma_d[k] * state.i[k]).collect();

    Ok(EpidemicState { s, i, r, d, time_step: state.time_step + 1, applied_u: applied })
}

/// Outbreak start: everyone not initially infected is susceptible.
pub fn initial_state(params: &ModelParams, i0: &[f64]) -> Result<EpidemicState> {
    params.check_shape()?;
    let n = params.n_groups();
    if i0.len() != n {
        return Err(Error::contract(format!("i0 has {} entries, expected {n}", i0.len())));
    }
    for (k, (&x, &p)) in i0.iter().zip(&params.population).enumerate() {
        if !(x.is_finite() && (0.0..=p).contains(&x)) {
            return Err(Error::validation(format!("i0[{k}] = {x} must lie in [0, {p}]")));
        }
    }
    Ok(EpidemicState {
        s: params.population.iter().zip(i0).map(|(p, x)| p - x).collect(),
        i: i0.to_vec(),
        r: vec![0.0; n],
        d: vec![0.0; n],
        time_step: 0,
        applied_u: vec![0.0; n],
    })
}

/// Applies `controls` in order from `state0`.
pub fn rollout(state0: &EpidemicState, controls: &[ControlVector], params: &ModelParams) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(state0.clone());
    for (index, u) in controls.iter().enumerate() {
        let next = step(&states[index], u, params).map_err(|e| Error::Rollout { index, source: Box::new(e) })?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// New infections `λ_k S_k Σ_j C_kj I_j` produced on this day.
pub fn new_infections(state: &EpidemicState, params: &ModelParams) -> Result<Vec<f64>> {
    params.check_shape()?;
    state.check_shape(params.n_groups())?;
    state.check_values()?;
    let mut force = vec![0.0; params.n_groups()];
    force_of_infection(params, &state.i, &mut force);
    Ok((0..params.n_groups()).map(|k| params.lambda[k] * state.s[k] * force[k]).collect())
}
