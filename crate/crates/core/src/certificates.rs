//! Numeric checks of the MPC stability machinery.
//!
//! With `Λ = diag(γD_k λ_k)` and `Γ_k = γD_k (γR_k + γD_k - ε)`, the terminal
//! set is
//!
//! ```text
//! X_f = { x : CᵀΛ S <= Γ } ∪ { x : I = 0 }
//! ```
//!
//! Inside the first branch the daily death rate `γDᵀ I` contracts by at least
//! `ε` per day under any admissible input, and since `S` never increases the
//! set is forward invariant. The terminal cost `V_f = γDᵀ I / ε` therefore
//! decreases by at least the stage cost `l = γDᵀ I`.
//!
//! The comparison functions used by the stability argument are linear:
//! `α_1(y) = min_k γD_k · y`, `α_f(y) = max_k γD_k / ε · y` and
//! `α(y) = (ε⁻¹ η^N + Σ_{i<N} η^i) ‖γD‖₁ · y`, where `y = ‖I‖₁` is the
//! distance to the disease-free set. They are not constructed here; the
//! inequalities behind them are sampled instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, step, ControlVector, EpidemicState, ModelParams};
use crate::result::ScenarioResult;
use crate::strategies::PolicyKind;

/// `‖I‖₁` at or below this counts as disease free.
pub const DISEASE_FREE_TOL: f64 = 1e-12;
/// Relative slack on the sampled Lyapunov inequalities.
pub const LYAPUNOV_RTOL: f64 = 1e-9;
/// Relative slack on the death-toll bound and the value descent.
pub const BOUND_RTOL: f64 = 1e-6;
/// Relative slack on the `η` growth bound.
pub const ETA_RTOL: f64 = 1e-12;

/// Caps the violations listed in a report.
const MAX_LISTED: usize = 32;

/// `0 < ε < min_k (γR_k + γD_k)`, both strict.
pub fn epsilon_valid(epsilon: f64, params: &ModelParams) -> bool {
    let min_removal = (0..params.n_groups()).map(|k| params.removal_rate(k)).fold(f64::INFINITY, f64::min);
    epsilon > 0.0 && epsilon < min_removal
}

/// Terminal-set data derived from `ε` and the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub epsilon: f64,
    /// Growth factor from [`compute_eta`].
    pub eta: f64,
    /// Diagonal of `Λ`: `γD_k λ_k`.
    pub lam_mat: Vec<f64>,
    /// `Γ_k = γD_k (γR_k + γD_k - ε)`.
    pub gamma_vec: Vec<f64>,
    /// `CᵀΛ`, row-major; entry `(j, k)` is `C_kj γD_k λ_k`.
    pub ct_lam: Vec<f64>,
}

impl CertificateParams {
    pub fn new(epsilon: f64, params: &ModelParams) -> Result<Self> {
        params.check_shape()?;
        if !epsilon_valid(epsilon, params) {
            return Err(Error::validation(format!(
                "epsilon = {epsilon} must satisfy 0 < epsilon < min_k(gamma_r + gamma_d)"
            )));
        }
        let n = params.n_groups();
        let lam_mat: Vec<f64> = (0..n).map(|k| params.gamma_d[k] * params.lambda[k]).collect();
        let gamma_vec = (0..n).map(|k| params.gamma_d[k] * (params.removal_rate(k) - epsilon)).collect();
        let mut ct_lam = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                ct_lam[j * n + k] = params.contact.get(k, j) * lam_mat[k];
            }
        }
        Ok(CertificateParams { epsilon, eta: compute_eta(params), lam_mat, gamma_vec, ct_lam })
    }

    pub fn n_groups(&self) -> usize {
        self.gamma_vec.len()
    }

    /// `CᵀΛ S`.
    pub fn weighted_susceptibles(&self, s: &[f64]) -> Vec<f64> {
        let n = self.n_groups();
        (0..n).map(|j| dot(&self.ct_lam[j * n..(j + 1) * n], s)).collect()
    }

    /// `max_j ([CᵀΛ S]_j - Γ_j)`; nonpositive inside the first branch of `X_f`.
    pub fn terminal_margin(&self, s: &[f64]) -> f64 {
        self.weighted_susceptibles(s).iter().zip(&self.gamma_vec).map(|(a, g)| a - g).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Hinge violation `Σ_j max(0, [CᵀΛ S]_j - Γ_j)`.
    pub fn terminal_slack(&self, s: &[f64]) -> f64 {
        self.weighted_susceptibles(s).iter().zip(&self.gamma_vec).map(|(a, g)| (a - g).max(0.0)).sum()
    }

    pub fn satisfies_linear_branch(&self, s: &[f64]) -> bool {
        self.weighted_susceptibles(s).iter().zip(&self.gamma_vec).all(|(a, g)| a <= g)
    }

    /// Per-group upper bound on `S_k` over the linear branch, capped at `P_k`.
    pub fn susceptible_box(&self, population: &[f64]) -> Vec<f64> {
        let n = self.n_groups();
        (0..n)
            .map(|k| {
                (0..n)
                    .filter(|&j| self.ct_lam[j * n + k] > 0.0)
                    .map(|j| self.gamma_vec[j] / self.ct_lam[j * n + k])
                    .fold(population[k], f64::min)
            })
            .collect()
    }
}

/// Stage cost `γDᵀ I`: expected deaths on the day.
pub fn stage_cost(i: &[f64], params: &ModelParams) -> f64 {
    dot(&params.gamma_d, i)
}

/// Terminal cost `γDᵀ I / ε`.
pub fn terminal_cost(i: &[f64], epsilon: f64, params: &ModelParams) -> f64 {
    stage_cost(i, params) / epsilon
}

pub fn is_disease_free(i: &[f64]) -> bool {
    i.iter().map(|x| x.abs()).sum::<f64>() <= DISEASE_FREE_TOL
}

pub fn in_terminal_set(state: &EpidemicState, cert: &CertificateParams, _params: &ModelParams) -> bool {
    is_disease_free(&state.i) || cert.satisfies_linear_branch(&state.s)
}

/// Tightest `η` with `γDᵀ I(n+1) <= η γDᵀ I(n)` whenever `0 <= S <= P`.
///
/// Row vector `w = γDᵀ (Id + P_d diag(λ) C - Γ_RD)`, then `η = max_j w_j / γD_j`.
/// Groups with `γD_j = 0` are skipped when `w_j = 0` and make `η` infinite
/// otherwise. With no informative group the identity value 1 is returned.
pub fn compute_eta(params: &ModelParams) -> f64 {
    let n = params.n_groups();
    let mut eta = f64::NEG_INFINITY;
    for j in 0..n {
        let mut w = params.gamma_d[j] * (1.0 - params.removal_rate(j));
        for k in 0..n {
            w += params.gamma_d[k] * params.population[k] * params.lambda[k] * params.contact.get(k, j);
        }
        let ratio = if params.gamma_d[j] > 0.0 {
            w / params.gamma_d[j]
        } else if w > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        eta = eta.max(ratio);
    }
    if eta == f64::NEG_INFINITY {
        1.0
    } else {
        eta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub margin: f64,
}

/// Outcome of a sampled check. `worst_margin <= 0` means every draw passed;
/// its units depend on the check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub n_samples: usize,
    pub n_violations: usize,
    pub worst_margin: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl CheckReport {
    fn from_margins(check: &str, seed: u64, margins: &[f64]) -> Self {
        let mut violations = Vec::new();
        let mut n_violations = 0;
        for (index, &m) in margins.iter().enumerate() {
            // NaN margins count as failures.
            if !(m <= 0.0) {
                n_violations += 1;
                if violations.len() < MAX_LISTED {
                    violations.push(Violation { index, margin: m });
                }
            }
        }
        CheckReport {
            check: check.to_string(),
            n_samples: margins.len(),
            n_violations,
            worst_margin: margins.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            seed,
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.n_violations == 0
    }
}

/// Per-draw generator, independent of thread scheduling.
fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Kind of state produced by [`TerminalSetSampler`] for a draw index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    /// `S` uniform on the linear branch by rejection from its bounding box.
    Interior,
    /// An interior draw scaled onto the boundary `max_j [CᵀΛS - Γ]_j = 0`.
    Boundary,
    /// `I = 0` with arbitrary `S`.
    DiseaseFree,
}

impl SampleKind {
    /// Every 10th draw is a boundary sample and every 20th a disease-free one.
    pub fn for_index(index: usize) -> Self {
        match index % 20 {
            0 => SampleKind::DiseaseFree,
            5 | 15 => SampleKind::Boundary,
            _ => SampleKind::Interior,
        }
    }
}

/// Draws states in `X_f`.
///
/// `S_k` is uniform on `[0, s_max_k]` (the bounding box of the linear branch)
/// and rejected until `CᵀΛS <= Γ`; after `MAX_REJECTIONS` misses the last draw
/// is scaled radially into the set. `I_k` is uniform on `[0, P_k - S_k]` and
/// the rest of the group is split uniformly between `R` and `D`.
pub struct TerminalSetSampler<'a> {
    cert: &'a CertificateParams,
    params: &'a ModelParams,
    s_max: Vec<f64>,
}

const MAX_REJECTIONS: usize = 100_000;

impl<'a> TerminalSetSampler<'a> {
    pub fn new(cert: &'a CertificateParams, params: &'a ModelParams) -> Self {
        let s_max = cert.susceptible_box(&params.population);
        TerminalSetSampler { cert, params, s_max }
    }

    pub fn sample(&self, rng: &mut impl Rng, kind: SampleKind) -> EpidemicState {
        let n = self.params.n_groups();
        let p = &self.params.population;
        let s: Vec<f64> = match kind {
            SampleKind::DiseaseFree => p.iter().map(|&pk| rng.gen::<f64>() * pk).collect(),
            SampleKind::Interior => self.interior_s(rng),
            SampleKind::Boundary => {
                let s = self.interior_s(rng);
                let lhs = self.cert.weighted_susceptibles(&s);
                let t = lhs
                    .iter()
                    .zip(&self.cert.gamma_vec)
                    .filter(|(a, _)| **a > 0.0)
                    .map(|(a, g)| g / a)
                    .fold(f64::INFINITY, f64::min);
                if t.is_finite() {
                    let mut scaled: Vec<f64> = s.iter().zip(p).map(|(x, pk)| (x * t).min(*pk)).collect();
                    // Rounding can land a hair outside; step back one ulp at a time.
                    while !self.cert.satisfies_linear_branch(&scaled) {
                        for x in scaled.iter_mut() {
                            *x = next_down(*x);
                        }
                    }
                    scaled
                } else {
                    s
                }
            }
        };
        let i: Vec<f64> = match kind {
            SampleKind::DiseaseFree => vec![0.0; n],
            _ => (0..n).map(|k| rng.gen::<f64>() * (p[k] - s[k])).collect(),
        };
        let mut r = vec![0.0; n];
        let mut d = vec![0.0; n];
        for k in 0..n {
            let rest = (p[k] - s[k] - i[k]).max(0.0);
            r[k] = rng.gen::<f64>() * rest;
            d[k] = rest - r[k];
        }
        EpidemicState { s, i, r, d, time_step: 0, applied_u: vec![0.0; n] }
    }

    fn interior_s(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut s: Vec<f64> = Vec::new();
        for _ in 0..MAX_REJECTIONS {
            s = self.s_max.iter().map(|&m| rng.gen::<f64>() * m).collect();
            if self.cert.satisfies_linear_branch(&s) {
                return s;
            }
        }
        let worst = self
            .cert
            .weighted_susceptibles(&s)
            .iter()
            .zip(&self.cert.gamma_vec)
            .map(|(a, g)| a / g)
            .fold(0.0, f64::max);
        s.iter().map(|x| x / worst * 0.999).collect()
    }
}

fn next_down(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

/// Random admissible control: a random split of a random fraction of `v_bar`.
/// Every 7th draw is zero and every 11th puts the full capacity on one group.
pub fn random_admissible_control(rng: &mut impl Rng, n: usize, v_bar: f64, index: usize) -> ControlVector {
    if index % 7 == 3 {
        return ControlVector::zeros(n);
    }
    if index % 11 == 4 {
        let mut u = vec![0.0; n];
        u[rng.gen_range(0..n)] = v_bar;
        return ControlVector(u);
    }
    let weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = weights.iter().sum();
    let budget = v_bar * rng.gen::<f64>();
    let mut u: Vec<f64> = weights.iter().map(|w| budget * w / total).collect();
    let sum: f64 = u.iter().sum();
    if sum > v_bar {
        let f = v_bar / sum;
        u.iter_mut().for_each(|x| *x *= f);
    }
    ControlVector(u)
}

/// Signed membership margin used by the invariance check: nonpositive iff the
/// state is in `X_f`.
fn membership_margin(state: &EpidemicState, cert: &CertificateParams) -> f64 {
    let linear = cert.terminal_margin(&state.s);
    if is_disease_free(&state.i) {
        linear.min(0.0)
    } else {
        linear
    }
}

/// Samples states in `X_f` and admissible controls and checks the successor
/// stays in `X_f`.
pub fn check_invariance(
    cert: &CertificateParams,
    params: &ModelParams,
    v_bar: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<CheckReport> {
    params.check_shape()?;
    let sampler = TerminalSetSampler::new(cert, params);
    let n = params.n_groups();
    let margins = (0..samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = draw_rng(rng_seed, index);
            let x = sampler.sample(&mut rng, SampleKind::for_index(index));
            debug_assert!(in_terminal_set(&x, cert, params));
            let u = random_admissible_control(&mut rng, n, v_bar, index);
            let next = step(&x, &u, params)?;
            Ok(membership_margin(&next, cert))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CheckReport::from_margins("terminal_set_invariance", rng_seed, &margins))
}

/// Samples `x ∈ X_f` with `I > 0` and checks, with `u = 0`:
///
/// * `γDᵀI⁺ - γDᵀI <= -ε γDᵀI` (daily deaths contract by `ε`),
/// * `V_f(x⁺) - V_f(x) <= -l(x)`,
/// * a random admissible `u` yields a bitwise identical `I⁺`.
///
/// The reported margin is the worst of the first two, scaled by `γDᵀI`
/// (resp. `V_f(x)`); input dependence counts as a violation with margin `+∞`.
pub fn check_lyapunov_decrease(
    cert: &CertificateParams,
    params: &ModelParams,
    v_bar: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<CheckReport> {
    params.check_shape()?;
    let sampler = TerminalSetSampler::new(cert, params);
    let n = params.n_groups();
    let eps = cert.epsilon;
    let margins = (0..samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = draw_rng(rng_seed, index);
            let kind = match SampleKind::for_index(index) {
                SampleKind::DiseaseFree => SampleKind::Interior,
                k => k,
            };
            let x = sampler.sample(&mut rng, kind);
            let free = step(&x, &ControlVector::zeros(n), params)?;
            let l = stage_cost(&x.i, params);
            if l == 0.0 {
                return Ok(0.0);
            }
            let l_next = stage_cost(&free.i, params);
            let decrease = (l_next - l + eps * l - LYAPUNOV_RTOL * l) / l;
            let vf = terminal_cost(&x.i, eps, params);
            let vf_next = terminal_cost(&free.i, eps, params);
            let vf_decrease = (vf_next - vf + l - LYAPUNOV_RTOL * vf) / vf;

            let u = random_admissible_control(&mut rng, n, v_bar, index);
            let forced = step(&x, &u, params)?;
            let same = forced.i.iter().zip(&free.i).all(|(a, b)| a.to_bits() == b.to_bits());
            Ok(if same { decrease.max(vf_decrease) } else { f64::INFINITY })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CheckReport::from_margins("lyapunov_decrease", rng_seed, &margins))
}

/// Random rollouts from random states with random admissible controls,
/// checking `γDᵀI(n+1) <= η γDᵀI(n)` at every step. One margin per rollout:
/// the worst `(γDᵀI(n+1) - η γDᵀI(n)) / (η γDᵀI(n))` along it, less the
/// relative tolerance.
pub fn check_eta_bound(
    params: &ModelParams,
    eta: f64,
    v_bar: f64,
    rollouts: usize,
    days: usize,
    rng_seed: u64,
) -> Result<CheckReport> {
    params.check_shape()?;
    let n = params.n_groups();
    let margins = (0..rollouts)
        .into_par_iter()
        .map(|index| {
            let mut rng = draw_rng(rng_seed, index);
            let p = &params.population;
            let mut x = {
                let s: Vec<f64> = p.iter().map(|&pk| rng.gen::<f64>() * pk).collect();
                let i: Vec<f64> = (0..n).map(|k| rng.gen::<f64>() * (p[k] - s[k]) * 1e-2).collect();
                let r: Vec<f64> = (0..n).map(|k| p[k] - s[k] - i[k]).collect();
                EpidemicState { s, i, r, d: vec![0.0; n], time_step: 0, applied_u: vec![0.0; n] }
            };
            let mut worst = f64::NEG_INFINITY;
            for day in 0..days {
                let u = random_admissible_control(&mut rng, n, v_bar, index * days + day);
                let next = step(&x, &u, params)?;
                let bound = eta * stage_cost(&x.i, params);
                let lhs = stage_cost(&next.i, params);
                if bound > 0.0 {
                    worst = worst.max((lhs - bound) / bound - ETA_RTOL);
                } else if lhs > 0.0 {
                    worst = f64::INFINITY;
                }
                x = next;
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CheckReport::from_margins("eta_growth_bound", rng_seed, &margins))
}

/// Per-day line of a [`BoundAudit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundStep {
    pub day: usize,
    #[serde(rename = "V_N0")]
    pub v_n0: f64,
    /// Realized `Σ_{m >= day} γDᵀI(m)` up to eradication (or the end of the run).
    pub future_deaths: f64,
    /// Every solve from `day` up to eradication reached the terminal set.
    pub certified: bool,
    /// `(future_deaths - V_N0) / max(V_N0, tiny)`.
    pub margin: f64,
}

/// Audit of the closed-loop death-toll bound and the descent of `V_N^0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    /// Certified days checked.
    pub n_samples: usize,
    pub n_violations: usize,
    /// Worst relative margin over certified days, less the tolerance.
    pub worst_margin: f64,
    pub seed: u64,
    pub n_uncertified: usize,
    pub n_descent_checks: usize,
    pub n_descent_violations: usize,
    pub worst_descent_margin: f64,
    pub steps: Vec<BoundStep>,
}

impl BoundAudit {
    pub fn passed(&self) -> bool {
        self.n_violations == 0 && self.n_descent_violations == 0
    }
}

/// Checks that the optimal value at each MPC day bounds the deaths realized
/// from that day on, and that `V_N^0` is non-increasing between consecutive
/// feasible solves.
///
/// The tail sum runs over the recorded trajectory until the eradication latch
/// (or the last state). A day is certified only if every solve from it up to
/// that point ended in the terminal set; uncertified days are counted but not
/// asserted.
pub fn audit_death_bound(run: &ScenarioResult) -> Result<BoundAudit> {
    if run.policy != PolicyKind::Mpc {
        return Err(Error::contract(format!("death-bound audit needs an MPC run, got policy {}", run.policy)));
    }
    let states = &run.trajectory.states;
    let start = run.config.vaccination_start_day;
    let end = run.eradication_day.unwrap_or(states.len().saturating_sub(1));
    let solve_days = end.saturating_sub(start);
    if run.mpc_log.len() != solve_days {
        return Err(Error::contract(format!(
            "expected {solve_days} MPC records between day {start} and day {end}, found {}",
            run.mpc_log.len()
        )));
    }
    for (offset, rec) in run.mpc_log.iter().enumerate() {
        if rec.day != start + offset {
            return Err(Error::contract(format!(
                "MPC record {offset} is for day {} but day {} was expected",
                rec.day,
                start + offset
            )));
        }
    }

    // Suffix sums of daily deaths over [day, end).
    let mut tail = vec![0.0; end + 1];
    for m in (0..end).rev() {
        tail[m] = tail[m + 1] + stage_cost(&states[m].i, &run.params);
    }
    let mut certified_from = vec![true; run.mpc_log.len() + 1];
    for idx in (0..run.mpc_log.len()).rev() {
        certified_from[idx] = run.mpc_log[idx].feasible && certified_from[idx + 1];
    }

    let mut steps = Vec::with_capacity(run.mpc_log.len());
    let mut margins = Vec::new();
    for (idx, rec) in run.mpc_log.iter().enumerate() {
        let future = tail[rec.day];
        let margin = (future - rec.v_n0) / rec.v_n0.max(f64::MIN_POSITIVE);
        let certified = certified_from[idx];
        if certified {
            margins.push(margin - BOUND_RTOL);
        }
        steps.push(BoundStep { day: rec.day, v_n0: rec.v_n0, future_deaths: future, certified, margin });
    }
    let bound = CheckReport::from_margins("death_bound", run.config.solver.rng_seed, &margins);

    let mut descent = Vec::new();
    for pair in run.mpc_log.windows(2) {
        if pair[0].feasible {
            let (v0, v1) = (pair[0].v_n0, pair[1].v_n0);
            descent.push((v1 - v0) / v0.max(f64::MIN_POSITIVE) - BOUND_RTOL);
        }
    }
    let descent = CheckReport::from_margins("value_descent", run.config.solver.rng_seed, &descent);

    Ok(BoundAudit {
        n_samples: bound.n_samples,
        n_violations: bound.n_violations,
        worst_margin: bound.worst_margin,
        seed: bound.seed,
        n_uncertified: steps.len() - bound.n_samples,
        n_descent_checks: descent.n_samples,
        n_descent_violations: descent.n_violations,
        worst_descent_margin: descent.worst_margin,
        steps,
    })
}
