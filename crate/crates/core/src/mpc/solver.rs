//! Multi-start spectral projected gradient on the flattened dose sequence.
//!
//! Each start runs a nonmonotone projected gradient method with
//! Barzilai-Borwein steps. Every daily block of doses is projected onto
//! `{u >= 0, Σu <= v̄}`. Starts are fixed (zero, warm start, uniform,
//! proportional to susceptibles, one vertex per group) plus a configurable
//! number of seeded random ones. The winner is the feasible candidate with the
//! lowest cost, or the lowest penalized objective if none is feasible; ties go
//! to the earlier start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::is_disease_free;
use crate::error::{Error, Result};
use crate::model::ControlVector;
use crate::mpc::config::TerminalMode;
use crate::mpc::ocp::{Evaluation, OcpProblem, SiState, Workspace};

/// Nonmonotone window for the Armijo test.
const HISTORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const MAX_STEP: f64 = 1e30;
/// Iterations without relative progress beyond `cost_tolerance` before a start stops.
const STALL_LIMIT: usize = 10;
/// Penalty escalation factor in hard mode.
const ESCALATION: f64 = 100.0;
const HARD_ROUNDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub controls: Vec<ControlVector>,
    pub predicted: Vec<SiState>,
    /// `V_N^0`: stage plus terminal cost of `controls`, without any penalty.
    pub optimal_value: f64,
    pub feasible: bool,
    pub terminal_slack: f64,
    /// Projected gradient iterations summed over all starts.
    pub iterations: usize,
    /// Penalized objective at the penalty weight that produced the solution.
    pub objective: f64,
    /// Index of the winning start (0 = zero controls, 1 = warm start if given).
    pub start_index: usize,
}

/// Euclidean projection of `v` onto `{x >= 0, Σx <= cap}`, in place.
///
/// The result satisfies `Σx <= cap` exactly in floating point.
pub fn project_capped_simplex(v: &mut [f64], cap: f64) {
    for x in v.iter_mut() {
        // NaN maps to zero as well.
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
    let sum: f64 = v.iter().sum();
    if sum > cap {
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut theta = 0.0;
        for (idx, &x) in sorted.iter().enumerate() {
            acc += x;
            let t = (acc - cap) / (idx + 1) as f64;
            if x - t > 0.0 {
                theta = t;
            } else {
                break;
            }
        }
        for x in v.iter_mut() {
            *x = (*x - theta).max(0.0);
        }
    }
    enforce_cap(v, cap);
}

/// Removes rounding excess so that `Σx <= cap` holds exactly.
fn enforce_cap(v: &mut [f64], cap: f64) {
    let mut sum: f64 = v.iter().sum();
    while sum > cap {
        let scale = cap / sum;
        for x in v.iter_mut() {
            *x = (*x * scale).next_down().max(0.0);
        }
        sum = v.iter().sum();
    }
}

fn project_blocks(x: &mut [f64], n: usize, cap: f64) {
    for block in x.chunks_mut(n) {
        project_capped_simplex(block, cap);
    }
}

#[derive(Clone, Debug)]
struct Candidate {
    start: usize,
    x: Vec<f64>,
    eval: Evaluation,
}

struct RunOutcome {
    last: Candidate,
    best_feasible: Option<Candidate>,
    iterations: usize,
}

fn check_finite(eval: &Evaluation) -> Result<()> {
    if eval.objective.is_finite() && eval.cost.is_finite() {
        Ok(())
    } else {
        Err(Error::Solver {
            day: None,
            message: format!(
                "non-finite objective (cost {}, slack {}) during projected gradient iterations",
                eval.cost, eval.slack
            ),
        })
    }
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One projected gradient run from `x0`.
fn spg(problem: &OcpProblem, start: usize, x0: Vec<f64>, weight: f64, ws: &mut Workspace) -> Result<RunOutcome> {
    let n = problem.n_groups();
    let cap = problem.v_bar();
    let settings = problem.settings();
    let len = x0.len();

    let mut x = x0;
    project_blocks(&mut x, n, cap);
    let mut grad = vec![0.0; len];
    let mut eval = problem.gradient_with(&x, weight, ws, &mut grad);
    check_finite(&eval)?;

    let mut best_feasible = eval.feasible.then(|| Candidate { start, x: x.clone(), eval });
    let mut history = vec![eval.objective];
    let mut trial = vec![0.0; len];
    let mut dir = vec![0.0; len];
    let mut new_grad = vec![0.0; len];

    // Initial step from the size of the projected gradient.
    let mut alpha = {
        for v in 0..len {
            trial[v] = x[v] - grad[v];
        }
        project_blocks(&mut trial, n, cap);
        let pg = inf_norm_diff(&trial, &x);
        if pg > 0.0 {
            (1.0 / pg).clamp(MIN_STEP, MAX_STEP)
        } else {
            1.0
        }
    };

    let mut iterations = 0;
    let mut stall = 0;
    let mut best_seen = eval.objective;
    while iterations < settings.max_iterations {
        iterations += 1;
        for v in 0..len {
            trial[v] = x[v] - alpha * grad[v];
        }
        project_blocks(&mut trial, n, cap);
        for v in 0..len {
            dir[v] = trial[v] - x[v];
        }
        if dir.iter().fold(0.0f64, |m, d| m.max(d.abs())) <= settings.step_tolerance * cap {
            break;
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            break;
        }

        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let accepted = loop {
            for v in 0..len {
                trial[v] = x[v] + t * dir[v];
            }
            project_blocks(&mut trial, n, cap);
            let e = problem.evaluate_with(&trial, weight, ws);
            check_finite(&e)?;
            if e.objective <= reference + ARMIJO * t * slope {
                break true;
            }
            // Safeguarded quadratic interpolation.
            let denom = 2.0 * (e.objective - eval.objective - t * slope);
            let t_q = if denom > 0.0 { -slope * t * t / denom } else { 0.5 * t };
            t = t_q.clamp(0.1 * t, 0.5 * t);
            if t * dir.iter().fold(0.0f64, |m, d| m.max(d.abs())) <= f64::EPSILON * cap {
                break false;
            }
        };
        if !accepted {
            break;
        }

        let new_eval = problem.gradient_with(&trial, weight, ws, &mut new_grad);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for v in 0..len {
            let s = trial[v] - x[v];
            let y = new_grad[v] - grad[v];
            ss += s * s;
            sy += s * y;
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(MIN_STEP, MAX_STEP) } else { MAX_STEP };

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut new_grad);
        eval = new_eval;

        if eval.feasible && best_feasible.as_ref().is_none_or(|b| eval.cost < b.eval.cost) {
            best_feasible = Some(Candidate { start, x: x.clone(), eval });
        }
        if history.len() == HISTORY {
            history.remove(0);
        }
        history.push(eval.objective);

        if eval.objective < best_seen - settings.cost_tolerance * best_seen.abs() {
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                break;
            }
        }
        best_seen = best_seen.min(eval.objective);
    }

    Ok(RunOutcome { last: Candidate { start, x, eval }, best_feasible, iterations })
}

fn flatten(seq: &[ControlVector], n: usize, horizon: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * horizon];
    for (t, u) in seq.iter().take(horizon).enumerate() {
        for (k, &v) in u.iter().take(n).enumerate() {
            x[t * n + k] = v;
        }
    }
    x
}

fn starting_points(problem: &OcpProblem, warm_start: Option<&[ControlVector]>) -> Vec<Vec<f64>> {
    let n = problem.n_groups();
    let horizon = problem.horizon();
    let cap = problem.v_bar();
    let repeat = |day: &[f64]| -> Vec<f64> { day.iter().copied().cycle().take(n * horizon).collect() };

    let mut starts = vec![vec![0.0; n * horizon]];
    if let Some(seq) = warm_start {
        starts.push(flatten(seq, n, horizon));
    }
    starts.push(repeat(&vec![cap / n as f64; n]));
    let s0 = problem.initial().s;
    let s_total: f64 = s0.iter().sum();
    if s_total > 0.0 {
        starts.push(repeat(&s0.iter().map(|s| cap * s / s_total).collect::<Vec<_>>()));
    }
    for k in 0..n {
        let mut day = vec![0.0; n];
        day[k] = cap;
        starts.push(repeat(&day));
    }
    let seed = problem.settings().rng_seed;
    for r in 0..problem.settings().restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let x = (0..n * horizon).map(|_| rng.gen::<f64>() * cap / n as f64 * 2.0).collect();
        starts.push(x);
    }
    starts
}

/// Lower is better: feasible beats infeasible, then cost (feasible) or
/// penalized objective (infeasible), then start index.
fn better(a: &Candidate, b: &Candidate) -> bool {
    match (a.eval.feasible, b.eval.feasible) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => (a.eval.cost, a.start) < (b.eval.cost, b.start),
        (false, false) => (a.eval.objective, a.start) < (b.eval.objective, b.start),
    }
}

fn run_starts(
    problem: &OcpProblem,
    starts: &[Vec<f64>],
    weight: f64,
    ws: &mut Workspace,
    iterations: &mut usize,
) -> Result<Candidate> {
    let mut best: Option<Candidate> = None;
    for (idx, x0) in starts.iter().enumerate() {
        let out = spg(problem, idx, x0.clone(), weight, ws)?;
        *iterations += out.iterations;
        for cand in std::iter::once(out.last).chain(out.best_feasible) {
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("at least one start"))
}

/// Solves the problem from the fixed and seeded starts.
///
/// Deterministic for a given problem, warm start and `rng_seed`.
pub fn solve_ocp(problem: &OcpProblem, warm_start: Option<&[ControlVector]>) -> Result<OcpSolution> {
    let n = problem.n_groups();
    let horizon = problem.horizon();
    let settings = problem.settings();
    let mut ws = problem.workspace();
    let mut iterations = 0;

    let best = if is_disease_free(&problem.initial().i) {
        let x = vec![0.0; n * horizon];
        let eval = problem.evaluate_with(&x, settings.penalty_weight, &mut ws);
        Candidate { start: 0, x, eval }
    } else {
        let starts = starting_points(problem, warm_start);
        let mut weight = settings.penalty_weight;
        let mut best = run_starts(problem, &starts, weight, &mut ws, &mut iterations)?;
        if settings.terminal_mode == TerminalMode::Hard {
            let mut round = 1;
            while !best.eval.feasible && round < HARD_ROUNDS {
                weight *= ESCALATION;
                let cand = run_starts(problem, &starts, weight, &mut ws, &mut iterations)?;
                if cand.eval.feasible {
                    best = cand;
                } else {
                    // Compare infeasible candidates at a common weight.
                    let a = problem.evaluate_with(&cand.x, weight, &mut ws);
                    let b = problem.evaluate_with(&best.x, weight, &mut ws);
                    if a.objective < b.objective {
                        best = Candidate { eval: a, ..cand };
                    } else {
                        best.eval = b;
                    }
                }
                round += 1;
            }
        }
        best
    };

    let controls: Vec<ControlVector> = best.x.chunks(n).map(|c| ControlVector(c.to_vec())).collect();
    let predicted = problem.predict(&best.x)?;
    Ok(OcpSolution {
        controls,
        predicted,
        optimal_value: best.eval.cost,
        feasible: best.eval.feasible,
        terminal_slack: best.eval.slack,
        iterations,
        objective: best.eval.objective,
        start_index: best.start,
    })
}
