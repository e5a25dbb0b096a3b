#![allow(dead_code)]

use vaxmpc_core::{initial_state, ContactMatrix, EpidemicState, ModelParams, MpcConfig};

/// Two-group instance small enough to reason about by hand. Raw contacts are
/// reciprocal (5000 * 0.6 = 3000 * 1.0).
pub fn desk_params() -> ModelParams {
    let population = vec![5000.0, 3000.0];
    let raw = [[2.0, 0.6], [1.0, 1.2]];
    ModelParams {
        lambda: vec![0.3, 0.35],
        gamma_r: vec![0.4, 0.3],
        gamma_d: vec![0.01, 0.12],
        contact: ContactMatrix::from_fn(2, |k, j| raw[k][j] / population[j]),
        population,
    }
}

pub fn desk_state() -> EpidemicState {
    initial_state(&desk_params(), &[10.0, 5.0]).unwrap()
}

pub fn desk_config() -> MpcConfig {
    MpcConfig {
        horizon: 10,
        v_bar: 800.0,
        strategy_horizon: 80,
        vaccination_start_day: 5,
        ..MpcConfig::with_defaults(2)
    }
}

/// One group, no spillover terms.
pub fn scalar_params() -> ModelParams {
    ModelParams {
        lambda: vec![0.5],
        gamma_r: vec![0.3],
        gamma_d: vec![0.05],
        population: vec![1000.0],
        contact: ContactMatrix::from_fn(1, |_, _| 0.001),
    }
}

pub fn scalar_state(s: f64, i: f64) -> EpidemicState {
    EpidemicState { s: vec![s], i: vec![i], r: vec![1000.0 - s - i], d: vec![0.0], time_step: 0, applied_u: vec![0.0] }
}

/// Exhaustive search over `levels` equally spaced doses per group and step,
/// keeping only daily allocations within capacity. Returns the lowest
/// penalized objective and its control sequence.
pub fn grid_optimum(problem: &vaxmpc_core::OcpProblem, levels: usize, weight: f64) -> (f64, Vec<f64>) {
    let n = problem.n_groups();
    let cap = problem.v_bar();
    let top = levels - 1;
    let mut days: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        if idx.iter().sum::<usize>() <= top {
            let mut day: Vec<f64> = idx.iter().map(|&a| cap * a as f64 / top as f64).collect();
            vaxmpc_core::mpc::project_capped_simplex(&mut day, cap);
            days.push(day);
        }
        let mut pos = 0;
        while pos < n {
            idx[pos] += 1;
            if idx[pos] <= top {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    let horizon = problem.horizon();
    let mut choice = vec![0usize; horizon];
    let mut best = (f64::INFINITY, Vec::new());
    let mut x = vec![0.0; n * horizon];
    loop {
        for (t, &c) in choice.iter().enumerate() {
            x[t * n..(t + 1) * n].copy_from_slice(&days[c]);
        }
        let f = problem.evaluate(&x, weight).unwrap().objective;
        if f < best.0 {
            best = (f, x.clone());
        }
        let mut pos = 0;
        while pos < horizon {
            choice[pos] += 1;
            if choice[pos] < days.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
        if pos == horizon {
            break;
        }
    }
    best
}

/// Seeded one- or two-group instance with a horizon of two or three days.
pub fn random_instance(seed: u64) -> (ModelParams, EpidemicState, MpcConfig) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = if seed % 2 == 0 { 1 } else { 2 };
    let horizon = if (seed / 2) % 2 == 0 { 2 } else { 3 };
    let population: Vec<f64> = (0..n).map(|_| rng.gen_range(500.0..5000.0)).collect();
    let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.5)).collect();
    let gamma_r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.5)).collect();
    let gamma_d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.005..0.15)).collect();
    let raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.2..1.8)).collect();
    let contact = ContactMatrix::from_fn(n, |k, j| raw[k * n + j] / (n as f64 * population[j]));
    let params = ModelParams { lambda, gamma_r, gamma_d, population, contact };
    let i0: Vec<f64> = params.population.iter().map(|p| p * rng.gen_range(0.01..0.1)).collect();
    let state = initial_state(&params, &i0).unwrap();
    let cfg = MpcConfig {
        horizon,
        v_bar: params.total_population() * rng.gen_range(0.05..0.3),
        ..MpcConfig::with_defaults(n)
    };
    (params, state, cfg)
}
