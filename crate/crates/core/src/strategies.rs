//! Vaccination policies behind one interface.
//!
//! Every policy shares the same two gates: nothing is administered before the
//! vaccination start day, and nothing after the eradication latch fires (all
//! `I_k` strictly below their thresholds). The latch is sticky within a run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{step, ControlVector, EpidemicState, ModelParams, Trajectory};
use crate::mpc::closed_loop::run_closed_loop;
use crate::mpc::config::MpcConfig;
use crate::mpc::ocp::build_ocp;
use crate::mpc::solver::solve_ocp;
use crate::result::{MpcDayRecord, ScenarioResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    None,
    National,
    Mpc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::None, PolicyKind::National, PolicyKind::Mpc];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::National => "national",
            PolicyKind::Mpc => "mpc",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PolicyKind::None),
            "national" => Ok(PolicyKind::National),
            "mpc" => Ok(PolicyKind::Mpc),
            other => Err(Error::validation(format!("unknown policy '{other}', expected one of none, national, mpc"))),
        }
    }
}

pub fn no_vaccination(state: &EpidemicState) -> ControlVector {
    ControlVector::zeros(state.n_groups())
}

/// Oldest-first allocation: fill the oldest group's susceptibles, then spill
/// the remaining capacity to the next younger group. Groups are indexed
/// youngest to oldest.
pub fn national_allocate(state: &EpidemicState, v_bar: f64) -> ControlVector {
    let mut u = vec![0.0; state.n_groups()];
    let mut remaining = v_bar;
    for k in (0..u.len()).rev() {
        if remaining <= 0.0 {
            break;
        }
        let dose = remaining.min(state.s[k].max(0.0));
        u[k] = dose;
        remaining -= dose;
    }
    // The running subtraction can leave the summed doses an ulp above
    // capacity; trim the youngest dosed group.
    let mut u = ControlVector(u);
    if let Some(k) = u.iter().position(|x| *x > 0.0) {
        while u.total() > v_bar && u.0[k] > 0.0 {
            u.0[k] = u.0[k].next_down().max(0.0);
        }
    }
    u
}

/// Every `I_k` strictly below its threshold.
pub fn below_threshold(i: &[f64], threshold: &[f64]) -> bool {
    i.iter().zip(threshold).all(|(x, t)| x < t)
}

/// Control chosen by `policy` at `state` with the start-day and eradication
/// gates applied. The MPC branch solves from scratch, without a warm start.
pub fn apply_policy(
    policy: PolicyKind,
    state: &EpidemicState,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<ControlVector> {
    cfg.validate(params)?;
    if state.time_step < cfg.vaccination_start_day || below_threshold(&state.i, &cfg.eradication_threshold) {
        return Ok(no_vaccination(state));
    }
    match policy {
        PolicyKind::None => Ok(no_vaccination(state)),
        PolicyKind::National => Ok(national_allocate(state, cfg.v_bar)),
        PolicyKind::Mpc => {
            let sol = solve_ocp(&build_ocp(state, cfg, params)?, None)?;
            Ok(sol.controls.into_iter().next().unwrap_or_else(|| no_vaccination(state)))
        }
    }
}

/// Policy decision on an active day, with the solver diagnostics if any.
pub(crate) type Decision = (ControlVector, Option<MpcDayRecord>);

/// Runs days `0..N_v` with the shared gates, asking `decide` for the control
/// on every active day.
pub(crate) fn drive(
    policy: PolicyKind,
    state0: &EpidemicState,
    cfg: &MpcConfig,
    params: &ModelParams,
    mut decide: impl FnMut(usize, &EpidemicState) -> Result<Decision>,
) -> Result<ScenarioResult> {
    params.validate()?;
    cfg.validate(params)?;
    state0.validate(params)?;

    let n = params.n_groups();
    let mut states = Vec::with_capacity(cfg.strategy_horizon + 1);
    let mut controls = Vec::with_capacity(cfg.strategy_horizon);
    let mut mpc_log = Vec::new();
    let mut eradication_day = None;
    states.push(state0.clone());

    for day in 0..=cfg.strategy_horizon {
        let state = &states[day];
        if eradication_day.is_none()
            && day >= cfg.vaccination_start_day
            && below_threshold(&state.i, &cfg.eradication_threshold)
        {
            eradication_day = Some(day);
        }
        if day == cfg.strategy_horizon {
            break;
        }
        let (u, record) = if day < cfg.vaccination_start_day || eradication_day.is_some() {
            (ControlVector::zeros(n), None)
        } else {
            decide(day, state)?
        };
        let next = step(state, &u, params).map_err(|e| Error::Rollout { index: day, source: Box::new(e) })?;
        if let Some(mut rec) = record {
            rec.applied_u = next.applied_u.clone();
            mpc_log.push(rec);
        }
        controls.push(ControlVector(next.applied_u.clone()));
        states.push(next);
    }

    Ok(ScenarioResult {
        policy,
        params: params.clone(),
        config: cfg.clone(),
        trajectory: Trajectory { states },
        controls,
        mpc_log,
        eradication_day,
    })
}

/// Simulates `N_v` days under `policy`.
pub fn simulate(
    policy: PolicyKind,
    state0: &EpidemicState,
    cfg: &MpcConfig,
    params: &ModelParams,
) -> Result<ScenarioResult> {
    match policy {
        PolicyKind::None => drive(policy, state0, cfg, params, |_, s| Ok((no_vaccination(s), None))),
        PolicyKind::National => drive(policy, state0, cfg, params, |_, s| Ok((national_allocate(s, cfg.v_bar), None))),
        PolicyKind::Mpc => run_closed_loop(state0, cfg, params),
    }
}
