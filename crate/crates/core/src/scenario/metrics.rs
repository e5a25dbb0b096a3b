use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::new_infections;
use crate::result::ScenarioResult;
use crate::strategies::{below_threshold, PolicyKind};

/// Summary numbers for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub policy: PolicyKind,
    /// Deceased at the last simulated day.
    pub deaths_total: f64,
    /// Deceased on the vaccination start day.
    pub deaths_at_start: f64,
    pub deaths_since_vax: f64,
    /// New infections over the whole run plus the initially infected.
    pub cumulative_incidence: f64,
    pub eradication_day: Option<usize>,
    pub vaccines_used: f64,
}

pub fn compute_metrics(run: &ScenarioResult) -> Result<ScenarioMetrics> {
    let states = &run.trajectory.states;
    let last = states.last().ok_or_else(|| Error::contract("run has an empty trajectory"))?;
    let start = run.config.vaccination_start_day.min(states.len() - 1);
    let deaths_total = last.total_deceased();
    let deaths_at_start = states[start].total_deceased();

    let mut cumulative_incidence: f64 = states[0].total_infected();
    for state in &states[..states.len() - 1] {
        cumulative_incidence += new_infections(state, &run.params)?.iter().sum::<f64>();
    }
    let eradication_day = states
        .iter()
        .enumerate()
        .skip(run.config.vaccination_start_day)
        .find(|(_, s)| below_threshold(&s.i, &run.config.eradication_threshold))
        .map(|(day, _)| day);

    Ok(ScenarioMetrics {
        policy: run.policy,
        deaths_total,
        deaths_at_start,
        deaths_since_vax: deaths_total - deaths_at_start,
        cumulative_incidence,
        eradication_day,
        vaccines_used: run.controls.iter().map(|u| u.total()).sum(),
    })
}

/// Relative improvement `(baseline - run) / baseline` per metric; `None` when
/// the baseline is zero or a run never eradicated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub label: String,
    pub deaths_since_vax: Option<f64>,
    pub cumulative_incidence: Option<f64>,
    /// Based on days from the vaccination start to eradication.
    pub eradication: Option<f64>,
    pub vaccines_used: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub metrics: ScenarioMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: String,
    pub vaccination_start_day: usize,
    pub rows: Vec<ComparisonRow>,
    pub improvements: Vec<Improvement>,
}

fn relative(base: f64, x: f64) -> Option<f64> {
    (base != 0.0).then(|| (base - x) / base)
}

/// Tabulates metrics for runs on the same inputs. The baseline is the first
/// national-strategy run, or the first run if there is none.
pub fn compare(runs: &[ScenarioResult]) -> Result<ComparisonReport> {
    let first = runs.first().ok_or_else(|| Error::validation("compare needs at least one run"))?;
    for (idx, run) in runs.iter().enumerate().skip(1) {
        let mismatch = if run.params != first.params {
            Some("model parameters")
        } else if run.trajectory.states.first() != first.trajectory.states.first() {
            Some("initial state")
        } else if run.config.vaccination_start_day != first.config.vaccination_start_day
            || run.config.strategy_horizon != first.config.strategy_horizon
        {
            Some("simulation window")
        } else {
            None
        };
        if let Some(what) = mismatch {
            return Err(Error::contract(format!("run {idx} differs from run 0 in its {what}")));
        }
    }

    let mut labels: Vec<String> = runs.iter().map(|r| r.policy.to_string()).collect();
    for idx in 0..labels.len() {
        if labels.iter().filter(|l| **l == labels[idx]).count() > 1 {
            labels[idx] = format!("{}#{idx}", runs[idx].policy);
        }
    }
    let rows = runs
        .iter()
        .zip(&labels)
        .map(|(run, label)| Ok(ComparisonRow { label: label.clone(), metrics: compute_metrics(run)? }))
        .collect::<Result<Vec<_>>>()?;

    let base_idx = runs.iter().position(|r| r.policy == PolicyKind::National).unwrap_or(0);
    let start = first.config.vaccination_start_day;
    let base = &rows[base_idx].metrics;
    let improvements = rows
        .iter()
        .enumerate()
        .filter(|(idx, _)| *idx != base_idx)
        .map(|(_, row)| {
            let m = &row.metrics;
            Improvement {
                label: row.label.clone(),
                deaths_since_vax: relative(base.deaths_since_vax, m.deaths_since_vax),
                cumulative_incidence: relative(base.cumulative_incidence, m.cumulative_incidence),
                eradication: match (base.eradication_day, m.eradication_day) {
                    (Some(b), Some(x)) => relative((b - start) as f64, (x - start) as f64),
                    _ => None,
                },
                vaccines_used: relative(base.vaccines_used, m.vaccines_used),
            }
        })
        .collect();

    Ok(ComparisonReport { baseline: labels[base_idx].clone(), vaccination_start_day: start, rows, improvements })
}

impl ComparisonReport {
    /// Plain-text table with one row per run and one per improvement.
    pub fn to_text(&self) -> String {
        let fmt_day = |d: Option<usize>| d.map_or_else(|| "-".to_string(), |d| d.to_string());
        let fmt_pct = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", 100.0 * x));
        let mut table: Vec<[String; 6]> = vec![[
            "run".into(),
            "deaths".into(),
            "deaths since vax".into(),
            "infected".into(),
            "eradication day".into(),
            "vaccines".into(),
        ]];
        for row in &self.rows {
            let m = &row.metrics;
            table.push([
                row.label.clone(),
                format!("{:.1}", m.deaths_total),
                format!("{:.1}", m.deaths_since_vax),
                format!("{:.1}", m.cumulative_incidence),
                fmt_day(m.eradication_day),
                format!("{:.0}", m.vaccines_used),
            ]);
        }
        for imp in &self.improvements {
            table.push([
                format!("{} vs {}", imp.label, self.baseline),
                String::new(),
                fmt_pct(imp.deaths_since_vax),
                fmt_pct(imp.cumulative_incidence),
                fmt_pct(imp.eradication),
                fmt_pct(imp.vaccines_used),
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &table {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for c in 1..6 {
                let _ = write!(line, "  {:>w$}", row[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}
