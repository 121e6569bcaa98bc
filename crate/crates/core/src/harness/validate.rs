//! Bound validation for completed controller runs, from memory or from the
//! artifacts an experiment wrote to disk.

use std::collections::HashMap;
use std::path::Path;

use crate::controller::{
    full_participation_snapshots, offline_plan, PolicyKind, PolicyRun, PolicySpec, Scenario,
};
use crate::error::{Error, Result};
use crate::fleet::{self, CarbonTrace, EnergyModel, Selection};
use crate::lyapunov::{
    drift_constant, utility_bound, violation_bound, BoundConstants, BoundReport, BoundVariant, ControlParams,
    UtilityBoundCheck,
};
use crate::utility::empirical_divergence;

use super::config::ExperimentConfig;
use super::metrics::{parse_diagnostics, parse_metrics, parse_summary, summarize, SummaryRow};
use super::trace_io::load_trace;

/// Absolute slack for the utility lower-bound comparison.
pub const UTILITY_BOUND_TOLERANCE: f64 = 1e-9;

/// Offline optimum along the full-participation trajectory for one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleArtifact {
    /// Average per-slot utility of the offline plan.
    pub opt_avg: f64,
    pub opt_total_carbon_kg: f64,
    pub grid_slack_kg: f64,
    /// Largest gradient divergence along the full-participation trajectory.
    pub delta_full: f64,
}

impl OracleArtifact {
    pub fn compute(sc: &Scenario) -> Result<Self> {
        let snaps = full_participation_snapshots(sc)?;
        let plan = offline_plan(sc, &snaps)?;
        Ok(Self {
            opt_avg: plan.average_utility(),
            opt_total_carbon_kg: plan.total_carbon_kg,
            grid_slack_kg: plan.grid_slack_kg,
            delta_full: snaps.iter().map(empirical_divergence).fold(0.0, f64::max),
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "source: offline_dp\nopt_avg: {}\nopt_total_carbon_kg: {}\ngrid_slack_kg: {}\ndelta_full: {}\n",
            self.opt_avg, self.opt_total_carbon_kg, self.grid_slack_kg, self.delta_full
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text);
        let get = |k: &str| -> Result<f64> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("oracle artifact lacks {k}")))
        };
        Ok(Self {
            opt_avg: get("opt_avg")?,
            opt_total_carbon_kg: get("opt_total_carbon_kg")?,
            grid_slack_kg: get("grid_slack_kg")?,
            delta_full: get("delta_full")?,
        })
    }
}

pub fn parse_key_values(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Per-slot series and run constants needed by the validators.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub carbon_kg: Vec<f64>,
    pub utility: Vec<f64>,
    pub objective: Vec<f64>,
    pub max_grad_norm: Vec<f64>,
    pub divergence: Vec<f64>,
    pub n_centers: usize,
    pub b: f64,
    pub q0: f64,
    pub v: f64,
    pub budget_kg: f64,
    pub gamma: f64,
    pub c_max: f64,
    pub static_floor_ok: bool,
    pub oracle: Option<OracleArtifact>,
}

impl BoundInputs {
    pub fn from_run(run: &PolicyRun, sc: &Scenario, oracle: Option<OracleArtifact>) -> Result<Self> {
        let r = &run.records;
        Ok(Self {
            carbon_kg: r.iter().map(|x| x.carbon_kg).collect(),
            utility: r.iter().map(|x| x.utility).collect(),
            objective: r.iter().map(|x| x.objective_value).collect(),
            max_grad_norm: r.iter().map(|x| x.max_grad_norm).collect(),
            divergence: r.iter().map(|x| x.divergence).collect(),
            n_centers: sc.n_centers(),
            b: sc.utility.b,
            q0: sc.q0,
            v: sc.params.v,
            budget_kg: sc.params.budget_kg,
            gamma: run.policy.solver.gamma(),
            c_max: sc.all_select_carbon_max()?,
            static_floor_ok: sc.static_floor_ok()?,
            oracle,
        })
    }
}

/// Evaluates both constraint-violation bound forms and, when oracle data is
/// present, the utility lower bound.
pub fn validate_bounds(inp: &BoundInputs) -> Result<BoundReport> {
    let horizon = inp.carbon_kg.len();
    if horizon == 0 {
        return Err(Error::EmptyInput("run has no slots"));
    }
    let t = horizon as f64;
    let share = inp.budget_kg / t;
    let fold_max = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);
    let delta_run = fold_max(&inp.divergence);
    let constants = BoundConstants {
        n_centers: inp.n_centers,
        g: fold_max(&inp.max_grad_norm),
        delta_max: inp.oracle.map_or(delta_run, |o| delta_run.max(o.delta_full)),
        b1: drift_constant(&inp.carbon_kg, share),
        c_max: inp.c_max,
        gamma: inp.gamma,
        b: inp.b,
        q0: inp.q0,
        v: inp.v,
        horizon,
        budget_kg: inp.budget_kg,
    };
    let avg_violation = inp.carbon_kg.iter().sum::<f64>() / t - share;
    let thm1_rhs_main = violation_bound(&constants, BoundVariant::Stated)?;
    let thm1_rhs_appendix = violation_bound(&constants, BoundVariant::Derived)?;
    let avg_utility = inp.utility.iter().sum::<f64>() / t;
    let utility_check = match inp.oracle {
        Some(o) if inp.v > 0.0 => {
            let rhs = utility_bound(&constants, o.opt_avg)?;
            Some(UtilityBoundCheck {
                opt_avg: o.opt_avg,
                rhs,
                pass: avg_utility >= rhs - UTILITY_BOUND_TOLERANCE,
            })
        }
        _ => None,
    };
    Ok(BoundReport {
        avg_violation,
        thm1_rhs_main,
        thm1_rhs_appendix,
        thm1_pass_main: avg_violation <= thm1_rhs_main,
        thm1_pass_appendix: avg_violation <= thm1_rhs_appendix,
        avg_utility,
        constants,
        static_floor_ok: inp.static_floor_ok,
        objective_nonnegative: inp.objective.iter().all(|v| *v >= 0.0),
        utility_check,
    })
}

pub fn all_select_carbon_max(energy: &EnergyModel, trace: &CarbonTrace, horizon: usize) -> Result<f64> {
    let all = Selection::full(energy.n_centers());
    (0..horizon).try_fold(0.0f64, |m, t| {
        Ok(m.max(fleet::carbon_total(energy, trace, t, &all)?))
    })
}

#[derive(Debug, Clone)]
pub struct ArtifactReport {
    pub policy: String,
    pub seed: u64,
    pub report: BoundReport,
}

#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub reports: Vec<ArtifactReport>,
    /// Summary statistics recomputed from slot rows match `summary.csv`.
    pub summary_consistent: bool,
}

impl ValidationOutcome {
    pub fn all_pass(&self) -> bool {
        self.summary_consistent
            && self
                .reports
                .iter()
                .all(|r| r.report.thm1_pass() && r.report.utility_check.as_ref().is_none_or(|t| t.pass))
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
}

/// Recomputes bound reports for every controller run found in an
/// experiment output directory, and re-derives the summary from slot rows.
pub fn validate_artifacts(dir: &Path) -> Result<ValidationOutcome> {
    let cfg = ExperimentConfig::from_json(&read(dir, "config.json")?)?;
    let trace = load_trace(dir.join("trace.csv"))?;
    let energy = cfg.energy_model()?;
    let params: ControlParams = cfg.control_params()?;
    let ucfg = cfg.utility.config(cfg.n_centers)?;
    let metrics = parse_metrics(&read(dir, "metrics.csv")?)?;
    let diags = parse_diagnostics(&read(dir, "slot_diagnostics.csv")?)?;
    let c_max = all_select_carbon_max(&energy, &trace, params.horizon)?;
    let floor_ok = crate::lyapunov::static_floor_violations(&energy, &trace, &params)?.is_empty();

    let mut reports = Vec::new();
    let mut cells: Vec<(String, u64)> = Vec::new();
    for r in &metrics {
        if !cells.iter().any(|(p, s)| *p == r.policy && *s == r.seed) {
            cells.push((r.policy.clone(), r.seed));
        }
    }
    for (label, seed) in cells {
        let spec: PolicySpec = label.parse()?;
        if spec.kind != PolicyKind::Cafe {
            continue;
        }
        let rows: Vec<_> = metrics
            .iter()
            .filter(|r| r.policy == label && r.seed == seed)
            .collect();
        let drows: Vec<_> = diags
            .iter()
            .filter(|r| r.policy == label && r.seed == seed)
            .collect();
        if drows.len() != rows.len() {
            return Err(Error::Config(format!(
                "{label} seed {seed}: {} slot rows but {} diagnostic rows",
                rows.len(),
                drows.len()
            )));
        }
        let oracle_path = dir.join(format!("oracle_{seed}.txt"));
        let oracle = if oracle_path.is_file() {
            Some(OracleArtifact::parse(&read(dir, &format!("oracle_{seed}.txt"))?)?)
        } else {
            None
        };
        let inputs = BoundInputs {
            carbon_kg: rows.iter().map(|r| r.carbon_kg).collect(),
            utility: rows.iter().map(|r| r.utility).collect(),
            objective: rows.iter().map(|r| r.objective).collect(),
            max_grad_norm: drows.iter().map(|r| r.max_grad_norm).collect(),
            divergence: drows.iter().map(|r| r.divergence).collect(),
            n_centers: cfg.n_centers,
            b: ucfg.b,
            q0: cfg.q0,
            v: cfg.v,
            budget_kg: cfg.budget_kg,
            gamma: spec.solver.gamma(),
            c_max,
            static_floor_ok: floor_ok,
            oracle,
        };
        reports.push(ArtifactReport {
            policy: label,
            seed,
            report: validate_bounds(&inputs)?,
        });
    }

    let written = parse_summary(&read(dir, "summary.csv")?)?;
    let derived = summarize(&metrics, cfg.final_window);
    let written_policies: Vec<_> = written
        .iter()
        .filter_map(|r| match r {
            SummaryRow::Policy {
                policy,
                avg_utility,
                avg_carbon_kg,
                total_carbon_kg,
                final_acc,
                ..
            } => Some((
                policy.clone(),
                [*avg_utility, *avg_carbon_kg, *total_carbon_kg, *final_acc],
            )),
            SummaryRow::Error { .. } => None,
        })
        .collect();
    let summary_consistent = written_policies.len() == derived.len()
        && written_policies.iter().zip(&derived).all(|((p, w), (q, s))| {
            p == q && *w == [s.avg_utility, s.avg_carbon_kg, s.total_carbon_kg, s.final_acc]
        });

    Ok(ValidationOutcome {
        reports,
        summary_consistent,
    })
}
