//! One-shot per-slot solve from a JSON request, for debugging a single
//! decision outside a full run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{CarbonTrace, EnergyModel};
use crate::lyapunov::SlotObjective;
use crate::solvers::{
    solve_budget_greedy, solve_det_double_greedy, solve_exhaustive, solve_rand_double_greedy, GreedyMode,
    Objective, SolverId,
};
use crate::utility::{CoresetUtility, GradientSnapshot, UtilityConfig};

use super::config::PerCenter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    /// One probed gradient per center.
    pub gradients: Vec<Vec<f64>>,
    /// Carbon intensity per center for this slot, kg/kWh.
    pub intensities: Vec<f64>,
    pub static_kwh: PerCenter,
    pub active_kwh: PerCenter,
    pub q: f64,
    pub v: f64,
    #[serde(default = "default_cap")]
    pub gradient_norm_cap: f64,
    /// Defaults to `2 N cap`.
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default = "default_solver")]
    pub solver: SolverId,
    #[serde(default)]
    pub seed: u64,
    /// Slot budget, required by `budget_greedy`.
    #[serde(default)]
    pub budget_kg: Option<f64>,
    #[serde(default)]
    pub greedy_mode: Option<GreedyMode>,
}

fn default_cap() -> f64 {
    10.0
}

fn default_solver() -> SolverId {
    SolverId::Exhaustive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResponse {
    pub selection_bits: String,
    pub selected: Vec<usize>,
    pub objective: f64,
    pub utility: f64,
    pub carbon_kg: f64,
    pub evaluations: u64,
    pub solver: SolverId,
    pub feasible: bool,
    pub min_uv_sum: Option<f64>,
}

pub fn solve_request(req: &SolveRequest) -> Result<SolveResponse> {
    let n = req.gradients.len();
    if req.intensities.len() != n {
        return Err(Error::Config(format!(
            "{} intensities for {n} gradients",
            req.intensities.len()
        )));
    }
    let snap = GradientSnapshot::new(req.gradients.clone(), 0)?;
    let mut ucfg = UtilityConfig::for_cap(n, req.gradient_norm_cap)?;
    if let Some(b) = req.b {
        ucfg.b = b;
    }
    let energy = EnergyModel::new(
        req.static_kwh.expand(n, "static_kwh")?,
        req.active_kwh.expand(n, "active_kwh")?,
    )?;
    let trace = CarbonTrace::new(vec![req.intensities.clone()])?;
    if !(req.q >= 0.0) || !(req.v >= 0.0) {
        return Err(Error::Config("q and v must be >= 0".into()));
    }
    let objective = SlotObjective::new(
        CoresetUtility::new(&snap, &ucfg)?,
        &energy,
        &trace,
        0,
        req.v,
        req.q,
    )?;
    let result = match req.solver {
        SolverId::Exhaustive => solve_exhaustive(&objective)?,
        SolverId::DetDoubleGreedy => solve_det_double_greedy(&objective),
        SolverId::RandDoubleGreedy => solve_rand_double_greedy(&objective, req.seed),
        SolverId::BudgetGreedy => {
            let budget = req
                .budget_kg
                .ok_or_else(|| Error::Config("budget_greedy needs budget_kg".into()))?;
            let util = objective.utility();
            let oracle = (n, |s: &crate::fleet::Selection| util.value(s));
            solve_budget_greedy(
                &oracle,
                objective.incremental_costs(),
                objective.static_floor(),
                budget,
                req.greedy_mode.unwrap_or(GreedyMode::Utility),
            )?
        }
    };
    let sel = &result.selection;
    Ok(SolveResponse {
        selection_bits: sel.to_bit_string(),
        selected: sel.selected().collect(),
        objective: objective.evaluate(sel),
        utility: objective.utility().value(sel),
        carbon_kg: objective.carbon(sel),
        evaluations: result.evaluations,
        solver: result.solver,
        feasible: result.feasible,
        min_uv_sum: result.min_uv_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_request() {
        let req: SolveRequest = serde_json::from_str(
            r#"{"gradients": [[1, 0], [0, 1], [0.9, 0.1]], "intensities": [0.2, 0.5, 0.3],
                "static_kwh": 40, "active_kwh": 760, "q": 0.01, "v": 1.0}"#,
        )
        .unwrap();
        let r = solve_request(&req).unwrap();
        assert_eq!(r.selection_bits.len(), 3);
        let det = solve_request(&SolveRequest {
            solver: SolverId::DetDoubleGreedy,
            ..req.clone()
        })
        .unwrap();
        assert!(det.objective <= r.objective + 1e-12);
        assert!(solve_request(&SolveRequest {
            solver: SolverId::BudgetGreedy,
            ..req.clone()
        })
        .is_err());
        let bg = solve_request(&SolveRequest {
            solver: SolverId::BudgetGreedy,
            budget_kg: Some(400.0),
            ..req
        })
        .unwrap();
        assert!(bg.carbon_kg <= 400.0);
    }
}
