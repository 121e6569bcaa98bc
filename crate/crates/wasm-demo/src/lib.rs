//! Browser bindings for the controller: a small simulation, a per-slot
//! solver comparison and the violation-bound curve over the initial queue.
//!
//! Each operation takes and returns JSON text so the page needs no glue
//! beyond `JSON.parse`.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use carbonfl_core::controller::PolicyRun;
use carbonfl_core::harness::config::PerCenter;
use carbonfl_core::harness::{
    run_experiment, solve_request, ExperimentConfig, SolveRequest, TraceProfile, TraceSource,
};
use carbonfl_core::lyapunov::{violation_bound, BoundConstants, BoundVariant};
use carbonfl_core::rng::{stream, Purpose};
use carbonfl_core::solvers::SolverId;

use rand::Rng;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateRequest {
    pub n_centers: usize,
    pub horizon: usize,
    pub budget_kg: f64,
    pub v: f64,
    pub q0: f64,
    pub seed: u64,
    pub profile: String,
    pub policies: Vec<String>,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        Self {
            n_centers: 6,
            horizon: 24,
            budget_kg: 32_000.0 * 6.0 * 24.0 / 480.0,
            v: 2.0e5,
            q0: 10.0,
            seed: 0,
            profile: "diurnal".into(),
            policies: vec!["cafe".into(), "smu".into(), "amn".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicySeries {
    pub policy: String,
    pub cumulative_carbon_kg: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub queue: Vec<f64>,
    /// One bit string per slot.
    pub selections: Vec<String>,
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResponse {
    pub budget_kg: f64,
    /// Intensity per slot and center, kg/kWh.
    pub intensities: Vec<Vec<f64>>,
    pub series: Vec<PolicySeries>,
}

fn series(run: &PolicyRun, window: usize) -> PolicySeries {
    PolicySeries {
        policy: run.policy.label(),
        cumulative_carbon_kg: run.records.iter().map(|r| r.cumulative_carbon_kg).collect(),
        test_accuracy: run.records.iter().map(|r| r.test_accuracy).collect(),
        queue: run.records.iter().map(|r| r.queue_after).collect(),
        selections: run.records.iter().map(|r| r.selection.to_bit_string()).collect(),
        final_accuracy: run.final_accuracy(window),
    }
}

/// Runs the listed policies on one seed of a synthetic scenario.
pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let profile =
        TraceProfile::parse(&req.profile).ok_or_else(|| format!("unknown profile {:?}", req.profile))?;
    let mut cfg = ExperimentConfig {
        n_centers: req.n_centers,
        horizon: req.horizon,
        budget_kg: req.budget_kg,
        v: req.v,
        q0: req.q0,
        seeds: vec![req.seed],
        trace: TraceSource::Synthetic {
            profile,
            seed: req.seed,
        },
        policies: req
            .policies
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_, _>>()
            .map_err(|e: carbonfl_core::Error| e.to_string())?,
        final_window: (req.horizon / 4).max(1),
        workers: 1,
        ..ExperimentConfig::default()
    };
    cfg.task.samples_per_center = 100;
    cfg.task.test_samples = 500;
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    if let Some((cell, err)) = out.failed_cells().next() {
        return Err(format!("{}: {err}", cell.policy.label()));
    }
    let series = cfg
        .policies
        .iter()
        .filter_map(|p| out.run(p, req.seed))
        .map(|r| series(r, cfg.final_window))
        .collect();
    let resp = SimulateResponse {
        budget_kg: cfg.budget_kg,
        intensities: out.trace.rows().to_vec(),
        series,
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareRequest {
    pub n_centers: usize,
    pub dim: usize,
    pub q: f64,
    pub v: f64,
    pub seed: u64,
}

impl Default for CompareRequest {
    fn default() -> Self {
        Self {
            n_centers: 10,
            dim: 5,
            q: 0.002,
            v: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOutcome {
    pub solver: SolverId,
    pub selection_bits: String,
    pub objective: f64,
    pub utility: f64,
    pub carbon_kg: f64,
    pub evaluations: u64,
}

/// Solves one random slot with each unconstrained solver.
pub fn compare_solvers_json(request: &str) -> Result<String, String> {
    let req: CompareRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.n_centers == 0 || req.n_centers > 16 || req.dim == 0 {
        return Err("need 1 <= n_centers <= 16 and dim >= 1".into());
    }
    let mut rng = stream(
        req.seed,
        Purpose::Instance,
        &[req.n_centers as u64, req.dim as u64],
    );
    let gradients: Vec<Vec<f64>> = (0..req.n_centers)
        .map(|_| {
            (0..req.dim)
                .map(|_| rng.random_range(-1.0..1.0) / (req.dim as f64).sqrt())
                .collect()
        })
        .collect();
    let intensities: Vec<f64> = (0..req.n_centers).map(|_| rng.random_range(0.05..0.6)).collect();
    let base = SolveRequest {
        gradients,
        intensities,
        static_kwh: PerCenter::Uniform(40.0),
        active_kwh: PerCenter::Uniform(760.0),
        q: req.q,
        v: req.v,
        gradient_norm_cap: 1.0,
        b: None,
        solver: SolverId::Exhaustive,
        seed: req.seed,
        budget_kg: None,
        greedy_mode: None,
    };
    let outcomes = [
        SolverId::Exhaustive,
        SolverId::DetDoubleGreedy,
        SolverId::RandDoubleGreedy,
    ]
    .into_iter()
    .map(|solver| {
        let r = solve_request(&SolveRequest {
            solver,
            ..base.clone()
        })
        .map_err(|e| e.to_string())?;
        Ok(SolverOutcome {
            solver,
            selection_bits: r.selection_bits,
            objective: r.objective,
            utility: r.utility,
            carbon_kg: r.carbon_kg,
            evaluations: r.evaluations,
        })
    })
    .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&outcomes).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveRequest {
    pub n_centers: usize,
    pub horizon: usize,
    pub gradient_bound: f64,
    pub v: f64,
    pub gamma: f64,
    pub b1: f64,
    /// Initial queue values to evaluate.
    pub q0: Vec<f64>,
}

impl Default for CurveRequest {
    fn default() -> Self {
        Self {
            n_centers: 10,
            horizon: 48,
            gradient_bound: 1.0,
            v: 2.0e5,
            gamma: 1.0,
            b1: 1.0e5,
            q0: (0..=12).map(|k| 10f64.powf(k as f64 / 2.0 - 2.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub q0: f64,
    pub rhs_main: f64,
    pub rhs_appendix: f64,
}

/// Average-violation bound as a function of the initial queue, with the
/// utility offset at its default `2 N G`.
pub fn bound_curve_json(request: &str) -> Result<String, String> {
    let req: CurveRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let n = req.n_centers as f64;
    let points = req
        .q0
        .iter()
        .map(|&q0| {
            let c = BoundConstants {
                n_centers: req.n_centers,
                g: req.gradient_bound,
                delta_max: 0.0,
                b1: req.b1,
                c_max: 0.0,
                gamma: req.gamma,
                b: 2.0 * n * req.gradient_bound,
                q0,
                v: req.v,
                horizon: req.horizon,
                budget_kg: 0.0,
            };
            Ok(CurvePoint {
                q0,
                rhs_main: violation_bound(&c, BoundVariant::Stated).map_err(|e| e.to_string())?,
                rhs_appendix: violation_bound(&c, BoundVariant::Derived).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    simulate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_solvers(request: &str) -> Result<String, JsValue> {
    compare_solvers_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bound_curve(request: &str) -> Result<String, JsValue> {
    bound_curve_json(request).map_err(|e| JsValue::from_str(&e))
}
