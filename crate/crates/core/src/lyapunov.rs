//! Virtual carbon-deficit queue, the drift-plus-penalty per-slot objective,
//! and closed-form bound expressions used to validate completed runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{self, CarbonTrace, EnergyModel, Selection};
use crate::solvers::Objective;
use crate::utility::{CoresetUtility, GradientSnapshot, UtilityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Penalty weight on the utility term.
    pub v: f64,
    /// Total carbon budget H over the horizon, kg.
    pub budget_kg: f64,
    /// Horizon T in slots.
    pub horizon: usize,
}

impl ControlParams {
    pub fn new(v: f64, budget_kg: f64, horizon: usize) -> Result<Self> {
        let p = Self {
            v,
            budget_kg,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 0.0) || !self.v.is_finite() {
            return Err(Error::InvalidParameter(format!("V = {} must be >= 0", self.v)));
        }
        if !(self.budget_kg > 0.0) || !self.budget_kg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "budget H = {} must be > 0",
                self.budget_kg
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon T must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-slot share H/T.
    pub fn slot_budget(&self) -> f64 {
        self.budget_kg / self.horizon as f64
    }
}

/// Slots whose static floor exceeds H/T, i.e. where the budget cannot
/// even cover idle consumption.
pub fn static_floor_violations(
    energy: &EnergyModel,
    trace: &CarbonTrace,
    params: &ControlParams,
) -> Result<Vec<usize>> {
    let share = params.slot_budget();
    let mut bad = Vec::new();
    for t in 0..params.horizon {
        if fleet::static_floor(energy, trace, t)? > share {
            bad.push(t);
        }
    }
    Ok(bad)
}

/// `q <- max(0, c - H/T + q)`.
pub fn queue_step(q: f64, carbon_kg: f64, slot_budget: f64) -> f64 {
    (carbon_kg - slot_budget + q).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueue {
    q: f64,
    q0: f64,
    history: Vec<f64>,
}

impl VirtualQueue {
    pub fn new(q0: f64) -> Result<Self> {
        if !(q0 >= 0.0) || !q0.is_finite() {
            return Err(Error::InvalidParameter(format!("q0 = {q0} must be >= 0")));
        }
        Ok(Self {
            q: q0,
            q0,
            history: vec![q0],
        })
    }

    pub fn value(&self) -> f64 {
        self.q
    }

    pub fn initial(&self) -> f64 {
        self.q0
    }

    /// Queue values from `q0` through the latest slot.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Advances one slot after its realized carbon is known.
    pub fn update(&mut self, carbon_kg: f64, params: &ControlParams) -> Result<f64> {
        if !(carbon_kg >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slot carbon {carbon_kg} must be >= 0"
            )));
        }
        self.q = queue_step(self.q, carbon_kg, params.slot_budget());
        self.history.push(self.q);
        Ok(self.q)
    }
}

/// Drift-plus-penalty objective `V U(a) - q c(a)` for one slot.
#[derive(Debug, Clone)]
pub struct SlotObjective {
    utility: CoresetUtility,
    static_floor: f64,
    incremental: Vec<f64>,
    v: f64,
    q: f64,
}

impl SlotObjective {
    pub fn new(
        utility: CoresetUtility,
        energy: &EnergyModel,
        trace: &CarbonTrace,
        t: usize,
        v: f64,
        q: f64,
    ) -> Result<Self> {
        if utility.n_centers() != energy.n_centers() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot has {} centers, energy model {}",
                utility.n_centers(),
                energy.n_centers()
            )));
        }
        Ok(Self {
            utility,
            static_floor: fleet::static_floor(energy, trace, t)?,
            incremental: fleet::incremental_costs(energy, trace, t)?,
            v,
            q,
        })
    }

    pub fn utility(&self) -> &CoresetUtility {
        &self.utility
    }

    pub fn carbon(&self, selection: &Selection) -> f64 {
        self.static_floor + selection.selected().map(|i| self.incremental[i]).sum::<f64>()
    }

    pub fn incremental_costs(&self) -> &[f64] {
        &self.incremental
    }

    pub fn static_floor(&self) -> f64 {
        self.static_floor
    }
}

impl Objective for SlotObjective {
    fn n_centers(&self) -> usize {
        self.utility.n_centers()
    }

    fn evaluate(&self, selection: &Selection) -> f64 {
        self.v * self.utility.value(selection) - self.q * self.carbon(selection)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn per_slot_objective(
    snapshot: &GradientSnapshot,
    selection: &Selection,
    q: f64,
    t: usize,
    params: &ControlParams,
    energy: &EnergyModel,
    trace: &CarbonTrace,
    cfg: &UtilityConfig,
) -> Result<f64> {
    if selection.len() != snapshot.n_centers() {
        return Err(Error::DimensionMismatch(format!(
            "selection over {} centers, snapshot has {}",
            selection.len(),
            snapshot.n_centers()
        )));
    }
    let u = CoresetUtility::new(snapshot, cfg)?;
    let obj = SlotObjective::new(u, energy, trace, t, params.v, q)?;
    Ok(obj.evaluate(selection))
}

/// Which constant enters the constraint-violation bound: `Stated` uses
/// `b + N G`, `Derived` uses `(gamma - 1) b + 2 N G`. They fill the
/// `_main` and `_appendix` report columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundVariant {
    Stated,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n_centers: usize,
    /// Gradient norm bound G.
    pub g: f64,
    pub delta_max: f64,
    pub b1: f64,
    pub c_max: f64,
    pub gamma: f64,
    pub b: f64,
    pub q0: f64,
    pub v: f64,
    pub horizon: usize,
    pub budget_kg: f64,
}

/// Tightest valid drift constant `1/2 max_t (c_t - H/T)^2` for a realized run.
pub fn drift_constant(carbon: &[f64], slot_budget: f64) -> f64 {
    carbon
        .iter()
        .map(|c| 0.5 * (c - slot_budget).powi(2))
        .fold(0.0, f64::max)
}

/// Upper bound on average per-slot constraint violation:
/// `sqrt(q0^2/T^2 + (2V/gamma * K + 2 B1)/T) - q0/T`.
pub fn violation_bound(c: &BoundConstants, variant: BoundVariant) -> Result<f64> {
    if c.gamma < 1.0 || c.horizon == 0 || c.q0 < 0.0 || c.b1 < 0.0 {
        return Err(Error::InvalidParameter(
            "bound requires gamma >= 1, T >= 1, q0 >= 0, B1 >= 0".into(),
        ));
    }
    let n = c.n_centers as f64;
    let t = c.horizon as f64;
    let k = match variant {
        BoundVariant::Stated => c.b + n * c.g,
        BoundVariant::Derived => (c.gamma - 1.0) * c.b + 2.0 * n * c.g,
    };
    let x = (2.0 * c.v / c.gamma * k + 2.0 * c.b1) / t;
    let a = c.q0 / t;
    if x < -a * a {
        return Err(Error::InvalidParameter("negative square-root argument".into()));
    }
    // sqrt(a^2 + x) - a, rearranged to avoid cancellation at large q0.
    let root = (a * a + x).sqrt();
    if root + a == 0.0 {
        return Ok(0.0);
    }
    Ok(x / (root + a))
}

/// Lower bound on the realized average utility given the offline optimum
/// `opt_avg` (average per-slot utility of the offline plan).
pub fn utility_bound(c: &BoundConstants, opt_avg: f64) -> Result<f64> {
    if !(c.v > 0.0) || c.gamma < 1.0 || c.horizon == 0 {
        return Err(Error::InvalidParameter(
            "bound requires V > 0, gamma >= 1, T >= 1".into(),
        ));
    }
    let n = c.n_centers as f64;
    let t = c.horizon as f64;
    let g1 = 4.0 / c.gamma * n * c.delta_max;
    let g2 = (c.q0 * c.c_max / c.gamma + c.q0 * c.q0 / (2.0 * t)) / c.v;
    let g3 = ((t * c.c_max - c.budget_kg) * c.c_max / c.gamma + c.b1) / c.v;
    Ok(opt_avg / c.gamma - g1 - g2 - g3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityBoundCheck {
    pub opt_avg: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub avg_violation: f64,
    pub thm1_rhs_main: f64,
    pub thm1_rhs_appendix: f64,
    pub thm1_pass_main: bool,
    pub thm1_pass_appendix: bool,
    pub avg_utility: f64,
    pub constants: BoundConstants,
    pub static_floor_ok: bool,
    pub objective_nonnegative: bool,
    pub utility_check: Option<UtilityBoundCheck>,
}

impl BoundReport {
    /// Pass against the looser of the two bound forms.
    pub fn thm1_pass(&self) -> bool {
        self.thm1_pass_main || self.thm1_pass_appendix
    }

    pub fn to_text(&self) -> String {
        let c = &self.constants;
        let mut lines = vec![
            format!("avg_violation_kg: {}", self.avg_violation),
            format!("thm1_rhs_main: {}", self.thm1_rhs_main),
            format!("thm1_rhs_appendix: {}", self.thm1_rhs_appendix),
            format!("thm1_pass_main: {}", self.thm1_pass_main),
            format!("thm1_pass_appendix: {}", self.thm1_pass_appendix),
            format!("thm1_pass: {}", self.thm1_pass()),
            format!("avg_utility: {}", self.avg_utility),
            format!("static_floor_ok: {}", self.static_floor_ok),
            format!("objective_nonnegative: {}", self.objective_nonnegative),
            format!("n_centers: {}", c.n_centers),
            format!("g: {}", c.g),
            format!("delta_max: {}", c.delta_max),
            format!("b1: {}", c.b1),
            format!("c_max_kg: {}", c.c_max),
            format!("gamma: {}", c.gamma),
            format!("b: {}", c.b),
            format!("q0: {}", c.q0),
            format!("v: {}", c.v),
            format!("horizon: {}", c.horizon),
            format!("budget_kg: {}", c.budget_kg),
        ];
        match &self.utility_check {
            Some(t2) => {
                lines.push(format!("utility_opt_avg: {}", t2.opt_avg));
                lines.push(format!("utility_rhs: {}", t2.rhs));
                lines.push(format!("utility_pass: {}", t2.pass));
            }
            None => lines.push("utility_bound: skipped".to_string()),
        }
        lines.join("\n") + "\n"
    }
}
