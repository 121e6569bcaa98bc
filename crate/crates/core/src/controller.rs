//! Slot-by-slot policy execution: the queue-driven controller, the myopic
//! budget-splitting baselines, the two single-objective extremes, and the
//! offline planner replayed as a policy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{
    full_participation_trajectory, loss, probe_snapshot, run_local_round, slot_start_models, FederatedData,
    ModelState, TrainConfig,
};
use crate::fleet::{self, CarbonTrace, EnergyModel, Selection};
use crate::lyapunov::{static_floor_violations, ControlParams, SlotObjective, VirtualQueue};
use crate::rng::{derive_seed, Purpose};
use crate::solvers::{
    enumerate_candidates, solve_budget_greedy, solve_det_double_greedy, solve_exhaustive,
    solve_offline_oracle, solve_rand_double_greedy, GreedyMode, Objective, OfflinePlan, SolverId,
    ORACLE_LIMIT,
};
use crate::utility::{empirical_divergence, CoresetUtility, GradientSnapshot, UtilityConfig};

/// Cells in the offline planner's budget grid (grid step `H / OFFLINE_GRID_CELLS`).
pub const OFFLINE_GRID_CELLS: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Cafe,
    Smu,
    Smn,
    Amu,
    Amn,
    FixedKUtility,
    CarbonOnlyK,
    OfflineOracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Cafe,
        PolicyKind::Smu,
        PolicyKind::Smn,
        PolicyKind::Amu,
        PolicyKind::Amn,
        PolicyKind::FixedKUtility,
        PolicyKind::CarbonOnlyK,
        PolicyKind::OfflineOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Cafe => "cafe",
            PolicyKind::Smu => "smu",
            PolicyKind::Smn => "smn",
            PolicyKind::Amu => "amu",
            PolicyKind::Amn => "amn",
            PolicyKind::FixedKUtility => "fixed_k_utility",
            PolicyKind::CarbonOnlyK => "carbon_only_k",
            PolicyKind::OfflineOracle => "offline_oracle",
        }
    }

    fn takes_k(self) -> bool {
        matches!(self, PolicyKind::FixedKUtility | PolicyKind::CarbonOnlyK)
    }
}

/// A policy with its parameters. Written as `cafe`, `cafe:det_double_greedy`,
/// `smu`, `fixed_k_utility:4`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub solver: SolverId,
    pub k: Option<usize>,
}

impl PolicySpec {
    pub fn cafe(solver: SolverId) -> Self {
        Self {
            kind: PolicyKind::Cafe,
            solver,
            k: None,
        }
    }

    pub fn simple(kind: PolicyKind) -> Result<Self> {
        let spec = Self {
            kind,
            solver: SolverId::Exhaustive,
            k: None,
        };
        spec.validate(usize::MAX)?;
        Ok(spec)
    }

    pub fn with_k(kind: PolicyKind, k: usize) -> Result<Self> {
        let spec = Self {
            kind,
            solver: SolverId::Exhaustive,
            k: Some(k),
        };
        spec.validate(usize::MAX)?;
        Ok(spec)
    }

    pub fn validate(&self, n_centers: usize) -> Result<()> {
        match (self.kind.takes_k(), self.k) {
            (true, None) => Err(Error::Config(format!("policy {} needs k", self.kind.name()))),
            (false, Some(_)) => Err(Error::Config(format!(
                "policy {} does not take k",
                self.kind.name()
            ))),
            (true, Some(k)) if k == 0 || k > n_centers => {
                Err(Error::Config(format!("k = {k} out of range 1..={n_centers}")))
            }
            _ if self.kind == PolicyKind::Cafe && self.solver == SolverId::BudgetGreedy => {
                Err(Error::Config("cafe needs an unconstrained solver".into()))
            }
            _ => Ok(()),
        }
    }

    /// Label used in file names and CSV rows.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.k) {
            (PolicyKind::Cafe, _) if self.solver != SolverId::Exhaustive => {
                write!(f, "cafe:{}", self.solver.name())
            }
            (kind, Some(k)) => write!(f, "{}:{k}", kind.name()),
            (kind, None) => f.write_str(kind.name()),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let kind = PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == head)
            .ok_or_else(|| Error::Config(format!("unknown policy {head:?}")))?;
        let mut spec = Self {
            kind,
            solver: SolverId::Exhaustive,
            k: None,
        };
        match (kind, arg) {
            (PolicyKind::Cafe, Some(a)) => {
                spec.solver =
                    SolverId::parse(a).ok_or_else(|| Error::Config(format!("unknown solver {a:?}")))?;
            }
            (k, Some(a)) if k.takes_k() => {
                spec.k = Some(a.parse().map_err(|_| Error::Config(format!("bad k {a:?}")))?);
            }
            (_, Some(a)) => {
                return Err(Error::Config(format!(
                    "policy {head} takes no argument, got {a:?}"
                )))
            }
            (_, None) => {}
        }
        spec.validate(usize::MAX)?;
        Ok(spec)
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

/// Everything a policy run needs besides the policy itself.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub data: FederatedData,
    pub energy: EnergyModel,
    pub trace: CarbonTrace,
    pub params: ControlParams,
    pub q0: f64,
    pub train: TrainConfig,
    pub utility: UtilityConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn n_centers(&self) -> usize {
        self.energy.n_centers()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_centers();
        self.params.validate()?;
        if self.data.n_centers() != n || self.trace.n_centers() != n {
            return Err(Error::DimensionMismatch(format!(
                "energy model has {n} centers, data {}, trace {}",
                self.data.n_centers(),
                self.trace.n_centers()
            )));
        }
        if self.trace.horizon() < self.params.horizon {
            return Err(Error::DimensionMismatch(format!(
                "trace covers {} slots, horizon is {}",
                self.trace.horizon(),
                self.params.horizon
            )));
        }
        if !(self.q0 >= 0.0) || !self.q0.is_finite() {
            return Err(Error::InvalidParameter(format!("q0 = {} must be >= 0", self.q0)));
        }
        self.utility.validate(n)?;
        let min_samples = self.data.centers.iter().map(|d| d.len()).min().unwrap_or(0);
        self.train.validate(min_samples)
    }

    /// Largest per-slot carbon of the all-select decision over the horizon.
    pub fn all_select_carbon_max(&self) -> Result<f64> {
        let all = Selection::full(self.n_centers());
        let mut m: f64 = 0.0;
        for t in 0..self.params.horizon {
            m = m.max(fleet::carbon_total(&self.energy, &self.trace, t, &all)?);
        }
        Ok(m)
    }

    /// True when every slot's static floor fits in `H/T`.
    pub fn static_floor_ok(&self) -> Result<bool> {
        Ok(static_floor_violations(&self.energy, &self.trace, &self.params)?.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub selection: Selection,
    /// Coreset utility of the selection under this run's probed gradients.
    pub utility: f64,
    pub carbon_kg: f64,
    pub cumulative_carbon_kg: f64,
    pub queue_before: f64,
    pub queue_after: f64,
    /// `V U - q c` with `q` the queue before the slot.
    pub objective_value: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub max_grad_norm: f64,
    pub divergence: f64,
    /// Per-slot budget for budgeted baselines.
    pub slot_budget_kg: Option<f64>,
    pub feasible: bool,
    /// Decision rule that produced the selection.
    pub rule: String,
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: PolicySpec,
    pub seed: u64,
    pub records: Vec<SlotRecord>,
    pub snapshots: Vec<GradientSnapshot>,
    pub final_model: ModelState,
    /// Offline plan, only for the offline-oracle policy.
    pub plan: Option<OfflinePlan>,
}

impl PolicyRun {
    pub fn total_carbon_kg(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_carbon_kg)
    }

    pub fn average_utility(&self) -> f64 {
        mean(self.records.iter().map(|r| r.utility))
    }

    pub fn average_carbon_kg(&self) -> f64 {
        mean(self.records.iter().map(|r| r.carbon_kg))
    }

    /// Mean test accuracy over the last `window` slots.
    pub fn final_accuracy(&self, window: usize) -> f64 {
        let skip = self.records.len().saturating_sub(window);
        mean(self.records[skip..].iter().map(|r| r.test_accuracy))
    }

    pub fn selection_counts(&self) -> Vec<usize> {
        selection_counts(self.records.iter().map(|r| &r.selection))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

struct SlotView<'a> {
    t: usize,
    objective: &'a SlotObjective,
    spent_kg: f64,
}

struct Decision {
    selection: Selection,
    rule: String,
    feasible: bool,
    slot_budget_kg: Option<f64>,
}

fn global_loss(model: &ModelState, data: &FederatedData) -> f64 {
    mean(data.centers.iter().map(|d| loss(model, d)))
}

/// Shared slot loop: probe, decide, train, account, advance the queue.
fn drive<F>(sc: &Scenario, policy: PolicySpec, mut decide: F) -> Result<PolicyRun>
where
    F: FnMut(&SlotView<'_>) -> Result<Decision>,
{
    sc.validate()?;
    let bad = static_floor_violations(&sc.energy, &sc.trace, &sc.params)?;
    if !bad.is_empty() {
        log::warn!(
            "static floor exceeds H/T in {} of {} slots (first: {})",
            bad.len(),
            sc.params.horizon,
            bad[0]
        );
    }
    let n = sc.n_centers();
    let mut model = ModelState::zeros(sc.data.n_classes, sc.data.dim());
    let mut queue = VirtualQueue::new(sc.q0)?;
    let mut cumulative = 0.0;
    let mut records = Vec::with_capacity(sc.params.horizon);
    let mut snapshots = Vec::with_capacity(sc.params.horizon);

    for t in 0..sc.params.horizon {
        let snap = probe_snapshot(&model, &sc.data, sc.train.probe_fraction, sc.seed, t)?;
        let util = CoresetUtility::new(&snap, &sc.utility)?;
        let q_before = queue.value();
        let objective = SlotObjective::new(util, &sc.energy, &sc.trace, t, sc.params.v, q_before)?;
        let d = decide(&SlotView {
            t,
            objective: &objective,
            spent_kg: cumulative,
        })?;
        if d.selection.len() != n {
            return Err(Error::DimensionMismatch("decision has wrong length".into()));
        }
        model = run_local_round(&model, &d.selection, &sc.data, &sc.train, sc.seed, t);
        let carbon = objective.carbon(&d.selection);
        cumulative += carbon;
        let q_after = queue.update(carbon, &sc.params)?;
        records.push(SlotRecord {
            t,
            utility: objective.utility().value(&d.selection),
            carbon_kg: carbon,
            cumulative_carbon_kg: cumulative,
            queue_before: q_before,
            queue_after: q_after,
            objective_value: objective.evaluate(&d.selection),
            train_loss: global_loss(&model, &sc.data),
            test_accuracy: model.accuracy(&sc.data.test),
            max_grad_norm: snap.max_norm(),
            divergence: empirical_divergence(&snap),
            slot_budget_kg: d.slot_budget_kg,
            feasible: d.feasible,
            rule: d.rule,
            selection: d.selection,
        });
        snapshots.push(snap);
    }
    Ok(PolicyRun {
        policy,
        seed: sc.seed,
        records,
        snapshots,
        final_model: model,
        plan: None,
    })
}

fn solve_slot(objective: &SlotObjective, solver: SolverId, seed: u64, t: usize) -> Result<Selection> {
    Ok(match solver {
        SolverId::Exhaustive => solve_exhaustive(objective)?.selection,
        SolverId::DetDoubleGreedy => solve_det_double_greedy(objective).selection,
        SolverId::RandDoubleGreedy => {
            solve_rand_double_greedy(objective, derive_seed(seed, Purpose::Solver, &[t as u64])).selection
        }
        SolverId::BudgetGreedy => {
            return Err(Error::Config("budget_greedy is not a per-slot P2 solver".into()))
        }
    })
}

/// Queue-driven controller: each slot maximizes `V U - q c` with `solver`.
pub fn run_cafe(sc: &Scenario, solver: SolverId) -> Result<PolicyRun> {
    let spec = PolicySpec::cafe(solver);
    spec.validate(sc.n_centers())?;
    drive(sc, spec, |view| {
        Ok(Decision {
            selection: solve_slot(view.objective, solver, sc.seed, view.t)?,
            rule: solver.name().to_string(),
            feasible: true,
            slot_budget_kg: None,
        })
    })
}

fn budgeted(view: &SlotView<'_>, budget: f64, mode: GreedyMode) -> Result<Decision> {
    let util = view.objective.utility();
    let oracle = (util.n_centers(), |s: &Selection| util.value(s));
    let r = solve_budget_greedy(
        &oracle,
        view.objective.incremental_costs(),
        view.objective.static_floor(),
        budget,
        mode,
    )?;
    Ok(Decision {
        selection: r.selection,
        rule: SolverId::BudgetGreedy.name().to_string(),
        feasible: r.feasible,
        slot_budget_kg: Some(budget),
    })
}

/// Equal split `H/T` per slot; unspent budget is forfeited.
pub fn run_static_myopic(sc: &Scenario, mode: GreedyMode) -> Result<PolicyRun> {
    let kind = match mode {
        GreedyMode::Utility => PolicyKind::Smu,
        GreedyMode::Count => PolicyKind::Smn,
    };
    let share = sc.params.slot_budget();
    drive(sc, PolicySpec::simple(kind)?, |view| budgeted(view, share, mode))
}

/// Remaining budget spread evenly over the remaining slots.
pub fn run_adaptive_myopic(sc: &Scenario, mode: GreedyMode) -> Result<PolicyRun> {
    let kind = match mode {
        GreedyMode::Utility => PolicyKind::Amu,
        GreedyMode::Count => PolicyKind::Amn,
    };
    let h = sc.params.budget_kg;
    let horizon = sc.params.horizon;
    drive(sc, PolicySpec::simple(kind)?, |view| {
        let budget = (h - view.spent_kg) / (horizon - view.t) as f64;
        budgeted(view, budget, mode)
    })
}

/// Best `k`-subset by utility alone. Exact for small fleets (ties to the
/// smallest mask), marginal-gain greedy otherwise.
pub fn best_k_subset(util: &CoresetUtility, k: usize) -> (Selection, &'static str) {
    let n = util.n_centers();
    if n <= ORACLE_LIMIT {
        let mut best = (Selection::empty(n), f64::NEG_INFINITY);
        for mask in 0..1u64 << n {
            if mask.count_ones() as usize != k {
                continue;
            }
            let s = Selection::from_mask(n, mask);
            let v = util.value(&s);
            if v > best.1 {
                best = (s, v);
            }
        }
        return (best.0, "k_subset_exhaustive");
    }
    let mut s = Selection::empty(n);
    for _ in 0..k {
        let pick = (0..n)
            .filter(|&i| !s.get(i))
            .map(|i| (i, util.value(&s.with(i, true))))
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            });
        if let Some((i, _)) = pick {
            s.set(i, true);
        }
    }
    (s, "k_subset_greedy")
}

/// `k` centers with the smallest incremental carbon, ties to the lowest index.
pub fn cheapest_k(costs: &[f64], k: usize) -> Selection {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    let mut s = Selection::empty(costs.len());
    order.into_iter().take(k).for_each(|i| s.set(i, true));
    s
}

/// Single-objective extremes with a fixed participant count and no budget.
pub fn run_extreme(sc: &Scenario, kind: PolicyKind, k: usize) -> Result<PolicyRun> {
    let spec = PolicySpec::with_k(kind, k)?;
    spec.validate(sc.n_centers())?;
    drive(sc, spec, |view| {
        let (selection, rule) = match kind {
            PolicyKind::FixedKUtility => best_k_subset(view.objective.utility(), k),
            PolicyKind::CarbonOnlyK => (cheapest_k(view.objective.incremental_costs(), k), "k_cheapest"),
            _ => return Err(Error::Config(format!("{} is not an extreme policy", kind.name()))),
        };
        Ok(Decision {
            selection,
            rule: rule.to_string(),
            feasible: true,
            slot_budget_kg: None,
        })
    })
}

/// Per-slot snapshots probed along the full-participation trajectory.
pub fn full_participation_snapshots(sc: &Scenario) -> Result<Vec<GradientSnapshot>> {
    let init = ModelState::zeros(sc.data.n_classes, sc.data.dim());
    let traj = full_participation_trajectory(&init, &sc.data, &sc.train, sc.params.horizon, sc.seed);
    slot_start_models(&init, &traj)
        .iter()
        .enumerate()
        .map(|(t, w)| probe_snapshot(w, &sc.data, sc.train.probe_fraction, sc.seed, t))
        .collect()
}

/// Offline optimum over the full-participation snapshots.
pub fn offline_plan(sc: &Scenario, snapshots: &[GradientSnapshot]) -> Result<OfflinePlan> {
    let per_slot = snapshots
        .iter()
        .enumerate()
        .map(|(t, snap)| {
            let u = CoresetUtility::new(snap, &sc.utility)?;
            enumerate_candidates(&u, &sc.energy, &sc.trace, t)
        })
        .collect::<Result<Vec<_>>>()?;
    solve_offline_oracle(
        &per_slot,
        sc.params.budget_kg,
        sc.params.budget_kg / OFFLINE_GRID_CELLS,
    )
}

/// Replays the offline plan as a policy. Requires `N <= 12`.
pub fn run_offline_oracle(sc: &Scenario) -> Result<PolicyRun> {
    sc.validate()?;
    let plan = offline_plan(sc, &full_participation_snapshots(sc)?)?;
    let selections = plan.selections.clone();
    let mut run = drive(sc, PolicySpec::simple(PolicyKind::OfflineOracle)?, |view| {
        Ok(Decision {
            selection: selections[view.t].clone(),
            rule: "offline_dp".to_string(),
            feasible: true,
            slot_budget_kg: None,
        })
    })?;
    run.plan = Some(plan);
    Ok(run)
}

pub fn run_policy(sc: &Scenario, policy: &PolicySpec) -> Result<PolicyRun> {
    policy.validate(sc.n_centers())?;
    match policy.kind {
        PolicyKind::Cafe => run_cafe(sc, policy.solver),
        PolicyKind::Smu => run_static_myopic(sc, GreedyMode::Utility),
        PolicyKind::Smn => run_static_myopic(sc, GreedyMode::Count),
        PolicyKind::Amu => run_adaptive_myopic(sc, GreedyMode::Utility),
        PolicyKind::Amn => run_adaptive_myopic(sc, GreedyMode::Count),
        PolicyKind::FixedKUtility | PolicyKind::CarbonOnlyK => {
            run_extreme(sc, policy.kind, policy.k.unwrap_or(0))
        }
        PolicyKind::OfflineOracle => run_offline_oracle(sc),
    }
}

pub fn selection_counts<'a>(selections: impl IntoIterator<Item = &'a Selection>) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::new();
    for s in selections {
        if counts.is_empty() {
            counts = vec![0; s.len()];
        }
        for i in s.selected() {
            counts[i] += 1;
        }
    }
    counts
}

/// Ranks starting at 1, ties share their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
