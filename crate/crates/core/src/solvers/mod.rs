//! Per-slot set-function maximizers and the offline budgeted planner.

mod budget_greedy;
mod double_greedy;
mod exhaustive;
mod offline;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::fleet::Selection;

pub use budget_greedy::{solve_budget_greedy, GreedyMode};
pub use double_greedy::{solve_det_double_greedy, solve_rand_double_greedy};
pub use exhaustive::{exhaustive_argmax, solve_exhaustive, EXHAUSTIVE_LIMIT};
pub use offline::{enumerate_candidates, solve_offline_oracle, Candidate, OfflinePlan, ORACLE_LIMIT};

/// A set function over N centers. Evaluation must be deterministic and
/// free of side effects.
pub trait Objective {
    fn n_centers(&self) -> usize;
    fn evaluate(&self, selection: &Selection) -> f64;
}

impl<F> Objective for (usize, F)
where
    F: Fn(&Selection) -> f64,
{
    fn n_centers(&self) -> usize {
        self.0
    }

    fn evaluate(&self, selection: &Selection) -> f64 {
        (self.1)(selection)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    Exhaustive,
    DetDoubleGreedy,
    RandDoubleGreedy,
    BudgetGreedy,
}

impl SolverId {
    /// Approximation factor gamma used by the bound validators.
    pub fn gamma(self) -> f64 {
        match self {
            SolverId::Exhaustive => 1.0,
            SolverId::DetDoubleGreedy => 3.0,
            SolverId::RandDoubleGreedy => 2.0,
            SolverId::BudgetGreedy => f64::INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverId::Exhaustive => "exhaustive",
            SolverId::DetDoubleGreedy => "det_double_greedy",
            SolverId::RandDoubleGreedy => "rand_double_greedy",
            SolverId::BudgetGreedy => "budget_greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SolverId::Exhaustive,
            SolverId::DetDoubleGreedy,
            SolverId::RandDoubleGreedy,
            SolverId::BudgetGreedy,
        ]
        .into_iter()
        .find(|id| id.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub selection: Selection,
    pub value: f64,
    pub evaluations: u64,
    pub solver: SolverId,
    /// False only when a budget solver found even the empty selection
    /// over budget.
    pub feasible: bool,
    /// Smallest `u_j + v_j` seen during a double-greedy sweep; nonnegative
    /// whenever the objective is submodular.
    pub min_uv_sum: Option<f64>,
}

/// Wraps an objective and counts evaluations.
pub(crate) struct Counting<'a, O: ?Sized> {
    inner: &'a O,
    calls: Cell<u64>,
}

impl<'a, O: Objective + ?Sized> Counting<'a, O> {
    pub(crate) fn new(inner: &'a O) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub(crate) fn eval(&self, s: &Selection) -> f64 {
        self.calls.set(self.calls.get() + 1);
        self.inner.evaluate(s)
    }

    pub(crate) fn calls(&self) -> u64 {
        self.calls.get()
    }
}

#[cfg(test)]
pub(crate) mod testkit {
    //! Random P2-shaped instances for solver tests.

    use rand::Rng;

    use crate::fleet::Selection;
    use crate::rng::{stream, Purpose};
    use crate::utility::{CoresetUtility, GradientSnapshot};

    pub struct Instance {
        pub utility: CoresetUtility,
        pub costs: Vec<f64>,
        pub v: f64,
        pub q: f64,
    }

    impl super::Objective for Instance {
        fn n_centers(&self) -> usize {
            self.costs.len()
        }

        fn evaluate(&self, s: &Selection) -> f64 {
            let c: f64 = s.selected().map(|i| self.costs[i]).sum();
            self.v * self.utility.value(s) - self.q * c
        }
    }

    /// Coreset utility plus a linear carbon penalty. With `b` at its
    /// nonnegativity threshold and a penalty no larger than the utility
    /// budget the objective stays nonnegative only if checked; callers
    /// filter on that.
    pub fn random_instance(n: usize, seed: u64) -> Instance {
        let mut rng = stream(seed, Purpose::Instance, &[n as u64]);
        let d = 3;
        let g: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let snap = GradientSnapshot::new(g, 0).unwrap();
        let b = 2.0 * n as f64 * snap.max_norm();
        let utility = CoresetUtility::unchecked(&snap, b);
        let costs = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        Instance {
            utility,
            costs,
            v: 1.0,
            q: rng.random_range(0.0..(2.0 * b / n as f64)),
        }
    }

    /// Brute-force maximum, written independently of the solver code.
    pub fn brute_force_max(obj: &dyn super::Objective) -> f64 {
        let n = obj.n_centers();
        let mut best = f64::NEG_INFINITY;
        for mask in 0..(1u64 << n) {
            let bits: Vec<bool> = (0..n).map(|i| (mask & (1 << i)) != 0).collect();
            best = best.max(obj.evaluate(&Selection::from_bits(bits)));
        }
        best
    }

    pub fn min_value(obj: &dyn super::Objective) -> f64 {
        let n = obj.n_centers();
        (0..(1u64 << n))
            .map(|m| obj.evaluate(&Selection::from_mask(n, m)))
            .fold(f64::INFINITY, f64::min)
    }
}
