use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::Selection;

use super::{Counting, Objective, SolveResult, SolverId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyMode {
    /// Best objective gain per kg of incremental carbon.
    Utility,
    /// As many centers as fit, cheapest first.
    Count,
}

/// Budget-feasible greedy for the myopic baselines.
///
/// `budget` covers the whole slot; the static floor is deducted first and
/// the remainder is spent on per-center incremental costs. Ties go to the
/// lowest center index.
pub fn solve_budget_greedy<O: Objective + ?Sized>(
    oracle: &O,
    costs: &[f64],
    static_floor: f64,
    budget: f64,
    mode: GreedyMode,
) -> Result<SolveResult> {
    let n = oracle.n_centers();
    if costs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} costs for {n} centers",
            costs.len()
        )));
    }
    if costs.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidParameter("costs must be >= 0".into()));
    }
    let counting = Counting::new(oracle);
    let mut selection = Selection::empty(n);
    // Relative guard so per-slot sums never round past the budget.
    let mut remaining = budget - static_floor - budget.abs() * 1e-12;
    if remaining < 0.0 {
        let value = counting.eval(&selection);
        return Ok(SolveResult {
            selection,
            value,
            evaluations: counting.calls(),
            solver: SolverId::BudgetGreedy,
            feasible: false,
            min_uv_sum: None,
        });
    }

    let value = match mode {
        GreedyMode::Count => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
            for i in order {
                if costs[i] <= remaining {
                    remaining -= costs[i];
                    selection.set(i, true);
                }
            }
            counting.eval(&selection)
        }
        GreedyMode::Utility => {
            let mut current = counting.eval(&selection);
            loop {
                let mut best: Option<(usize, f64, f64)> = None;
                for (i, &cost) in costs.iter().enumerate() {
                    if selection.get(i) || cost > remaining {
                        continue;
                    }
                    let val = counting.eval(&selection.with(i, true));
                    let gain = val - current;
                    if gain <= 0.0 {
                        continue;
                    }
                    let score = if cost > 0.0 { gain / cost } else { f64::INFINITY };
                    if best.is_none_or(|(_, s, _)| score > s) {
                        best = Some((i, score, val));
                    }
                }
                let Some((i, _, val)) = best else { break };
                selection.set(i, true);
                remaining -= costs[i];
                current = val;
            }
            current
        }
    };

    Ok(SolveResult {
        selection,
        value,
        evaluations: counting.calls(),
        solver: SolverId::BudgetGreedy,
        feasible: true,
        min_uv_sum: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::testkit::random_instance;
    use crate::utility::{CoresetUtility, GradientSnapshot};

    fn zero(n: usize) -> impl Objective {
        (n, |_: &Selection| 0.0)
    }

    #[test]
    fn budget_below_cheapest_cost_selects_nothing() {
        let r = solve_budget_greedy(&zero(3), &[5.0, 6.0, 7.0], 1.0, 4.0, GreedyMode::Count).unwrap();
        assert!(r.selection.none_selected());
        assert!(r.feasible);
    }

    #[test]
    fn budget_below_floor_is_flagged() {
        let r = solve_budget_greedy(&zero(2), &[1.0, 1.0], 10.0, 5.0, GreedyMode::Utility).unwrap();
        assert!(r.selection.none_selected());
        assert!(!r.feasible);
    }

    #[test]
    fn count_mode_uniform_costs_takes_lowest_indices() {
        let r =
            solve_budget_greedy(&zero(6), &[2.0; 6], 1.0, 1.0 + 3.0 * 2.0 + 0.5, GreedyMode::Count).unwrap();
        assert_eq!(r.selection.selected().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn count_mode_prefers_cheap() {
        let r = solve_budget_greedy(&zero(4), &[3.0, 1.0, 2.0, 1.0], 0.0, 4.5, GreedyMode::Count).unwrap();
        assert_eq!(r.selection.selected().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn utility_mode_stays_within_reach_of_optimum() {
        for seed in 0..30 {
            let inst = random_instance(6, seed);
            let costs = inst.costs.clone();
            let budget = 1.2;
            let utility = |s: &Selection| inst.utility.value(s);
            let obj = (6usize, utility);
            let r = solve_budget_greedy(&obj, &costs, 0.0, budget, GreedyMode::Utility).unwrap();
            let spent: f64 = r.selection.selected().map(|i| costs[i]).sum();
            assert!(spent <= budget);
            // Best feasible value by enumeration.
            let mut best = f64::NEG_INFINITY;
            for m in 0..64u64 {
                let s = Selection::from_mask(6, m);
                let c: f64 = s.selected().map(|i| costs[i]).sum();
                if c <= budget {
                    best = best.max(inst.utility.value(&s));
                }
            }
            assert!(r.value <= best + 1e-12);
            assert_eq!(r.value, inst.utility.value(&r.selection));
        }
    }

    #[test]
    fn utility_mode_stops_when_no_gain() {
        // Identical gradients: after the first pick nothing improves.
        let snap = GradientSnapshot::new(vec![vec![1.0, 1.0]; 4], 0).unwrap();
        let u = CoresetUtility::unchecked(&snap, 100.0);
        let obj = (4usize, |s: &Selection| u.value(s));
        let r = solve_budget_greedy(&obj, &[1.0, 0.5, 1.0, 2.0], 0.0, 10.0, GreedyMode::Utility).unwrap();
        assert_eq!(r.selection.selected().collect::<Vec<_>>(), vec![1]);
    }
}
