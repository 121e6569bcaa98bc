//! Offline planner: maximize total utility over all slots subject to the
//! horizon carbon budget, with full knowledge of every slot's candidates.
//!
//! Dynamic program over slots and a discretized remaining budget. Carbon is
//! rounded up to the grid, so any plan it returns is feasible for the true
//! budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{self, CarbonTrace, EnergyModel, Selection};
use crate::utility::CoresetUtility;

/// Largest N for which per-slot candidates are enumerated.
pub const ORACLE_LIMIT: usize = 12;

const MAX_GRID_CELLS: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub selection: Selection,
    pub utility: f64,
    pub carbon_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePlan {
    pub selections: Vec<Selection>,
    pub total_utility: f64,
    pub total_carbon_kg: f64,
    /// Worst-case carbon given up to rounding (T grid steps).
    pub grid_slack_kg: f64,
}

impl OfflinePlan {
    pub fn average_utility(&self) -> f64 {
        self.total_utility / self.selections.len() as f64
    }
}

/// All `2^N` selections of slot `t` with their utility and carbon.
pub fn enumerate_candidates(
    utility: &CoresetUtility,
    energy: &EnergyModel,
    trace: &CarbonTrace,
    t: usize,
) -> Result<Vec<Candidate>> {
    let n = utility.n_centers();
    if n > ORACLE_LIMIT {
        return Err(Error::TooManyCenters {
            n,
            limit: ORACLE_LIMIT,
        });
    }
    (0..1u64 << n)
        .map(|mask| {
            let selection = Selection::from_mask(n, mask);
            Ok(Candidate {
                utility: utility.value(&selection),
                carbon_kg: fleet::carbon_total(energy, trace, t, &selection)?,
                selection,
            })
        })
        .collect()
}

pub fn solve_offline_oracle(
    per_slot: &[Vec<Candidate>],
    budget_kg: f64,
    grid_kg: f64,
) -> Result<OfflinePlan> {
    if per_slot.is_empty() {
        return Err(Error::EmptyInput("offline horizon"));
    }
    if !(grid_kg > 0.0) || !grid_kg.is_finite() {
        return Err(Error::InvalidParameter("grid must be > 0".into()));
    }
    if !(budget_kg >= 0.0) {
        return Err(Error::InvalidParameter("budget must be >= 0".into()));
    }
    let cells = (budget_kg / grid_kg).floor() as u64;
    if (cells + 1) * per_slot.len() as u64 > MAX_GRID_CELLS {
        return Err(Error::InvalidParameter(format!(
            "grid too fine: {} budget cells over {} slots",
            cells + 1,
            per_slot.len()
        )));
    }
    let cells = cells as usize;

    // Per slot: for each rounded cost, the best candidate; then drop
    // candidates dominated by a cheaper one.
    let mut frontiers: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(per_slot.len());
    for (t, cands) in per_slot.iter().enumerate() {
        let mut items: Vec<(usize, usize, f64)> = Vec::new();
        for (k, c) in cands.iter().enumerate() {
            if !c.utility.is_finite() || !(c.carbon_kg >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "slot {t} candidate {k} has invalid utility/carbon"
                )));
            }
            let units = (c.carbon_kg / grid_kg).ceil();
            if units <= cells as f64 {
                items.push((units as usize, k, c.utility));
            }
        }
        if items.is_empty() {
            return Err(Error::Infeasible(format!(
                "no candidate of slot {t} fits the budget"
            )));
        }
        items.sort_by(|a, b| a.0.cmp(&b.0).then(b.2.total_cmp(&a.2)).then(a.1.cmp(&b.1)));
        let mut frontier: Vec<(usize, usize, f64)> = Vec::new();
        for it in items {
            if frontier.last().is_none_or(|last| it.2 > last.2) {
                frontier.push(it);
            }
        }
        frontiers.push(frontier);
    }

    // best[u] = max utility of slots processed so far using at most u cells.
    let mut best = vec![0.0f64; cells + 1];
    let mut choice: Vec<Vec<u32>> = Vec::with_capacity(frontiers.len());
    for frontier in &frontiers {
        let mut next = vec![f64::NEG_INFINITY; cells + 1];
        let mut pick = vec![u32::MAX; cells + 1];
        for u in 0..=cells {
            for (fi, &(units, _, util)) in frontier.iter().enumerate() {
                if units > u {
                    break;
                }
                let prev = best[u - units];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let v = prev + util;
                if v > next[u] {
                    next[u] = v;
                    pick[u] = fi as u32;
                }
            }
        }
        best = next;
        choice.push(pick);
    }
    if best[cells] == f64::NEG_INFINITY {
        return Err(Error::Infeasible(
            "cheapest selections exceed the budget over the horizon".into(),
        ));
    }

    let mut u = cells;
    let mut selections = vec![Selection::empty(0); frontiers.len()];
    for t in (0..frontiers.len()).rev() {
        let fi = choice[t][u] as usize;
        let (units, k, _) = frontiers[t][fi];
        selections[t] = per_slot[t][k].selection.clone();
        u -= units;
    }
    let (total_utility, total_carbon_kg) = selections
        .iter()
        .zip(per_slot)
        .map(|(s, cands)| {
            let c = cands
                .iter()
                .find(|c| &c.selection == s)
                .expect("chosen candidate");
            (c.utility, c.carbon_kg)
        })
        .fold((0.0, 0.0), |(u, c), (du, dc)| (u + du, c + dc));

    Ok(OfflinePlan {
        selections,
        total_utility,
        total_carbon_kg,
        grid_slack_kg: grid_kg * per_slot.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::GradientSnapshot;

    fn cand(mask: u64, n: usize, utility: f64, carbon_kg: f64) -> Candidate {
        Candidate {
            selection: Selection::from_mask(n, mask),
            utility,
            carbon_kg,
        }
    }

    #[test]
    fn single_slot_takes_best_within_budget() {
        let slot = vec![cand(0, 2, 1.0, 1.0), cand(1, 2, 5.0, 4.0), cand(3, 2, 9.0, 8.0)];
        let plan = solve_offline_oracle(&[slot], 5.0, 0.5).unwrap();
        assert_eq!(plan.selections[0].to_mask(), 1);
        assert_eq!(plan.total_utility, 5.0);
        assert!(plan.total_carbon_kg <= 5.0);
    }

    #[test]
    fn infeasible_when_cheapest_exceeds_budget() {
        let slot = vec![cand(0, 1, 1.0, 3.0), cand(1, 1, 2.0, 6.0)];
        assert!(matches!(
            solve_offline_oracle(&[slot.clone(), slot], 5.0, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    fn small_world() -> (Vec<CoresetUtility>, EnergyModel, CarbonTrace) {
        let snaps = [
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
            vec![vec![0.2, 0.1], vec![-0.4, 0.3], vec![0.9, -0.2]],
            vec![vec![0.0, 0.7], vec![0.6, 0.6], vec![-0.8, 0.0]],
        ];
        let utils = snaps
            .iter()
            .map(|g| CoresetUtility::unchecked(&GradientSnapshot::new(g.clone(), 0).unwrap(), 10.0))
            .collect();
        let energy = EnergyModel::new(vec![1.0, 2.0, 1.0], vec![8.0, 6.0, 10.0]).unwrap();
        let trace = CarbonTrace::new(vec![
            vec![0.5, 1.0, 0.25],
            vec![1.0, 0.5, 0.5],
            vec![0.25, 0.25, 1.0],
        ])
        .unwrap();
        (utils, energy, trace)
    }

    #[test]
    fn all_select_when_budget_covers_it() {
        let (utils, energy, trace) = small_world();
        let cands: Vec<_> = (0..3)
            .map(|t| enumerate_candidates(&utils[t], &energy, &trace, t).unwrap())
            .collect();
        let full: f64 = (0..3)
            .map(|t| fleet::carbon_total(&energy, &trace, t, &Selection::full(3)).unwrap())
            .sum();
        let plan = solve_offline_oracle(&cands, full, 0.25).unwrap();
        assert!(plan.selections.iter().all(|s| s.count() == 3));
        assert_eq!(plan.total_utility, 30.0);
    }

    #[test]
    fn matches_sequence_enumeration() {
        // Carbon values in this world are multiples of 0.25 kg, so a 0.25
        // grid introduces no rounding and the DP must hit the exact optimum.
        let (utils, energy, trace) = small_world();
        let cands: Vec<_> = (0..3)
            .map(|t| enumerate_candidates(&utils[t], &energy, &trace, t).unwrap())
            .collect();
        assert!(solve_offline_oracle(&cands, 6.0, 0.25).is_err());
        for budget in [7.0, 7.5, 10.0, 14.5, 20.0, 27.75] {
            let mut best = f64::NEG_INFINITY;
            for a in 0..8 {
                for b in 0..8 {
                    for c in 0..8 {
                        let carbon = cands[0][a].carbon_kg + cands[1][b].carbon_kg + cands[2][c].carbon_kg;
                        if carbon <= budget {
                            best = best.max(cands[0][a].utility + cands[1][b].utility + cands[2][c].utility);
                        }
                    }
                }
            }
            let plan = solve_offline_oracle(&cands, budget, 0.25).unwrap();
            assert!((plan.total_utility - best).abs() < 1e-9, "budget {budget}");
            assert!(plan.total_carbon_kg <= budget);
        }
    }

    #[test]
    fn candidate_enumeration_guard() {
        let snap = GradientSnapshot::new(vec![vec![0.0]; 13], 0).unwrap();
        let u = CoresetUtility::unchecked(&snap, 1.0);
        let e = EnergyModel::uniform(13, 1.0, 1.0).unwrap();
        let tr = CarbonTrace::new(vec![vec![0.1; 13]]).unwrap();
        assert!(enumerate_candidates(&u, &e, &tr, 0).is_err());
    }
}
