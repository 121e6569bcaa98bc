//! CSV tables emitted by experiment runs and their parsers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! parsed file reproduces the exact values that were written.

use std::fmt::Write as _;

use crate::controller::PolicyRun;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "policy,seed,slot,selection_bits,utility,carbon_kg,cum_carbon_kg,queue,objective,train_loss,test_acc";
pub const SUMMARY_HEADER: &str =
    "policy,avg_utility,avg_carbon_kg,total_carbon_kg,final_acc,thm1_pass,thm1_rhs_main,thm1_rhs_appendix";
pub const DIAGNOSTICS_HEADER: &str =
    "policy,seed,slot,queue_before,max_grad_norm,divergence,slot_budget_kg,feasible,rule";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub policy: String,
    pub seed: u64,
    pub slot: usize,
    pub selection_bits: String,
    pub utility: f64,
    pub carbon_kg: f64,
    pub cum_carbon_kg: f64,
    pub queue: f64,
    pub objective: f64,
    pub train_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub policy: String,
    pub seed: u64,
    pub slot: usize,
    pub queue_before: f64,
    pub max_grad_norm: f64,
    pub divergence: f64,
    pub slot_budget_kg: Option<f64>,
    pub feasible: bool,
    pub rule: String,
}

/// Constraint-violation bound columns of a summary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm1Summary {
    pub pass: bool,
    pub rhs_main: f64,
    pub rhs_appendix: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SummaryRow {
    Policy {
        policy: String,
        avg_utility: f64,
        avg_carbon_kg: f64,
        total_carbon_kg: f64,
        final_acc: f64,
        thm1: Option<Thm1Summary>,
    },
    /// A `(policy, seed)` cell that failed; written as `policy@seed=N` with
    /// every value column set to `error`.
    Error { policy: String, seed: u64 },
}

pub fn metric_rows(run: &PolicyRun) -> Vec<MetricRow> {
    let label = run.policy.label();
    run.records
        .iter()
        .map(|r| MetricRow {
            policy: label.clone(),
            seed: run.seed,
            slot: r.t,
            selection_bits: r.selection.to_bit_string(),
            utility: r.utility,
            carbon_kg: r.carbon_kg,
            cum_carbon_kg: r.cumulative_carbon_kg,
            queue: r.queue_after,
            objective: r.objective_value,
            train_loss: r.train_loss,
            test_acc: r.test_accuracy,
        })
        .collect()
}

pub fn diagnostic_rows(run: &PolicyRun) -> Vec<DiagnosticRow> {
    let label = run.policy.label();
    run.records
        .iter()
        .map(|r| DiagnosticRow {
            policy: label.clone(),
            seed: run.seed,
            slot: r.t,
            queue_before: r.queue_before,
            max_grad_norm: r.max_grad_norm,
            divergence: r.divergence,
            slot_budget_kg: r.slot_budget_kg,
            feasible: r.feasible,
            rule: r.rule.clone(),
        })
        .collect()
}

pub fn format_metrics(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.seed,
            r.slot,
            r.selection_bits,
            r.utility,
            r.carbon_kg,
            r.cum_carbon_kg,
            r.queue,
            r.objective,
            r.train_loss,
            r.test_acc
        );
    }
    out
}

pub fn format_diagnostics(rows: &[DiagnosticRow]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in rows {
        let budget = r.slot_budget_kg.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.seed,
            r.slot,
            r.queue_before,
            r.max_grad_norm,
            r.divergence,
            budget,
            r.feasible,
            r.rule
        );
    }
    out
}

pub fn format_summary_row(row: &SummaryRow) -> String {
    match row {
        SummaryRow::Policy {
            policy,
            avg_utility,
            avg_carbon_kg,
            total_carbon_kg,
            final_acc,
            thm1,
        } => {
            let t = match thm1 {
                Some(t) => format!("{},{},{}", t.pass, t.rhs_main, t.rhs_appendix),
                None => "na,na,na".to_string(),
            };
            format!("{policy},{avg_utility},{avg_carbon_kg},{total_carbon_kg},{final_acc},{t}")
        }
        SummaryRow::Error { policy, seed } => {
            format!("{policy}@seed={seed},error,error,error,error,error,error,error")
        }
    }
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format_summary_row(r));
        out.push('\n');
    }
    out
}

fn body<'a>(text: &'a str, header: &str, what: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::Config(format!("{what}: unexpected header {other:?}")));
        }
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

fn field<T: std::str::FromStr>(parts: &[&str], k: usize, row: usize, what: &str) -> Result<T> {
    parts
        .get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("{what} row {row}: bad field {k}")))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricRow>> {
    let what = "metrics csv";
    body(text, METRICS_HEADER, what)?
        .map(|(row, p)| {
            if p.len() != 11 {
                return Err(Error::Config(format!("{what} row {row}: expected 11 fields")));
            }
            Ok(MetricRow {
                policy: p[0].to_string(),
                seed: field(&p, 1, row, what)?,
                slot: field(&p, 2, row, what)?,
                selection_bits: p[3].to_string(),
                utility: field(&p, 4, row, what)?,
                carbon_kg: field(&p, 5, row, what)?,
                cum_carbon_kg: field(&p, 6, row, what)?,
                queue: field(&p, 7, row, what)?,
                objective: field(&p, 8, row, what)?,
                train_loss: field(&p, 9, row, what)?,
                test_acc: field(&p, 10, row, what)?,
            })
        })
        .collect()
}

pub fn parse_diagnostics(text: &str) -> Result<Vec<DiagnosticRow>> {
    let what = "diagnostics csv";
    body(text, DIAGNOSTICS_HEADER, what)?
        .map(|(row, p)| {
            if p.len() != 9 {
                return Err(Error::Config(format!("{what} row {row}: expected 9 fields")));
            }
            Ok(DiagnosticRow {
                policy: p[0].to_string(),
                seed: field(&p, 1, row, what)?,
                slot: field(&p, 2, row, what)?,
                queue_before: field(&p, 3, row, what)?,
                max_grad_norm: field(&p, 4, row, what)?,
                divergence: field(&p, 5, row, what)?,
                slot_budget_kg: if p[6].is_empty() {
                    None
                } else {
                    Some(field(&p, 6, row, what)?)
                },
                feasible: field(&p, 7, row, what)?,
                rule: p[8].to_string(),
            })
        })
        .collect()
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let what = "summary csv";
    body(text, SUMMARY_HEADER, what)?
        .map(|(row, p)| {
            if p.len() != 8 {
                return Err(Error::Config(format!("{what} row {row}: expected 8 fields")));
            }
            if p[1] == "error" {
                let (policy, seed) = p[0]
                    .split_once("@seed=")
                    .ok_or_else(|| Error::Config(format!("{what} row {row}: bad error row")))?;
                return Ok(SummaryRow::Error {
                    policy: policy.to_string(),
                    seed: seed
                        .parse()
                        .map_err(|_| Error::Config(format!("{what} row {row}: bad seed")))?,
                });
            }
            let thm1 = if p[5] == "na" {
                None
            } else {
                Some(Thm1Summary {
                    pass: field(&p, 5, row, what)?,
                    rhs_main: field(&p, 6, row, what)?,
                    rhs_appendix: field(&p, 7, row, what)?,
                })
            };
            Ok(SummaryRow::Policy {
                policy: p[0].to_string(),
                avg_utility: field(&p, 1, row, what)?,
                avg_carbon_kg: field(&p, 2, row, what)?,
                total_carbon_kg: field(&p, 3, row, what)?,
                final_acc: field(&p, 4, row, what)?,
                thm1,
            })
        })
        .collect()
}

/// Statistics of one `(policy, seed)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub avg_utility: f64,
    pub avg_carbon_kg: f64,
    pub total_carbon_kg: f64,
    pub final_acc: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Cell statistics from slot rows, in slot order.
pub fn cell_stats(rows: &[&MetricRow], final_window: usize) -> CellStats {
    let skip = rows.len().saturating_sub(final_window);
    CellStats {
        avg_utility: mean(rows.iter().map(|r| r.utility)),
        avg_carbon_kg: mean(rows.iter().map(|r| r.carbon_kg)),
        total_carbon_kg: rows.last().map_or(0.0, |r| r.cum_carbon_kg),
        final_acc: mean(rows[skip..].iter().map(|r| r.test_acc)),
    }
}

/// Per-policy means of cell statistics over seeds, in order of first
/// appearance in `rows`.
pub fn summarize(rows: &[MetricRow], final_window: usize) -> Vec<(String, CellStats)> {
    let mut policies: Vec<&str> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    policies
        .into_iter()
        .map(|p| {
            let mut seeds: Vec<u64> = Vec::new();
            for r in rows.iter().filter(|r| r.policy == p) {
                if !seeds.contains(&r.seed) {
                    seeds.push(r.seed);
                }
            }
            let cells: Vec<CellStats> = seeds
                .iter()
                .map(|&s| {
                    let cell: Vec<&MetricRow> =
                        rows.iter().filter(|r| r.policy == p && r.seed == s).collect();
                    cell_stats(&cell, final_window)
                })
                .collect();
            let stats = CellStats {
                avg_utility: mean(cells.iter().map(|c| c.avg_utility)),
                avg_carbon_kg: mean(cells.iter().map(|c| c.avg_carbon_kg)),
                total_carbon_kg: mean(cells.iter().map(|c| c.total_carbon_kg)),
                final_acc: mean(cells.iter().map(|c| c.final_acc)),
            };
            (p.to_string(), stats)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, seed: u64, slot: usize, u: f64, acc: f64) -> MetricRow {
        MetricRow {
            policy: policy.into(),
            seed,
            slot,
            selection_bits: "0101".into(),
            utility: u,
            carbon_kg: 1.5 * u,
            cum_carbon_kg: 1.5 * u * (slot + 1) as f64,
            queue: 0.1,
            objective: -3.25,
            train_loss: 0.7,
            test_acc: acc,
        }
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let rows = vec![
            row("cafe", 0, 0, 0.1 + 0.2, 1.0 / 3.0),
            row("cafe", 0, 1, 1e-300, 0.5),
        ];
        assert_eq!(parse_metrics(&format_metrics(&rows)).unwrap(), rows);
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![
            SummaryRow::Policy {
                policy: "cafe".into(),
                avg_utility: 1.25,
                avg_carbon_kg: 3.0,
                total_carbon_kg: 9.0,
                final_acc: 0.5,
                thm1: Some(Thm1Summary {
                    pass: true,
                    rhs_main: 2.0,
                    rhs_appendix: 1.0,
                }),
            },
            SummaryRow::Policy {
                policy: "smu".into(),
                avg_utility: 1.0,
                avg_carbon_kg: 2.0,
                total_carbon_kg: 6.0,
                final_acc: 0.25,
                thm1: None,
            },
            SummaryRow::Error {
                policy: "amu".into(),
                seed: 2,
            },
        ];
        let text = format_summary(&rows);
        assert!(text.contains("amu@seed=2,error,"));
        assert_eq!(parse_summary(&text).unwrap(), rows);
    }

    #[test]
    fn diagnostics_round_trip() {
        let rows = vec![DiagnosticRow {
            policy: "smu".into(),
            seed: 1,
            slot: 0,
            queue_before: 10.0,
            max_grad_norm: 0.3,
            divergence: 0.1,
            slot_budget_kg: Some(666.5),
            feasible: true,
            rule: "budget_greedy".into(),
        }];
        assert_eq!(parse_diagnostics(&format_diagnostics(&rows)).unwrap(), rows);
    }

    #[test]
    fn summary_means_over_seeds() {
        let rows = vec![
            row("a", 0, 0, 1.0, 0.0),
            row("a", 0, 1, 3.0, 1.0),
            row("a", 1, 0, 5.0, 0.5),
            row("a", 1, 1, 5.0, 0.5),
        ];
        let s = summarize(&rows, 1);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1.avg_utility, 3.5);
        assert_eq!(s[0].1.final_acc, 0.75);
        assert_eq!(s[0].1.total_carbon_kg, (9.0 + 15.0) / 2.0);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_metrics("policy,seed\n").is_err());
        assert!(parse_metrics(&format!("{METRICS_HEADER}\ncafe,0,0\n")).is_err());
    }
}
