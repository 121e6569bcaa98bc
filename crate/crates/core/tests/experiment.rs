use carbonfl_core::harness::metrics::{cell_stats, parse_summary, summarize, SummaryRow};
use carbonfl_core::harness::{
    run_experiment, validate_artifacts, write_experiment, ExperimentConfig, SweepGrid,
};

fn small(policies: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_centers: 4,
        horizon: 8,
        budget_kg: 32_000.0 * 32.0 / 480.0,
        policies: policies.iter().map(|p| p.parse().unwrap()).collect(),
        final_window: 4,
        ..ExperimentConfig::default()
    };
    cfg.task.samples_per_center = 60;
    cfg.task.test_samples = 200;
    cfg
}

#[test]
fn two_policies_three_seeds_give_six_cells() {
    let cfg = small(&["cafe", "amu"]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.cells.len(), 6);
    assert_eq!(out.metrics.len(), 6 * cfg.horizon);
    assert_eq!(out.diagnostics.len(), 6 * cfg.horizon);
    assert_eq!(out.failed_cells().count(), 0);
    for p in &cfg.policies {
        for &s in &cfg.seeds {
            let slots: Vec<usize> = out
                .metrics
                .iter()
                .filter(|r| r.policy == p.label() && r.seed == s)
                .map(|r| r.slot)
                .collect();
            assert_eq!(slots, (0..cfg.horizon).collect::<Vec<_>>());
        }
    }
}

#[test]
fn summary_rederives_from_slot_rows() {
    let cfg = small(&["cafe", "smn", "carbon_only_k:2"]);
    let out = run_experiment(&cfg).unwrap();
    let derived = summarize(&out.metrics, cfg.final_window);
    assert_eq!(derived.len(), 3);
    for ((label, stats), row) in derived.iter().zip(&out.summary) {
        let SummaryRow::Policy {
            policy,
            avg_utility,
            avg_carbon_kg,
            total_carbon_kg,
            final_acc,
            thm1,
        } = row
        else {
            panic!("unexpected error row");
        };
        assert_eq!(label, policy);
        assert_eq!(
            [*avg_utility, *avg_carbon_kg, *total_carbon_kg, *final_acc],
            [
                stats.avg_utility,
                stats.avg_carbon_kg,
                stats.total_carbon_kg,
                stats.final_acc
            ]
        );
        assert_eq!(thm1.is_some(), policy == "cafe");
    }

    // Per-cell statistics agree with the in-memory runs.
    for &seed in &cfg.seeds {
        let rows: Vec<_> = out
            .metrics
            .iter()
            .filter(|r| r.policy == "smn" && r.seed == seed)
            .collect();
        let run = out.run(&cfg.policies[1], seed).unwrap();
        let stats = cell_stats(&rows, cfg.final_window);
        assert!((stats.final_acc - run.final_accuracy(cfg.final_window)).abs() < 1e-15);
        assert_eq!(stats.total_carbon_kg, run.total_carbon_kg());
    }
}

#[test]
fn written_artifacts_validate_and_detect_tampering() {
    let cfg = small(&["cafe", "smu"]);
    let out = run_experiment(&cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_experiment(&out, tmp.path()).unwrap();
    let outcome = validate_artifacts(tmp.path()).unwrap();
    assert!(outcome.summary_consistent);
    assert_eq!(outcome.reports.len(), 3);
    assert!(outcome.all_pass());
    for (r, cell) in outcome
        .reports
        .iter()
        .zip(out.cells.iter().filter(|c| c.policy.label() == "cafe"))
    {
        let mem = cell.result.as_ref().unwrap().bounds.as_ref().unwrap();
        assert_eq!(r.report.avg_violation, mem.avg_violation);
        assert_eq!(r.report.thm1_rhs_appendix, mem.thm1_rhs_appendix);
    }

    let path = tmp.path().join("metrics.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[5] = "0.123".into();
    lines[1] = fields.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(!validate_artifacts(tmp.path()).unwrap().summary_consistent);
}

#[test]
fn failing_cells_become_error_rows() {
    let mut cfg = small(&["cafe", "smu"]);
    cfg.seeds = vec![4];
    cfg.utility.gradient_norm_cap = 1e-6;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.failed_cells().count(), 2);
    assert!(out.metrics.is_empty());
    let tmp = tempfile::tempdir().unwrap();
    write_experiment(&out, tmp.path()).unwrap();
    let summary = parse_summary(&std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary
        .iter()
        .all(|r| matches!(r, SummaryRow::Error { seed: 4, .. })));
    let errors = std::fs::read_to_string(tmp.path().join("errors.txt")).unwrap();
    assert_eq!(errors.lines().count(), 2);
}

#[test]
fn invalid_configs_fail_before_running() {
    for edit in [
        (|c: &mut ExperimentConfig| c.v = f64::NAN) as fn(&mut ExperimentConfig),
        |c| c.horizon = 0,
        |c| c.seeds.clear(),
        |c| c.policies.clear(),
        |c| c.train.probe_fraction = 0.0,
        |c| c.task.dirichlet_alpha = -1.0,
        |c| {
            c.sweep = SweepGrid {
                v: vec![-1.0],
                ..SweepGrid::default()
            }
        },
        |c| c.policies = vec!["offline_oracle".parse().unwrap()],
    ] {
        let mut cfg = small(&["cafe"]);
        edit(&mut cfg);
        if cfg
            .policies
            .first()
            .is_some_and(|p| p.label() == "offline_oracle")
        {
            cfg.n_centers = 13;
        }
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, carbonfl_core::Error::Config(_)), "{err}");
    }
}
