use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::controller::{run_policy, PolicyKind, PolicyRun, PolicySpec, Scenario};
use crate::error::{Error, Result};
use crate::fedsim::write_datasets;
use crate::fleet::CarbonTrace;
use crate::lyapunov::BoundReport;

use super::config::{ExperimentConfig, SweepPoint};
use super::metrics::{
    cell_stats, diagnostic_rows, format_diagnostics, format_metrics, format_summary, metric_rows, summarize,
    DiagnosticRow, MetricRow, SummaryRow, Thm1Summary,
};
use super::trace_io::format_trace;
use super::validate::{validate_bounds, BoundInputs, OracleArtifact};

/// Outcome of one `(policy, seed)` cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub policy: PolicySpec,
    pub seed: u64,
    pub result: std::result::Result<CellOutput, String>,
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub run: PolicyRun,
    pub bounds: Option<BoundReport>,
}

#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub oracle: Option<OracleArtifact>,
    pub datasets_csv: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub trace: CarbonTrace,
    /// Cells in policy-major, seed-minor order.
    pub cells: Vec<Cell>,
    pub seeds: Vec<SeedArtifacts>,
    pub metrics: Vec<MetricRow>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn failed_cells(&self) -> impl Iterator<Item = (&Cell, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.result.as_ref().err().map(|e| (c, e.as_str())))
    }

    pub fn run(&self, policy: &PolicySpec, seed: u64) -> Option<&PolicyRun> {
        self.cells
            .iter()
            .find(|c| c.policy == *policy && c.seed == seed)
            .and_then(|c| c.result.as_ref().ok())
            .map(|o| &o.run)
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(_workers: usize, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

fn run_cell(sc: &Scenario, policy: &PolicySpec, oracle: Option<OracleArtifact>) -> Result<CellOutput> {
    let run = run_policy(sc, policy)?;
    let bounds = if policy.kind == PolicyKind::Cafe {
        Some(validate_bounds(&BoundInputs::from_run(&run, sc, oracle)?)?)
    } else {
        None
    };
    Ok(CellOutput { run, bounds })
}

type SeedBuild = std::result::Result<(Scenario, SeedArtifacts), String>;

/// Runs every `(policy, seed)` cell. A failing cell is recorded and the
/// others proceed; configuration errors abort before anything runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let trace = cfg.resolve_trace()?;
    if trace.n_centers() != cfg.n_centers || trace.horizon() < cfg.horizon {
        return Err(Error::Config(format!(
            "trace is {}x{} (slots x centers), config needs at least {}x{}",
            trace.horizon(),
            trace.n_centers(),
            cfg.horizon,
            cfg.n_centers
        )));
    }
    let trace = trace.truncated(cfg.horizon)?;

    // Data and oracle artifacts are per seed and shared by all policies.
    let per_seed: Vec<(u64, SeedBuild)> = par_map(cfg.workers, &cfg.seeds, |&seed| {
        let built = cfg.scenario(&trace, seed).and_then(|sc| {
            let oracle = if cfg.oracle_artifacts {
                Some(OracleArtifact::compute(&sc)?)
            } else {
                None
            };
            let datasets_csv = cfg.write_datasets.then(|| write_datasets(&sc.data));
            Ok((
                sc,
                SeedArtifacts {
                    seed,
                    oracle,
                    datasets_csv,
                },
            ))
        });
        (seed, built.map_err(|e| e.to_string()))
    });

    let jobs: Vec<(PolicySpec, usize)> = cfg
        .policies
        .iter()
        .flat_map(|p| (0..per_seed.len()).map(move |k| (*p, k)))
        .collect();
    let cells: Vec<Cell> = par_map(cfg.workers, &jobs, |(policy, k)| {
        let (seed, built) = &per_seed[*k];
        let result = match built {
            Ok((sc, art)) => run_cell(sc, policy, art.oracle).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        Cell {
            policy: *policy,
            seed: *seed,
            result,
        }
    });

    let mut metrics = Vec::new();
    let mut diagnostics = Vec::new();
    for c in &cells {
        if let Ok(out) = &c.result {
            metrics.extend(metric_rows(&out.run));
            diagnostics.extend(diagnostic_rows(&out.run));
        }
    }

    let derived = summarize(&metrics, cfg.final_window);
    let mut summary = Vec::new();
    for policy in &cfg.policies {
        let label = policy.label();
        if let Some((_, s)) = derived.iter().find(|(p, _)| *p == label) {
            let reports: Vec<&BoundReport> = cells
                .iter()
                .filter(|c| c.policy == *policy)
                .filter_map(|c| c.result.as_ref().ok().and_then(|o| o.bounds.as_ref()))
                .collect();
            let thm1 = (!reports.is_empty()).then(|| {
                let k = reports.len() as f64;
                Thm1Summary {
                    pass: reports.iter().all(|r| r.thm1_pass()),
                    rhs_main: reports.iter().map(|r| r.thm1_rhs_main).sum::<f64>() / k,
                    rhs_appendix: reports.iter().map(|r| r.thm1_rhs_appendix).sum::<f64>() / k,
                }
            });
            summary.push(SummaryRow::Policy {
                policy: label.clone(),
                avg_utility: s.avg_utility,
                avg_carbon_kg: s.avg_carbon_kg,
                total_carbon_kg: s.total_carbon_kg,
                final_acc: s.final_acc,
                thm1,
            });
        }
        for c in cells.iter().filter(|c| c.policy == *policy && c.result.is_err()) {
            summary.push(SummaryRow::Error {
                policy: label.clone(),
                seed: c.seed,
            });
        }
    }

    Ok(ExperimentOutput {
        config: cfg.clone(),
        trace,
        cells,
        seeds: per_seed
            .into_iter()
            .filter_map(|(_, b)| b.ok().map(|(_, a)| a))
            .collect(),
        metrics,
        diagnostics,
        summary,
    })
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn file_label(policy: &PolicySpec) -> String {
    policy.label().replace(':', "-")
}

/// Writes all artifacts of an experiment into `dir`.
pub fn write_experiment(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = vec![
        ("config.json".into(), out.config.to_echo_json()),
        ("trace.csv".into(), format_trace(&out.trace)),
        ("metrics.csv".into(), format_metrics(&out.metrics)),
        (
            "slot_diagnostics.csv".into(),
            format_diagnostics(&out.diagnostics),
        ),
        ("summary.csv".into(), format_summary(&out.summary)),
    ];
    for c in &out.cells {
        if let Ok(CellOutput { bounds: Some(b), .. }) = &c.result {
            files.push((
                format!("bounds_{}_{}.txt", file_label(&c.policy), c.seed),
                b.to_text(),
            ));
        }
    }
    for s in &out.seeds {
        if let Some(o) = &s.oracle {
            files.push((format!("oracle_{}.txt", s.seed), o.to_text()));
        }
        if let Some(d) = &s.datasets_csv {
            files.push((format!("datasets_{}.csv", s.seed), d.clone()));
        }
    }
    let mut errors = String::new();
    for (c, e) in out.failed_cells() {
        let _ = writeln!(errors, "{} seed {}: {e}", c.policy, c.seed);
    }
    let err_path = dir.join("errors.txt");
    if !errors.is_empty() {
        files.push(("errors.txt".into(), errors));
    } else if err_path.exists() {
        std::fs::remove_file(&err_path).map_err(|e| Error::io(&err_path, e))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let p = dir.join(name);
        write_atomic(&p, &text)?;
        written.push(p);
    }
    Ok(written)
}

pub const SWEEP_HEADER: &str = "cell,v,q0,budget_kg,probe_fraction,dirichlet_alpha,policy,avg_utility,avg_carbon_kg,total_carbon_kg,final_acc,thm1_pass,thm1_rhs_main,thm1_rhs_appendix";

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub name: String,
    pub point: SweepPoint,
    pub output: std::result::Result<ExperimentOutput, String>,
}

/// Runs each grid cell as its own experiment. Cells are independent and run
/// in parallel; configuration errors in any cell abort before running.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let cells = cfg.sweep.cells(cfg);
    let results = par_map(cfg.workers, &cells, |(point, cell_cfg)| {
        let mut c = cell_cfg.clone();
        c.workers = 1;
        (*point, run_experiment(&c).map_err(|e| e.to_string()))
    });
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(i, (point, output))| SweepCell {
            name: format!("cell_{i:03}"),
            point,
            output,
        })
        .collect())
}

pub fn format_sweep_summary(cells: &[SweepCell]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        let p = &c.point;
        let prefix = format!(
            "{},{},{},{},{},{}",
            c.name, p.v, p.q0, p.budget_kg, p.probe_fraction, p.dirichlet_alpha
        );
        match &c.output {
            Ok(o) => {
                for row in &o.summary {
                    let _ = writeln!(out, "{prefix},{}", super::metrics::format_summary_row(row));
                }
            }
            Err(_) => {
                let _ = writeln!(out, "{prefix},all,error,error,error,error,error,error,error");
            }
        }
    }
    out
}

/// Writes each cell into `dir/cell_NNN/` plus `dir/sweep_summary.csv`.
pub fn write_sweep(cfg: &ExperimentConfig, cells: &[SweepCell], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("config.json"), &cfg.to_echo_json())?;
    for c in cells {
        let sub = dir.join(&c.name);
        match &c.output {
            Ok(o) => {
                write_experiment(o, &sub)?;
            }
            Err(e) => {
                std::fs::create_dir_all(&sub).map_err(|err| Error::io(&sub, err))?;
                write_atomic(&sub.join("errors.txt"), &format!("{e}\n"))?;
            }
        }
    }
    write_atomic(&dir.join("sweep_summary.csv"), &format_sweep_summary(cells))
}

/// Statistics of a single cell, recomputed from its slot rows.
pub fn run_stats(run: &PolicyRun, final_window: usize) -> super::metrics::CellStats {
    let rows = metric_rows(run);
    let refs: Vec<&MetricRow> = rows.iter().collect();
    cell_stats(&refs, final_window)
}
