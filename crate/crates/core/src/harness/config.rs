use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{PolicyKind, PolicySpec, Scenario};
use crate::error::{Error, Result};
use crate::fedsim::{generate_task, SyntheticTask, TrainConfig};
use crate::fleet::{CarbonTrace, EnergyModel, FleetConfig, GPUS_PER_CENTER, GPU_ACTIVE_KW, GPU_IDLE_KW};
use crate::lyapunov::ControlParams;
use crate::solvers::{SolverId, EXHAUSTIVE_LIMIT, ORACLE_LIMIT};
use crate::utility::UtilityConfig;

use super::trace_io::{load_trace, synth_trace, TraceProfile};

/// A scalar applied to every center, or one value per center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCenter {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerCenter {
    pub fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerCenter::Uniform(v) => Ok(vec![*v; n]),
            PerCenter::List(vs) if vs.len() == n => Ok(vs.clone()),
            PerCenter::List(vs) => Err(Error::Config(format!(
                "{what} lists {} values for {n} centers",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySpec {
    pub static_kwh: PerCenter,
    pub active_kwh: PerCenter,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self {
            static_kwh: PerCenter::Uniform(GPUS_PER_CENTER * GPU_IDLE_KW),
            active_kwh: PerCenter::Uniform(GPUS_PER_CENTER * (GPU_ACTIVE_KW - GPU_IDLE_KW)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    File { path: PathBuf },
    Synthetic { profile: TraceProfile, seed: u64 },
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic {
            profile: TraceProfile::Diurnal,
            seed: 0,
        }
    }
}

/// Synthetic task parameters; the number of centers comes from the fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    pub n_classes: usize,
    pub dim: usize,
    pub class_sep: f64,
    pub noise_scale: f64,
    pub samples_per_center: usize,
    pub test_samples: usize,
    pub dirichlet_alpha: f64,
    /// Fixed data seed; when absent each run seed also seeds the data.
    pub data_seed: Option<u64>,
}

impl Default for TaskParams {
    fn default() -> Self {
        let t = SyntheticTask::default();
        Self {
            n_classes: t.n_classes,
            dim: t.dim,
            class_sep: t.class_sep,
            noise_scale: t.noise_scale,
            samples_per_center: t.samples_per_center,
            test_samples: t.test_samples,
            dirichlet_alpha: t.dirichlet_alpha,
            data_seed: None,
        }
    }
}

impl TaskParams {
    pub fn task(&self, n_centers: usize, run_seed: u64) -> SyntheticTask {
        SyntheticTask {
            n_centers,
            n_classes: self.n_classes,
            dim: self.dim,
            class_sep: self.class_sep,
            noise_scale: self.noise_scale,
            samples_per_center: self.samples_per_center,
            test_samples: self.test_samples,
            dirichlet_alpha: self.dirichlet_alpha,
            seed: self.data_seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilitySpec {
    pub gradient_norm_cap: f64,
    /// Utility offset; defaults to `2 N cap`.
    pub b: Option<f64>,
}

impl Default for UtilitySpec {
    fn default() -> Self {
        Self {
            gradient_norm_cap: 10.0,
            b: None,
        }
    }
}

impl UtilitySpec {
    pub fn config(&self, n_centers: usize) -> Result<UtilityConfig> {
        let mut cfg = UtilityConfig::for_cap(n_centers, self.gradient_norm_cap)?;
        if let Some(b) = self.b {
            cfg.b = b;
            cfg.validate(n_centers)?;
        }
        Ok(cfg)
    }
}

/// Values swept by `sweep`; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub v: Vec<f64>,
    pub q0: Vec<f64>,
    pub budget_kg: Vec<f64>,
    pub probe_fraction: Vec<f64>,
    pub dirichlet_alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub v: f64,
    pub q0: f64,
    pub budget_kg: f64,
    pub probe_fraction: f64,
    pub dirichlet_alpha: f64,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
            && self.q0.is_empty()
            && self.budget_kg.is_empty()
            && self.probe_fraction.is_empty()
            && self.dirichlet_alpha.is_empty()
    }

    /// Cartesian product in the order v, q0, budget, probe fraction, alpha
    /// (last varies fastest).
    pub fn cells(&self, base: &ExperimentConfig) -> Vec<(SweepPoint, ExperimentConfig)> {
        let or = |xs: &[f64], b: f64| if xs.is_empty() { vec![b] } else { xs.to_vec() };
        let mut out = Vec::new();
        for &v in &or(&self.v, base.v) {
            for &q0 in &or(&self.q0, base.q0) {
                for &h in &or(&self.budget_kg, base.budget_kg) {
                    for &eps in &or(&self.probe_fraction, base.train.probe_fraction) {
                        for &alpha in &or(&self.dirichlet_alpha, base.task.dirichlet_alpha) {
                            let mut cfg = base.clone();
                            cfg.v = v;
                            cfg.q0 = q0;
                            cfg.budget_kg = h;
                            cfg.train.probe_fraction = eps;
                            cfg.task.dirichlet_alpha = alpha;
                            cfg.sweep = SweepGrid::default();
                            let point = SweepPoint {
                                v,
                                q0,
                                budget_kg: h,
                                probe_fraction: eps,
                                dirichlet_alpha: alpha,
                            };
                            out.push((point, cfg));
                        }
                    }
                }
            }
        }
        out
    }
}

pub const DESK_CENTERS: usize = 10;
pub const DESK_HORIZON: usize = 48;
/// 400 t over 30 centers and 200 slots, scaled to 10 centers and 48 slots.
pub const DESK_BUDGET_KG: f64 = 400.0 * 1000.0 * (DESK_CENTERS * DESK_HORIZON) as f64 / (30.0 * 200.0);
pub const DESK_V: f64 = 2.0e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_centers: usize,
    pub center_labels: Option<Vec<String>>,
    pub energy: EnergySpec,
    pub trace: TraceSource,
    pub task: TaskParams,
    pub policies: Vec<PolicySpec>,
    pub v: f64,
    pub budget_kg: f64,
    pub horizon: usize,
    pub q0: f64,
    pub train: TrainConfig,
    pub utility: UtilitySpec,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    /// Dump each seed's generated datasets as CSV.
    pub write_datasets: bool,
    /// Compute offline-optimum artifacts per seed (needs N <= 12).
    pub oracle_artifacts: bool,
    /// Slots averaged for the final accuracy.
    pub final_window: usize,
    /// Worker threads for independent cells; 0 uses all cores.
    pub workers: usize,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_centers: DESK_CENTERS,
            center_labels: None,
            energy: EnergySpec::default(),
            trace: TraceSource::default(),
            task: TaskParams::default(),
            policies: ["cafe", "smu", "smn", "amu", "amn"]
                .iter()
                .map(|s| s.parse().expect("builtin policy"))
                .collect(),
            v: DESK_V,
            budget_kg: DESK_BUDGET_KG,
            horizon: DESK_HORIZON,
            q0: 10.0,
            train: TrainConfig::default(),
            utility: UtilitySpec::default(),
            seeds: vec![0, 1, 2],
            output_dir: None,
            write_datasets: false,
            oracle_artifacts: false,
            final_window: 20,
            workers: 0,
            sweep: SweepGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config json: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON of the effective configuration, without the output
    /// directory so echoes of identical runs compare equal.
    pub fn to_echo_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_string_pretty(&c).expect("config serializes") + "\n"
    }

    pub fn fleet(&self) -> Result<FleetConfig> {
        match &self.center_labels {
            Some(labels) => FleetConfig::with_labels(labels.clone()),
            None => FleetConfig::new(self.n_centers),
        }
    }

    pub fn energy_model(&self) -> Result<EnergyModel> {
        EnergyModel::new(
            self.energy.static_kwh.expand(self.n_centers, "static_kwh")?,
            self.energy.active_kwh.expand(self.n_centers, "active_kwh")?,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn control_params(&self) -> Result<ControlParams> {
        ControlParams::new(self.v, self.budget_kg, self.horizon).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_trace(&self) -> Result<CarbonTrace> {
        match &self.trace {
            TraceSource::File { path } => load_trace(path),
            TraceSource::Synthetic { profile, seed } => {
                synth_trace(self.n_centers, self.horizon, *profile, *seed)
            }
        }
    }

    /// Checks every parameter domain. Runs before any computation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let n = self.n_centers;
        let fleet = self.fleet().map_err(|e| Error::Config(e.to_string()))?;
        if fleet.n_centers != n {
            return cfg(format!("{} center labels for {n} centers", fleet.n_centers));
        }
        self.energy_model()?;
        self.control_params()?;
        if !(self.q0 >= 0.0) || !self.q0.is_finite() {
            return cfg(format!("q0 = {} must be >= 0", self.q0));
        }
        self.task
            .task(n, 0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train
            .validate(self.task.samples_per_center)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.utility.config(n).map_err(|e| Error::Config(e.to_string()))?;
        if self.policies.is_empty() {
            return cfg("policy list is empty".into());
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.validate(n)?;
            if self.policies[..i].contains(p) {
                return cfg(format!("policy {p} listed twice"));
            }
            if p.kind == PolicyKind::Cafe && p.solver == SolverId::Exhaustive && n > EXHAUSTIVE_LIMIT {
                return cfg(format!("exhaustive solver needs N <= {EXHAUSTIVE_LIMIT}"));
            }
            if p.kind == PolicyKind::OfflineOracle && n > ORACLE_LIMIT {
                return cfg(format!("offline oracle needs N <= {ORACLE_LIMIT}"));
            }
        }
        if self.oracle_artifacts && n > ORACLE_LIMIT {
            return cfg(format!("oracle artifacts need N <= {ORACLE_LIMIT}"));
        }
        if self.seeds.is_empty() {
            return cfg("seed list is empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return cfg("duplicate seeds".into());
        }
        if self.final_window == 0 {
            return cfg("final_window must be >= 1".into());
        }
        if let TraceSource::File { path } = &self.trace {
            if !path.is_file() {
                return cfg(format!("trace file {} does not exist", path.display()));
            }
        }
        for (_, cell) in self.sweep.cells(self) {
            if cell != *self {
                cell.validate()?;
            }
        }
        Ok(())
    }

    /// Scenario for one run seed, given the already resolved trace.
    pub fn scenario(&self, trace: &CarbonTrace, seed: u64) -> Result<Scenario> {
        let data = generate_task(&self.task.task(self.n_centers, seed))?;
        let sc = Scenario {
            data,
            energy: self.energy_model()?,
            trace: trace.clone(),
            params: self.control_params()?,
            q0: self.q0,
            train: self.train,
            utility: self.utility.config(self.n_centers)?,
            seed,
        };
        sc.validate()?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.budget_kg, 32_000.0);
        let back = ExperimentConfig::from_json(&c.to_echo_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"n_centers": 4, "policies": ["cafe:det_double_greedy", "fixed_k_utility:2"],
                "energy": {"static_kwh": [1, 2, 3, 4]}, "train": {"learning_rate": 0.1},
                "trace": {"kind": "synthetic", "profile": "constant", "seed": 3}}"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.energy_model().unwrap().static_kwh(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.train.local_epochs, 2);
        assert_eq!(c.policies[1].k, Some(2));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"n_centers": 0}"#,
            r#"{"v": -1}"#,
            r#"{"budget_kg": 0}"#,
            r#"{"seeds": []}"#,
            r#"{"seeds": [1, 1]}"#,
            r#"{"policies": ["fixed_k_utility:11"]}"#,
            r#"{"policies": ["smu", "smu"]}"#,
            r#"{"energy": {"active_kwh": [1, 2]}}"#,
            r#"{"train": {"probe_fraction": 0}}"#,
            r#"{"utility": {"b": 1}}"#,
            r#"{"n_centers": 13, "policies": ["offline_oracle"]}"#,
            r#"{"trace": {"kind": "file", "path": "/no/such/trace.csv"}}"#,
            r#"{"sweep": {"v": [1, -1]}}"#,
            r#"{"task": {"dirichlet_alpha": 0}}"#,
        ];
        for text in bad {
            let r = ExperimentConfig::from_json(text).and_then(|c| c.validate());
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
        assert!(ExperimentConfig::from_json(r#"{"unknown_field": 1}"#).is_err());
    }

    #[test]
    fn sweep_cells_product() {
        let mut c = ExperimentConfig::default();
        c.sweep.v = vec![1.0, 2.0];
        c.sweep.budget_kg = vec![10.0, 20.0, 30.0];
        let cells = c.sweep.cells(&c);
        assert_eq!(cells.len(), 6);
        assert_eq!((cells[1].0.v, cells[1].0.budget_kg), (1.0, 20.0));
        assert_eq!(cells[5].1.budget_kg, 30.0);
        assert!(cells
            .iter()
            .all(|(_, cfg)| cfg.sweep.is_empty() && cfg.q0 == c.q0));
    }
}
