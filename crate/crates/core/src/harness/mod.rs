//! Experiment configuration, trace files, runs and sweeps, metrics tables,
//! and bound validation over written artifacts.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod oneshot;
pub mod trace_io;
pub mod validate;

pub use config::{ExperimentConfig, SweepGrid, SweepPoint, TraceSource};
pub use experiment::{
    run_experiment, run_sweep, write_atomic, write_experiment, write_sweep, ExperimentOutput, SweepCell,
};
pub use oneshot::{solve_request, SolveRequest, SolveResponse};
pub use trace_io::{format_trace, load_trace, parse_trace, synth_trace, TraceProfile, TRACE_HEADER};
pub use validate::{validate_artifacts, validate_bounds, BoundInputs, OracleArtifact, ValidationOutcome};
