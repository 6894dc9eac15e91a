//! Deterministic simulation of ants searching the infinite grid for a
//! treasure while communicating only through a single pheromone type.
//!
//! Five behaviour programs are provided: finite-state programs for the
//! asynchronous and synchronous models, their fault-tolerant variants, and a
//! counting program that claims ids on the northern ray. The [`scheduler`]
//! runs them under either model with fail-stop faults; [`analysis`] checks
//! coverage, collisions, pheromone use and round complexity.

pub mod agents;
pub mod analysis;
pub mod experiment;
pub mod scheduler;
pub mod world;

pub use agents::{Action, AntProgramId, AntState, FsmState, Observation, TmState, TmUpdateRule};
pub use analysis::{
    detect_cycle, fit_complexity, metrics_from_trace, pheromone_audit, verify_layer_coverage,
    verify_no_collision, AuditResult, BoundModel, CycleReport, FitResult, RunMetrics, Sample, VerifyError,
};
pub use experiment::{
    evaluate, evaluate_with_trace, read_jsonl, read_trace, replay, run_experiment, summarize, treasure_for, write_jsonl, ExperimentError,
    ExperimentSpec, ProgramSummary, ReportRow, Summary,
};
pub use scheduler::{
    run, run_async, run_sync, AntId, EmissionScheme, FaultPlan, Mode, RunConfig, RunReport,
    ScheduleStrategy, SimError, Simulation, Termination, TraceRecord,
};
pub use world::{layer_cells, manhattan_distance, Direction, PheromoneMap, Position, WorldState};
