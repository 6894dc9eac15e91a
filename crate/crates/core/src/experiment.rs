//! Parameter sweeps: expand a spec into run configurations, execute them in
//! parallel and collect one self-describing report row per run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AntProgramId, TmUpdateRule};
use crate::analysis::{
    fit_complexity, pheromone_audit, verify_layer_coverage, verify_no_collision, AuditResult, BoundModel, FitResult,
    RunMetrics, Sample, VerifyError,
};
use crate::scheduler::{
    run, EmissionScheme, FaultPlan, Mode, RunConfig, ScheduleStrategy, SimError, Termination, TraceRecord,
};
use crate::world::Position;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

fn config_err(field: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(SimError::ConfigInvalid { field: field.into(), reason: reason.into() })
}

/// A sweep over programs, ant counts, treasure placements, seeds and fault
/// counts. Every other field is shared by all cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub programs: Vec<AntProgramId>,
    pub ks: Vec<u32>,
    /// Distances; each is turned into a position by [`treasure_for`].
    #[serde(default)]
    pub distances: Vec<u64>,
    /// Explicit positions, used in addition to `distances`.
    #[serde(default)]
    pub treasures: Vec<Position>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Numbers of seeded random fail-stops.
    #[serde(default = "default_faults")]
    pub faults: Vec<u32>,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default)]
    pub mode: Option<Mode>,
    /// `seeded-random` takes its seed from the cell, not from this value.
    #[serde(default)]
    pub strategy: ScheduleStrategy,
    #[serde(default)]
    pub emission: EmissionScheme,
    /// Scripted kills applied in every cell on top of the random ones.
    #[serde(default)]
    pub fault_plan: FaultPlan,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub pheromone_budget: Option<u64>,
    #[serde(default)]
    pub tm_rule: TmUpdateRule,
    #[serde(default)]
    pub record_trace: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_faults() -> Vec<u32> {
    vec![0]
}

fn one() -> u32 {
    1
}

impl ExperimentSpec {
    pub fn new(programs: Vec<AntProgramId>, ks: Vec<u32>, distances: Vec<u64>) -> Self {
        ExperimentSpec {
            programs,
            ks,
            distances,
            treasures: Vec::new(),
            seeds: default_seeds(),
            faults: default_faults(),
            repetitions: 1,
            mode: None,
            strategy: ScheduleStrategy::RoundRobin,
            emission: EmissionScheme::OnePerRound,
            fault_plan: FaultPlan::none(),
            max_steps: None,
            pheromone_budget: None,
            tm_rule: TmUpdateRule::Restart,
            record_trace: false,
        }
    }

    /// A one-cell spec that reruns `cfg` unchanged.
    pub fn single(cfg: &RunConfig) -> Self {
        let mut spec = ExperimentSpec::new(vec![cfg.program], vec![cfg.k], Vec::new());
        spec.treasures = vec![cfg.treasure];
        spec.mode = cfg.mode;
        spec.strategy = cfg.strategy.clone();
        spec.emission = cfg.emission;
        spec.fault_plan = cfg.faults.clone();
        spec.max_steps = cfg.max_steps;
        spec.pheromone_budget = cfg.pheromone_budget;
        spec.tm_rule = cfg.tm_rule;
        spec.record_trace = cfg.record_trace;
        spec
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| ExperimentError::Json { path: PathBuf::from("<spec>"), line: e.line(), source: e })?;
        spec.check_axes()?;
        Ok(spec)
    }

    fn check_axes(&self) -> Result<(), ExperimentError> {
        if self.programs.is_empty() {
            return Err(config_err("programs", "at least one program is required"));
        }
        if self.ks.is_empty() {
            return Err(config_err("ks", "at least one ant count is required"));
        }
        if self.distances.is_empty() && self.treasures.is_empty() {
            return Err(config_err("distances", "give distances or explicit treasures"));
        }
        if self.distances.contains(&0) {
            return Err(ExperimentError::Config(SimError::TreasureAtNest));
        }
        if self.treasures.contains(&Position::NEST) {
            return Err(ExperimentError::Config(SimError::TreasureAtNest));
        }
        if self.seeds.is_empty() || self.faults.is_empty() || self.repetitions == 0 {
            return Err(config_err("seeds", "seeds, faults and repetitions must be non-empty"));
        }
        Ok(())
    }

    /// Expands the sweep in a fixed order: program, k, placement, f, seed,
    /// repetition.
    pub fn cells(&self) -> Result<Vec<RunConfig>, ExperimentError> {
        self.check_axes()?;
        let mut out = Vec::new();
        for &program in &self.programs {
            for &k in &self.ks {
                let placements: Vec<(Option<u64>, Position)> = self
                    .distances
                    .iter()
                    .map(|&d| (Some(d), Position::NEST))
                    .chain(self.treasures.iter().map(|&p| (None, p)))
                    .collect();
                for &(d, explicit) in &placements {
                    for &f in &self.faults {
                        for &seed in &self.seeds {
                            for rep in 0..self.repetitions {
                                let seed = cell_seed(seed, rep);
                                let treasure = d.map_or(explicit, |d| treasure_for(d, seed));
                                out.push(self.config(program, k, treasure, f, seed));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn config(&self, program: AntProgramId, k: u32, treasure: Position, f: u32, seed: u64) -> RunConfig {
        let mut faults = self.fault_plan.clone();
        if f > 0 {
            faults.random = Some(crate::scheduler::RandomFaults { f, seed });
        }
        let strategy = match self.strategy {
            ScheduleStrategy::SeededRandom { .. } => ScheduleStrategy::SeededRandom { seed },
            ref s => s.clone(),
        };
        RunConfig {
            program,
            k,
            treasure,
            mode: self.mode,
            strategy,
            emission: self.emission,
            faults,
            max_steps: self.max_steps,
            pheromone_budget: self.pheromone_budget,
            tm_rule: self.tm_rule,
            record_trace: self.record_trace,
        }
    }

    /// Cells that break the `D > k` assumption the round bounds rely on.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ds = self.distances.iter().copied().chain(self.treasures.iter().map(|p| p.distance()));
        for d in ds {
            for &k in &self.ks {
                if d <= k as u64 {
                    out.push(format!("D = {d} is not larger than k = {k}; round bounds assume D > k"));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Seed for repetition `rep` of a cell seeded with `seed`.
fn cell_seed(seed: u64, rep: u32) -> u64 {
    if rep == 0 {
        seed
    } else {
        seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Deterministic treasure at distance `d`. The seed cycles through the
/// placement kinds (axis, near-axis, diagonal) and then the four rotations.
pub fn treasure_for(d: u64, seed: u64) -> Position {
    assert!(d > 0, "distance must be positive");
    let d = d as i64;
    let base = match seed % 3 {
        0 => Position::new(d, 0),
        1 => Position::new(d - 1, 1),
        _ => Position::new(d / 2, d - d / 2),
    };
    let mut p = base;
    for _ in 0..(seed / 3) % 4 {
        p = Position::new(p.y, -p.x);
    }
    p
}

/// Outcome of one run plus everything needed to judge and replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cell: usize,
    pub config: RunConfig,
    pub distance: u64,
    /// Faults the plan may inject (the `f` of the bounds).
    pub f: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_error: Option<VerifyError>,
    /// `None` when the check does not apply (asynchronous runs or faults).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_error: Option<Option<VerifyError>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RowError>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub kind: String,
    pub message: String,
}

impl ReportRow {
    pub fn found(&self) -> bool {
        self.metrics.as_ref().is_some_and(|m| m.found)
    }
}

/// Runs one configuration and judges it. When `trace_dir` is given and the
/// config records a trace, it is written there as `trace-<cell>.jsonl`.
pub fn evaluate(cell: usize, cfg: RunConfig, trace_dir: Option<&Path>) -> ReportRow {
    let record = cfg.record_trace;
    let (mut row, trace) = evaluate_with_trace(cell, cfg);
    if let (Some(dir), true) = (trace_dir, record) {
        let path = dir.join(format!("trace-{cell:05}.jsonl"));
        if let Err(e) = write_jsonl(&path, &trace) {
            row.pass = false;
            row.error.get_or_insert(RowError { kind: "Io".into(), message: e.to_string() });
        }
    }
    row
}

/// Like [`evaluate`], handing back the trace instead of writing it.
pub fn evaluate_with_trace(cell: usize, cfg: RunConfig) -> (ReportRow, Vec<TraceRecord>) {
    let distance = cfg.distance();
    let f = cfg.faults.fault_count().min(u32::MAX as u64) as u32;
    let mut row = ReportRow {
        cell,
        config: cfg.clone(),
        distance,
        f,
        termination: None,
        metrics: None,
        coverage_error: None,
        collision_error: None,
        audit: None,
        error: None,
        pass: false,
    };
    let (report, err) = match run(cfg.clone()) {
        Ok(r) => (r, None),
        Err(e) => {
            let kind = e.kind().to_string();
            let message = e.to_string();
            let report = match e {
                SimError::StepCapExceeded(r) | SimError::ScriptExhausted(r) | SimError::BudgetLoopDetected(r) => *r,
                _ => {
                    row.error = Some(RowError { kind, message });
                    return (row, Vec::new());
                }
            };
            (report, Some(RowError { kind, message }))
        }
    };
    row.termination = Some(report.termination.clone());
    row.coverage_error = verify_layer_coverage(&report.metrics, report.world.visited(), distance).err();
    if cfg.mode() == Mode::Sync && cfg.program.is_fsm() && cfg.faults.is_empty() {
        row.collision_error = Some(verify_no_collision(&report.metrics).err());
    }
    let audit = pheromone_audit(&report.metrics, cfg.program, distance, cfg.k, f);
    row.pass = err.is_none()
        && report.metrics.found
        && row.coverage_error.is_none()
        && !matches!(row.collision_error, Some(Some(_)))
        && audit.pass
        && !report.metrics.nest_marked;
    row.audit = Some(audit);
    row.metrics = Some(report.metrics);
    if err.is_some() {
        row.error = err;
    }
    (row, report.trace)
}

/// Runs every cell of the spec in parallel. Rows come back in cell order.
pub fn run_experiment(spec: &ExperimentSpec, trace_dir: Option<&Path>) -> Result<Vec<ReportRow>, ExperimentError> {
    let cells = spec.cells()?;
    Ok(cells
        .into_par_iter()
        .enumerate()
        .map(|(i, cfg)| evaluate(i, cfg, trace_dir))
        .collect())
}

/// Reruns the configuration echoed in a row.
pub fn replay(row: &ReportRow) -> ReportRow {
    evaluate(row.cell, row.config.clone(), None)
}

/// Largest acceptable `max_relative_residual` of a round fit.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSummary {
    pub program: AntProgramId,
    pub rows: usize,
    pub errors: usize,
    pub not_found: usize,
    pub coverage_failures: usize,
    pub collision_failures: usize,
    pub audit_failures: usize,
    /// Largest emissions / bound ratio over rows.
    pub max_audit_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    /// The fit exists, its residual is within the limit and no sample
    /// exceeds it.
    pub fit_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub programs: Vec<ProgramSummary>,
    /// Every verdict passes. Fits that could not be computed do not fail the
    /// summary; fits that were computed must pass.
    pub pass: bool,
}

/// Groups rows by program, checks verdicts and fits the round bound to the
/// per-cell worst cases:
/// `c1·D + c2·D²/k`, or the fault-tolerant form when any row injects faults.
pub fn summarize(rows: &[ReportRow]) -> Summary {
    let mut by_program: BTreeMap<String, (AntProgramId, Vec<&ReportRow>)> = BTreeMap::new();
    for r in rows {
        by_program.entry(r.config.program.name().to_string()).or_insert((r.config.program, Vec::new())).1.push(r);
    }
    let mut programs = Vec::new();
    for (_, (program, rs)) in by_program {
        let mut s = ProgramSummary {
            program,
            rows: rs.len(),
            errors: rs.iter().filter(|r| r.error.is_some()).count(),
            not_found: rs.iter().filter(|r| !r.found()).count(),
            coverage_failures: rs.iter().filter(|r| r.coverage_error.is_some()).count(),
            collision_failures: rs.iter().filter(|r| matches!(r.collision_error, Some(Some(_)))).count(),
            audit_failures: rs.iter().filter(|r| r.audit.as_ref().is_some_and(|a| !a.pass)).count(),
            max_audit_ratio: rs
                .iter()
                .filter_map(|r| r.audit.as_ref())
                .map(|a| a.emissions as f64 / a.bound.max(1) as f64)
                .fold(0.0, f64::max),
            fit: None,
            fit_error: None,
            fit_pass: false,
            pass: false,
        };
        let model = if rs.iter().any(|r| r.f > 0) { BoundModel::FaultTolerant } else { BoundModel::Search };
        let samples = worst_case_samples(&rs);
        match fit_complexity(&samples, model) {
            Ok(fit) => {
                s.fit_pass = fit.max_relative_residual <= FIT_RESIDUAL_LIMIT
                    && samples.iter().all(|x| x.rounds as f64 <= fit.bound(x.distance, x.k, x.f) * (1.0 + 1e-9));
                s.fit = Some(fit);
            }
            Err(e) => s.fit_error = Some(e.to_string()),
        }
        s.pass = s.errors == 0
            && s.not_found == 0
            && s.coverage_failures == 0
            && s.collision_failures == 0
            && s.audit_failures == 0
            && (s.fit.is_none() || s.fit_pass);
        programs.push(s);
    }
    let pass = programs.iter().all(|p| p.pass);
    Summary { programs, pass }
}

/// One sample per `(D, k, f)` cell: the largest round count over its
/// placements and seeds. The bounds quantify over every treasure position,
/// so the cell's worst case is what they describe.
pub fn worst_case_samples(rows: &[&ReportRow]) -> Vec<Sample> {
    let mut cells: BTreeMap<(u64, u32, u32), u64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.found()) {
        let rounds = r.metrics.as_ref().map_or(0, |m| m.rounds);
        let e = cells.entry((r.distance, r.config.k, r.f)).or_default();
        *e = (*e).max(rounds);
    }
    cells
        .into_iter()
        .map(|((distance, k, f), rounds)| Sample { distance, k, f, rounds })
        .collect()
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_jsonl_to(&mut w, items).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(w: &mut W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let file = File::open(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|source| ExperimentError::Json { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, ExperimentError> {
    read_jsonl(path)
}
