//! `antgrid`: single runs, sweeps, fit summaries and budget-cycle detection.
//!
//! Exit codes: 0 when every verdict passes, 2 when a verifier, audit or fit
//! fails, 3 on configuration errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use antgrid_core::analysis::run_solo;
use antgrid_core::experiment::write_jsonl_to;
use antgrid_core::*;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "antgrid", version, about = "Pheromone-guided treasure search on the grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print its report row.
    Run(RunArgs),
    /// Run every cell of a sweep file and write a JSON Lines report.
    Sweep(SweepArgs),
    /// Check verdicts and fit round bounds over a report.
    Summarize(SummarizeArgs),
    /// Run a lone ant under a pheromone budget and look for its cycle.
    DetectCycle(CycleArgs),
}

#[derive(Args)]
struct ConfigFlags {
    /// JSON run config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    program: Option<AntProgramId>,
    #[arg(long)]
    k: Option<u32>,
    /// Treasure position as `X,Y`.
    #[arg(long, value_parser = parse_position, allow_hyphen_values = true, conflicts_with = "distance")]
    treasure: Option<Position>,
    /// Place the treasure at this distance, chosen by the seed.
    #[arg(long)]
    distance: Option<u64>,
    /// `round-robin`, `random`, or `script:FILE` with a list of ant ids.
    #[arg(long)]
    scheduler: Option<String>,
    /// Seeds the random scheduler, random faults and treasure placement.
    #[arg(long, env = "ANTGRID_SEED")]
    seed: Option<u64>,
    /// A JSON fault plan (or `[[ant, step], ...]`) file, or `random:F`.
    #[arg(long)]
    faults: Option<String>,
    /// Pheromone budget.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// `sync` or `async`; defaults to the program's own model.
    #[arg(long)]
    mode: Option<String>,
    /// Update rule of the counting program: `restart` or `listing`.
    #[arg(long)]
    tm_rule: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Write the trace as JSON Lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the report row to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment spec.
    spec: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for one trace file per cell.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Replace the spec's seeds with this one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// JSON Lines report written by `sweep` or `run`.
    report_in: PathBuf,
    /// Also write the summary to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CycleArgs {
    #[arg(long, default_value = "async-fsm")]
    program: AntProgramId,
    #[arg(long, value_parser = parse_position, allow_hyphen_values = true, conflicts_with = "distance")]
    treasure: Option<Position>,
    #[arg(long)]
    distance: Option<u64>,
    #[arg(long, env = "ANTGRID_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    budget: u64,
    /// Steps to simulate.
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Config(format!("{}: {e}", e.kind()))
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(e) => e.into(),
            ExperimentError::Json { .. } => Failure::Config(format!("ConfigInvalid: {e}")),
            ExperimentError::Io { .. } => Failure::Io(e.to_string()),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Failure {
    SimError::ConfigInvalid { field: field.into(), reason: reason.into() }.into()
}

fn parse_position(s: &str) -> Result<Position, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x = x.trim().parse().map_err(|e| format!("x: {e}"))?;
    let y = y.trim().parse().map_err(|e| format!("y: {e}"))?;
    Ok(Position::new(x, y))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse_script(text: &str) -> Result<Vec<AntId>, Failure> {
    if let Ok(ids) = serde_json::from_str::<Vec<u32>>(text) {
        return Ok(ids.into_iter().map(AntId).collect());
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map(AntId).map_err(|_| invalid("scheduler", format!("bad ant id `{t}`"))))
        .collect()
}

fn parse_faults(arg: &str, seed: u64) -> Result<FaultPlan, Failure> {
    if let Some(f) = arg.strip_prefix("random:") {
        let f = f.parse().map_err(|_| invalid("faults", format!("bad fault count `{f}`")))?;
        return Ok(FaultPlan::random(f, seed));
    }
    let text = read(Path::new(arg))?;
    FaultPlan::from_json_pairs(&text)
        .or_else(|_| serde_json::from_str(&text))
        .map_err(|e| invalid("faults", e.to_string()))
}

fn parse_mode(value: &str) -> Result<Mode, Failure> {
    match value {
        "sync" => Ok(Mode::Sync),
        "async" => Ok(Mode::Async),
        _ => Err(invalid("mode", format!("expected sync or async, got `{value}`"))),
    }
}

fn parse_tm_rule(value: &str) -> Result<TmUpdateRule, Failure> {
    match value {
        "restart" => Ok(TmUpdateRule::Restart),
        "listing" => Ok(TmUpdateRule::Listing),
        _ => Err(invalid("tm_rule", format!("expected restart or listing, got `{value}`"))),
    }
}

/// Builds a run config from an optional file plus flag overrides.
fn build_config(f: &ConfigFlags) -> Result<RunConfig, Failure> {
    let file: Option<RunConfig> = match &f.config {
        Some(path) => Some(serde_json::from_str(&read(path)?).map_err(|e| invalid("config", e.to_string()))?),
        None => None,
    };
    let seed = f.seed.unwrap_or(0);
    let treasure = match (f.treasure, f.distance) {
        (Some(t), _) => Some(t),
        (None, Some(0)) => return Err(invalid("distance", "must be at least 1")),
        (None, Some(d)) => Some(treasure_for(d, seed)),
        (None, None) => None,
    };
    let mut cfg = match file {
        Some(mut c) => {
            c.program = f.program.unwrap_or(c.program);
            c.k = f.k.unwrap_or(c.k);
            c.treasure = treasure.unwrap_or(c.treasure);
            c
        }
        None => {
            let program = f.program.ok_or_else(|| invalid("program", "required without --config"))?;
            let k = f.k.ok_or_else(|| invalid("k", "required without --config"))?;
            let t = treasure.ok_or_else(|| invalid("treasure", "give --treasure or --distance"))?;
            RunConfig::new(program, k, t)
        }
    };
    if cfg.treasure == Position::NEST {
        return Err(invalid("treasure", "the treasure must be at distance at least 1 from the nest"));
    }
    if let Some(s) = &f.scheduler {
        cfg.strategy = match s.as_str() {
            "round-robin" => ScheduleStrategy::RoundRobin,
            "random" => ScheduleStrategy::SeededRandom { seed },
            s => match s.strip_prefix("script:") {
                Some(path) => ScheduleStrategy::Scripted { order: parse_script(&read(Path::new(path))?)? },
                None => return Err(invalid("scheduler", format!("unknown scheduler `{s}`"))),
            },
        };
    } else if f.seed.is_some() {
        if let ScheduleStrategy::SeededRandom { seed: s } = &mut cfg.strategy {
            *s = seed;
        }
    }
    if let Some(faults) = &f.faults {
        cfg.faults = parse_faults(faults, seed)?;
    }
    if let Some(m) = &f.mode {
        cfg.mode = Some(parse_mode(m)?);
    }
    if let Some(r) = &f.tm_rule {
        cfg.tm_rule = parse_tm_rule(r)?;
    }
    cfg.pheromone_budget = f.budget.or(cfg.pheromone_budget);
    cfg.max_steps = f.max_steps.or(cfg.max_steps);
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn json_line<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("report types serialise");
    out.push(b'\n');
    out
}

fn cmd_run(args: RunArgs) -> Result<bool, Failure> {
    let mut cfg = build_config(&args.flags)?;
    cfg.record_trace |= args.trace.is_some();
    let (row, trace) = evaluate_with_trace(0, cfg);
    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        write_jsonl_to(&mut buf, &trace).map_err(|e| Failure::Io(e.to_string()))?;
        write_file(path, &buf)?;
    }
    let line = json_line(&row);
    if let Some(path) = &args.report {
        write_file(path, &line)?;
    }
    io::stdout().write_all(&line).map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(e) = &row.error {
        eprintln!("{}: {}", e.kind, e.message);
    }
    Ok(row.pass)
}

fn cmd_sweep(args: SweepArgs) -> Result<bool, Failure> {
    let mut spec = ExperimentSpec::from_json(&read(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    spec.pheromone_budget = args.budget.or(spec.pheromone_budget);
    spec.max_steps = args.max_steps.or(spec.max_steps);
    if let Some(dir) = &args.trace {
        spec.record_trace = true;
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    let rows = run_experiment(&spec, args.trace.as_deref())?;
    match &args.report {
        Some(path) => write_jsonl(path, &rows)?,
        None => write_jsonl_to(&mut io::stdout().lock(), &rows).map_err(|e| Failure::Io(e.to_string()))?,
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("{} rows, {} failed", rows.len(), failed);
    Ok(failed == 0)
}

fn cmd_summarize(args: SummarizeArgs) -> Result<bool, Failure> {
    let rows: Vec<ReportRow> = read_jsonl(&args.report_in)?;
    let summary = summarize(&rows);
    let mut text = serde_json::to_vec_pretty(&summary).expect("summary serialises");
    text.push(b'\n');
    if let Some(path) = &args.report {
        write_file(path, &text)?;
    }
    io::stdout().write_all(&text).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(summary.pass)
}

fn cmd_detect_cycle(args: CycleArgs) -> Result<bool, Failure> {
    let treasure = match (args.treasure, args.distance) {
        (Some(t), _) => t,
        (None, Some(d)) if d > 0 => treasure_for(d, args.seed),
        (None, Some(_)) => return Err(invalid("distance", "must be at least 1")),
        (None, None) => return Err(invalid("treasure", "give --treasure or --distance")),
    };
    if treasure == Position::NEST {
        return Err(invalid("treasure", "the treasure must be at distance at least 1 from the nest"));
    }
    let trace = run_solo(args.program, treasure, Some(args.budget), args.max_steps)?;
    let (cycle, verdict) = match detect_cycle(&trace, args.program) {
        Ok(c) => {
            let in_band = c.cycle_found && c.band.contains(treasure);
            let ok = c.cycle_found || trace.found;
            (Some((c, in_band)), ok)
        }
        Err(e) => {
            eprintln!("{e}");
            (None, trace.found)
        }
    };
    let out = serde_json::json!({
        "program": args.program,
        "budget": args.budget,
        "treasure": treasure,
        "steps": trace.steps.len(),
        "found": trace.found,
        "cycle": cycle.as_ref().map(|c| &c.0),
        "treasure_in_band": cycle.as_ref().map(|c| c.1),
    });
    let line = json_line(&out);
    if let Some(path) = &args.report {
        write_file(path, &line)?;
    }
    io::stdout().write_all(&line).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::DetectCycle(a) => cmd_detect_cycle(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
