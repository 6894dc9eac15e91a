//! Runs a population of ants against one world under synchronous or
//! asynchronous scheduling, with gradual nest release and fail-stop faults.
//!
//! Seeded randomness uses xoshiro256** seeded through SplitMix64
//! (`seed_from_u64`). A uniform pick among `n` candidates is
//! `next_u64() % n`, so schedules replay bit-for-bit from the seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AntProgramId, AntState, Observation, TmUpdateRule};
use crate::analysis::{CycleReport, CycleTracker, RunMetrics};
use crate::world::{Direction, PheromoneMap, Position, WorldState};

/// 1-based ant identifier; ant `i` is the `i`-th to leave the nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AntId(pub u32);

impl AntId {
    fn index(self) -> usize {
        self.0 as usize - 1
    }

    fn from_index(i: usize) -> AntId {
        AntId(i as u32 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleStrategy {
    #[default]
    RoundRobin,
    SeededRandom { seed: u64 },
    /// Explicit, possibly unfair, order of ant ids.
    Scripted { order: Vec<AntId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionScheme {
    /// Ant `i` takes its first step in round `i`.
    #[default]
    OnePerRound,
    /// Every ant may act from the start.
    OnFirstSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sync,
    #[default]
    Async,
}

impl Mode {
    /// The scheduling model a program is written for; the counting program
    /// runs under both and defaults to asynchronous.
    pub fn native(program: AntProgramId) -> Mode {
        if program.uses_sync_extension() {
            Mode::Sync
        } else {
            Mode::Async
        }
    }
}

/// `f` distinct ants chosen from the seed, each killed at an own-step index
/// drawn uniformly from `[0, 8·D + 2·D²/k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomFaults {
    pub f: u32,
    pub seed: u64,
}

/// Which ants fail, and when. Kill steps count the victim's own steps: an
/// ant killed at step `s` performs exactly `s` steps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kills: Vec<(AntId, u64)>,
    /// Ticks (global step index when asynchronous, round when synchronous)
    /// at which the ant sweeping the deepest layer is killed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kill_deepest_at: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomFaults>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn scripted(kills: Vec<(AntId, u64)>) -> Self {
        FaultPlan { kills, ..Self::default() }
    }

    pub fn random(f: u32, seed: u64) -> Self {
        FaultPlan { random: Some(RandomFaults { f, seed }), ..Self::default() }
    }

    /// Parses the `[[antId, stepIndex], ...]` form.
    pub fn from_json_pairs(text: &str) -> Result<Self, serde_json::Error> {
        let kills: Vec<(AntId, u64)> = serde_json::from_str(text)?;
        Ok(Self::scripted(kills))
    }

    pub fn is_empty(&self) -> bool {
        self.kills.is_empty() && self.kill_deepest_at.is_empty() && self.random.is_none()
    }

    /// Upper bound on the number of distinct ants this plan can kill.
    pub fn fault_count(&self) -> u64 {
        let scripted: BTreeSet<AntId> = self.kills.iter().map(|(a, _)| *a).collect();
        scripted.len() as u64
            + self.kill_deepest_at.len() as u64
            + self.random.map_or(0, |r| r.f as u64)
    }

    /// Expands the plan into a kill step per ant (earliest wins).
    pub fn resolve(&self, k: u32, distance: u64) -> HashMap<usize, u64> {
        let mut out: HashMap<usize, u64> = HashMap::new();
        let mut add = |ant: usize, step: u64| {
            let e = out.entry(ant).or_insert(step);
            *e = (*e).min(step);
        };
        for &(ant, step) in &self.kills {
            add(ant.index(), step);
        }
        if let Some(RandomFaults { f, seed }) = self.random {
            let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
            let mut ids: Vec<usize> = (0..k as usize).collect();
            let horizon = 8 * distance + 2 * distance * distance / k as u64;
            for i in 0..(f as usize).min(ids.len()) {
                let j = i + (rng.next_u64() % (ids.len() - i) as u64) as usize;
                ids.swap(i, j);
                let step = rng.next_u64() % (horizon + 1);
                add(ids[i], step);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub program: AntProgramId,
    pub k: u32,
    pub treasure: Position,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub strategy: ScheduleStrategy,
    #[serde(default)]
    pub emission: EmissionScheme,
    #[serde(default)]
    pub faults: FaultPlan,
    /// Cap on the total number of ant steps; defaults to
    /// `64·(D² + k·D + 1000)`.
    #[serde(default)]
    pub max_steps: Option<u64>,
    /// Emissions past this many are dropped and never sensed.
    #[serde(default)]
    pub pheromone_budget: Option<u64>,
    #[serde(default)]
    pub tm_rule: TmUpdateRule,
    #[serde(default)]
    pub record_trace: bool,
}

impl RunConfig {
    pub fn new(program: AntProgramId, k: u32, treasure: Position) -> Self {
        RunConfig {
            program,
            k,
            treasure,
            mode: None,
            strategy: ScheduleStrategy::RoundRobin,
            emission: EmissionScheme::OnePerRound,
            faults: FaultPlan::none(),
            max_steps: None,
            pheromone_budget: None,
            tm_rule: TmUpdateRule::Restart,
            record_trace: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or_else(|| Mode::native(self.program))
    }

    pub fn distance(&self) -> u64 {
        self.treasure.distance()
    }

    pub fn effective_max_steps(&self) -> u64 {
        self.max_steps.unwrap_or_else(|| {
            let d = self.distance();
            64 * (d * d + self.k as u64 * d + 1000)
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.treasure == Position::NEST {
            return Err(SimError::TreasureAtNest);
        }
        if self.k == 0 {
            return Err(SimError::ConfigInvalid { field: "k".into(), reason: "at least one ant is required".into() });
        }
        if self.max_steps == Some(0) {
            return Err(SimError::ConfigInvalid { field: "max_steps".into(), reason: "must be at least 1".into() });
        }
        let f = self.faults.fault_count();
        if f >= self.k as u64 {
            return Err(SimError::AllDead { f, k: self.k });
        }
        if let Some((ant, _)) = self.faults.kills.iter().find(|(a, _)| a.0 == 0 || a.0 > self.k) {
            return Err(SimError::ConfigInvalid {
                field: "faults.kills".into(),
                reason: format!("ant {} does not exist", ant.0),
            });
        }
        if let ScheduleStrategy::Scripted { order } = &self.strategy {
            if let Some(ant) = order.iter().find(|a| a.0 == 0 || a.0 > self.k) {
                return Err(SimError::ConfigInvalid {
                    field: "strategy.order".into(),
                    reason: format!("ant {} does not exist", ant.0),
                });
            }
        }
        let sync = self.mode() == Mode::Sync;
        if !self.program.supports(sync) {
            return Err(SimError::ProgramModeMismatch { program: self.program, mode: self.mode() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum TraceAction {
    Emit,
    /// An emission suppressed by the pheromone budget.
    EmitDropped,
    Move { direction: Direction },
    ExploreStart { layer: u64 },
    ExploreDone { layer: u64 },
    Fail,
}

/// One world mutation, serialized as a JSON Lines object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step_index: u64,
    pub round: u64,
    pub ant_id: AntId,
    #[serde(flatten)]
    pub action: TraceAction,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Termination {
    Found,
    StepCapExceeded,
    ScriptExhausted,
    BudgetLoopDetected,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub metrics: RunMetrics,
    pub termination: Termination,
    pub world: WorldState,
    pub trace: Vec<TraceRecord>,
    /// Largest counter held by any counting ant.
    pub max_counter: u64,
    /// Per-ant cycles, filled when the run ended in `BudgetLoopDetected`.
    pub cycles: Vec<CycleReport>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config at `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("treasure must not be placed on the nest")]
    TreasureAtNest,
    #[error("fault plan kills {f} ants but only {k} exist; at least one must survive")]
    AllDead { f: u64, k: u32 },
    #[error("program {program} cannot run under {mode:?} scheduling")]
    ProgramModeMismatch { program: AntProgramId, mode: Mode },
    #[error("step cap reached before the treasure was found")]
    StepCapExceeded(Box<RunReport>),
    #[error("scripted schedule ran out before the treasure was found")]
    ScriptExhausted(Box<RunReport>),
    #[error("pheromone budget exhausted and every ant is trapped in a cycle that misses the treasure")]
    BudgetLoopDetected(Box<RunReport>),
    #[error("ant {ant} would leave the supported coordinate range at {position}")]
    CoordinateOverflow { ant: u32, position: Position },
}

impl SimError {
    /// The partial report carried by termination errors.
    pub fn report(&self) -> Option<&RunReport> {
        match self {
            SimError::StepCapExceeded(r) | SimError::ScriptExhausted(r) | SimError::BudgetLoopDetected(r) => Some(r),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SimError::ConfigInvalid { .. } => "ConfigInvalid",
            SimError::TreasureAtNest => "TreasureAtNest",
            SimError::AllDead { .. } => "AllDead",
            SimError::ProgramModeMismatch { .. } => "ProgramModeMismatch",
            SimError::StepCapExceeded(_) => "StepCapExceeded",
            SimError::ScriptExhausted(_) => "ScriptExhausted",
            SimError::BudgetLoopDetected(_) => "BudgetLoopDetected",
            SimError::CoordinateOverflow { .. } => "CoordinateOverflow",
        }
    }
}

/// Round accounting shared by both scheduling models: a round ends as soon
/// as every live, released ant has stepped since the previous boundary.
#[derive(Debug, Clone, Default)]
pub struct RoundClock {
    steps_taken: Vec<u64>,
    round_floor: Vec<u64>,
    rounds_completed: u64,
}

impl RoundClock {
    pub fn new(k: usize) -> Self {
        RoundClock { steps_taken: vec![0; k], round_floor: vec![0; k], rounds_completed: 0 }
    }

    pub fn rounds_completed(&self) -> u64 {
        self.rounds_completed
    }

    /// 1-based index of the round in progress.
    pub fn current_round(&self) -> u64 {
        self.rounds_completed + 1
    }

    pub fn steps_taken(&self) -> &[u64] {
        &self.steps_taken
    }

    pub fn record_step(&mut self, ant: usize) {
        self.steps_taken[ant] += 1;
    }

    /// Closes the current round if every ant in `active` has stepped since the
    /// last boundary. Returns whether a boundary was crossed.
    pub fn settle(&mut self, active: impl Iterator<Item = usize> + Clone) -> bool {
        let mut any = false;
        for i in active.clone() {
            any = true;
            if self.steps_taken[i] <= self.round_floor[i] {
                return false;
            }
        }
        if !any {
            return false;
        }
        self.round_floor.clone_from(&self.steps_taken);
        self.rounds_completed += 1;
        true
    }

    /// Counts a round in which no ant was able to act.
    fn skip_empty_round(&mut self) {
        self.round_floor.clone_from(&self.steps_taken);
        self.rounds_completed += 1;
    }
}

/// A frozen view of the pheromone field for one synchronous round.
///
/// Holding it borrows the world immutably, so no emission of the round can
/// become visible before every ant has sensed.
pub struct SenseView<'a> {
    map: &'a PheromoneMap,
}

impl SenseView<'_> {
    pub fn sense(&self, p: Position) -> bool {
        self.map.contains(p)
    }
}

pub fn snapshot_round_sense(w: &WorldState) -> SenseView<'_> {
    SenseView { map: w.pheromones() }
}

#[derive(Debug, Clone)]
struct AntSlot {
    pos: Position,
    state: AntState,
    alive: bool,
    kill_at: Option<u64>,
    exploring: Option<u64>,
}

/// Public snapshot of one ant.
#[derive(Debug, Clone, Copy)]
pub struct AntView {
    pub id: AntId,
    pub position: Position,
    pub state: AntState,
    pub alive: bool,
    pub steps: u64,
}

/// What happened when the scheduler was asked for one more step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tick {
    Stepped(AntId),
    /// The scheduled ant was dead or not yet released.
    Idle,
    Finished,
}

/// One simulation in progress. Most callers use [`run_sync`], [`run_async`]
/// or [`run`]; stepping by hand is for analyses that need per-step state.
pub struct Simulation {
    cfg: RunConfig,
    mode: Mode,
    world: WorldState,
    ants: Vec<AntSlot>,
    clock: RoundClock,
    step_index: u64,
    rng: Xoshiro256StarStar,
    next_rr: usize,
    script_pos: usize,
    deepest_kills: Vec<u64>,
    trace: Vec<TraceRecord>,
    explorer_log: BTreeMap<u64, BTreeSet<u32>>,
    completion_log: BTreeMap<u64, BTreeSet<u32>>,
    dropped: u64,
    max_counter: u64,
    max_steps: u64,
    trackers: Option<Vec<CycleTracker>>,
    termination: Option<Termination>,
    overflow: Option<(u32, Position)>,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mode = cfg.mode();
        let k = cfg.k as usize;
        let kills = cfg.faults.resolve(cfg.k, cfg.distance());
        let ants = (0..k)
            .map(|i| AntSlot {
                pos: Position::NEST,
                state: AntState::initial(cfg.program, cfg.tm_rule),
                alive: true,
                kill_at: kills.get(&i).copied(),
                exploring: None,
            })
            .collect();
        let seed = match cfg.strategy {
            ScheduleStrategy::SeededRandom { seed } => seed,
            _ => 0,
        };
        let mut deepest_kills = cfg.faults.kill_deepest_at.clone();
        deepest_kills.sort_unstable_by(|a, b| b.cmp(a));
        let mut sim = Simulation {
            max_steps: cfg.effective_max_steps(),
            world: WorldState::new(cfg.treasure),
            mode,
            ants,
            clock: RoundClock::new(k),
            step_index: 0,
            rng: Xoshiro256StarStar::seed_from_u64(seed),
            next_rr: 0,
            script_pos: 0,
            deepest_kills,
            trace: Vec::new(),
            explorer_log: BTreeMap::new(),
            completion_log: BTreeMap::new(),
            dropped: 0,
            max_counter: 0,
            trackers: None,
            termination: None,
            overflow: None,
            cfg,
        };
        for i in 0..k {
            sim.apply_scripted_kill(i);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn clock(&self) -> &RoundClock {
        &self.clock
    }

    pub fn ant(&self, id: AntId) -> AntView {
        let slot = &self.ants[id.index()];
        AntView {
            id,
            position: slot.pos,
            state: slot.state,
            alive: slot.alive,
            steps: self.clock.steps_taken[id.index()],
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.step_index
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some() || self.overflow.is_some()
    }

    fn released(&self, i: usize) -> bool {
        match self.cfg.emission {
            EmissionScheme::OnFirstSchedule => true,
            EmissionScheme::OnePerRound => i as u64 <= self.clock.rounds_completed,
        }
    }

    fn active(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.ants.len()).filter(move |&i| self.ants[i].alive && self.released(i))
    }

    fn live_count(&self) -> usize {
        self.ants.iter().filter(|a| a.alive).count()
    }

    fn push_trace(&mut self, ant: usize, action: TraceAction, position: Position) {
        if self.cfg.record_trace {
            self.trace.push(TraceRecord {
                step_index: self.step_index,
                round: self.clock.current_round(),
                ant_id: AntId::from_index(ant),
                action,
                position,
            });
        }
    }

    fn kill(&mut self, i: usize) {
        if !self.ants[i].alive {
            return;
        }
        self.ants[i].alive = false;
        self.ants[i].exploring = None;
        let pos = self.ants[i].pos;
        self.push_trace(i, TraceAction::Fail, pos);
    }

    fn apply_scripted_kill(&mut self, i: usize) {
        if let Some(at) = self.ants[i].kill_at {
            if self.ants[i].alive && self.clock.steps_taken[i] >= at {
                self.kill(i);
            }
        }
    }

    /// Kills the ant sweeping the deepest layer for every adversarial kill
    /// due at `tick`, sparing the last survivor. A kill that falls due while
    /// nobody is sweeping waits for the next sweep.
    fn apply_deepest_kills(&mut self, tick: u64) {
        while self.deepest_kills.last().is_some_and(|&t| t <= tick) {
            if self.live_count() <= 1 {
                self.deepest_kills.pop();
                continue;
            }
            let victim = self
                .ants
                .iter()
                .enumerate()
                .filter(|(_, a)| a.alive)
                .filter_map(|(i, a)| a.exploring.map(|l| (l, std::cmp::Reverse(i))))
                .max()
                .map(|(_, std::cmp::Reverse(i))| i);
            let Some(i) = victim else { break };
            self.deepest_kills.pop();
            self.kill(i);
        }
    }

    fn budget_allows(&self) -> bool {
        self.cfg
            .pheromone_budget
            .is_none_or(|b| self.world.pheromones().emit_count() < b)
    }

    fn budget_exhausted(&self) -> bool {
        self.cfg
            .pheromone_budget
            .is_some_and(|b| self.world.pheromones().emit_count() >= b)
    }

    /// Moves ant `i` according to an already-decided action and does all the
    /// bookkeeping of one step.
    fn commit_move(&mut self, i: usize, observed: bool, action_dir: Direction, next: AntState) {
        let prev_state = self.ants[i].state;
        let here = self.ants[i].pos;
        if let Some(trackers) = self.trackers.as_mut() {
            trackers[i].observe(self.step_index, prev_state, observed, here);
        }
        let Some(dest) = here.step(action_dir) else {
            self.overflow = Some((i as u32 + 1, here));
            return;
        };
        if !prev_state.is_exploring() && next.is_exploring() {
            let layer = here.y.unsigned_abs();
            self.ants[i].exploring = Some(layer);
            self.explorer_log.entry(layer).or_default().insert(i as u32 + 1);
            self.push_trace(i, TraceAction::ExploreStart { layer }, here);
        } else if prev_state.is_exploring() && !next.is_exploring() {
            let layer = here.y.unsigned_abs();
            self.ants[i].exploring = None;
            self.completion_log.entry(layer).or_default().insert(i as u32 + 1);
            self.push_trace(i, TraceAction::ExploreDone { layer }, here);
        }
        self.ants[i].pos = dest;
        self.ants[i].state = next;
        self.max_counter = self.max_counter.max(next.max_counter());
        self.world.visit(dest);
        self.push_trace(i, TraceAction::Move { direction: action_dir }, dest);
        self.clock.record_step(i);
        self.step_index += 1;
        self.apply_scripted_kill(i);
    }

    fn emit_for(&mut self, i: usize) {
        let here = self.ants[i].pos;
        if self.budget_allows() {
            self.world.emit(here);
            self.push_trace(i, TraceAction::Emit, here);
        } else {
            self.dropped += 1;
            self.push_trace(i, TraceAction::EmitDropped, here);
        }
    }

    /// After a step: check the termination conditions that do not depend on
    /// the scheduling model.
    fn check_termination(&mut self) {
        if self.termination.is_some() {
            return;
        }
        if self.world.found() {
            self.termination = Some(Termination::Found);
        } else if self.step_index >= self.max_steps {
            self.termination = Some(Termination::StepCapExceeded);
        } else if self.budget_exhausted() {
            self.check_budget_loop();
        }
    }

    fn check_budget_loop(&mut self) {
        let k = self.ants.len();
        let trackers = self.trackers.get_or_insert_with(|| vec![CycleTracker::default(); k]);
        let marks: Vec<Position> = self.world.pheromones().cells().collect();
        let treasure = self.world.treasure();
        let mut all_trapped = true;
        for (i, slot) in self.ants.iter().enumerate() {
            if !slot.alive {
                continue;
            }
            match trackers[i].confirm(&marks) {
                Some(report) if !report.band.contains(treasure) => {}
                _ => {
                    all_trapped = false;
                }
            }
        }
        if all_trapped {
            self.termination = Some(Termination::BudgetLoopDetected);
        }
    }

    /// One asynchronous step: the strategy picks an ant, which senses,
    /// decides, emits and moves atomically against the live world.
    pub fn step_async(&mut self) -> Tick {
        if self.is_finished() {
            return Tick::Finished;
        }
        let tick = self.step_index;
        self.apply_deepest_kills(tick);
        let k = self.ants.len();
        let chosen = match &self.cfg.strategy {
            ScheduleStrategy::RoundRobin => {
                let mut pick = None;
                for off in 0..k {
                    let i = (self.next_rr + off) % k;
                    if self.ants[i].alive && self.released(i) {
                        pick = Some(i);
                        break;
                    }
                }
                if let Some(i) = pick {
                    self.next_rr = (i + 1) % k;
                }
                pick
            }
            ScheduleStrategy::SeededRandom { .. } => {
                let live: Vec<usize> = self.active().collect();
                if live.is_empty() {
                    None
                } else {
                    Some(live[(self.rng.next_u64() % live.len() as u64) as usize])
                }
            }
            ScheduleStrategy::Scripted { order } => match order.get(self.script_pos) {
                None => {
                    self.termination = Some(Termination::ScriptExhausted);
                    return Tick::Finished;
                }
                Some(id) => {
                    self.script_pos += 1;
                    let i = id.index();
                    (self.ants[i].alive && self.released(i)).then_some(i)
                }
            },
        };
        let Some(i) = chosen else {
            if self.active().next().is_none() {
                // Nobody released yet: let nest emission time pass.
                self.clock.skip_empty_round();
            }
            return Tick::Idle;
        };
        let observed = self.world.sense(self.ants[i].pos);
        let (action, next) = self.ants[i].state.step(Observation::from(observed));
        if action.emit_pheromone {
            self.emit_for(i);
        }
        self.commit_move(i, observed, action.direction, next);
        if self.overflow.is_some() {
            return Tick::Finished;
        }
        let active: Vec<usize> = self.active().collect();
        self.clock.settle(active.into_iter());
        self.check_termination();
        Tick::Stepped(AntId::from_index(i))
    }

    /// One synchronous round: every live released ant senses the round-start
    /// field, then all emissions land, then all moves.
    pub fn step_round(&mut self) -> Tick {
        if self.is_finished() {
            return Tick::Finished;
        }
        let round = self.clock.current_round();
        self.apply_deepest_kills(round);
        let active: Vec<usize> = self.active().collect();
        if active.is_empty() {
            self.clock.skip_empty_round();
            return Tick::Idle;
        }
        let decisions: Vec<(usize, bool, crate::agents::Action, AntState)> = {
            let view = snapshot_round_sense(&self.world);
            active
                .iter()
                .map(|&i| {
                    let observed = view.sense(self.ants[i].pos);
                    let (a, n) = self.ants[i].state.step(Observation::from(observed));
                    (i, observed, a, n)
                })
                .collect()
        };
        for &(i, _, a, _) in &decisions {
            if a.emit_pheromone {
                self.emit_for(i);
            }
        }
        for &(i, observed, a, n) in &decisions {
            self.commit_move(i, observed, a.direction, n);
            if self.overflow.is_some() {
                return Tick::Finished;
            }
        }
        let still_active: Vec<usize> = self.active().collect();
        let settled = self.clock.settle(still_active.into_iter());
        if !settled {
            // Every participant of the round stepped; ants that just died
            // or were released do not hold the round open.
            self.clock.skip_empty_round();
        }
        self.check_termination();
        Tick::Stepped(AntId::from_index(active[0]))
    }

    pub fn step(&mut self) -> Tick {
        match self.mode {
            Mode::Sync => self.step_round(),
            Mode::Async => self.step_async(),
        }
    }

    /// Runs to termination and packages the outcome.
    pub fn finish(mut self) -> Result<RunReport, SimError> {
        while !self.is_finished() {
            self.step();
        }
        if let Some((ant, position)) = self.overflow {
            return Err(SimError::CoordinateOverflow { ant, position });
        }
        let termination = self.termination.clone().expect("finished runs carry a termination");
        let marks: Vec<Position> = self.world.pheromones().cells().collect();
        let cycles = match (&termination, self.trackers.as_mut()) {
            (Termination::BudgetLoopDetected, Some(trackers)) => trackers
                .iter_mut()
                .zip(&self.ants)
                .filter(|(_, a)| a.alive)
                .filter_map(|(t, _)| t.confirm(&marks))
                .collect(),
            _ => Vec::new(),
        };
        let metrics = RunMetrics {
            rounds: self.trace_round(),
            steps_per_ant: self.clock.steps_taken.clone(),
            pheromone_emissions: self.world.pheromones().emit_count(),
            dropped_emissions: self.dropped,
            distinct_marked_cells: self.world.pheromones().distinct_cells() as u64,
            found: self.world.found(),
            treasure_distance: self.cfg.distance(),
            layer_explorer_log: self.explorer_log,
            layer_completion_log: self.completion_log,
            visited_count: self.world.visited().len() as u64,
            failed_ants: self
                .ants
                .iter()
                .enumerate()
                .filter(|(_, a)| !a.alive)
                .map(|(i, _)| i as u32 + 1)
                .collect(),
            nest_marked: self.world.sense(Position::NEST),
        };
        let report = RunReport {
            config: self.cfg,
            metrics,
            termination: termination.clone(),
            world: self.world,
            trace: self.trace,
            max_counter: self.max_counter,
            cycles,
        };
        match termination {
            Termination::Found => Ok(report),
            Termination::StepCapExceeded => Err(SimError::StepCapExceeded(Box::new(report))),
            Termination::ScriptExhausted => Err(SimError::ScriptExhausted(Box::new(report))),
            Termination::BudgetLoopDetected => Err(SimError::BudgetLoopDetected(Box::new(report))),
        }
    }

    /// Round in which the most recent step happened.
    fn trace_round(&self) -> u64 {
        let steps_since_boundary = self
            .clock
            .steps_taken
            .iter()
            .zip(&self.clock.round_floor)
            .any(|(s, f)| s > f);
        self.clock.rounds_completed + steps_since_boundary as u64
    }
}

/// Runs a synchronous simulation.
pub fn run_sync(mut cfg: RunConfig) -> Result<RunReport, SimError> {
    cfg.mode = Some(Mode::Sync);
    Simulation::new(cfg)?.finish()
}

/// Runs an asynchronous simulation.
pub fn run_async(mut cfg: RunConfig) -> Result<RunReport, SimError> {
    cfg.mode = Some(Mode::Async);
    Simulation::new(cfg)?.finish()
}

/// Runs under the configured (or the program's native) scheduling model.
pub fn run(cfg: RunConfig) -> Result<RunReport, SimError> {
    Simulation::new(cfg)?.finish()
}
