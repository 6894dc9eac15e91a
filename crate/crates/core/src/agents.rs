//! Ant behaviour programs.
//!
//! Every program is a pure per-step transition: given the control state and
//! whether the current cell carries a pheromone, it returns the optional
//! emission, the move, and the next control state. Multi-step routines such
//! as "walk east while on a ray" are flattened into explicit phases; the
//! observation made on arrival at a cell decides whether the routine goes on.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::world::Direction;

/// What an ant perceives at the start of a step. Nothing else about the
/// world, including other ants on the same cell, is visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub pheromone_here: bool,
}

impl Observation {
    pub const MARKED: Observation = Observation { pheromone_here: true };
    pub const CLEAR: Observation = Observation { pheromone_here: false };
}

impl From<bool> for Observation {
    fn from(pheromone_here: bool) -> Self {
        Observation { pheromone_here }
    }
}

/// The decision of one step. The emission lands on the cell the ant stands
/// on before it moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub emit_pheromone: bool,
    pub direction: Direction,
}

impl Action {
    fn go(direction: Direction) -> Self {
        Action { emit_pheromone: false, direction }
    }

    fn emit_and_go(direction: Direction) -> Self {
        Action { emit_pheromone: true, direction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AntProgramId {
    AsyncFsm,
    SyncFsm,
    AsyncFtFsm,
    SyncFtFsm,
    Tm,
}

impl AntProgramId {
    pub const ALL: [AntProgramId; 5] = [
        AntProgramId::AsyncFsm,
        AntProgramId::SyncFsm,
        AntProgramId::AsyncFtFsm,
        AntProgramId::SyncFtFsm,
        AntProgramId::Tm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AntProgramId::AsyncFsm => "async-fsm",
            AntProgramId::SyncFsm => "sync-fsm",
            AntProgramId::AsyncFtFsm => "async-ft-fsm",
            AntProgramId::SyncFtFsm => "sync-ft-fsm",
            AntProgramId::Tm => "tm",
        }
    }

    pub fn is_fsm(self) -> bool {
        self != AntProgramId::Tm
    }

    /// Programs that use the newbie/veteran eastern extension.
    pub fn uses_sync_extension(self) -> bool {
        matches!(self, AntProgramId::SyncFsm | AntProgramId::SyncFtFsm)
    }

    pub fn is_fault_tolerant(self) -> bool {
        matches!(self, AntProgramId::AsyncFtFsm | AntProgramId::SyncFtFsm)
    }

    /// Whether the program is meant for the given scheduling model.
    pub fn supports(self, synchronous: bool) -> bool {
        match self {
            AntProgramId::Tm => true,
            p => p.uses_sync_extension() == synchronous,
        }
    }
}

impl fmt::Display for AntProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown program `{0}` (expected async-fsm, sync-fsm, async-ft-fsm, sync-ft-fsm or tm)")]
pub struct UnknownProgram(pub String);

impl FromStr for AntProgramId {
    type Err = UnknownProgram;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AntProgramId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownProgram(s.to_string()))
    }
}

/// Zig and zag directions of the four exploration quadrants, in the order
/// they are walked starting from the top of the northern ray.
const QUADRANTS: [(Direction, Direction); 4] = [
    (Direction::East, Direction::South),
    (Direction::South, Direction::West),
    (Direction::West, Direction::North),
    (Direction::North, Direction::East),
];

/// Control phase of an FSM ant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// At the nest, before the first step.
    Start,
    /// Walking out along the eastern ray (asynchronous and veteran rule).
    EastOut,
    /// Newbie just stepped east onto `(i, 0)`.
    NewbieEast,
    /// Newbie just stepped north onto `(i, 1)`; idles next.
    NewbieNorth,
    /// Newbie finished idling on `(i, 1)` and now checks for a veteran mark.
    NewbieIdled,
    /// Newbie back on `(i, 0)` after detecting a collision; tries further east.
    NewbieBack,
    /// Veteran on `(i, 1)` emitting the second ray-end mark.
    VeteranNorth,
    /// Back on the eastern ray end after a synchronous extension.
    EastDone,
    EastBack,
    SouthOut,
    SouthBack,
    WestOut,
    WestBack,
    NorthOut,
    /// Zig-zagging through quadrant `quad`. `after_zig` means the last move
    /// was a zig; `zig_marked` is what the last zig arrival sensed;
    /// `first_zag` is set until the first zag arrival of the first quadrant
    /// has been judged.
    Explore {
        quad: u8,
        after_zig: bool,
        zig_marked: bool,
        first_zag: bool,
    },
    /// Probing the northern-ray cell west of an ambiguous first mark.
    ProbeWest,
    /// Returning east after the probe; `resume` continues the first quadrant.
    ProbeBack { resume: bool },
    /// Walking south along the northern ray to the nest.
    GoHome,
    /// On `(1, l)` about to drop the completion marker.
    MarkArrive,
    MarkBack,
    /// On the northern ray during verification, deciding whether to check.
    VerifyAt,
    /// On `(1, m)` checking the completion marker of layer `m`.
    VerifyCheck,
    VerifyBack,
}

/// Control state of the four FSM programs. The state space is finite and
/// independent of the distance to the treasure or the number of ants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FsmState {
    pub program: AntProgramId,
    pub phase: Phase,
    /// Synchronous programs: false until the first layer exploration starts.
    pub veteran: bool,
}

impl FsmState {
    pub fn new(program: AntProgramId) -> Self {
        assert!(program.is_fsm(), "{program} is not a finite-state program");
        FsmState { program, phase: Phase::Start, veteran: false }
    }

    pub fn is_exploring(&self) -> bool {
        matches!(
            self.phase,
            Phase::Explore { .. } | Phase::ProbeWest | Phase::ProbeBack { .. }
        )
    }

    fn with(self, phase: Phase) -> Self {
        FsmState { phase, ..self }
    }
}

pub fn step_async_fsm(s: FsmState, o: Observation) -> (Action, FsmState) {
    debug_assert_eq!(s.program, AntProgramId::AsyncFsm);
    fsm_step(s, o)
}

pub fn step_sync_fsm(s: FsmState, o: Observation) -> (Action, FsmState) {
    debug_assert_eq!(s.program, AntProgramId::SyncFsm);
    fsm_step(s, o)
}

pub fn step_async_ft_fsm(s: FsmState, o: Observation) -> (Action, FsmState) {
    debug_assert_eq!(s.program, AntProgramId::AsyncFtFsm);
    fsm_step(s, o)
}

pub fn step_sync_ft_fsm(s: FsmState, o: Observation) -> (Action, FsmState) {
    debug_assert_eq!(s.program, AntProgramId::SyncFtFsm);
    fsm_step(s, o)
}

/// Leaves the nest eastwards to start a new cycle.
fn start_cycle(s: FsmState) -> (Action, FsmState) {
    let phase = if s.program.uses_sync_extension() && !s.veteran {
        Phase::NewbieEast
    } else {
        Phase::EastOut
    };
    (Action::go(Direction::East), s.with(phase))
}

fn explore(quad: u8, after_zig: bool, zig_marked: bool, first_zag: bool) -> Phase {
    Phase::Explore { quad, after_zig, zig_marked, first_zag }
}

fn fsm_step(s: FsmState, o: Observation) -> (Action, FsmState) {
    use Direction::*;
    let marked = o.pheromone_here;
    let sync = s.program.uses_sync_extension();
    let ft = s.program.is_fault_tolerant();
    match s.phase {
        Phase::Start => start_cycle(s),

        Phase::EastOut if marked => (Action::go(East), s),
        Phase::EastOut if sync => (Action::emit_and_go(North), s.with(Phase::VeteranNorth)),
        Phase::EastOut => (Action::emit_and_go(West), s.with(Phase::EastBack)),
        Phase::VeteranNorth => (Action::emit_and_go(South), s.with(Phase::EastDone)),

        Phase::NewbieEast => (
            Action { emit_pheromone: !marked, direction: North },
            s.with(Phase::NewbieNorth),
        ),
        Phase::NewbieNorth => (Action::go(Hold), s.with(Phase::NewbieIdled)),
        Phase::NewbieIdled if marked => (Action::go(South), s.with(Phase::NewbieBack)),
        Phase::NewbieIdled => (Action::emit_and_go(South), s.with(Phase::EastDone)),
        Phase::NewbieBack => (Action::go(East), s.with(Phase::NewbieEast)),
        Phase::EastDone => (Action::go(West), s.with(Phase::EastBack)),

        Phase::EastBack if marked => (Action::go(West), s),
        Phase::EastBack => (Action::go(South), s.with(Phase::SouthOut)),
        Phase::SouthOut if marked => (Action::go(South), s),
        Phase::SouthOut => (Action::emit_and_go(North), s.with(Phase::SouthBack)),
        Phase::SouthBack if marked => (Action::go(North), s),
        Phase::SouthBack => (Action::go(West), s.with(Phase::WestOut)),
        Phase::WestOut if marked => (Action::go(West), s),
        Phase::WestOut => (Action::emit_and_go(East), s.with(Phase::WestBack)),
        Phase::WestBack if marked => (Action::go(East), s),
        Phase::WestBack => (Action::go(North), s.with(Phase::NorthOut)),
        Phase::NorthOut if marked => (Action::go(North), s),
        Phase::NorthOut => (
            Action::emit_and_go(QUADRANTS[0].0),
            FsmState { phase: explore(0, true, false, true), veteran: true, ..s },
        ),

        Phase::Explore { quad, after_zig: true, first_zag, .. } => (
            Action::go(QUADRANTS[quad as usize].1),
            s.with(explore(quad, false, marked, first_zag)),
        ),
        Phase::Explore { quad, after_zig: false, zig_marked, first_zag } => {
            if quad == 0 && ft && !sync && first_zag && marked {
                // (1, l-1) may hold the completion marker of layer l-1 or,
                // for l = 1, be the eastern ray end. The cell to the west
                // tells them apart: the nest is never marked.
                return (Action::go(West), s.with(Phase::ProbeWest));
            }
            if quad == 0 && ft && sync && zig_marked && !marked {
                // (l, 1) was never marked because its extender died between
                // the two emissions; we overshot onto (l+1, 0) and are now at
                // (l+1, -1). One step west is the first zig cell of quadrant 1.
                return (Action::go(West), s.with(explore(1, true, false, false)));
            }
            let quadrant_done = if quad == 0 && sync {
                marked && zig_marked
            } else {
                marked
            };
            if quadrant_done {
                finish_quadrant(s, quad)
            } else {
                (
                    Action::go(QUADRANTS[quad as usize].0),
                    s.with(explore(quad, true, false, false)),
                )
            }
        }
        Phase::ProbeWest => (Action::go(East), s.with(Phase::ProbeBack { resume: marked })),
        Phase::ProbeBack { resume: true } => {
            (Action::go(QUADRANTS[0].0), s.with(explore(0, true, false, false)))
        }
        Phase::ProbeBack { resume: false } => finish_quadrant(s, 0),

        Phase::GoHome if marked => (Action::go(South), s),
        Phase::GoHome => start_cycle(s),

        Phase::MarkArrive => (Action::emit_and_go(West), s.with(Phase::MarkBack)),
        Phase::MarkBack => (Action::go(South), s.with(Phase::VerifyAt)),
        Phase::VerifyAt if marked => (Action::go(East), s.with(Phase::VerifyCheck)),
        Phase::VerifyAt => start_cycle(s),
        Phase::VerifyCheck if marked => (Action::go(West), s.with(Phase::VerifyBack)),
        // Unfinished layer: we already stand on the first zig cell of it.
        Phase::VerifyCheck => (
            Action::go(QUADRANTS[0].1),
            s.with(explore(0, false, false, true)),
        ),
        Phase::VerifyBack => (Action::go(South), s.with(Phase::VerifyAt)),
    }
}

fn finish_quadrant(s: FsmState, quad: u8) -> (Action, FsmState) {
    if quad < 3 {
        let next = quad + 1;
        (
            Action::go(QUADRANTS[next as usize].0),
            s.with(explore(next, true, false, false)),
        )
    } else if s.program.is_fault_tolerant() {
        (Action::go(Direction::East), s.with(Phase::MarkArrive))
    } else {
        (Action::go(Direction::South), s.with(Phase::GoHome))
    }
}

/// Enumerates every control state reachable from the initial state of an FSM
/// program under arbitrary observation sequences.
pub fn reachable_fsm_states(program: AntProgramId) -> Vec<FsmState> {
    let start = FsmState::new(program);
    let mut seen = HashSet::from([start]);
    let mut order = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for o in [Observation::CLEAR, Observation::MARKED] {
            let (_, next) = fsm_step(s, o);
            if seen.insert(next) {
                order.push(next);
                queue.push_back(next);
            }
        }
    }
    order
}

/// How the counting program advances its layer after re-reading the ant
/// count on the northern ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TmUpdateRule {
    /// `id` stays fixed; the next layer is `id + total` after a count change
    /// and `layer + total` otherwise.
    #[default]
    Restart,
    /// `id` itself advances by `total` and doubles as the next layer.
    Listing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TmPhase {
    Start,
    /// Climbing the northern ray looking for the first unclaimed cell.
    Climb,
    /// Walking the diamond of `layer`; `done` moves made so far.
    Explore { layer: u64, done: u64 },
    /// Walking south on the northern ray; `y` is the current height.
    Descend { y: u64 },
    /// Climbing from the nest counting claimed cells.
    Recount { y: u64 },
    /// Moving along the northern ray towards the start of `target`.
    Transit { y: u64, target: u64 },
}

/// State of the counting (Turing-machine) ant. All counters stay within a
/// constant multiple of the treasure distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TmState {
    pub id: u64,
    pub total: u64,
    pub current_layer: u64,
    pub phase: TmPhase,
    pub rule: TmUpdateRule,
}

impl TmState {
    pub fn new(rule: TmUpdateRule) -> Self {
        TmState { id: 0, total: 0, current_layer: 0, phase: TmPhase::Start, rule }
    }

    pub fn is_exploring(&self) -> bool {
        matches!(self.phase, TmPhase::Explore { .. })
    }

    /// Largest value held in any counter.
    pub fn max_counter(&self) -> u64 {
        let phase = match self.phase {
            TmPhase::Start | TmPhase::Climb => 0,
            TmPhase::Explore { layer, done } => layer.max(done),
            TmPhase::Descend { y } | TmPhase::Recount { y } => y,
            TmPhase::Transit { y, target } => y.max(target),
        };
        self.id.max(self.total).max(self.current_layer).max(phase)
    }

    /// Applies a fresh count of claimed northern-ray cells.
    fn update_total(&mut self, claimed: u64) {
        let grew = claimed > self.total;
        if grew {
            self.total = claimed;
        }
        match self.rule {
            TmUpdateRule::Restart if grew => self.current_layer = self.id + self.total,
            TmUpdateRule::Restart => self.current_layer += self.total,
            TmUpdateRule::Listing => {
                self.id += self.total;
                self.current_layer = self.id;
            }
        }
    }
}

/// Direction of move number `done` (0-based) on the clockwise walk around
/// layer `layer` that starts and ends at `(0, layer)`.
fn perimeter_direction(done: u64, layer: u64) -> Direction {
    let (zig, zag) = QUADRANTS[(done / (2 * layer)) as usize];
    if done.is_multiple_of(2) {
        zig
    } else {
        zag
    }
}

fn begin_layer(s: TmState, layer: u64) -> (Action, TmState) {
    (
        Action::go(perimeter_direction(0, layer)),
        TmState { phase: TmPhase::Explore { layer, done: 1 }, ..s },
    )
}

/// Heads along the northern ray from height `y` towards the start of the
/// current layer, starting the walk when already there.
fn head_for_layer(s: TmState, y: u64) -> (Action, TmState) {
    let target = s.current_layer;
    match target.cmp(&y) {
        std::cmp::Ordering::Equal => begin_layer(s, target),
        std::cmp::Ordering::Greater => (
            Action::go(Direction::North),
            TmState { phase: TmPhase::Transit { y: y + 1, target }, ..s },
        ),
        std::cmp::Ordering::Less => (
            Action::go(Direction::South),
            TmState { phase: TmPhase::Transit { y: y - 1, target }, ..s },
        ),
    }
}

pub fn step_tm(s: TmState, o: Observation) -> (Action, TmState) {
    let marked = o.pheromone_here;
    match s.phase {
        TmPhase::Start => (
            Action::go(Direction::North),
            TmState { id: 1, total: 1, phase: TmPhase::Climb, ..s },
        ),
        TmPhase::Climb if marked => (
            Action::go(Direction::North),
            TmState { id: s.id + 1, total: s.total + 1, ..s },
        ),
        TmPhase::Climb => {
            let claimed = TmState { current_layer: s.id, ..s };
            let (action, next) = begin_layer(claimed, s.id);
            (Action { emit_pheromone: true, ..action }, next)
        }
        TmPhase::Explore { layer, done } if done == 8 * layer => {
            // Back on (0, layer); go down to re-read the ray from the nest.
            (
                Action::go(Direction::South),
                TmState { phase: TmPhase::Descend { y: layer - 1 }, ..s },
            )
        }
        TmPhase::Explore { layer, done } => (
            Action::go(perimeter_direction(done, layer)),
            TmState { phase: TmPhase::Explore { layer, done: done + 1 }, ..s },
        ),
        TmPhase::Descend { y: 0 } => (
            Action::go(Direction::North),
            TmState { phase: TmPhase::Recount { y: 1 }, ..s },
        ),
        TmPhase::Descend { y } => (
            Action::go(Direction::South),
            TmState { phase: TmPhase::Descend { y: y - 1 }, ..s },
        ),
        TmPhase::Recount { y } if marked => (
            Action::go(Direction::North),
            TmState { phase: TmPhase::Recount { y: y + 1 }, ..s },
        ),
        TmPhase::Recount { y } => {
            let mut next = s;
            next.update_total(y - 1);
            head_for_layer(next, y)
        }
        TmPhase::Transit { y, .. } => head_for_layer(s, y),
    }
}

/// Per-ant control state for any of the five programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AntState {
    Fsm(FsmState),
    Tm(TmState),
}

impl AntState {
    pub fn initial(program: AntProgramId, rule: TmUpdateRule) -> Self {
        match program {
            AntProgramId::Tm => AntState::Tm(TmState::new(rule)),
            p => AntState::Fsm(FsmState::new(p)),
        }
    }

    pub fn program(&self) -> AntProgramId {
        match self {
            AntState::Fsm(s) => s.program,
            AntState::Tm(_) => AntProgramId::Tm,
        }
    }

    pub fn step(self, o: Observation) -> (Action, AntState) {
        match self {
            AntState::Fsm(s) => {
                let (a, n) = match s.program {
                    AntProgramId::AsyncFsm => step_async_fsm(s, o),
                    AntProgramId::SyncFsm => step_sync_fsm(s, o),
                    AntProgramId::AsyncFtFsm => step_async_ft_fsm(s, o),
                    AntProgramId::SyncFtFsm => step_sync_ft_fsm(s, o),
                    AntProgramId::Tm => unreachable!(),
                };
                (a, AntState::Fsm(n))
            }
            AntState::Tm(s) => {
                let (a, n) = step_tm(s, o);
                (a, AntState::Tm(n))
            }
        }
    }

    /// True while the ant is sweeping a layer.
    pub fn is_exploring(&self) -> bool {
        match self {
            AntState::Fsm(s) => s.is_exploring(),
            AntState::Tm(s) => s.is_exploring(),
        }
    }

    pub fn max_counter(&self) -> u64 {
        match self {
            AntState::Fsm(_) => 0,
            AntState::Tm(s) => s.max_counter(),
        }
    }
}
