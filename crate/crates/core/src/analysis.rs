//! Run metrics, correctness verifiers, the budget-cycle detector and
//! complexity fitting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AntProgramId, AntState};
use crate::scheduler::{AntId, RunConfig, SimError, Simulation, TraceAction, TraceRecord};
use crate::world::{layer_cells, Position};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rounds: u64,
    pub steps_per_ant: Vec<u64>,
    pub pheromone_emissions: u64,
    pub dropped_emissions: u64,
    pub distinct_marked_cells: u64,
    pub found: bool,
    pub treasure_distance: u64,
    /// Layer → ants that started sweeping it (first sweeps and re-sweeps).
    pub layer_explorer_log: BTreeMap<u64, BTreeSet<u32>>,
    /// Layer → ants that finished sweeping it.
    pub layer_completion_log: BTreeMap<u64, BTreeSet<u32>>,
    pub visited_count: u64,
    pub failed_ants: Vec<u32>,
    pub nest_marked: bool,
}

impl RunMetrics {
    /// Number of distinct layers whose sweep was started.
    pub fn layers_explored(&self) -> u64 {
        self.layer_explorer_log.len() as u64
    }

    pub fn departed_ants(&self) -> u64 {
        self.steps_per_ant.iter().filter(|&&s| s > 0).count() as u64
    }
}

/// Rebuilds the metrics of a run from its trace alone.
pub fn metrics_from_trace(trace: &[TraceRecord], k: u32, treasure: Position) -> RunMetrics {
    let mut m = RunMetrics {
        steps_per_ant: vec![0; k as usize],
        treasure_distance: treasure.distance(),
        ..RunMetrics::default()
    };
    let mut marked = HashSet::new();
    let mut visited = HashSet::from([Position::NEST]);
    for r in trace {
        let ant = r.ant_id.0;
        match r.action {
            TraceAction::Emit => {
                m.pheromone_emissions += 1;
                marked.insert(r.position);
            }
            TraceAction::EmitDropped => m.dropped_emissions += 1,
            TraceAction::Move { .. } => {
                m.steps_per_ant[ant as usize - 1] += 1;
                m.rounds = r.round;
                visited.insert(r.position);
            }
            TraceAction::ExploreStart { layer } => {
                m.layer_explorer_log.entry(layer).or_default().insert(ant);
            }
            TraceAction::ExploreDone { layer } => {
                m.layer_completion_log.entry(layer).or_default().insert(ant);
            }
            TraceAction::Fail => m.failed_ants.push(ant),
        }
    }
    m.failed_ants.sort_unstable();
    m.distinct_marked_cells = marked.len() as u64;
    m.found = visited.contains(&treasure);
    m.visited_count = visited.len() as u64;
    m.nest_marked = marked.contains(&Position::NEST);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VerifyError {
    #[error("layer {layer} was reported complete but {cell} was never visited")]
    UncoveredCell { layer: u64, cell: Position },
    #[error("layer {layer} was swept by several ants: {ants:?}")]
    Collision { layer: u64, ants: Vec<u32> },
}

/// Checks that every layer some ant finished sweeping is fully visited.
pub fn verify_layer_coverage(
    metrics: &RunMetrics,
    visited: &HashSet<Position>,
    distance: u64,
) -> Result<(), VerifyError> {
    let _ = distance;
    for &layer in metrics.layer_completion_log.keys() {
        if let Some(cell) = layer_cells(layer).into_iter().find(|c| !visited.contains(c)) {
            return Err(VerifyError::UncoveredCell { layer, cell });
        }
    }
    Ok(())
}

/// Checks that no layer was swept by more than one ant.
pub fn verify_no_collision(metrics: &RunMetrics) -> Result<(), VerifyError> {
    for (&layer, ants) in &metrics.layer_explorer_log {
        if ants.len() > 1 {
            return Err(VerifyError::Collision { layer, ants: ants.iter().copied().collect() });
        }
    }
    Ok(())
}

/// Emission allowance for finite-state programs: a few marks per layer plus
/// a constant.
pub fn fsm_pheromone_bound(distance: u64) -> u64 {
    8 * distance + 16
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditResult {
    pub program: AntProgramId,
    pub emissions: u64,
    pub bound: u64,
    pub pass: bool,
}

/// Compares the emissions of a finished run against the pheromone bound of
/// its program: `8·D + 16` for the finite-state programs (with or without
/// faults), one per departed ant for the counting program.
pub fn pheromone_audit(metrics: &RunMetrics, program: AntProgramId, distance: u64, k: u32, f: u32) -> AuditResult {
    let _ = f;
    let emissions = metrics.pheromone_emissions;
    let bound = if program.is_fsm() {
        fsm_pheromone_bound(distance)
    } else {
        metrics.departed_ants().min(k as u64)
    };
    AuditResult { program, emissions, bound, pass: emissions <= bound }
}

/// The region a trapped ant can ever reach: everything it visited before its
/// cycle, plus the cycle's cells translated by every non-negative multiple
/// of the per-period displacement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Band {
    pub prefix: HashSet<Position>,
    pub cycle: Vec<Position>,
    pub displacement: (i64, i64),
}

impl Band {
    pub fn contains(&self, p: Position) -> bool {
        if self.prefix.contains(&p) {
            return true;
        }
        let (dx, dy) = self.displacement;
        self.cycle.iter().any(|c| {
            let (vx, vy) = (p.x - c.x, p.y - c.y);
            multiple_of(vx, vy, dx, dy).is_some_and(|n| n >= 0)
        })
    }
}

/// Returns `n` with `(vx, vy) = n·(dx, dy)` if one exists.
fn multiple_of(vx: i64, vy: i64, dx: i64, dy: i64) -> Option<i64> {
    if dx == 0 && dy == 0 {
        return (vx == 0 && vy == 0).then_some(0);
    }
    if vx * dy != vy * dx {
        return None;
    }
    let (v, d) = if dx != 0 { (vx, dx) } else { (vy, dy) };
    (v % d == 0).then_some(v / d)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_found: bool,
    pub cycle_start_step: u64,
    pub period: u64,
    pub displacement: (i64, i64),
    /// Largest distance from the nest of any cell visited before or during
    /// the first period.
    pub covered_radius: u64,
    #[serde(skip)]
    pub band: Band,
}

impl CycleReport {
    fn none() -> Self {
        CycleReport {
            cycle_found: false,
            cycle_start_step: 0,
            period: 0,
            displacement: (0, 0),
            covered_radius: 0,
            band: Band::default(),
        }
    }
}

/// Looks for a repeated control state along a stretch of steps on which the
/// ant sensed nothing. Fed one step at a time once no emission is possible.
#[derive(Debug, Clone, Default)]
pub struct CycleTracker {
    steps: Vec<(u64, AntState, Position)>,
    seen: HashMap<AntState, usize>,
    pending: Option<(usize, usize)>,
    confirmed: Option<CycleReport>,
    prefix: HashSet<Position>,
}

impl CycleTracker {
    /// Seeds the cells visited before tracking began.
    pub fn with_prefix(prefix: impl IntoIterator<Item = Position>) -> Self {
        CycleTracker { prefix: prefix.into_iter().collect(), ..Self::default() }
    }

    /// Records the state and position at the start of a step and what the
    /// ant sensed there.
    pub fn observe(&mut self, step: u64, state: AntState, sensed: bool, position: Position) {
        if self.confirmed.is_some() {
            return;
        }
        let idx = self.steps.len();
        self.steps.push((step, state, position));
        if sensed {
            self.seen.clear();
            self.pending = None;
            return;
        }
        if let Some(prev) = self.seen.insert(state, idx) {
            self.pending = Some((prev, idx));
        }
    }

    /// Checks the latest candidate repeat against the frozen pheromone field.
    /// Once confirmed the answer never changes.
    pub fn confirm(&mut self, marks: &[Position]) -> Option<CycleReport> {
        if let Some(r) = &self.confirmed {
            return Some(r.clone());
        }
        let (start, end) = self.pending.take()?;
        let p0 = self.steps[start].2;
        let p1 = self.steps[end].2;
        let (dx, dy) = (p1.x - p0.x, p1.y - p0.y);
        let cycle: Vec<Position> = self.steps[start..=end].iter().map(|s| s.2).collect();
        let blocked = (dx, dy) != (0, 0)
            && marks.iter().any(|m| {
                cycle
                    .iter()
                    .any(|c| multiple_of(m.x - c.x, m.y - c.y, dx, dy).is_some_and(|n| n >= 1))
            });
        if blocked {
            return None;
        }
        let mut prefix = self.prefix.clone();
        prefix.extend(self.steps[..start].iter().map(|s| s.2));
        let covered_radius = prefix.iter().chain(&cycle).map(|p| p.distance()).max().unwrap_or(0);
        let report = CycleReport {
            cycle_found: true,
            cycle_start_step: self.steps[start].0,
            period: (end - start) as u64,
            displacement: (dx, dy),
            covered_radius,
            band: Band { prefix, cycle, displacement: (dx, dy) },
        };
        self.confirmed = Some(report.clone());
        Some(report)
    }
}

/// Step-by-step record of a single ant run, used by the cycle detector.
#[derive(Debug, Clone)]
pub struct SoloTrace {
    pub program: AntProgramId,
    pub budget: Option<u64>,
    /// State, sensed value and position at the start of every step.
    pub steps: Vec<(AntState, bool, Position)>,
    /// Index of the first step taken with the budget already spent.
    pub exhausted_at: Option<usize>,
    pub marks: Vec<Position>,
    pub found: bool,
}

/// Runs one ant for `steps` asynchronous steps under a pheromone budget.
pub fn run_solo(program: AntProgramId, treasure: Position, budget: Option<u64>, steps: u64) -> Result<SoloTrace, SimError> {
    let mut cfg = RunConfig::new(program, 1, treasure);
    cfg.mode = Some(crate::scheduler::Mode::Async);
    cfg.pheromone_budget = budget;
    cfg.max_steps = Some(steps.max(1));
    let mut sim = Simulation::new(cfg)?;
    let mut out = SoloTrace { program, budget, steps: Vec::new(), exhausted_at: None, marks: Vec::new(), found: false };
    while !sim.is_finished() && (out.steps.len() as u64) < steps {
        let ant = sim.ant(AntId(1));
        let sensed = sim.world().sense(ant.position);
        if out.exhausted_at.is_none() && budget.is_some_and(|b| sim.world().pheromones().emit_count() >= b) {
            out.exhausted_at = Some(out.steps.len());
        }
        out.steps.push((ant.state, sensed, ant.position));
        sim.step_async();
    }
    out.marks = sim.world().pheromones().cells().collect();
    out.found = sim.world().found();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("the pheromone budget is not exhausted; emissions are still possible")]
    NoBudgetExhaustion,
}

/// Finds the periodic motion a single ant settles into once it can no longer
/// emit. Only steps taken after the budget ran out are considered.
pub fn detect_cycle(trace: &SoloTrace, program: AntProgramId) -> Result<CycleReport, DetectError> {
    debug_assert_eq!(trace.program, program);
    let start = trace.exhausted_at.ok_or(DetectError::NoBudgetExhaustion)?;
    let mut tracker = CycleTracker::with_prefix(trace.steps[..start].iter().map(|s| s.2));
    for (i, &(state, sensed, pos)) in trace.steps.iter().enumerate().skip(start) {
        tracker.observe(i as u64, state, sensed, pos);
        if let Some(report) = tracker.confirm(&trace.marks) {
            return Ok(report);
        }
    }
    Ok(CycleReport::none())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundModel {
    /// `c1·D + c2·D²/k`
    Search,
    /// `c1·D + c2·D²/(k−f) + c3·D·f`
    FaultTolerant,
}

impl BoundModel {
    fn features(self, d: f64, k: f64, f: f64) -> Vec<f64> {
        match self {
            BoundModel::Search => vec![d, d * d / k],
            BoundModel::FaultTolerant => vec![d, d * d / (k - f), d * f],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub distance: u64,
    pub k: u32,
    pub f: u32,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: BoundModel,
    /// Coefficients of the upper envelope: the relative least-squares fit
    /// scaled until no sample lies above it.
    pub coefficients: Vec<f64>,
    pub least_squares: Vec<f64>,
    pub scale: f64,
    /// Largest `(bound − rounds)/bound` over the samples.
    pub max_relative_residual: f64,
    pub samples: usize,
}

impl FitResult {
    pub fn bound(&self, distance: u64, k: u32, f: u32) -> f64 {
        self.model
            .features(distance as f64, k as f64, f as f64)
            .iter()
            .zip(&self.coefficients)
            .map(|(x, c)| x * c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("underdetermined fit: {0}")]
    Underdetermined(String),
}

/// Solves a small dense system by Gaussian elimination with partial
/// pivoting; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= factor * src;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least squares of `rows · c ≈ y` restricted to the columns in `mask`,
/// weighting each residual by `1/y` so every sample counts relatively.
fn relative_lsq(rows: &[Vec<f64>], y: &[f64], mask: &[bool]) -> Option<Vec<f64>> {
    let cols: Vec<usize> = (0..mask.len()).filter(|&c| mask[c]).collect();
    let n = cols.len();
    let mut ata = vec![vec![0.0; n]; n];
    let mut atb = vec![0.0; n];
    for (row, &yi) in rows.iter().zip(y) {
        let w = 1.0 / (yi * yi);
        for (i, &ci) in cols.iter().enumerate() {
            atb[i] += w * row[ci] * yi;
            for (j, &cj) in cols.iter().enumerate() {
                ata[i][j] += w * row[ci] * row[cj];
            }
        }
    }
    let sol = solve(ata, atb)?;
    let mut full = vec![0.0; mask.len()];
    for (i, &c) in cols.iter().enumerate() {
        full[c] = sol[i];
    }
    Some(full)
}

/// Fits the named bound form to measured round counts, keeping every
/// coefficient non-negative, then lifts it into an upper envelope.
pub fn fit_complexity(samples: &[Sample], model: BoundModel) -> Result<FitResult, FitError> {
    if samples.len() < 6 {
        return Err(FitError::Underdetermined(format!("{} samples, need at least 6", samples.len())));
    }
    let ds: BTreeSet<u64> = samples.iter().map(|s| s.distance).collect();
    let ks: BTreeSet<u32> = samples.iter().map(|s| s.k).collect();
    if ds.len() < 3 || ks.len() < 2 {
        return Err(FitError::Underdetermined(format!(
            "{} distinct distances and {} distinct ant counts, need 3 and 2",
            ds.len(),
            ks.len()
        )));
    }
    if samples.iter().any(|s| s.f >= s.k || s.rounds == 0) {
        return Err(FitError::Underdetermined("samples need f < k and rounds > 0".into()));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| model.features(s.distance as f64, s.k as f64, s.f as f64))
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.rounds as f64).collect();
    let width = rows[0].len();

    // Rank check on the full design.
    relative_lsq(&rows, &y, &vec![true; width])
        .ok_or_else(|| FitError::Underdetermined("design matrix is rank deficient".into()))?;

    // Non-negative least squares by enumerating supports; at most three
    // columns, so this is exact and cheap.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for bits in 1u32..(1 << width) {
        let mask: Vec<bool> = (0..width).map(|c| bits & (1 << c) != 0).collect();
        let Some(c) = relative_lsq(&rows, &y, &mask) else { continue };
        if c.iter().any(|v| *v < 0.0) {
            continue;
        }
        let err: f64 = rows
            .iter()
            .zip(&y)
            .map(|(r, yi)| {
                let fit: f64 = r.iter().zip(&c).map(|(x, ci)| x * ci).sum();
                ((fit - yi) / yi).powi(2)
            })
            .sum();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, c));
        }
    }
    let (_, ls) = best.ok_or_else(|| FitError::Underdetermined("no non-negative fit exists".into()))?;
    let fitted: Vec<f64> = rows.iter().map(|r| r.iter().zip(&ls).map(|(x, c)| x * c).sum()).collect();
    let scale = fitted
        .iter()
        .zip(&y)
        .map(|(f, yi)| yi / f)
        .fold(0.0f64, f64::max);
    let coefficients: Vec<f64> = ls.iter().map(|c| c * scale).collect();
    let max_relative_residual = fitted
        .iter()
        .zip(&y)
        .map(|(f, yi)| {
            let bound = f * scale;
            (bound - yi) / bound
        })
        .fold(0.0f64, f64::max);
    Ok(FitResult {
        model,
        coefficients,
        least_squares: ls,
        scale,
        max_relative_residual,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64, f64, f64) -> f64, fault: bool) -> Vec<Sample> {
        let mut out = Vec::new();
        for d in [10u64, 20, 30, 40] {
            for k in [1u32, 2, 4, 8] {
                let fs: Vec<u32> = if fault { vec![0, k / 2, k - 1] } else { vec![0] };
                for fv in fs {
                    out.push(Sample {
                        distance: d,
                        k,
                        f: fv,
                        rounds: f(d as f64, k as f64, fv as f64) as u64,
                    });
                }
            }
        }
        out.dedup();
        out
    }

    #[test]
    fn exact_search_form_recovers_coefficients() {
        let s = synthetic(|d, k, _| 2.0 * d + 3.0 * d * d / k, false);
        // D²/k is integral only for some cells; keep those.
        let s: Vec<Sample> = s.into_iter().filter(|x| (x.distance * x.distance) % x.k as u64 == 0).collect();
        let fit = fit_complexity(&s, BoundModel::Search).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-9, "{fit:?}");
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-9, "{fit:?}");
        assert!(fit.max_relative_residual < 1e-9);
    }

    #[test]
    fn exact_fault_form_recovers_coefficients() {
        let s = synthetic(|d, k, f| 4.0 * d + 8.0 * d * d / (k - f) + 2.0 * d * f, true);
        let s: Vec<Sample> = s
            .into_iter()
            .filter(|x| (8 * x.distance * x.distance) % (x.k - x.f) as u64 == 0)
            .collect();
        let fit = fit_complexity(&s, BoundModel::FaultTolerant).unwrap();
        for (got, want) in fit.coefficients.iter().zip([4.0, 8.0, 2.0]) {
            assert!((got - want).abs() < 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn envelope_lies_above_noisy_samples() {
        let s = synthetic(|d, k, _| (5.0 * d + 9.0 * d * d / k) * if (d as u64).is_multiple_of(20) { 1.1 } else { 0.95 }, false);
        let fit = fit_complexity(&s, BoundModel::Search).unwrap();
        for x in &s {
            assert!(x.rounds as f64 <= fit.bound(x.distance, x.k, x.f) + 1e-9);
        }
        assert!(fit.max_relative_residual < 0.2);
    }

    #[test]
    fn rank_deficient_designs_are_rejected() {
        let s = synthetic(|d, k, _| d + d * d / k, false);
        // Fault form with f = 0 everywhere has an all-zero column.
        assert!(matches!(fit_complexity(&s, BoundModel::FaultTolerant), Err(FitError::Underdetermined(_))));
        assert!(matches!(fit_complexity(&s[..4], BoundModel::Search), Err(FitError::Underdetermined(_))));
        let one_k: Vec<Sample> = s.iter().filter(|x| x.k == 1).copied().collect();
        assert!(matches!(fit_complexity(&one_k, BoundModel::Search), Err(FitError::Underdetermined(_))));
    }

    #[test]
    fn band_membership() {
        let band = Band {
            prefix: HashSet::from([Position::new(0, 0)]),
            cycle: vec![Position::new(1, 1), Position::new(2, 1), Position::new(2, 0)],
            displacement: (1, -1),
        };
        assert!(band.contains(Position::new(0, 0)));
        assert!(band.contains(Position::new(5, -3)));
        assert!(!band.contains(Position::new(0, 2)));
        assert!(!band.contains(Position::new(0, 5)));
    }

    #[test]
    fn coverage_mutation_is_caught() {
        let mut m = RunMetrics::default();
        m.layer_completion_log.entry(2).or_default().insert(1);
        let mut visited: HashSet<Position> = layer_cells(2).into_iter().collect();
        assert!(verify_layer_coverage(&m, &visited, 3).is_ok());
        visited.remove(&Position::new(-1, 1));
        assert_eq!(
            verify_layer_coverage(&m, &visited, 3),
            Err(VerifyError::UncoveredCell { layer: 2, cell: Position::new(-1, 1) })
        );
    }

    #[test]
    fn collision_verdicts() {
        let mut m = RunMetrics::default();
        assert!(verify_no_collision(&m).is_ok());
        m.layer_explorer_log.entry(1).or_default().insert(1);
        m.layer_explorer_log.entry(2).or_default().insert(2);
        assert!(verify_no_collision(&m).is_ok());
        m.layer_explorer_log.entry(2).or_default().insert(3);
        assert_eq!(verify_no_collision(&m), Err(VerifyError::Collision { layer: 2, ants: vec![2, 3] }));
    }
}
