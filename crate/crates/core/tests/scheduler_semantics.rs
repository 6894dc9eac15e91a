use antgrid_core::scheduler::{snapshot_round_sense, Tick, TraceAction};
use antgrid_core::*;

fn far() -> Position {
    Position::new(500, 0)
}

fn trace_of(cfg: RunConfig) -> Vec<TraceRecord> {
    match run(cfg) {
        Ok(r) => r.trace,
        Err(e) => e.report().expect("run ended with a report").trace.clone(),
    }
}

#[test]
fn round_ends_when_last_ant_has_stepped() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 3, far());
    cfg.emission = EmissionScheme::OnFirstSchedule;
    cfg.strategy = ScheduleStrategy::Scripted {
        order: [1, 1, 2, 3, 3, 2, 1, 2].into_iter().map(AntId).collect(),
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut rounds = Vec::new();
    while let Tick::Stepped(_) = sim.step() {
        rounds.push(sim.clock().rounds_completed());
    }
    // A,A,B,C closes round 1; C,B,A closes round 2; B alone does not
    assert_eq!(rounds, [0, 0, 0, 1, 1, 1, 2, 2]);
    assert_eq!(sim.ant(AntId(1)).steps, 3);
    assert_eq!(sim.ant(AntId(3)).steps, 2);
}

#[test]
fn scripted_schedule_runs_out() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 2, far());
    cfg.strategy = ScheduleStrategy::Scripted { order: vec![AntId(1), AntId(2), AntId(1)] };
    let err = run(cfg).unwrap_err();
    assert_eq!(err.kind(), "ScriptExhausted");
    assert!(!err.report().unwrap().metrics.found);
}

#[test]
fn one_ant_released_per_round() {
    for program in [AntProgramId::SyncFsm, AntProgramId::AsyncFsm, AntProgramId::Tm] {
        let mut cfg = RunConfig::new(program, 4, far());
        cfg.record_trace = true;
        cfg.max_steps = Some(40);
        let trace = trace_of(cfg);
        for ant in 1..=4 {
            let first = trace
                .iter()
                .find(|r| r.ant_id == AntId(ant) && matches!(r.action, TraceAction::Move { .. }))
                .unwrap();
            assert_eq!(first.round, ant as u64, "{program}: ant {ant}");
        }
    }
}

#[test]
fn unreleased_and_dead_ants_idle() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 2, far());
    cfg.strategy = ScheduleStrategy::Scripted { order: vec![AntId(2), AntId(1), AntId(2), AntId(1)] };
    cfg.faults = FaultPlan::scripted(vec![(AntId(2), 1)]);
    let mut sim = Simulation::new(cfg).unwrap();
    assert_eq!(sim.step(), Tick::Idle);
    assert_eq!(sim.step(), Tick::Stepped(AntId(1)));
    assert_eq!(sim.step(), Tick::Stepped(AntId(2)));
    assert!(!sim.ant(AntId(2)).alive);
    assert_eq!(sim.ant(AntId(2)).steps, 1);
}

#[test]
fn same_round_marks_are_invisible_until_the_round_ends() {
    let mut w = WorldState::new(far());
    w.emit(Position::new(2, 0));
    let view = snapshot_round_sense(&w);
    assert!(view.sense(Position::new(2, 0)));
    assert!(!view.sense(Position::new(3, 0)));

    // two ants released together both claim (1,0) in the same round
    let mut cfg = RunConfig::new(AntProgramId::SyncFsm, 2, Position::new(30, 30));
    cfg.emission = EmissionScheme::OnFirstSchedule;
    cfg.record_trace = true;
    cfg.max_steps = Some(6);
    let trace = trace_of(cfg);
    let emits: Vec<_> = trace.iter().filter(|r| r.action == TraceAction::Emit).collect();
    assert_eq!(emits.len(), 2);
    assert_eq!(emits[0].position, emits[1].position);
    assert_eq!(emits[0].round, emits[1].round);

    // released a round apart, the second ant sees the first one's mark
    let mut cfg = RunConfig::new(AntProgramId::SyncFsm, 2, Position::new(30, 30));
    cfg.record_trace = true;
    cfg.max_steps = Some(10);
    let trace = trace_of(cfg);
    let by_two: Vec<_> = trace.iter().filter(|r| r.ant_id == AntId(2) && r.action == TraceAction::Emit).collect();
    assert!(by_two.iter().all(|r| r.position != Position::new(1, 0)));
}

#[test]
fn lockstep_release_collides_in_sync() {
    let mut cfg = RunConfig::new(AntProgramId::SyncFsm, 4, Position::new(9, 0));
    cfg.emission = EmissionScheme::OnFirstSchedule;
    let r = run(cfg).unwrap();
    assert!(matches!(verify_no_collision(&r.metrics), Err(VerifyError::Collision { .. })));
}

#[test]
fn killed_at_zero_never_acts() {
    let t = Position::new(3, -4);
    let mut cfg = RunConfig::new(AntProgramId::AsyncFtFsm, 3, t);
    cfg.faults = FaultPlan::scripted(vec![(AntId(1), 0)]);
    let r = run(cfg).unwrap();
    assert_eq!(r.metrics.steps_per_ant[0], 0);
    assert_eq!(r.metrics.failed_ants, vec![1]);
    assert!(r.metrics.found);
}

#[test]
fn dead_ant_does_not_block_rounds() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 3, far());
    cfg.emission = EmissionScheme::OnFirstSchedule;
    cfg.faults = FaultPlan::scripted(vec![(AntId(3), 1)]);
    cfg.strategy = ScheduleStrategy::Scripted {
        order: [1, 2, 3, 1, 2, 1, 2].into_iter().map(AntId).collect(),
    };
    let mut sim = Simulation::new(cfg).unwrap();
    for _ in 0..5 {
        sim.step();
    }
    // round 1 needed ant 3; round 2 does not, because it died
    assert_eq!(sim.clock().rounds_completed(), 2);
}

#[test]
fn seeded_random_schedules_replay() {
    let mk = |seed| {
        let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 4, Position::new(5, 3));
        cfg.strategy = ScheduleStrategy::SeededRandom { seed };
        cfg.record_trace = true;
        run(cfg).unwrap()
    };
    let (a, b, c) = (mk(7), mk(7), mk(8));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.trace, c.trace);
    assert!(c.metrics.found);
}

#[test]
fn budget_drops_are_traced() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 1, Position::new(0, 40));
    cfg.pheromone_budget = Some(2);
    cfg.record_trace = true;
    cfg.max_steps = Some(200);
    let err = run(cfg).unwrap_err();
    let r = err.report().unwrap();
    assert_eq!(r.metrics.pheromone_emissions, 2);
    assert!(r.metrics.dropped_emissions >= 1);
    assert!(r.trace.iter().any(|t| t.action == TraceAction::EmitDropped));
}

#[test]
fn budget_loop_stops_the_run() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 1, Position::new(-20, 20));
    cfg.pheromone_budget = Some(0);
    let err = run(cfg).unwrap_err();
    assert_eq!(err.kind(), "BudgetLoopDetected");
    let r = err.report().unwrap();
    assert_eq!(r.cycles.len(), 1);
    assert!(r.cycles[0].cycle_found);
}

#[test]
fn config_errors() {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFsm, 2, Position::NEST);
    assert!(matches!(run(cfg.clone()), Err(SimError::TreasureAtNest)));
    cfg.treasure = Position::new(1, 1);
    cfg.faults = FaultPlan::random(2, 0);
    assert!(matches!(run(cfg.clone()), Err(SimError::AllDead { f: 2, k: 2 })));
    cfg.faults = FaultPlan::none();
    cfg.mode = Some(Mode::Sync);
    assert!(matches!(run(cfg.clone()), Err(SimError::ProgramModeMismatch { .. })));
    let mut cfg = RunConfig::new(AntProgramId::Tm, 0, Position::new(1, 1));
    assert_eq!(run(cfg.clone()).unwrap_err().kind(), "ConfigInvalid");
    cfg.k = 2;
    cfg.strategy = ScheduleStrategy::Scripted { order: vec![AntId(3)] };
    assert_eq!(run(cfg).unwrap_err().kind(), "ConfigInvalid");
}

#[test]
fn tm_runs_in_both_models() {
    let t = Position::new(-4, 7);
    let a = run_async(RunConfig::new(AntProgramId::Tm, 3, t)).unwrap();
    let s = run_sync(RunConfig::new(AntProgramId::Tm, 3, t)).unwrap();
    assert!(a.metrics.found && s.metrics.found);
}

#[test]
fn step_cap_defaults_to_formula() {
    let cfg = RunConfig::new(AntProgramId::AsyncFsm, 3, Position::new(4, 6));
    assert_eq!(cfg.effective_max_steps(), 64 * (100 + 30 + 1000));
}

#[test]
fn config_json_round_trips() {
    let mut cfg = RunConfig::new(AntProgramId::SyncFtFsm, 3, Position::new(4, -6));
    cfg.faults = FaultPlan { kills: vec![(AntId(2), 9)], kill_deepest_at: vec![30], ..FaultPlan::random(1, 4) };
    cfg.pheromone_budget = Some(7);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    let minimal: RunConfig = serde_json::from_str(r#"{"program":"tm","k":2,"treasure":[1,2]}"#).unwrap();
    assert_eq!(minimal, RunConfig::new(AntProgramId::Tm, 2, Position::new(1, 2)));
}
