use antgrid_core::analysis::run_solo;
use antgrid_core::scheduler::TraceAction;
use antgrid_core::*;
use proptest::prelude::*;

fn program() -> impl Strategy<Value = AntProgramId> {
    prop::sample::select(AntProgramId::ALL.to_vec())
}

fn treasure(max_d: u64) -> impl Strategy<Value = Position> {
    (1..=max_d).prop_flat_map(|d| {
        let cells = layer_cells(d);
        prop::sample::select(cells)
    })
}

fn config() -> impl Strategy<Value = RunConfig> {
    (program(), 1u32..=5, treasure(9), any::<u64>(), any::<bool>(), 0u32..4).prop_map(|(p, k, t, seed, random, f)| {
        let mut cfg = RunConfig::new(p, k, t);
        cfg.record_trace = true;
        if cfg.mode() == Mode::Async && random {
            cfg.strategy = ScheduleStrategy::SeededRandom { seed };
        }
        if p.is_fault_tolerant() && k > 1 {
            cfg.faults = FaultPlan::random(f.min(k - 1), seed);
        }
        cfg
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conforming_runs_find_and_cover(cfg in config()) {
        let r = run(cfg.clone()).unwrap();
        prop_assert!(r.metrics.found);
        prop_assert!(verify_layer_coverage(&r.metrics, r.world.visited(), cfg.distance()).is_ok());
        prop_assert!(!r.metrics.nest_marked);
        prop_assert_eq!(metrics_from_trace(&r.trace, cfg.k, cfg.treasure), r.metrics.clone());
    }

    #[test]
    fn finder_is_sweeping_a_neighbouring_layer_or_beside_a_ray(cfg in config()) {
        let r = run(cfg.clone()).unwrap();
        let t = cfg.treasure;
        // in a synchronous round other ants may move after the finder
        let at = r.trace.iter().position(|x| matches!(x.action, TraceAction::Move { .. }) && x.position == t).unwrap();
        let finder = r.trace[at].ant_id;
        let sweep = r.trace[..at].iter().rev().filter(|x| x.ant_id == finder).find_map(|x| match x.action {
            TraceAction::ExploreStart { layer } => Some(Some(layer)),
            TraceAction::ExploreDone { .. } => Some(None),
            _ => None,
        }).flatten();
        // ray upkeep (extension companions, completion markers) also walks
        // the cells beside a ray
        let on_ray = t.x.abs() <= 1 || t.y.abs() <= 1;
        let d = cfg.distance();
        prop_assert!(on_ray || sweep == Some(d) || sweep == Some(d - 1), "{} found by ant {} sweeping {:?}", t, finder.0, sweep);
    }

    #[test]
    fn marks_only_accumulate(cfg in config()) {
        let r = run(cfg).unwrap();
        let mut seen = std::collections::HashSet::new();
        for rec in &r.trace {
            if rec.action == TraceAction::Emit {
                seen.insert(rec.position);
            }
        }
        prop_assert_eq!(seen.len(), r.world.pheromones().distinct_cells());
        prop_assert!(seen.iter().all(|p| r.world.sense(*p)));
    }

    #[test]
    fn sync_audits_do_not_depend_on_reruns(k in 1u32..6, t in treasure(12), ft in any::<bool>()) {
        let p = if ft { AntProgramId::SyncFtFsm } else { AntProgramId::SyncFsm };
        let a = run(RunConfig::new(p, k, t)).unwrap();
        let b = run(RunConfig::new(p, k, t)).unwrap();
        let d = t.distance();
        prop_assert_eq!(pheromone_audit(&a.metrics, p, d, k, 0), pheromone_audit(&b.metrics, p, d, k, 0));
    }

    #[test]
    fn detected_cycles_replay(budget in 0u64..12, program in prop::sample::select(vec![AntProgramId::AsyncFsm, AntProgramId::AsyncFtFsm])) {
        let far = Position::new(-3000, 3000);
        let trace = run_solo(program, far, Some(budget), 50_000).unwrap();
        let report = detect_cycle(&trace, program).unwrap();
        prop_assert!(report.cycle_found);
        let p = report.period as usize;
        let (dx, dy) = report.displacement;
        let marks: std::collections::HashSet<Position> = trace.marks.iter().copied().collect();
        let (mut state, _, mut pos) = trace.steps[report.cycle_start_step as usize];
        let mut path = vec![pos];
        for _ in 0..3 * p {
            let (a, next) = state.step(marks.contains(&pos).into());
            pos = pos.step(a.direction).unwrap();
            state = next;
            path.push(pos);
        }
        for i in p..path.len() {
            prop_assert_eq!(path[i], path[i - p].offset(dx, dy));
        }
    }
}
