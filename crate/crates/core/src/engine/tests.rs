use std::collections::BTreeMap;

use super::*;
use crate::domain::{AppKind, ApplicationSpec, ComponentSpec};
use crate::workload::{generate, PatternKind, UsageMix, WorkloadConfig};

const GB: f64 = 1024.0;
const HALF: &[f64] = &[0.5];

fn rv(c: f64, m: f64) -> ResourceVector {
    ResourceVector::new(c, m).unwrap()
}

/// Hand-built traces: each component gets a reservation and a usage profile
/// given as fractions of that reservation (the last value is held).
#[derive(Default)]
struct Builder {
    apps: Vec<ApplicationSpec>,
    usage: BTreeMap<ComponentId, UsageSeries>,
    next: u32,
}

impl Builder {
    fn component(&mut self, app: AppId, kind: ComponentKind, res: ResourceVector, profile: &[f64]) -> ComponentSpec {
        let spec = ComponentSpec { id: ComponentId(self.next), application_id: app, kind, reservation: res };
        self.next += 1;
        self.usage.insert(
            spec.id,
            UsageSeries {
                component_id: spec.id,
                pattern: PatternKind::Constant,
                samples: profile.iter().map(|f| res.scale(*f)).collect(),
            },
        );
        spec
    }

    fn app(
        &mut self,
        submit: SimTime,
        runtime: u64,
        core: &[(ResourceVector, &[f64])],
        elastic: &[(ResourceVector, &[f64])],
    ) -> AppId {
        let id = AppId(self.apps.len() as u32);
        let core: Vec<_> = core.iter().map(|(r, p)| self.component(id, ComponentKind::Core, *r, p)).collect();
        let elastic: Vec<_> = elastic.iter().map(|(r, p)| self.component(id, ComponentKind::Elastic, *r, p)).collect();
        self.apps.push(ApplicationSpec {
            id,
            kind: if elastic.is_empty() { AppKind::Rigid } else { AppKind::Elastic },
            total_work: (runtime as usize * (core.len() + elastic.len())) as f64,
            runtime,
            submission_time: submit,
            priority_key: submit,
            core_components: core,
            elastic_components: elastic,
        });
        id
    }

    fn build(self) -> WorkloadTrace {
        let mut t = WorkloadTrace::empty(WorkloadConfig::desk());
        t.applications = self.apps;
        t.usage = self.usage;
        t
    }
}

fn cluster(hosts: usize) -> SimConfig {
    SimConfig { cluster: ClusterConfig { hosts, capacity: rv(32.0, 128.0 * GB) }, ..SimConfig::default() }
}

fn small_workload(n: u32, seed: u64) -> WorkloadTrace {
    generate(&WorkloadConfig { n_applications: n, rng_seed: seed, ..WorkloadConfig::desk() }).unwrap()
}

fn placements(state: &ClusterState, id: AppId) -> Vec<Option<u32>> {
    state.app(id).components.iter().map(|c| c.host_id.map(|h| h.0)).collect()
}

#[test]
fn empty_workload_gives_empty_report() {
    let trace = WorkloadTrace::empty(WorkloadConfig::desk());
    let r = run(&trace, &SimConfig::baseline()).unwrap();
    assert!(r.apps().is_empty());
    assert!(r.ticks().is_empty());
    assert_eq!(r.aggregates().failure_pct, 0.0);
}

#[test]
fn single_app_turnaround_is_runtime() {
    let mut b = Builder::default();
    b.app(75, 3600, &[(rv(4.0, 16.0 * GB), HALF); 4], &[]);
    let r = run(&b.build(), &SimConfig { policy: Policy::Baseline, ..cluster(2) }).unwrap();
    assert_eq!(r.apps()[0].turnaround, Some(3600));
    assert_eq!(r.apps()[0].completion, Some(3675));
    assert_eq!(r.apps()[0].ledger, vec![3600.0; 4]);
}

#[test]
fn first_fit_places_on_lowest_host() {
    let mut b = Builder::default();
    let id = b.app(0, 600, &[(rv(4.0, 16.0 * GB), HALF); 3], &[]);
    let mut checked = false;
    run_with_observer(&b.build(), &SimConfig { policy: Policy::Baseline, ..cluster(10) }, |e, s| {
        if e.kind == EventKind::Submit {
            assert_eq!(placements(s, id), vec![Some(0); 3]);
            checked = true;
        }
    })
    .unwrap();
    assert!(checked);
}

#[test]
fn strict_fifo_blocks_behind_head() {
    let mut b = Builder::default();
    // Occupies 100 GB of the single host until t=1000.
    let big = b.app(0, 1000, &[(rv(4.0, 100.0 * GB), HALF)], &[]);
    // Needs 64 GB: cannot start until `big` finishes.
    let head = b.app(10, 500, &[(rv(4.0, 64.0 * GB), HALF)], &[]);
    // Would fit right away but must wait behind `head`.
    let tiny = b.app(20, 100, &[(rv(1.0, 2.0 * GB), HALF)], &[]);
    let r = run(&b.build(), &SimConfig { policy: Policy::Baseline, ..cluster(1) }).unwrap();
    assert_eq!(r.apps()[big.0 as usize].first_start, Some(0));
    assert_eq!(r.apps()[head.0 as usize].first_start, Some(1000));
    assert_eq!(r.apps()[tiny.0 as usize].first_start, Some(1000));
}

#[test]
fn elastic_components_beyond_capacity_stay_dormant() {
    let mut b = Builder::default();
    // Host: 128 GB. Core takes 28 GB, leaving room for five 20 GB elastic components.
    let id = b.app(0, 600, &[(rv(2.0, 28.0 * GB), HALF)], &[(rv(2.0, 20.0 * GB), HALF); 8]);
    let mut seen = false;
    run_with_observer(&b.build(), &SimConfig { policy: Policy::Baseline, ..cluster(1) }, |e, s| {
        if e.kind == EventKind::Submit {
            let running = s.app(id).components.iter().filter(|c| c.is_running()).count();
            assert_eq!(running, 6);
            assert_eq!(s.app(id).status, AppStatus::Running);
            seen = true;
        }
    })
    .unwrap();
    assert!(seen);
}

#[test]
fn monitor_uses_local_tick_index() {
    let mut b = Builder::default();
    let profile: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    // Blocker keeps the app waiting until t=120.
    b.app(0, 120, &[(rv(32.0, 128.0 * GB), HALF)], &[]);
    let id = b.app(1, 3000, &[(rv(4.0, 8.0 * GB), &profile)], &[]);
    let mut seen = false;
    run_with_observer(&b.build(), &SimConfig { policy: Policy::Baseline, ..cluster(1) }, |e, s| {
        if e.kind == EventKind::MonitorTick && e.time == 300 {
            let c = &s.app(id).components[0];
            assert_eq!(c.start_time, 120);
            assert_eq!(c.used.memory, 8.0 * GB * profile[3]);
            seen = true;
        }
    })
    .unwrap();
    assert!(seen);
}

fn sim_with_app<'a>(trace: &'a WorkloadTrace, config: &'a SimConfig) -> Sim<'a> {
    let mut sim = Sim::new(trace, config).unwrap();
    sim.start();
    sim
}

fn step_until(sim: &mut Sim, t: SimTime) {
    while !sim.events.is_empty() {
        let next = sim.events.peek_time();
        if next.is_none_or(|n| n > t) {
            break;
        }
        sim.step().unwrap();
    }
    sim.accrue_work(t);
    sim.state.clock = t;
}

#[test]
fn elastic_preemption_loses_its_work() {
    let mut b = Builder::default();
    let id = b.app(0, 6000, &[(rv(1.0, GB), HALF)], &[(rv(1.0, GB), HALF); 2]);
    let trace = b.build();
    let config = SimConfig { policy: Policy::Baseline, ..cluster(1) };
    let mut sim = sim_with_app(&trace, &config);
    step_until(&mut sim, 600);
    assert_eq!(sim.state.app(id).accrued_work, 1800.0);
    assert_eq!(sim.state.app(id).components[1].incarnation_work, 600.0);
    sim.drop_elastic(id, 1);
    let app = sim.state.app(id);
    assert_eq!(app.accrued_work, 1200.0);
    assert_eq!(app.lost_work, 600.0);
    assert_eq!(app.components[1].status, ComponentStatus::Preempted);
}

#[test]
fn losing_elastic_components_stretches_runtime() {
    for lambda in [0.0, 1.0] {
        let mut b = Builder::default();
        let id = b.app(0, 1000, &[(rv(1.0, GB), HALF)], &[(rv(1.0, GB), HALF); 4]);
        let trace = b.build();
        let config = SimConfig { policy: Policy::Baseline, elastic_loss_fraction: lambda, ..cluster(1) };
        let mut sim = sim_with_app(&trace, &config);
        step_until(&mut sim, 500);
        assert_eq!(sim.state.app(id).accrued_work, 2500.0);
        sim.drop_elastic(id, 1);
        sim.drop_elastic(id, 2);
        // Leave no room to re-place the dropped components.
        sim.state.hosts[0].capacity = rv(3.0, 3.0 * GB);
        let remaining = 5000.0 - (2500.0 - lambda * 1000.0);
        let expected = 500 + (remaining / 3.0f64).ceil() as u64;
        while sim.step().unwrap().is_some() {}
        let app = sim.state.app(id);
        assert_eq!(app.completion_time, Some(expected), "lambda {lambda}");
        let credited: f64 = app.ledger.iter().sum();
        assert!((credited - app.lost_work - 5000.0).abs() < 1e-6);
    }
}

#[test]
fn overload_kills_largest_overshoot_first() {
    let mut b = Builder::default();
    let a = b.app(0, 6000, &[(rv(1.0, 60.0 * GB), HALF)], &[]);
    let c = b.app(1, 6000, &[(rv(1.0, 60.0 * GB), HALF)], &[]);
    let trace = b.build();
    let config = SimConfig { policy: Policy::Optimistic, ..cluster(1) };
    let mut sim = sim_with_app(&trace, &config);
    step_until(&mut sim, 1);
    assert_eq!(sim.running.len(), 2);
    // Capacity 128 GB; usage 64.5 + 65 = 129.5 GB: deficit 1.5 GB.
    for (id, used, alloc) in [(a, 65.0, 63.0), (c, 64.5, 63.5)] {
        let comp = &mut sim.state.app_mut(id).components[0];
        comp.used.memory = used * GB;
        comp.allocated.memory = alloc * GB;
    }
    assert!(sim.overload_check());
    assert_eq!(sim.state.app(a).failure_count, 1);
    assert_eq!(sim.state.app(c).failure_count, 0);
    assert!(!sim.overload_check());
}

#[test]
fn within_grace_period_nothing_is_shaped() {
    let trace = small_workload(30, 3);
    let config = SimConfig { grace_period: 10 * 24 * 3600, ..cluster(4) };
    let shaped = run(&trace, &config).unwrap();
    let baseline = run(&trace, &SimConfig { policy: Policy::Baseline, ..config.clone() }).unwrap();
    assert_eq!(shaped.outcome_json(), baseline.outcome_json());
}

#[test]
fn full_static_buffer_matches_baseline() {
    let trace = small_workload(60, 5);
    for forecaster in [ForecasterKind::Oracle, ForecasterKind::default()] {
        let base = SimConfig { policy: Policy::Baseline, ..cluster(3) };
        let shaped = base.clone().with_policy(Policy::Pessimistic).with_forecaster(forecaster).with_buffer(1.0, 0.0);
        assert_eq!(run(&trace, &shaped).unwrap().outcome_json(), run(&trace, &base).unwrap().outcome_json());
    }
}

#[test]
fn baseline_never_fails_and_respects_runtime() {
    let trace = small_workload(80, 8);
    let r = run(&trace, &SimConfig { policy: Policy::Baseline, ..cluster(3) }).unwrap();
    assert_eq!(r.aggregates().failure_pct, 0.0);
    for (a, spec) in r.apps().iter().zip(&trace.applications) {
        assert!(a.turnaround.unwrap() >= spec.runtime);
        assert_eq!(a.lost_work, 0.0);
    }
}

fn check_invariants(trace: &WorkloadTrace, config: &SimConfig) -> SimulationReport {
    let pessimistic = config.policy != Policy::Optimistic;
    let report = run_with_observer(trace, config, |_, s| {
        s.reconcile(1e-9).unwrap();
        if pessimistic {
            for h in &s.hosts {
                assert!(h.allocated.cpus <= h.capacity.cpus * (1.0 + 1e-12));
                assert!(h.allocated.memory <= h.capacity.memory * (1.0 + 1e-12));
            }
        }
        for a in &s.apps {
            assert!(a.accrued_work >= 0.0 && a.accrued_work <= a.spec.total_work);
            assert_eq!(a.status == AppStatus::Finished, a.completion_time.is_some());
        }
    })
    .unwrap();
    for (a, spec) in report.apps().iter().zip(&trace.applications) {
        if a.outcome == AppOutcome::Finished {
            let credited: f64 = a.ledger.iter().sum();
            assert!(
                (credited - a.lost_work - spec.total_work).abs() <= 1e-6,
                "{}: {credited} - {} vs {}",
                a.id,
                a.lost_work,
                spec.total_work
            );
        }
    }
    // First admissions follow submission order.
    let mut starts: Vec<_> = report.apps().iter().filter_map(|a| a.first_start.map(|s| (a.priority_key, s))).collect();
    starts.sort();
    assert!(starts.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(report.is_self_consistent());
    report
}

#[test]
fn oracle_pessimistic_never_fails() {
    let trace = small_workload(120, 11);
    for (k1, k2) in [(0.0, 0.0), (0.05, 0.0), (0.05, 3.0)] {
        let config = cluster(3).with_forecaster(ForecasterKind::Oracle).with_buffer(k1, k2);
        let r = check_invariants(&trace, &config);
        assert_eq!(r.aggregates().failure_pct, 0.0, "k1={k1} k2={k2}");
        assert!(r.apps().iter().all(|a| a.outcome == AppOutcome::Finished));
    }
}

#[test]
fn invariants_hold_for_every_policy_and_forecaster() {
    let trace = small_workload(80, 21);
    for policy in [Policy::Baseline, Policy::Pessimistic, Policy::Optimistic] {
        for forecaster in [ForecasterKind::Oracle, ForecasterKind::default(), ForecasterKind::ari()] {
            let config = cluster(2).with_policy(policy).with_forecaster(forecaster).with_buffer(0.05, 1.0);
            check_invariants(&trace, &config);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let trace = small_workload(60, 2);
    for policy in [Policy::Pessimistic, Policy::Optimistic] {
        let config = cluster(2).with_policy(policy);
        assert_eq!(run(&trace, &config).unwrap().to_json(), run(&trace, &config).unwrap().to_json());
    }
}

#[test]
fn forecaster_state_matches_offline_replay() {
    let mut b = Builder::default();
    let profile: Vec<f64> = (0..80).map(|i| 0.4 + 0.3 * (i as f64 * 0.4).sin()).collect();
    let id = b.app(30, 4000, &[(rv(4.0, 8.0 * GB), &profile)], &[]);
    let trace = b.build();
    let config = cluster(1).with_buffer(1.0, 0.0);
    let mut sim = sim_with_app(&trace, &config);
    step_until(&mut sim, 60 * 25);
    let cid = sim.state.app(id).components[0].spec.id;
    let live = sim.forecasters.get_mut(&cid).unwrap()[1].predict();

    let mut offline = Forecaster::new(&config.forecaster, 8.0 * GB, None).unwrap();
    // Started at t=30: ticks at 60..=1500 see local indices 0..=24.
    for index in 0..=24u64 {
        offline.observe(index, 8.0 * GB * profile[index as usize]).unwrap();
    }
    assert_eq!(live, offline.predict());
}

#[test]
fn pessimistic_preempts_where_optimistic_kills() {
    let mut b = Builder::default();
    // Two rigid apps whose usage jumps from 30% to 90% of 90 GB on one 128 GB
    // host: the second is admitted into space the first does not use yet.
    let ramp: Vec<f64> = (0..40).map(|i| if i < 5 { 0.3 } else { 0.9 }).collect();
    b.app(0, 3000, &[(rv(4.0, 90.0 * GB), &ramp)], &[]);
    b.app(1, 3000, &[(rv(4.0, 90.0 * GB), &ramp)], &[]);
    let trace = b.build();
    let base = cluster(1).with_forecaster(ForecasterKind::Oracle).with_buffer(0.0, 0.0);
    let pess = run(&trace, &base).unwrap();
    let opt = run(&trace, &base.clone().with_policy(Policy::Optimistic)).unwrap();
    assert_eq!(pess.aggregates().failure_pct, 0.0);
    assert!(pess.apps()[1].preemption_count >= 1);
    assert_eq!(pess.apps()[0].preemption_count, 0);
    assert!(opt.aggregates().failure_pct > 0.0);
}

#[test]
fn invalid_inputs_are_rejected() {
    let mut b = Builder::default();
    b.app(0, 100, &[(rv(40.0, GB), HALF)], &[]);
    assert!(matches!(run(&b.build(), &cluster(1)), Err(SimError::Trace(_))));
    let bad = SimConfig { elastic_loss_fraction: 1.5, ..cluster(1) };
    assert!(matches!(run(&small_workload(2, 1), &bad), Err(SimError::Config(_))));
}

#[test]
fn mixed_workloads_complete() {
    let trace = generate(&WorkloadConfig {
        n_applications: 40,
        usage_mix: UsageMix::only(PatternKind::Spiky),
        rng_seed: 4,
        ..WorkloadConfig::desk()
    })
    .unwrap();
    let r = check_invariants(&trace, &cluster(2).with_buffer(0.0, 0.0));
    assert!(r.aggregates().completed + r.aggregates().abandoned == 40);
}
