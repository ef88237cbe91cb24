//! Deterministic discrete-event simulation of a reservation-based cluster
//! with optional forecast-driven resource shaping.
//!
//! One run owns a single mutable world and event queue. Monitor ticks read
//! each running component's ground-truth usage, detect memory overruns and
//! feed the forecasters; shape ticks turn predictions into a plan and apply
//! it; a strict-FIFO scheduling pass follows every change in free capacity.

mod config;
mod events;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

pub use config::{ClusterConfig, Policy, SimConfig};
pub use events::{Event, EventKind, EventQueue};

use crate::domain::{
    AppId, AppStatus, ClusterState, ComponentId, ComponentKind, ComponentStatus, Host, HostId, ResourceVector, SimTime,
};
use crate::forecast::{ForecastError, Forecaster, ForecasterKind};
use crate::report::{AppOutcome, AppRecord, SimulationReport, TickSample};
use crate::shaper::{plan_pessimistic, resolve_optimistic, shaped_demand, ResourcePrediction, ShapingPlan};
use crate::workload::{UsageSeries, WorkloadTrace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// Runs `trace` under `config` to completion.
pub fn run(trace: &WorkloadTrace, config: &SimConfig) -> Result<SimulationReport, SimError> {
    run_with_observer(trace, config, |_, _| {})
}

/// Like [`run`], calling `observer` with the state after every event.
pub fn run_with_observer<F>(
    trace: &WorkloadTrace,
    config: &SimConfig,
    observer: F,
) -> Result<SimulationReport, SimError>
where
    F: FnMut(&Event, &ClusterState),
{
    Sim::new(trace, config)?.run(observer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Disruption {
    /// Memory overrun or overload kill.
    Crash,
    /// Chosen by the shaper.
    Preempt,
}

struct Truth {
    cpus: Arc<[f64]>,
    memory: Arc<[f64]>,
}

struct Sim<'a> {
    trace: &'a WorkloadTrace,
    config: &'a SimConfig,
    state: ClusterState,
    events: EventQueue,
    /// Running applications keyed by (priority_key, id), i.e. FIFO order.
    running: BTreeSet<(SimTime, AppId)>,
    locate: BTreeMap<ComponentId, (AppId, usize)>,
    truth: BTreeMap<ComponentId, Truth>,
    /// (cpus, memory) forecasters of each running component.
    forecasters: BTreeMap<ComponentId, [Forecaster; 2]>,
    generation: Vec<u64>,
    first_start: Vec<Option<SimTime>>,
    abandoned: Vec<bool>,
    app_alloc: Vec<ResourceVector>,
    app_used: Vec<ResourceVector>,
    ticks: Vec<TickSample>,
    last_accrual: SimTime,
    unfinished: usize,
}

impl<'a> Sim<'a> {
    fn new(trace: &'a WorkloadTrace, config: &'a SimConfig) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        trace.validate().map_err(SimError::Trace)?;
        let capacity = config.cluster.capacity;
        let hosts: Vec<Host> = (0..config.cluster.hosts).map(|i| Host::new(HostId(i as u32), capacity)).collect();

        let mut apps = Vec::with_capacity(trace.applications.len());
        let mut locate = BTreeMap::new();
        let mut truth = BTreeMap::new();
        for (i, spec) in trace.applications.iter().enumerate() {
            if spec.id.0 as usize != i {
                return Err(SimError::Trace(format!("application ids must be dense, found {} at {i}", spec.id)));
            }
            for (pos, c) in spec.components().enumerate() {
                if !c.reservation.fits(&capacity) {
                    return Err(SimError::Trace(format!("{} does not fit on an empty host", c.id)));
                }
                let series =
                    trace.usage.get(&c.id).ok_or_else(|| SimError::Trace(format!("no usage series for {}", c.id)))?;
                locate.insert(c.id, (spec.id, pos));
                truth.insert(c.id, Truth { cpus: series.cpus().into(), memory: series.memory().into() });
            }
            apps.push(crate::domain::ApplicationState::new(spec.clone()));
        }
        let n = apps.len();
        Ok(Sim {
            trace,
            config,
            state: ClusterState::new(hosts, apps),
            events: EventQueue::default(),
            running: BTreeSet::new(),
            locate,
            truth,
            forecasters: BTreeMap::new(),
            generation: vec![0; n],
            first_start: vec![None; n],
            abandoned: vec![false; n],
            app_alloc: vec![ResourceVector::ZERO; n],
            app_used: vec![ResourceVector::ZERO; n],
            ticks: Vec::new(),
            last_accrual: 0,
            unfinished: n,
        })
    }

    fn shaping(&self) -> bool {
        self.config.policy != Policy::Baseline
    }

    fn run<F: FnMut(&Event, &ClusterState)>(mut self, mut observer: F) -> Result<SimulationReport, SimError> {
        self.start();
        while let Some(event) = self.step()? {
            observer(&event, &self.state);
        }
        Ok(self.into_report())
    }

    fn start(&mut self) {
        for spec in &self.trace.applications {
            self.events.push(spec.submission_time, EventKind::Submit, spec.id);
        }
        if self.unfinished > 0 {
            self.events.push(0, EventKind::MonitorTick, AppId(0));
        }
    }

    /// Processes the next event; `None` once every application is settled.
    fn step(&mut self) -> Result<Option<Event>, SimError> {
        if self.unfinished == 0 {
            return Ok(None);
        }
        let Some(event) = self.events.pop() else { return Ok(None) };
        self.accrue_work(event.time);
        self.state.clock = event.time;
        match event.kind {
            EventKind::Submit => {
                self.state.app_mut(event.app).first_submission = Some(event.time);
                self.enqueue(event.app);
            }
            EventKind::Resubmit => self.enqueue(event.app),
            EventKind::AppComplete { generation } => self.complete(event.app, generation),
            EventKind::MonitorTick => {
                self.monitor_tick()?;
                if self.unfinished > 0 {
                    if self.shaping() {
                        self.events.push(event.time, EventKind::ShapeTick, AppId(0));
                    }
                    self.events.push(event.time + self.config.monitor_interval, EventKind::MonitorTick, AppId(0));
                }
            }
            EventKind::ShapeTick => self.shape_tick(),
        }
        Ok(Some(event))
    }

    fn series(&self, id: ComponentId) -> &UsageSeries {
        self.trace.series(id)
    }

    /// Credits every running component with the work done since the last
    /// accrual, capped at the application's remaining work.
    fn accrue_work(&mut self, now: SimTime) {
        let dt = now.saturating_sub(self.last_accrual);
        self.last_accrual = now;
        if dt == 0 {
            return;
        }
        for &(_, id) in &self.running {
            let app = &mut self.state.apps[id.0 as usize];
            let rate = app.running_components();
            let remaining = app.spec.total_work - app.accrued_work;
            let add = (dt as f64 * rate as f64).min(remaining);
            if rate == 0 || add <= 0.0 {
                continue;
            }
            let share = add / rate as f64;
            for (i, c) in app.components.iter_mut().enumerate() {
                if c.is_running() {
                    app.ledger[i] += share;
                    c.incarnation_work += share;
                }
            }
            app.accrued_work = (app.accrued_work + add).min(app.spec.total_work);
        }
    }

    /// Schedules completion at the current rate, superseding earlier events.
    fn refresh_completion(&mut self, id: AppId) {
        let app = self.state.app(id);
        if app.status != AppStatus::Running {
            return;
        }
        let rate = app.running_components() as f64;
        let remaining = (app.spec.total_work - app.accrued_work).max(0.0);
        let secs = (remaining / rate).ceil() as SimTime;
        let g = &mut self.generation[id.0 as usize];
        *g += 1;
        let generation = *g;
        self.events.push(self.state.clock + secs, EventKind::AppComplete { generation }, id);
    }

    fn complete(&mut self, id: AppId, generation: u64) {
        let i = id.0 as usize;
        if self.generation[i] != generation || self.state.apps[i].status != AppStatus::Running {
            return;
        }
        let now = self.state.clock;
        let app = &mut self.state.apps[i];
        debug_assert!(app.accrued_work >= app.spec.total_work - 1e-6 * app.spec.total_work.max(1.0));
        app.accrued_work = app.spec.total_work;
        app.status = AppStatus::Finished;
        app.completion_time = Some(now);
        let key = app.spec.priority_key;
        for c in app.components.iter_mut() {
            c.status = ComponentStatus::Finished;
            c.host_id = None;
            c.allocated = ResourceVector::ZERO;
            c.used = ResourceVector::ZERO;
            self.forecasters.remove(&c.spec.id);
        }
        self.running.remove(&(key, id));
        self.unfinished -= 1;
        self.schedule_pending();
    }

    fn enqueue(&mut self, id: AppId) {
        let app = self.state.app_mut(id);
        app.status = AppStatus::Queued;
        let key = (app.spec.priority_key, id);
        self.state.queue.insert(key);
        self.schedule_pending();
    }

    fn sync_hosts(&mut self) {
        for h in self.state.hosts.iter_mut() {
            h.allocated = ResourceVector::ZERO;
            h.used = ResourceVector::ZERO;
        }
        for &(_, id) in &self.running {
            for c in self.state.apps[id.0 as usize].components.iter().filter(|c| c.is_running()) {
                let h = &mut self.state.hosts[c.host_id.expect("running component is placed").0 as usize];
                h.allocated = h.allocated.add(&c.allocated);
                h.used = h.used.add(&c.used);
            }
        }
    }

    fn first_fit(free: &[Option<ResourceVector>], request: &ResourceVector) -> Option<usize> {
        free.iter().position(|f| f.as_ref().is_some_and(|f| request.fits(f)))
    }

    fn place(&mut self, id: AppId, pos: usize, host: usize) -> Result<(), ForecastError> {
        let now = self.state.clock;
        let shaping = self.shaping();
        let cid = self.state.app(id).components[pos].spec.id;
        let first = self.series(cid).at(0);
        let c = &mut self.state.app_mut(id).components[pos];
        let reservation = c.spec.reservation;
        c.status = ComponentStatus::Running;
        c.host_id = Some(HostId(host as u32));
        c.start_time = now;
        c.allocated = reservation;
        c.used = ResourceVector { cpus: first.cpus.min(reservation.cpus), memory: first.memory };
        c.incarnation_work = 0.0;
        if shaping {
            let kind = &self.config.forecaster;
            let truth = &self.truth[&cid];
            let oracle = matches!(kind, ForecasterKind::Oracle);
            let pair = [
                Forecaster::new(kind, reservation.cpus, oracle.then(|| truth.cpus.clone()))?,
                Forecaster::new(kind, reservation.memory, oracle.then(|| truth.memory.clone()))?,
            ];
            self.forecasters.insert(cid, pair);
        }
        Ok(())
    }

    /// Strict FIFO admission: the queue head is admitted only if all of its
    /// core components fit first-fit at full reservation; later applications
    /// wait behind it. Admitted elastic components are placed where they fit.
    /// Dormant elastic components of running applications are retried only
    /// when nobody is waiting.
    fn schedule_pending(&mut self) {
        self.sync_hosts();
        let mut free: Vec<Option<ResourceVector>> = self.state.hosts.iter().map(Host::free).collect();
        while let Some(&(key, id)) = self.state.queue.first() {
            let app = self.state.app(id);
            let mut working = free.clone();
            let mut hosts = Vec::with_capacity(app.core_count());
            for c in app.components.iter().filter(|c| c.spec.kind == ComponentKind::Core) {
                let Some(h) = Self::first_fit(&working, &c.spec.reservation) else { break };
                working[h] = working[h].map(|f| f.checked_sub(&c.spec.reservation).expect("fits"));
                hosts.push(h);
            }
            if hosts.len() < app.core_count() {
                break;
            }
            let elastic: Vec<(usize, ResourceVector)> = app
                .components
                .iter()
                .enumerate()
                .filter(|(_, c)| c.spec.kind == ComponentKind::Elastic)
                .map(|(pos, c)| (pos, c.spec.reservation))
                .collect();
            free = working;
            for (pos, &h) in hosts.iter().enumerate() {
                self.place(id, pos, h).expect("forecaster config validated");
            }
            for (pos, res) in elastic {
                if let Some(h) = Self::first_fit(&free, &res) {
                    free[h] = free[h].map(|f| f.checked_sub(&res).expect("fits"));
                    self.place(id, pos, h).expect("forecaster config validated");
                }
            }
            self.state.queue.remove(&(key, id));
            self.state.app_mut(id).status = AppStatus::Running;
            self.running.insert((key, id));
            self.first_start[id.0 as usize].get_or_insert(self.state.clock);
            self.refresh_completion(id);
        }

        if self.state.queue.is_empty() {
            let order: Vec<AppId> = self.running.iter().map(|&(_, id)| id).collect();
            for id in order {
                let dormant: Vec<(usize, ResourceVector)> = self
                    .state
                    .app(id)
                    .components
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.spec.kind == ComponentKind::Elastic && !c.is_running())
                    .map(|(pos, c)| (pos, c.spec.reservation))
                    .collect();
                let mut placed = false;
                for (pos, res) in dormant {
                    if let Some(h) = Self::first_fit(&free, &res) {
                        free[h] = free[h].map(|f| f.checked_sub(&res).expect("fits"));
                        self.place(id, pos, h).expect("forecaster config validated");
                        placed = true;
                    }
                }
                if placed {
                    self.refresh_completion(id);
                }
            }
        }
        self.sync_hosts();
    }

    fn release(&mut self, id: AppId, pos: usize, status: ComponentStatus) {
        let c = &mut self.state.app_mut(id).components[pos];
        c.status = status;
        c.host_id = None;
        c.allocated = ResourceVector::ZERO;
        c.used = ResourceVector::ZERO;
        c.incarnation_work = 0.0;
        let cid = c.spec.id;
        self.forecasters.remove(&cid);
    }

    /// Stops every component; the application restarts from zero work, or is
    /// abandoned once its crashes exceed the resubmission cap.
    fn fail_app(&mut self, id: AppId, why: Disruption) {
        let app = self.state.app(id);
        if app.status != AppStatus::Running {
            return;
        }
        let key = app.spec.priority_key;
        for pos in 0..app.components.len() {
            self.release(id, pos, ComponentStatus::Pending);
        }
        let cap = self.config.resubmission_cap;
        let app = self.state.app_mut(id);
        app.lost_work += app.accrued_work;
        app.accrued_work = 0.0;
        match why {
            Disruption::Crash => app.failure_count += 1,
            Disruption::Preempt => app.preemption_count += 1,
        }
        app.status = AppStatus::Failed;
        let abandon = app.failure_count > cap;
        self.running.remove(&(key, id));
        self.generation[id.0 as usize] += 1;
        if abandon {
            self.abandoned[id.0 as usize] = true;
            self.unfinished -= 1;
        } else {
            self.events.push(self.state.clock, EventKind::Resubmit, id);
        }
    }

    /// Partial preemption: the elastic component goes dormant and the
    /// application loses `λ` of the work it contributed since placement.
    fn drop_elastic(&mut self, id: AppId, pos: usize) {
        let lambda = self.config.elastic_loss_fraction;
        let app = self.state.app_mut(id);
        if app.status != AppStatus::Running || !app.components[pos].is_running() {
            return;
        }
        let loss = lambda * app.components[pos].incarnation_work;
        app.accrued_work = (app.accrued_work - loss).max(0.0);
        app.lost_work += loss;
        app.elastic_losses += 1;
        self.release(id, pos, ComponentStatus::Preempted);
        self.refresh_completion(id);
    }

    /// Memory overrun or overload victim: a core component takes the whole
    /// application down, an elastic one only itself.
    fn crash(&mut self, cid: ComponentId) {
        let (id, pos) = self.locate[&cid];
        match self.state.app(id).components[pos].spec.kind {
            ComponentKind::Core => self.fail_app(id, Disruption::Crash),
            ComponentKind::Elastic => self.drop_elastic(id, pos),
        }
    }

    fn monitor_tick(&mut self) -> Result<(), SimError> {
        let now = self.state.clock;
        let interval = self.config.monitor_interval;
        let shaping = self.shaping();
        let mut overruns = Vec::new();
        let order: Vec<AppId> = self.running.iter().map(|&(_, id)| id).collect();
        for &id in &order {
            for pos in 0..self.state.app(id).components.len() {
                let c = &self.state.app(id).components[pos];
                if !c.is_running() {
                    continue;
                }
                let cid = c.spec.id;
                let index = (now - c.start_time) / interval;
                let sample = self.series(cid).at(index);
                let c = &mut self.state.app_mut(id).components[pos];
                c.used = ResourceVector { cpus: sample.cpus.min(c.allocated.cpus), memory: sample.memory };
                if sample.memory > c.allocated.memory {
                    overruns.push(cid);
                } else if shaping {
                    let f = self.forecasters.get_mut(&cid).expect("running component has forecasters");
                    f[0].observe(index, sample.cpus)?;
                    f[1].observe(index, sample.memory)?;
                }
            }
        }
        let disrupted = !overruns.is_empty();
        for cid in overruns {
            self.crash(cid);
        }
        self.sync_hosts();
        let killed = self.overload_check();

        let mut total_alloc = ResourceVector::ZERO;
        let mut total_used = ResourceVector::ZERO;
        for &(_, id) in &self.running {
            let i = id.0 as usize;
            for c in self.state.apps[i].components.iter().filter(|c| c.is_running()) {
                total_alloc = total_alloc.add(&c.allocated);
                total_used = total_used.add(&c.used);
                self.app_alloc[i] = self.app_alloc[i].add(&c.allocated);
                self.app_used[i] = self.app_used[i].add(&c.used);
            }
        }
        self.ticks.push(TickSample { t: now, allocated: total_alloc, used: total_used });
        if disrupted || killed {
            self.schedule_pending();
        }
        Ok(())
    }

    /// Kills components on hosts whose summed memory usage exceeds capacity:
    /// largest overshoot over allocation first, then most recently started,
    /// then lowest id. Only the optimistic policy can oversubscribe.
    fn overload_check(&mut self) -> bool {
        let mut any = false;
        for h in 0..self.state.hosts.len() {
            loop {
                let capacity = self.state.hosts[h].capacity.memory;
                let mut victims: Vec<(f64, SimTime, ComponentId)> = Vec::new();
                let mut used = 0.0;
                for &(_, id) in &self.running {
                    for c in self.state.app(id).components.iter() {
                        if c.is_running() && c.host_id == Some(HostId(h as u32)) {
                            used += c.used.memory;
                            victims.push((c.used.memory - c.allocated.memory, c.start_time, c.spec.id));
                        }
                    }
                }
                if used <= capacity {
                    break;
                }
                let victim = victims
                    .into_iter()
                    .min_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)))
                    .expect("overloaded host has components");
                self.crash(victim.2);
                any = true;
            }
        }
        if any {
            self.sync_hosts();
        }
        any
    }

    fn shape_tick(&mut self) {
        let now = self.state.clock;
        let grace = self.config.effective_grace();
        let exempt_after = self.config.max_failures_before_exempt;
        let params = self.config.buffer;
        let mut demands = BTreeMap::new();
        for &(_, id) in &self.running {
            let app = &self.state.apps[id.0 as usize];
            let exempt = app.failure_count >= exempt_after;
            for c in app.components.iter().filter(|c| c.is_running()) {
                let res = c.spec.reservation;
                let demand = if exempt || now - c.start_time < grace {
                    res
                } else {
                    let f = self.forecasters.get_mut(&c.spec.id).expect("running component has forecasters");
                    let prediction = ResourcePrediction { cpus: f[0].predict(), memory: f[1].predict() };
                    shaped_demand(&res, &prediction, &params)
                };
                demands.insert(c.spec.id, demand);
            }
        }
        let plan = match self.config.policy {
            Policy::Pessimistic => {
                let order: Vec<AppId> = self.running.iter().map(|&(_, id)| id).collect();
                plan_pessimistic(&self.state, &demands, &order)
            }
            Policy::Optimistic => resolve_optimistic(&self.state, &demands),
            Policy::Baseline => ShapingPlan::default(),
        };
        self.apply_plan(plan);
        self.schedule_pending();
    }

    fn apply_plan(&mut self, plan: ShapingPlan) {
        for id in &plan.preempted_apps {
            self.fail_app(*id, Disruption::Preempt);
        }
        for cid in &plan.preempted_elastic {
            let (id, pos) = self.locate[cid];
            self.drop_elastic(id, pos);
        }
        for (cid, alloc) in plan.new_allocations {
            let (id, pos) = self.locate[&cid];
            let c = &mut self.state.app_mut(id).components[pos];
            if c.is_running() {
                c.allocated = alloc;
            }
        }
        self.sync_hosts();
    }

    fn into_report(self) -> SimulationReport {
        let apps = self
            .state
            .apps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let first_submission = a.first_submission.unwrap_or(a.spec.submission_time);
                AppRecord {
                    id: a.id(),
                    kind: a.spec.kind,
                    outcome: if self.abandoned[i] { AppOutcome::Failed } else { AppOutcome::Finished },
                    priority_key: a.spec.priority_key,
                    first_submission,
                    first_start: self.first_start[i],
                    completion: a.completion_time,
                    turnaround: a.completion_time.map(|c| c - first_submission),
                    total_work: a.spec.total_work,
                    lost_work: a.lost_work,
                    failure_count: a.failure_count,
                    preemption_count: a.preemption_count,
                    elastic_losses: a.elastic_losses,
                    ledger: a.ledger.clone(),
                    allocated_sum: self.app_alloc[i],
                    used_sum: self.app_used[i],
                }
            })
            .collect();
        SimulationReport::new(self.config.clone(), apps, self.ticks)
    }
}

#[cfg(test)]
mod tests;
