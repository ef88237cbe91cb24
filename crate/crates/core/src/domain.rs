//! Core data model: resources, hosts, applications, components and the
//! mutable cluster state the engine drives.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in whole seconds.
pub type SimTime = u64;

/// Monitoring resolution: one usage sample per minute.
pub const TICK_SECONDS: SimTime = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "app-{}", self.0)
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cpt-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Cpus,
    Memory,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Cpus => f.write_str("cpus"),
            Dimension::Memory => f.write_str("memory"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResourceError {
    #[error("resource value {value} for {dim} is negative or not finite")]
    Invalid { dim: Dimension, value: f64 },
    #[error("subtraction underflows in {dim}: {available} available, {requested} requested")]
    Underflow { dim: Dimension, available: f64, requested: f64 },
}

/// A (cpus, memory) pair. Cpus are fractional cores, memory is in MB.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpus: f64,
    pub memory: f64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpus: 0.0, memory: 0.0 };

    pub fn new(cpus: f64, memory: f64) -> Result<Self, ResourceError> {
        let rv = ResourceVector { cpus, memory };
        rv.validate()?;
        Ok(rv)
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        for (dim, value) in self.dims() {
            if !value.is_finite() || value < 0.0 {
                return Err(ResourceError::Invalid { dim, value });
            }
        }
        Ok(())
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Cpus => self.cpus,
            Dimension::Memory => self.memory,
        }
    }

    pub fn dims(&self) -> [(Dimension, f64); 2] {
        [(Dimension::Cpus, self.cpus), (Dimension::Memory, self.memory)]
    }

    pub fn from_fn(mut f: impl FnMut(Dimension) -> f64) -> Self {
        ResourceVector { cpus: f(Dimension::Cpus), memory: f(Dimension::Memory) }
    }

    /// True iff `self` fits in `free` in both dimensions.
    pub fn fits(&self, free: &ResourceVector) -> bool {
        self.cpus <= free.cpus && self.memory <= free.memory
    }

    /// Component-wise `self - other`; fails on the first dimension that would go negative.
    pub fn checked_sub(&self, other: &ResourceVector) -> Result<ResourceVector, ResourceError> {
        let out = ResourceVector { cpus: self.cpus - other.cpus, memory: self.memory - other.memory };
        for (dim, value) in out.dims() {
            if value < 0.0 {
                return Err(ResourceError::Underflow { dim, available: self.get(dim), requested: other.get(dim) });
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector { cpus: self.cpus + other.cpus, memory: self.memory + other.memory }
    }

    pub fn scale(&self, factor: f64) -> ResourceVector {
        ResourceVector { cpus: self.cpus * factor, memory: self.memory * factor }
    }

    pub fn all_positive(&self) -> bool {
        self.cpus > 0.0 && self.memory > 0.0
    }
}

/// Free-standing form of [`ResourceVector::fits`].
pub fn rv_fits(request: &ResourceVector, free: &ResourceVector) -> bool {
    request.fits(free)
}

/// Free-standing form of [`ResourceVector::checked_sub`].
pub fn rv_sub_checked(a: &ResourceVector, b: &ResourceVector) -> Result<ResourceVector, ResourceError> {
    a.checked_sub(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub id: HostId,
    pub capacity: ResourceVector,
    pub allocated: ResourceVector,
    pub used: ResourceVector,
}

impl Host {
    pub fn new(id: HostId, capacity: ResourceVector) -> Self {
        Host { id, capacity, allocated: ResourceVector::ZERO, used: ResourceVector::ZERO }
    }

    /// Unallocated headroom, or `None` when the host is oversubscribed.
    pub fn free(&self) -> Option<ResourceVector> {
        self.capacity.checked_sub(&self.allocated).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Core,
    Elastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppKind {
    Rigid,
    Elastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: ComponentId,
    pub application_id: AppId,
    pub kind: ComponentKind,
    pub reservation: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub id: AppId,
    pub kind: AppKind,
    pub core_components: Vec<ComponentSpec>,
    pub elastic_components: Vec<ComponentSpec>,
    /// Sampled nominal runtime in seconds with every component running.
    pub runtime: SimTime,
    pub total_work: f64,
    pub submission_time: SimTime,
    /// Original submission time; resubmissions keep it.
    pub priority_key: SimTime,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{0} has no core component")]
    NoCore(AppId),
    #[error("{0} is rigid but declares elastic components")]
    RigidWithElastic(AppId),
    #[error("{0} has non-positive total work")]
    NoWork(AppId),
    #[error("{0} has a non-positive reservation")]
    EmptyReservation(ComponentId),
    #[error("{0} is listed under the wrong kind or application")]
    Mislabelled(ComponentId),
}

impl ApplicationSpec {
    pub fn components(&self) -> impl Iterator<Item = &ComponentSpec> {
        self.core_components.iter().chain(self.elastic_components.iter())
    }

    pub fn component_count(&self) -> usize {
        self.core_components.len() + self.elastic_components.len()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.core_components.is_empty() {
            return Err(SpecError::NoCore(self.id));
        }
        if self.kind == AppKind::Rigid && !self.elastic_components.is_empty() {
            return Err(SpecError::RigidWithElastic(self.id));
        }
        if self.total_work.is_nan() || self.total_work <= 0.0 {
            return Err(SpecError::NoWork(self.id));
        }
        for c in &self.core_components {
            if c.kind != ComponentKind::Core || c.application_id != self.id {
                return Err(SpecError::Mislabelled(c.id));
            }
        }
        for c in &self.elastic_components {
            if c.kind != ComponentKind::Elastic || c.application_id != self.id {
                return Err(SpecError::Mislabelled(c.id));
            }
        }
        for c in self.components() {
            if !c.reservation.all_positive() || c.reservation.validate().is_err() {
                return Err(SpecError::EmptyReservation(c.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentStatus {
    /// Never placed, or dormant after an elastic preemption.
    Pending,
    Running,
    Preempted,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentState {
    pub spec: ComponentSpec,
    pub host_id: Option<HostId>,
    pub start_time: SimTime,
    pub allocated: ResourceVector,
    pub used: ResourceVector,
    pub status: ComponentStatus,
    /// Work contributed since the current placement.
    pub incarnation_work: f64,
}

impl ComponentState {
    pub fn new(spec: ComponentSpec) -> Self {
        ComponentState {
            spec,
            host_id: None,
            start_time: 0,
            allocated: ResourceVector::ZERO,
            used: ResourceVector::ZERO,
            status: ComponentStatus::Pending,
            incarnation_work: 0.0,
        }
    }

    pub fn is_running(&self) -> bool {
        self.status == ComponentStatus::Running
    }

    pub fn time_alive(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.start_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppStatus {
    /// Not yet submitted.
    Waiting,
    Queued,
    Running,
    Finished,
    /// Awaiting resubmission, or permanently failed once resubmissions run out.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationState {
    pub spec: ApplicationSpec,
    pub status: AppStatus,
    pub accrued_work: f64,
    /// Work credited to each component over the whole run, core first then elastic.
    pub ledger: Vec<f64>,
    pub lost_work: f64,
    pub failure_count: u32,
    pub preemption_count: u32,
    pub elastic_losses: u32,
    pub first_submission: Option<SimTime>,
    pub completion_time: Option<SimTime>,
    /// Core components first, then elastic, in declaration order.
    pub components: Vec<ComponentState>,
}

impl ApplicationState {
    pub fn new(spec: ApplicationSpec) -> Self {
        let components: Vec<_> = spec.components().cloned().map(ComponentState::new).collect();
        ApplicationState {
            ledger: vec![0.0; components.len()],
            components,
            spec,
            status: AppStatus::Waiting,
            accrued_work: 0.0,
            lost_work: 0.0,
            failure_count: 0,
            preemption_count: 0,
            elastic_losses: 0,
            first_submission: None,
            completion_time: None,
        }
    }

    pub fn id(&self) -> AppId {
        self.spec.id
    }

    pub fn running_components(&self) -> usize {
        self.components.iter().filter(|c| c.is_running()).count()
    }

    pub fn core_count(&self) -> usize {
        self.spec.core_components.len()
    }
}

/// Whole-cluster state. `apps` is indexed by `AppId`.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub clock: SimTime,
    pub hosts: Vec<Host>,
    pub apps: Vec<ApplicationState>,
    /// FIFO queue keyed by (priority_key, id).
    pub queue: BTreeSet<(SimTime, AppId)>,
}

impl ClusterState {
    pub fn new(hosts: Vec<Host>, apps: Vec<ApplicationState>) -> Self {
        ClusterState { clock: 0, hosts, apps, queue: BTreeSet::new() }
    }

    pub fn app(&self, id: AppId) -> &ApplicationState {
        &self.apps[id.0 as usize]
    }

    pub fn app_mut(&mut self, id: AppId) -> &mut ApplicationState {
        &mut self.apps[id.0 as usize]
    }

    /// Running applications in scheduling (FIFO) order.
    pub fn running_in_fifo_order(&self) -> Vec<AppId> {
        let mut ids: Vec<_> = self
            .apps
            .iter()
            .filter(|a| a.status == AppStatus::Running)
            .map(|a| (a.spec.priority_key, a.id()))
            .collect();
        ids.sort_unstable();
        ids.into_iter().map(|(_, id)| id).collect()
    }

    /// Per-host sum of component allocations, recomputed from scratch.
    pub fn recomputed_allocations(&self) -> Vec<ResourceVector> {
        let mut sums = vec![ResourceVector::ZERO; self.hosts.len()];
        for c in self.apps.iter().flat_map(|a| a.components.iter()) {
            if let (true, Some(h)) = (c.is_running(), c.host_id) {
                sums[h.0 as usize] = sums[h.0 as usize].add(&c.allocated);
            }
        }
        sums
    }

    /// Checks that every host's `allocated` equals the sum over its components.
    pub fn reconcile(&self, tolerance: f64) -> Result<(), String> {
        for (host, sum) in self.hosts.iter().zip(self.recomputed_allocations()) {
            for dim in [Dimension::Cpus, Dimension::Memory] {
                let (a, b) = (host.allocated.get(dim), sum.get(dim));
                if (a - b).abs() > tolerance * (1.0 + b.abs()) {
                    return Err(format!("host {} {dim}: tracked {a}, recomputed {b}", host.id.0));
                }
            }
        }
        Ok(())
    }
}
