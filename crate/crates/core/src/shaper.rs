//! Resource shaping: safe-guard buffer, shaped demand, and the two
//! preemption policies that turn demands into a cluster-wide plan.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{AppId, ClusterState, ComponentId, ComponentKind, ResourceVector};
use crate::forecast::PredictiveDistribution;

/// Static (`k1`, fraction of the reservation) and dynamic (`k2`, multiples
/// of the predictive standard deviation) parts of the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferParams {
    pub k1: f64,
    pub k2: f64,
}

impl Default for BufferParams {
    fn default() -> Self {
        BufferParams { k1: 0.05, k2: 3.0 }
    }
}

impl BufferParams {
    pub fn new(k1: f64, k2: f64) -> Result<Self, String> {
        let p = BufferParams { k1, k2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.k1) {
            return Err(format!("k1 must lie in [0, 1], got {}", self.k1));
        }
        if !self.k2.is_finite() || self.k2 < 0.0 {
            return Err(format!("k2 must be non-negative, got {}", self.k2));
        }
        Ok(())
    }
}

/// Per-dimension one-step forecast for a component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourcePrediction {
    pub cpus: PredictiveDistribution,
    pub memory: PredictiveDistribution,
}

impl ResourcePrediction {
    pub fn exact(usage: ResourceVector) -> Self {
        ResourcePrediction {
            cpus: PredictiveDistribution::exact(usage.cpus),
            memory: PredictiveDistribution::exact(usage.memory),
        }
    }

    fn get(&self, dim: crate::domain::Dimension) -> &PredictiveDistribution {
        match dim {
            crate::domain::Dimension::Cpus => &self.cpus,
            crate::domain::Dimension::Memory => &self.memory,
        }
    }
}

/// β = k1·R + k2·σ, computed independently for cpus and memory.
pub fn compute_buffer(
    reservation: &ResourceVector,
    prediction: &ResourcePrediction,
    params: &BufferParams,
) -> ResourceVector {
    ResourceVector::from_fn(|dim| params.k1 * reservation.get(dim) + params.k2 * prediction.get(dim).std_dev())
}

/// Predicted usage plus buffer, clamped to `[k1·R, R]` per dimension.
pub fn shaped_demand(
    reservation: &ResourceVector,
    prediction: &ResourcePrediction,
    params: &BufferParams,
) -> ResourceVector {
    let beta = compute_buffer(reservation, prediction, params);
    ResourceVector::from_fn(|dim| {
        let r = reservation.get(dim);
        (prediction.get(dim).mean + beta.get(dim)).min(r).max(params.k1 * r)
    })
}

/// New allocations for surviving components plus the preemption sets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapingPlan {
    pub new_allocations: BTreeMap<ComponentId, ResourceVector>,
    /// Applications losing every component.
    pub preempted_apps: BTreeSet<AppId>,
    /// Individually preempted elastic components.
    pub preempted_elastic: BTreeSet<ComponentId>,
}

impl ShapingPlan {
    pub fn is_empty_preemption(&self) -> bool {
        self.preempted_apps.is_empty() && self.preempted_elastic.is_empty()
    }
}

fn demand_of(
    demands: &BTreeMap<ComponentId, ResourceVector>,
    id: ComponentId,
    fallback: ResourceVector,
) -> ResourceVector {
    demands.get(&id).copied().unwrap_or(fallback)
}

/// Strict (pessimistic) policy: never allocates beyond host capacity.
///
/// Applications are visited in `order`. Each application's core components
/// are tentatively subtracted from per-host working copies of the free
/// capacity; if any core component does not fit, the whole application is
/// preempted and the working copies are discarded. Otherwise the copies are
/// committed and elastic components are placed oldest first (ties: lower
/// id), each one that does not fit being preempted individually.
///
/// Components without an entry in `demands` keep their current allocation.
pub fn plan_pessimistic(
    state: &ClusterState,
    demands: &BTreeMap<ComponentId, ResourceVector>,
    order: &[AppId],
) -> ShapingPlan {
    let mut free: Vec<ResourceVector> = state.hosts.iter().map(|h| h.capacity).collect();
    let mut plan = ShapingPlan::default();
    let now = state.clock;

    for &app_id in order {
        let app = state.app(app_id);
        let mut working = free.clone();
        let mut fits = true;
        for c in app.components.iter().filter(|c| c.is_running() && c.spec.kind == ComponentKind::Core) {
            let host = c.host_id.expect("running component is placed").0 as usize;
            let demand = demand_of(demands, c.spec.id, c.allocated);
            match working[host].checked_sub(&demand) {
                Ok(rest) => working[host] = rest,
                Err(_) => {
                    fits = false;
                    break;
                }
            }
        }
        if !fits {
            plan.preempted_apps.insert(app_id);
            continue;
        }
        free = working;
        for c in app.components.iter().filter(|c| c.is_running() && c.spec.kind == ComponentKind::Core) {
            plan.new_allocations.insert(c.spec.id, demand_of(demands, c.spec.id, c.allocated));
        }

        let mut elastic: Vec<_> =
            app.components.iter().filter(|c| c.is_running() && c.spec.kind == ComponentKind::Elastic).collect();
        elastic.sort_by_key(|c| (std::cmp::Reverse(c.time_alive(now)), c.spec.id));
        for e in elastic {
            let host = e.host_id.expect("running component is placed").0 as usize;
            let demand = demand_of(demands, e.spec.id, e.allocated);
            match free[host].checked_sub(&demand) {
                Ok(rest) => {
                    free[host] = rest;
                    plan.new_allocations.insert(e.spec.id, demand);
                }
                Err(_) => {
                    plan.preempted_elastic.insert(e.spec.id);
                }
            }
        }
    }
    plan
}

/// Optimistic policy: every running component gets its demand, whether or
/// not the host can hold it. Overload is left to the engine's kill handler.
pub fn resolve_optimistic(state: &ClusterState, demands: &BTreeMap<ComponentId, ResourceVector>) -> ShapingPlan {
    let mut plan = ShapingPlan::default();
    for app in state.apps.iter() {
        for c in app.components.iter().filter(|c| c.is_running()) {
            plan.new_allocations.insert(c.spec.id, demand_of(demands, c.spec.id, c.allocated));
        }
    }
    plan
}

/// Per-host sums of the plan's allocations.
pub fn planned_host_totals(state: &ClusterState, plan: &ShapingPlan) -> Vec<ResourceVector> {
    let mut totals = vec![ResourceVector::ZERO; state.hosts.len()];
    for app in &state.apps {
        for c in &app.components {
            if let (Some(alloc), Some(h)) = (plan.new_allocations.get(&c.spec.id), c.host_id) {
                totals[h.0 as usize] = totals[h.0 as usize].add(alloc);
            }
        }
    }
    totals
}
