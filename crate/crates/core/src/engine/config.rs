use serde::{Deserialize, Serialize};

use crate::domain::{ResourceVector, SimTime, TICK_SECONDS};
use crate::forecast::ForecasterKind;
use crate::shaper::BufferParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Allocation fixed at the reservation; no shaping.
    Baseline,
    Optimistic,
    Pessimistic,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Baseline => "baseline",
            Policy::Optimistic => "optimistic",
            Policy::Pessimistic => "pessimistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub hosts: usize,
    pub capacity: ResourceVector,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { hosts: 20, capacity: ResourceVector { cpus: 32.0, memory: 131072.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub policy: Policy,
    pub forecaster: ForecasterKind,
    pub buffer: BufferParams,
    pub monitor_interval: SimTime,
    /// Components younger than this keep their reservation while their
    /// forecaster warms up. Not applied to the oracle, which needs no history.
    pub grace_period: SimTime,
    /// Crashes after which an application is no longer shaped.
    pub max_failures_before_exempt: u32,
    /// Fraction of an elastic component's work lost when it is preempted.
    pub elastic_loss_fraction: f64,
    /// Crashes tolerated before an application is abandoned.
    pub resubmission_cap: u32,
    pub cluster: ClusterConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            policy: Policy::Pessimistic,
            forecaster: ForecasterKind::default(),
            buffer: BufferParams::default(),
            monitor_interval: TICK_SECONDS,
            grace_period: 600,
            max_failures_before_exempt: 3,
            elastic_loss_fraction: 1.0,
            resubmission_cap: 10,
            cluster: ClusterConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn baseline() -> Self {
        SimConfig { policy: Policy::Baseline, ..SimConfig::default() }
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_forecaster(mut self, forecaster: ForecasterKind) -> Self {
        self.forecaster = forecaster;
        self
    }

    pub fn with_buffer(mut self, k1: f64, k2: f64) -> Self {
        self.buffer = BufferParams { k1, k2 };
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.monitor_interval == 0 {
            return Err("monitor_interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.elastic_loss_fraction) {
            return Err(format!("elastic_loss_fraction must lie in [0, 1], got {}", self.elastic_loss_fraction));
        }
        if self.cluster.hosts == 0 {
            return Err("cluster needs at least one host".into());
        }
        self.cluster.capacity.validate().map_err(|e| format!("host capacity: {e}"))?;
        self.buffer.validate()?;
        self.forecaster.validate()
    }

    /// Grace period actually applied to a fresh component.
    pub fn effective_grace(&self) -> SimTime {
        if self.forecaster.needs_history() {
            self.grace_period
        } else {
            0
        }
    }
}
