//! Synthetic workload generation and trace files.
//!
//! A workload is a list of applications with arrival times, component
//! reservations and a pre-generated ground-truth usage series for every
//! component. The simulator only replays these series, so a trace plus a
//! simulation config fully determines a run.

mod trace_io;
mod usage;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AppId, AppKind, ApplicationSpec, ComponentId, ComponentKind, ComponentSpec, ResourceVector, SimTime, TICK_SECONDS,
};

pub use trace_io::{load_trace, write_trace, TraceIoError};
pub use usage::{synth_usage, PatternKind, UsagePattern, UsageSeries, MIN_USAGE_FRACTION};

/// Largest per-component cpu reservation a workload may request.
pub const MAX_COMPONENT_CPUS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InterArrival {
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    /// Mixture of fast-paced bursts and longer gaps between submissions.
    Bimodal {
        burst_mu: f64,
        burst_sigma: f64,
        gap_mu: f64,
        gap_sigma: f64,
        burst_prob: f64,
    },
}

impl InterArrival {
    pub fn mean(&self) -> f64 {
        match *self {
            InterArrival::Gaussian { mu, .. } => mu,
            InterArrival::Bimodal { burst_mu, gap_mu, burst_prob, .. } => {
                burst_prob * burst_mu + (1.0 - burst_prob) * gap_mu
            }
        }
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let ok = match *self {
            InterArrival::Gaussian { mu, sigma } => mu > 0.0 && sigma > 0.0,
            InterArrival::Bimodal { burst_mu, burst_sigma, gap_mu, gap_sigma, burst_prob } => {
                burst_mu > 0.0
                    && burst_sigma > 0.0
                    && gap_mu > 0.0
                    && gap_sigma > 0.0
                    && (0.0..=1.0).contains(&burst_prob)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::InvalidConfig(format!("inter-arrival parameters must be positive: {self:?}")))
        }
    }

    /// One gap in seconds, at least one second.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let draw = |mu: f64, sigma: f64, rng: &mut R| Normal::new(mu, sigma).unwrap().sample(rng);
        let x = match *self {
            InterArrival::Gaussian { mu, sigma } => draw(mu, sigma, rng),
            InterArrival::Bimodal { burst_mu, burst_sigma, gap_mu, gap_sigma, burst_prob } => {
                if rng.random_bool(burst_prob) {
                    draw(burst_mu, burst_sigma, rng)
                } else {
                    draw(gap_mu, gap_sigma, rng)
                }
            }
        };
        x.max(1.0)
    }
}

/// Inclusive integer range, sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
}

impl IntRange {
    pub fn new(min: u32, max: u32) -> Self {
        IntRange { min, max }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.min..=self.max)
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

/// Log-normal runtime clipped to `[min_s, max_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeDist {
    pub median_s: f64,
    pub sigma: f64,
    pub min_s: u64,
    pub max_s: u64,
}

impl RuntimeDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        let x = LogNormal::new(self.median_s.ln(), self.sigma).unwrap().sample(rng);
        (x.round() as u64).clamp(self.min_s, self.max_s)
    }
}

/// Relative weights of the usage patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageMix {
    pub constant: f64,
    pub ramp: f64,
    pub periodic: f64,
    pub spiky: f64,
}

impl Default for UsageMix {
    fn default() -> Self {
        UsageMix { constant: 1.0, ramp: 1.0, periodic: 1.0, spiky: 1.0 }
    }
}

impl UsageMix {
    pub fn only(kind: PatternKind) -> Self {
        let mut mix = UsageMix { constant: 0.0, ramp: 0.0, periodic: 0.0, spiky: 0.0 };
        *mix.weight_mut(kind) = 1.0;
        mix
    }

    fn weight_mut(&mut self, kind: PatternKind) -> &mut f64 {
        match kind {
            PatternKind::Constant => &mut self.constant,
            PatternKind::Ramp => &mut self.ramp,
            PatternKind::Periodic => &mut self.periodic,
            PatternKind::Spiky => &mut self.spiky,
        }
    }

    fn weights(&self) -> [(PatternKind, f64); 4] {
        [
            (PatternKind::Constant, self.constant),
            (PatternKind::Ramp, self.ramp),
            (PatternKind::Periodic, self.periodic),
            (PatternKind::Spiky, self.spiky),
        ]
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PatternKind {
        let total: f64 = self.weights().iter().map(|(_, w)| w).sum();
        let mut u = rng.random_range(0.0..total);
        for (kind, w) in self.weights() {
            if u < w {
                return kind;
            }
            u -= w;
        }
        // Rounding fallthrough: last positive weight.
        self.weights().iter().rev().find(|(_, w)| *w > 0.0).map(|(k, _)| *k).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub n_applications: u32,
    pub elastic_fraction: f64,
    pub inter_arrival: InterArrival,
    /// Core components per application.
    pub core_components: IntRange,
    /// Elastic components per elastic application.
    pub elastic_components: IntRange,
    pub reservation_cpus: IntRange,
    pub reservation_memory_mb: IntRange,
    pub runtime: RuntimeDist,
    pub usage_mix: UsageMix,
    pub rng_seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig::desk()
    }
}

impl WorkloadConfig {
    /// Desk-scale workload sized for a 20-host cluster: 1000 applications with
    /// runtimes between 10 minutes and 4 hours, arriving faster than a
    /// reservation-based cluster can drain them.
    pub fn desk() -> Self {
        WorkloadConfig {
            n_applications: 1000,
            elastic_fraction: 0.6,
            inter_arrival: InterArrival::Bimodal {
                burst_mu: 14.0,
                burst_sigma: 7.0,
                gap_mu: 112.0,
                gap_sigma: 35.0,
                burst_prob: 0.5,
            },
            core_components: IntRange::new(1, 3),
            elastic_components: IntRange::new(2, 6),
            reservation_cpus: IntRange::new(1, MAX_COMPONENT_CPUS),
            reservation_memory_mb: IntRange::new(2048, 32768),
            runtime: RuntimeDist { median_s: 3000.0, sigma: 0.8, min_s: 600, max_s: 4 * 3600 },
            usage_mix: UsageMix::default(),
            rng_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: &str| Err(WorkloadError::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.elastic_fraction) {
            return bad("elastic_fraction must lie in [0, 1]");
        }
        self.inter_arrival.validate()?;
        for (name, r) in [
            ("core_components", self.core_components),
            ("elastic_components", self.elastic_components),
            ("reservation_cpus", self.reservation_cpus),
            ("reservation_memory_mb", self.reservation_memory_mb),
        ] {
            if r.min == 0 || r.min > r.max {
                return bad(&format!("{name} needs 0 < min <= max"));
            }
        }
        if self.reservation_cpus.max > MAX_COMPONENT_CPUS {
            return bad("reservation_cpus.max exceeds 6 cores");
        }
        let rt = &self.runtime;
        if !(rt.median_s > 0.0 && rt.sigma > 0.0) || rt.min_s == 0 || rt.min_s > rt.max_s {
            return bad("runtime needs positive median and sigma and 0 < min_s <= max_s");
        }
        let weights = self.usage_mix.weights();
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) || weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0
        {
            return bad("usage_mix weights must be non-negative with a positive sum");
        }
        Ok(())
    }
}

/// The complete input of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub config: WorkloadConfig,
    pub applications: Vec<ApplicationSpec>,
    pub usage: BTreeMap<ComponentId, UsageSeries>,
}

impl WorkloadTrace {
    pub fn empty(config: WorkloadConfig) -> Self {
        WorkloadTrace { config, applications: Vec::new(), usage: BTreeMap::new() }
    }

    pub fn series(&self, id: ComponentId) -> &UsageSeries {
        &self.usage[&id]
    }

    /// Checks ids, component kinds, series presence and the usage bound.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for (i, app) in self.applications.iter().enumerate() {
            if app.id.0 as usize != i {
                return Err(format!("application {} stored at position {i}", app.id.0));
            }
            app.validate().map_err(|e| e.to_string())?;
            for c in app.components() {
                let series = self.usage.get(&c.id).ok_or_else(|| format!("{} has no usage series", c.id))?;
                if series.is_empty() {
                    return Err(format!("{} has an empty usage series", c.id));
                }
                for s in &series.samples {
                    if !(s.cpus > 0.0 && s.memory > 0.0)
                        || s.cpus > c.reservation.cpus
                        || s.memory > c.reservation.memory
                    {
                        return Err(format!("{} usage sample outside (0, reservation]", c.id));
                    }
                }
                seen += 1;
            }
        }
        if seen != self.usage.len() {
            return Err("usage series without a matching component".into());
        }
        Ok(())
    }
}

/// Generates a reproducible trace from `config`.
pub fn generate(config: &WorkloadConfig) -> Result<WorkloadTrace, WorkloadError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut applications = Vec::with_capacity(config.n_applications as usize);
    let mut usage = BTreeMap::new();
    let mut clock = 0.0f64;
    let mut last_arrival: Option<SimTime> = None;
    let mut next_component = 0u32;

    for i in 0..config.n_applications {
        clock += config.inter_arrival.sample(&mut rng);
        let mut arrival = clock.round() as SimTime;
        if let Some(prev) = last_arrival {
            arrival = arrival.max(prev + 1);
        }
        last_arrival = Some(arrival);

        let id = AppId(i);
        let kind = if rng.random_bool(config.elastic_fraction) { AppKind::Elastic } else { AppKind::Rigid };
        let n_core = config.core_components.sample(&mut rng);
        let n_elastic = match kind {
            AppKind::Elastic => config.elastic_components.sample(&mut rng),
            AppKind::Rigid => 0,
        };
        let runtime = config.runtime.sample(&mut rng);
        let ticks = runtime.div_ceil(TICK_SECONDS) as usize + 1;

        let mut core_components = Vec::new();
        let mut elastic_components = Vec::new();
        for j in 0..n_core + n_elastic {
            let ckind = if j < n_core { ComponentKind::Core } else { ComponentKind::Elastic };
            let reservation = ResourceVector {
                cpus: config.reservation_cpus.sample(&mut rng) as f64,
                memory: config.reservation_memory_mb.sample(&mut rng) as f64,
            };
            let spec = ComponentSpec { id: ComponentId(next_component), application_id: id, kind: ckind, reservation };
            next_component += 1;
            let pattern_kind = config.usage_mix.sample(&mut rng);
            let mut series_rng = component_rng(config.rng_seed, spec.id);
            let pattern = UsagePattern::sample(pattern_kind, &mut series_rng);
            let series = synth_usage(&spec, &pattern, ticks, &mut series_rng);
            usage.insert(spec.id, series);
            match ckind {
                ComponentKind::Core => core_components.push(spec),
                ComponentKind::Elastic => elastic_components.push(spec),
            }
        }

        applications.push(ApplicationSpec {
            id,
            kind,
            runtime,
            total_work: (runtime * u64::from(n_core + n_elastic)) as f64,
            submission_time: arrival,
            priority_key: arrival,
            core_components,
            elastic_components,
        });
    }

    Ok(WorkloadTrace { config: config.clone(), applications, usage })
}

/// Independent stream per component so a series depends only on (seed, component id).
fn component_rng(seed: u64, id: ComponentId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(id.0) + 1);
    rng
}
