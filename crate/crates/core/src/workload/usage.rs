use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{ComponentId, ComponentSpec, ResourceVector};

/// Smallest usage fraction a sample may take; usage is strictly positive.
pub const MIN_USAGE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Constant,
    Ramp,
    Periodic,
    Spiky,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] =
        [PatternKind::Constant, PatternKind::Ramp, PatternKind::Periodic, PatternKind::Spiky];
}

/// Usage shape as fractions of the reservation.
#[derive(Debug, Clone, PartialEq)]
pub enum UsagePattern {
    Constant {
        level: f64,
    },
    Ramp {
        start: f64,
        end: f64,
        jitter: f64,
    },
    Periodic {
        base: f64,
        amplitude: f64,
        period_ticks: f64,
        phase: f64,
    },
    /// Low noisy plateau with short bursts close to the full reservation.
    Spiky {
        base: f64,
        jitter: f64,
        spike_prob: f64,
        spike_level: f64,
        max_spike_ticks: u32,
    },
}

impl UsagePattern {
    pub fn kind(&self) -> PatternKind {
        match self {
            UsagePattern::Constant { .. } => PatternKind::Constant,
            UsagePattern::Ramp { .. } => PatternKind::Ramp,
            UsagePattern::Periodic { .. } => PatternKind::Periodic,
            UsagePattern::Spiky { .. } => PatternKind::Spiky,
        }
    }

    /// Draws pattern parameters for `kind`. Typical means sit between 30% and 45% of the reservation.
    pub fn sample<R: Rng + ?Sized>(kind: PatternKind, rng: &mut R) -> UsagePattern {
        match kind {
            PatternKind::Constant => UsagePattern::Constant { level: rng.random_range(0.2..0.6) },
            PatternKind::Ramp => {
                UsagePattern::Ramp { start: rng.random_range(0.1..0.3), end: rng.random_range(0.4..0.8), jitter: 0.02 }
            }
            PatternKind::Periodic => {
                let amplitude = rng.random_range(0.1..0.3);
                UsagePattern::Periodic {
                    base: rng.random_range(0.3..0.5),
                    amplitude,
                    period_ticks: rng.random_range(10.0..60.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            }
            PatternKind::Spiky => UsagePattern::Spiky {
                base: rng.random_range(0.15..0.35),
                jitter: 0.04,
                spike_prob: 0.04,
                spike_level: rng.random_range(0.9..1.0),
                max_spike_ticks: 4,
            },
        }
    }

    /// Normalized profile of `ticks` samples in [MIN_USAGE_FRACTION, 1].
    pub fn profile<R: Rng + ?Sized>(&self, ticks: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(ticks);
        match *self {
            UsagePattern::Constant { level } => out.resize(ticks, level),
            UsagePattern::Ramp { start, end, jitter } => {
                let noise = normal(jitter);
                let denom = (ticks.max(2) - 1) as f64;
                for i in 0..ticks {
                    let base = start + (end - start) * i as f64 / denom;
                    out.push(base + noise.sample(rng));
                }
            }
            UsagePattern::Periodic { base, amplitude, period_ticks, phase } => {
                for i in 0..ticks {
                    let angle = 2.0 * PI * i as f64 / period_ticks + phase;
                    out.push(base + amplitude * angle.sin());
                }
            }
            UsagePattern::Spiky { base, jitter, spike_prob, spike_level, max_spike_ticks } => {
                let noise = normal(jitter);
                let mut spike_left = 0u32;
                let mut spiked = false;
                for _ in 0..ticks {
                    if spike_left == 0 && rng.random_bool(spike_prob) {
                        spike_left = rng.random_range(1..=max_spike_ticks.max(1));
                    }
                    if spike_left > 0 {
                        spike_left -= 1;
                        spiked = true;
                        out.push(spike_level);
                    } else {
                        out.push(base + noise.sample(rng));
                    }
                }
                // Reservations are sized for the peak, so every spiky series peaks at least once.
                if !spiked && ticks > 0 {
                    let at = rng.random_range(0..ticks);
                    out[at] = spike_level;
                }
            }
        }
        for v in &mut out {
            *v = v.clamp(MIN_USAGE_FRACTION, 1.0);
        }
        out
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite sigma")
}

/// Ground-truth usage of one component, one sample per monitoring tick.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageSeries {
    pub component_id: ComponentId,
    pub pattern: PatternKind,
    pub samples: Vec<ResourceVector>,
}

impl UsageSeries {
    /// Sample at local tick `index`, holding the last sample once the series is exhausted.
    pub fn at(&self, index: u64) -> ResourceVector {
        let last = self.samples.len() - 1;
        self.samples[(index as usize).min(last)]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn memory(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.memory).collect()
    }

    pub fn cpus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.cpus).collect()
    }
}

/// Generates a usage series for `spec`; cpu and memory follow the same pattern with independent noise.
pub fn synth_usage<R: Rng + ?Sized>(
    spec: &ComponentSpec,
    pattern: &UsagePattern,
    ticks: usize,
    rng: &mut R,
) -> UsageSeries {
    let ticks = ticks.max(1);
    let cpu = pattern.profile(ticks, rng);
    let mem = pattern.profile(ticks, rng);
    let samples = cpu
        .into_iter()
        .zip(mem)
        .map(|(c, m)| ResourceVector { cpus: spec.reservation.cpus * c, memory: spec.reservation.memory * m })
        .collect();
    UsageSeries { component_id: spec.id, pattern: pattern.kind(), samples }
}
