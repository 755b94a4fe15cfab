//! Streaming anomaly detection on boundary-data increments.
//!
//! Each coarse exchange produces a per-variable increment Δy. Three schemes
//! turn the increment stream into outlier verdicts:
//!
//! - `StaticNormal`: μ + 3σ over the observed population. The offline form
//!   ([`static_threshold`]) uses the whole sequence; the in-loop form keeps
//!   expanding statistics over everything seen so far, which is the causal
//!   realization of the same rule.
//! - `MovingWindow`: μ + 3σ over a sliding window (capacity one second of
//!   coarse samples). The window absorbs the new increment first, then the
//!   verdict is taken against the refreshed threshold.
//! - `EwmaRtta`: recursive μ/σ estimates whose smoothing factor shrinks with
//!   data variability; the verdict is taken against the pre-update threshold
//!   so a spike cannot raise the bar it is judged by.
//!
//! Cold start suppresses verdicts for the first ten samples: with μ = σ = 0
//! the very first nonzero increment would otherwise always fire. Event-driven
//! buffer resets never touch detector state; the threshold keeps adapting
//! through the event.

use std::collections::VecDeque;
use std::error::Error;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Verdicts are suppressed for this many samples after cold start.
pub const WARMUP_SAMPLES: u32 = 10;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Threshold scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StaticNormal,
    MovingWindow,
    EwmaRtta,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::StaticNormal => "static_normal",
            Scheme::MovingWindow => "moving_window",
            Scheme::EwmaRtta => "ewma_rtta",
        };
        f.write_str(s)
    }
}

/// Outcome of one detector update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyVerdict {
    pub is_outlier: bool,
    /// The increment that was tested.
    pub delta: f64,
    /// The threshold it was tested against.
    pub threshold: f64,
}

/// Adaptive threshold state for one scalar increment stream.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    pub scheme: Scheme,
    /// Running mean of Δy (scheme-specific estimate).
    pub mu: f64,
    /// Running variance of Δy, never negative.
    pub sigma2: f64,
    /// Current threshold, μ + 3σ after every update.
    pub th: f64,
    /// Recent increments, MovingWindow only.
    pub window: VecDeque<f64>,
    pub window_capacity: usize,
    /// Upper bound on the EWMA smoothing factor.
    pub alpha_cap: f64,
    /// Deviation scale in the smoothing-factor denominator.
    pub c: f64,
    /// Division guard for the zero-variance cold state.
    pub epsilon: f64,
    pub warmup_remaining: u32,
    // Expanding-population accumulators for the causal StaticNormal form.
    count: u64,
    sum: f64,
    sum_sq: f64,
}

/// Errors from aggregate operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyError {
    /// An aggregate was requested over an empty sequence.
    InsufficientData,
}

impl fmt::Display for AnomalyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyError::InsufficientData => {
                write!(f, "operation requires a non-empty sequence")
            }
        }
    }
}

impl Error for AnomalyError {}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

impl ThresholdState {
    /// Cold-start state: μ = σ² = 0, warm-up pending.
    pub fn new(scheme: Scheme, window_capacity: usize) -> Self {
        ThresholdState {
            scheme,
            mu: 0.0,
            sigma2: 0.0,
            th: 0.0,
            window: VecDeque::with_capacity(window_capacity.max(1)),
            window_capacity: window_capacity.max(1),
            alpha_cap: 0.01,
            c: 3.0,
            epsilon: 1e-6,
            warmup_remaining: WARMUP_SAMPLES,
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    /// Feeds one increment through the configured scheme.
    pub fn update(&mut self, delta: f64) -> AnomalyVerdict {
        match self.scheme {
            Scheme::StaticNormal => self.static_update(delta),
            Scheme::MovingWindow => self.window_update(delta),
            Scheme::EwmaRtta => self.ewma_update(delta),
        }
    }

    /// EWMA update: smoothing factor proportional to the surprise of the
    /// increment, capped at `alpha_cap`. The variance recursion consumes the
    /// already-updated mean. The verdict tests against the threshold as it
    /// stood before this increment entered the statistics.
    pub fn ewma_update(&mut self, delta: f64) -> AnomalyVerdict {
        let th_prev = self.th;
        let sigma_prev = self.sigma2.sqrt();
        let alpha = ((delta - self.mu).abs() / (self.c * sigma_prev + self.epsilon))
            .min(self.alpha_cap);
        self.mu = alpha * delta + (1.0 - alpha) * self.mu;
        let dev = delta - self.mu;
        self.sigma2 = (alpha * dev * dev + (1.0 - alpha) * self.sigma2).max(0.0);
        self.th = self.mu + 3.0 * self.sigma2.sqrt();
        self.verdict(delta, th_prev)
    }

    /// Sliding-window update: the increment joins the window first, then the
    /// verdict is taken against the refreshed population statistics.
    pub fn window_update(&mut self, delta: f64) -> AnomalyVerdict {
        if self.window.len() == self.window_capacity {
            self.window.pop_front();
        }
        self.window.push_back(delta);
        let n = self.window.len() as f64;
        let mean = self.window.iter().sum::<f64>() / n;
        let var = self
            .window
            .iter()
            .map(|d| (d - mean) * (d - mean))
            .sum::<f64>()
            / n;
        self.mu = mean;
        self.sigma2 = var.max(0.0);
        self.th = self.mu + 3.0 * self.sigma2.sqrt();
        self.verdict(delta, self.th)
    }

    /// Causal StaticNormal: population statistics over every increment seen
    /// so far, tested after the increment is absorbed.
    pub fn static_update(&mut self, delta: f64) -> AnomalyVerdict {
        self.count += 1;
        self.sum += delta;
        self.sum_sq += delta * delta;
        let n = self.count as f64;
        self.mu = self.sum / n;
        self.sigma2 = (self.sum_sq / n - self.mu * self.mu).max(0.0);
        self.th = self.mu + 3.0 * self.sigma2.sqrt();
        self.verdict(delta, self.th)
    }

    fn verdict(&mut self, delta: f64, threshold: f64) -> AnomalyVerdict {
        let suppressed = self.warmup_remaining > 0;
        if suppressed {
            self.warmup_remaining -= 1;
        }
        AnomalyVerdict {
            is_outlier: !suppressed && delta.abs() > threshold,
            delta,
            threshold,
        }
    }
}

/// Offline threshold: μ + 3σ with population variance over the whole
/// sequence.
pub fn static_threshold(deltas: &[f64]) -> Result<f64, AnomalyError> {
    if deltas.is_empty() {
        return Err(AnomalyError::InsufficientData);
    }
    let n = deltas.len() as f64;
    let mu = deltas.iter().sum::<f64>() / n;
    let var = deltas.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n;
    Ok(mu + 3.0 * var.max(0.0).sqrt())
}

/// Proportion of non-outlier verdicts.
pub fn stability_metric(verdicts: &[AnomalyVerdict]) -> Result<f64, AnomalyError> {
    if verdicts.is_empty() {
        return Err(AnomalyError::InsufficientData);
    }
    let outliers = verdicts.iter().filter(|v| v.is_outlier).count();
    Ok(1.0 - outliers as f64 / verdicts.len() as f64)
}

/// Clamps `candidate` to within `max_step` of `prev_output`.
pub fn rate_limit(prev_output: f64, candidate: f64, max_step: f64) -> f64 {
    candidate.clamp(prev_output - max_step, prev_output + max_step)
}

// ---------------------------------------------------------------------------
