//! Boundary bridge: detector -> reset / rate limit -> extrapolate.
//!
//! One bridge sits between the coarse and fine solvers and carries the two
//! boundary variables (voltage magnitude, phase angle) through independent
//! extrapolation buffers guarded by independent adaptive-threshold
//! detectors. An outlier on either variable resets both buffers; detector
//! state is never reset, so the thresholds keep adapting through events.
//!
//! Angles arrive wrapped and are unwrapped here before anything downstream
//! sees them; a wrap crossing must not masquerade as a 2*pi discontinuity.

use std::f64::consts::PI;

use crate::anomaly::{rate_limit, AnomalyVerdict, ThresholdState};
use crate::extrap::{ExtrapError, ExtrapolatorState};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// What one coarse exchange did to the bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeOutcome {
    /// Both buffers were reset at this exchange.
    pub reset: bool,
    /// None on the first exchange: no increment exists yet.
    pub verdict_v: Option<AnomalyVerdict>,
    pub verdict_th: Option<AnomalyVerdict>,
}

#[derive(Debug, Clone)]
pub struct BoundaryBridge {
    pub extrap_v: ExtrapolatorState,
    pub extrap_th: ExtrapolatorState,
    pub det_v: ThresholdState,
    pub det_th: ThresholdState,
    pub rate_limit_enabled: bool,
    /// Previous accepted sample as (v, theta_wrapped, theta_unwrapped).
    /// None before the first exchange.
    prev: Option<(f64, f64, f64)>,
    /// Accumulated 2*pi branch offset from wrap crossings. While zero, the
    /// unwrapped angle is the wire value bit for bit, which the matched-rate
    /// identity depends on.
    branch: f64,
    /// Newest coarse values, as the low-pass filter and Hold fallback see
    /// them.
    held_v: f64,
    held_th: f64,
    /// Last emitted fine outputs, the rate limiter's reference points.
    last_out_v: Option<f64>,
    last_out_th: Option<f64>,
    /// Per-fine-step slew bounds, refreshed each exchange from the adaptive
    /// thresholds.
    max_step_v: f64,
    max_step_th: f64,
    /// 1/R: spreads the per-interval threshold budget over the fine steps.
    step_scale: f64,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

impl BoundaryBridge {
    /// Builds both variable lanes from one extrapolator and one detector
    /// template. `steps_per_exchange` is the rate ratio R.
    pub fn new(
        extrap: ExtrapolatorState,
        detector: ThresholdState,
        rate_limit_enabled: bool,
        steps_per_exchange: u32,
    ) -> Self {
        assert!(steps_per_exchange >= 1, "rate ratio must be at least 1");
        BoundaryBridge {
            extrap_v: extrap.clone(),
            extrap_th: extrap,
            det_v: detector.clone(),
            det_th: detector,
            rate_limit_enabled,
            prev: None,
            branch: 0.0,
            held_v: 0.0,
            held_th: 0.0,
            last_out_v: None,
            last_out_th: None,
            max_step_v: 0.0,
            max_step_th: 0.0,
            step_scale: 1.0 / f64::from(steps_per_exchange),
        }
    }

    /// Ingests one coarse boundary sample.
    ///
    /// The increment against the previous sample drives the detectors; an
    /// outlier on either variable empties both buffers before the sample is
    /// pushed, so the post-event value is used directly while the buffers
    /// refill. The rate limiter's reference is reseeded on reset: the event
    /// jump itself must pass through unclamped.
    pub fn on_exchange(
        &mut self,
        t: f64,
        v: f64,
        theta_wrapped: f64,
    ) -> Result<ExchangeOutcome, ExtrapError> {
        let outcome = match self.prev {
            None => {
                self.extrap_v.push_sample(t, v)?;
                self.extrap_th.push_sample(t, theta_wrapped)?;
                self.prev = Some((v, theta_wrapped, theta_wrapped));
                self.held_v = v;
                self.held_th = theta_wrapped;
                self.last_out_v = Some(v);
                self.last_out_th = Some(theta_wrapped);
                ExchangeOutcome {
                    reset: false,
                    verdict_v: None,
                    verdict_th: None,
                }
            }
            Some((prev_v, prev_wrapped, prev_th)) => {
                // Nearest-representative unwrap on the wrapped stream; the
                // branch moves only when consecutive samples straddle the
                // seam. The half-open wrapped range makes -pi the tie that
                // shifts up, +pi the tie that stays.
                let d_w = theta_wrapped - prev_wrapped;
                if d_w > PI {
                    self.branch -= 2.0 * PI;
                } else if d_w <= -PI {
                    self.branch += 2.0 * PI;
                }
                let theta = if self.branch == 0.0 {
                    theta_wrapped
                } else {
                    theta_wrapped + self.branch
                };
                let verdict_v = self.det_v.update(v - prev_v);
                let verdict_th = self.det_th.update(theta - prev_th);
                let reset = verdict_v.is_outlier || verdict_th.is_outlier;
                if reset {
                    self.extrap_v.reset_buffer();
                    self.extrap_th.reset_buffer();
                    self.last_out_v = Some(v);
                    self.last_out_th = Some(theta);
                }
                self.extrap_v.push_sample(t, v)?;
                self.extrap_th.push_sample(t, theta)?;
                self.prev = Some((v, theta_wrapped, theta));
                self.held_v = v;
                self.held_th = theta;
                ExchangeOutcome {
                    reset,
                    verdict_v: Some(verdict_v),
                    verdict_th: Some(verdict_th),
                }
            }
        };
        self.max_step_v = self.det_v.th.abs() * self.step_scale;
        self.max_step_th = self.det_th.th.abs() * self.step_scale;
        Ok(outcome)
    }

    /// Predicts (v_hat, theta_hat) at `t_tau` inside the current coarse
    /// interval. Rate limiting applies only while a buffer is refilling and
    /// only when enabled; voltage is floored at zero either way.
    pub fn fine_step(&mut self, t_tau: f64) -> Result<(f64, f64), ExtrapError> {
        let raw_v = self.extrap_v.predict(t_tau, self.held_v)?;
        let raw_th = self.extrap_th.predict(t_tau, self.held_th)?;
        let v_hat = self
            .limited(raw_v, self.extrap_v.refilling(), self.last_out_v, self.max_step_v)
            .max(0.0);
        let theta_hat = self.limited(
            raw_th,
            self.extrap_th.refilling(),
            self.last_out_th,
            self.max_step_th,
        );
        self.last_out_v = Some(v_hat);
        self.last_out_th = Some(theta_hat);
        Ok((v_hat, theta_hat))
    }

    fn limited(&self, candidate: f64, refilling: bool, prev: Option<f64>, max_step: f64) -> f64 {
        if !(self.rate_limit_enabled && refilling) {
            return candidate;
        }
        match prev {
            Some(p) => rate_limit(p, candidate, max_step),
            None => candidate,
        }
    }
}

// ---------------------------------------------------------------------------
