//! Boundary-sample buffering and rate-transition prediction.
//!
//! The transmission side produces boundary phasor samples once per coarse
//! step; the distribution side needs values at every fine step in between.
//! Four methods close the gap:
//!
//! - `Hold`: repeat the newest coarse value (zero-order hold baseline)
//! - `Lpf`: first-order low-pass of the held input, applied per fine step
//! - `Linear`: project the trend of the two newest samples
//! - `Quadratic`: evaluate the Lagrange polynomial through the three newest
//!   samples at the requested fine-step instant
//!
//! Each variable (voltage magnitude, phase angle) runs through its own
//! [`ExtrapolatorState`]; angles must be unwrapped before they are pushed.
//! After a buffer reset the predictor degrades gracefully: in strict mode it
//! holds the newest raw value until three fresh samples have accumulated, in
//! graduated mode it climbs Hold -> Linear -> configured method as samples
//! allow.

use std::error::Error;
use std::fmt;

use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// One coarse-grid boundary observation exchanged between the two sides.
///
/// `theta` is wrapped to (-pi, pi] on the wire and at the transmission
/// output; the bridge unwraps it before any sample enters an extrapolation
/// buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    /// Coarse-grid timestamp in seconds.
    pub t: f64,
    /// Per-unit voltage magnitude, >= 0.
    pub v_mag: f64,
    /// Phase angle in radians.
    pub theta: f64,
}

/// Rate-transition method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hold,
    Lpf,
    Linear,
    Quadratic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Hold => "hold",
            Method::Lpf => "lpf",
            Method::Linear => "linear",
            Method::Quadratic => "quadratic",
        };
        f.write_str(s)
    }
}

/// One buffered (t, y) node of a scalar boundary stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub t: f64,
    pub y: f64,
}

/// Per-variable predictor state: the three newest nodes, the low-pass
/// memory, and the refill progress since the last reset.
#[derive(Debug, Clone)]
pub struct ExtrapolatorState {
    pub method: Method,
    /// Smoothing factor in (0, 1]; only used by `Method::Lpf`.
    pub lpf_alpha: f64,
    /// Hold until the buffer is full again after a reset, instead of
    /// climbing the graduated fallback ladder.
    pub strict_refill: bool,
    /// Oldest -> newest, at most 3 nodes.
    pub buffer: Vec<Node>,
    /// Last filtered output; survives buffer resets.
    pub lpf_prev: Option<f64>,
    /// Samples accepted since the last reset (or cold start).
    pub refill_count: u32,
}

/// Errors from buffer maintenance and prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtrapError {
    /// A pushed sample did not advance the buffer's newest timestamp.
    NonMonotoneTimestamp { t_new: f64, t_newest: f64 },
    /// Interpolation nodes are not strictly increasing / pairwise distinct.
    DegenerateNodes,
    /// Prediction requested from an empty buffer.
    NotPrimed,
}

impl fmt::Display for ExtrapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtrapError::NonMonotoneTimestamp { t_new, t_newest } => write!(
                f,
                "sample timestamp {t_new} does not advance newest buffered timestamp {t_newest}"
            ),
            ExtrapError::DegenerateNodes => {
                write!(f, "interpolation nodes must be strictly increasing")
            }
            ExtrapError::NotPrimed => write!(f, "prediction requested from an empty buffer"),
        }
    }
}

impl Error for ExtrapError {}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

impl ExtrapolatorState {
    pub fn new(method: Method, lpf_alpha: f64, strict_refill: bool) -> Self {
        ExtrapolatorState {
            method,
            lpf_alpha,
            strict_refill,
            buffer: Vec::with_capacity(3),
            lpf_prev: None,
            refill_count: 0,
        }
    }

    /// Appends a node, evicting the oldest once more than three are held.
    ///
    /// Timestamps must be strictly increasing within one stream.
    pub fn push_sample(&mut self, t: f64, y: f64) -> Result<(), ExtrapError> {
        if let Some(newest) = self.buffer.last() {
            if t <= newest.t {
                return Err(ExtrapError::NonMonotoneTimestamp {
                    t_new: t,
                    t_newest: newest.t,
                });
            }
        }
        if self.buffer.len() == 3 {
            self.buffer.remove(0);
        }
        self.buffer.push(Node { t, y });
        self.refill_count = self.refill_count.saturating_add(1);
        Ok(())
    }

    /// Empties the buffer and restarts the refill counter. The low-pass
    /// memory is retained: the filter keeps its output continuity across a
    /// discontinuity instead of restarting from zero.
    pub fn reset_buffer(&mut self) {
        self.buffer.clear();
        self.refill_count = 0;
    }

    /// Predicts the stream value at `t_tau`, which must not precede the
    /// newest buffered timestamp.
    ///
    /// `held_input` is the raw newest coarse value as the low-pass filter
    /// sees it; callers pass the same value that was last pushed. Methods
    /// short of their required history degrade along the fallback ladder
    /// (strict mode: straight to Hold until the buffer is full).
    pub fn predict(&mut self, t_tau: f64, held_input: f64) -> Result<f64, ExtrapError> {
        let n = self.buffer.len();
        if n == 0 {
            return Err(ExtrapError::NotPrimed);
        }
        let effective = self.effective_method(n);
        let newest = self.buffer[n - 1];
        let value = match effective {
            Method::Hold => newest.y,
            Method::Lpf => {
                let prev = self.lpf_prev.unwrap_or(held_input);
                let out = self.lpf_alpha * held_input + (1.0 - self.lpf_alpha) * prev;
                self.lpf_prev = Some(out);
                out
            }
            Method::Linear => {
                let a = self.buffer[n - 2];
                let slope = (newest.y - a.y) / (newest.t - a.t);
                newest.y + slope * (t_tau - newest.t)
            }
            Method::Quadratic => {
                let nodes = [self.buffer[0].t, self.buffer[1].t, self.buffer[2].t];
                let w = lagrange_weights(t_tau, nodes)?;
                w[0] * self.buffer[0].y + w[1] * self.buffer[1].y + w[2] * self.buffer[2].y
            }
        };
        Ok(value)
    }

    /// Buffer is refilling after a reset (fewer than three fresh samples).
    pub fn refilling(&self) -> bool {
        self.refill_count < 3
    }

    fn effective_method(&self, n: usize) -> Method {
        match self.method {
            Method::Hold => Method::Hold,
            Method::Lpf => Method::Lpf,
            Method::Linear => {
                if n >= 2 && !(self.strict_refill && n < 3) {
                    Method::Linear
                } else {
                    Method::Hold
                }
            }
            Method::Quadratic => {
                if n >= 3 {
                    Method::Quadratic
                } else if self.strict_refill || n < 2 {
                    Method::Hold
                } else {
                    Method::Linear
                }
            }
        }
    }
}

/// Weights of the second-order Lagrange polynomial through `t_nodes`,
/// evaluated at `t_tau`. Applied to the node ordinates oldest to newest.
pub fn lagrange_weights(t_tau: f64, t_nodes: [f64; 3]) -> Result<[f64; 3], ExtrapError> {
    if !(t_nodes[0] < t_nodes[1] && t_nodes[1] < t_nodes[2]) {
        return Err(ExtrapError::DegenerateNodes);
    }
    let [t0, t1, t2] = t_nodes;
    Ok([
        ((t_tau - t1) * (t_tau - t2)) / ((t0 - t1) * (t0 - t2)),
        ((t_tau - t0) * (t_tau - t2)) / ((t1 - t0) * (t1 - t2)),
        ((t_tau - t0) * (t_tau - t1)) / ((t2 - t0) * (t2 - t1)),
    ])
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn primed(method: Method, strict: bool) -> ExtrapolatorState {
        let mut st = ExtrapolatorState::new(method, 0.01, strict);
        st.push_sample(0.0, -18.5).unwrap();
        st.push_sample(0.010, -18.3).unwrap();
        st.push_sample(0.020, -18.0).unwrap();
        st
    }

    // -- buffer maintenance --------------------------------------------------

    #[test]
    fn push_fills_then_evicts_fifo() {
        let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
        st.push_sample(0.0, 1.0).unwrap();
        assert_eq!(st.buffer.len(), 1);
        assert_eq!(st.refill_count, 1);
        st.push_sample(1.0, 2.0).unwrap();
        st.push_sample(2.0, 3.0).unwrap();
        st.push_sample(3.0, 4.0).unwrap();
        assert_eq!(st.buffer.len(), 3);
        assert_eq!(st.buffer[0].t, 1.0);
        assert_eq!(st.buffer[2].t, 3.0);
        assert_eq!(st.refill_count, 4);
    }

    #[test]
    fn push_rejects_non_monotone_timestamp() {
        let mut st = ExtrapolatorState::new(Method::Hold, 0.01, true);
        st.push_sample(1.0, 0.0).unwrap();
        let err = st.push_sample(1.0, 0.0).unwrap_err();
        assert!(matches!(err, ExtrapError::NonMonotoneTimestamp { .. }));
        assert!(st.push_sample(0.5, 0.0).is_err());
    }

    #[test]
    fn reset_clears_buffer_and_counter_but_keeps_lpf_memory() {
        let mut st = primed(Method::Lpf, true);
        st.predict(0.021, -18.0).unwrap();
        let mem = st.lpf_prev;
        assert!(mem.is_some());
        st.reset_buffer();
        assert!(st.buffer.is_empty());
        assert_eq!(st.refill_count, 0);
        assert_eq!(st.lpf_prev, mem);
    }

    // -- lagrange weights ----------------------------------------------------

    #[test]
    fn weights_match_worked_example() {
        // Node spacing in milliseconds keeps the arithmetic exactly dyadic.
        let w = lagrange_weights(25.0, [0.0, 10.0, 20.0]).unwrap();
        assert_eq!(w, [0.375, -1.25, 1.875]);
    }

    #[test]
    fn weights_at_nodes_are_indicators() {
        let w = lagrange_weights(0.020, [0.0, 0.010, 0.020]).unwrap();
        assert!(w[0].abs() < EPS && w[1].abs() < EPS && (w[2] - 1.0).abs() < EPS);
        let w = lagrange_weights(0.010, [0.0, 0.010, 0.020]).unwrap();
        assert!(w[0].abs() < EPS && (w[1] - 1.0).abs() < EPS && w[2].abs() < EPS);
    }

    #[test]
    fn weights_reject_degenerate_nodes() {
        assert_eq!(
            lagrange_weights(1.0, [0.0, 0.0, 1.0]).unwrap_err(),
            ExtrapError::DegenerateNodes
        );
        assert_eq!(
            lagrange_weights(1.0, [2.0, 1.0, 3.0]).unwrap_err(),
            ExtrapError::DegenerateNodes
        );
    }

    #[test]
    fn weights_partition_unity_on_random_inputs() {
        // Deterministic pseudo-random sweep; conditioning kept reasonable by
        // limiting the evaluation point to a few spans beyond the nodes.
        let mut x: u64 = 0x9e3779b97f4a7c15;
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let t0 = next() * 100.0 - 50.0;
            let d1 = 0.01 + next();
            let d2 = 0.01 + next();
            let nodes = [t0, t0 + d1, t0 + d1 + d2];
            let span = d1 + d2;
            let tau = nodes[2] + (next() * 3.0 - 1.0) * span;
            let w = lagrange_weights(tau, nodes).unwrap();
            assert!((w[0] + w[1] + w[2] - 1.0).abs() < 1e-12);
        }
    }

    // -- prediction ----------------------------------------------------------

    #[test]
    fn quadratic_matches_worked_example() {
        // Degrees for readability; the predictor is unit-agnostic.
        let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
        st.push_sample(0.0, -18.5).unwrap();
        st.push_sample(10.0, -18.3).unwrap();
        st.push_sample(20.0, -18.0).unwrap();
        let y = st.predict(25.0, -18.0).unwrap();
        assert!((y - (-17.8125)).abs() < 1e-9);
    }

    #[test]
    fn hold_returns_newest_value() {
        let mut st = primed(Method::Hold, true);
        assert_eq!(st.predict(0.025, -18.0).unwrap(), -18.0);
        assert_eq!(st.predict(0.029, -18.0).unwrap(), -18.0);
    }

    #[test]
    fn lpf_filters_held_input_and_updates_memory() {
        let mut st = primed(Method::Lpf, true);
        st.lpf_prev = Some(0.0);
        let y = st.predict(0.021, 1.0).unwrap();
        assert!((y - 0.01).abs() < EPS);
        assert!((st.lpf_prev.unwrap() - 0.01).abs() < EPS);
        // Second fine step keeps integrating toward the held input.
        let y2 = st.predict(0.022, 1.0).unwrap();
        assert!((y2 - (0.01 * 1.0 + 0.99 * 0.01)).abs() < EPS);
    }

    #[test]
    fn lpf_first_call_without_memory_passes_input_through() {
        let mut st = ExtrapolatorState::new(Method::Lpf, 0.01, true);
        st.push_sample(0.0, 4.0).unwrap();
        assert!((st.predict(0.001, 4.0).unwrap() - 4.0).abs() < EPS);
    }

    #[test]
    fn linear_projects_trend() {
        let mut st = ExtrapolatorState::new(Method::Linear, 0.01, false);
        st.push_sample(0.0, 1.0).unwrap();
        st.push_sample(0.010, 2.0).unwrap();
        let y = st.predict(0.015, 2.0).unwrap();
        assert!((y - 2.5).abs() < EPS);
    }

    #[test]
    fn linear_reproduces_affine_signals_exactly() {
        let mut st = ExtrapolatorState::new(Method::Linear, 0.01, true);
        let f = |t: f64| -3.0 + 7.25 * t;
        st.push_sample(0.1, f(0.1)).unwrap();
        st.push_sample(0.2, f(0.2)).unwrap();
        st.push_sample(0.3, f(0.3)).unwrap();
        for k in 0..50 {
            let tau = 0.3 + 0.01 * k as f64;
            assert!((st.predict(tau, f(0.3)).unwrap() - f(tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_reproduces_quadratic_signals() {
        let (a, b, c) = (2.5, -1.25, 0.75);
        let f = |t: f64| a * t * t + b * t + c;
        let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
        for t in [0.40, 0.41, 0.42] {
            st.push_sample(t, f(t)).unwrap();
        }
        for k in 0..60 {
            let tau = 0.42 + 0.0005 * k as f64;
            let y = st.predict(tau, f(0.42)).unwrap();
            let rel = (y - f(tau)).abs() / f(tau).abs().max(1e-30);
            assert!(rel < 1e-9, "rel error {rel} at tau {tau}");
        }
    }

    #[test]
    fn quadratic_constant_buffer_returns_constant() {
        let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
        st.push_sample(0.0, 5.5).unwrap();
        st.push_sample(1.0, 5.5).unwrap();
        st.push_sample(2.0, 5.5).unwrap();
        assert!((st.predict(2.7, 5.5).unwrap() - 5.5).abs() < EPS);
    }

    #[test]
    fn quadratic_at_newest_node_is_exact() {
        let mut st = primed(Method::Quadratic, true);
        let newest = st.buffer[2].y;
        assert_eq!(st.predict(0.020, newest).unwrap(), newest);
    }

    #[test]
    fn empty_buffer_prediction_is_an_error() {
        let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
        assert_eq!(st.predict(0.0, 0.0).unwrap_err(), ExtrapError::NotPrimed);
    }

    // -- fallback ladder -----------------------------------------------------

    #[test]
    fn strict_refill_holds_until_three_samples() {
        let mut st = primed(Method::Quadratic, true);
        st.reset_buffer();
        st.push_sample(0.030, 10.0).unwrap();
        assert_eq!(st.predict(0.035, 10.0).unwrap(), 10.0);
        st.push_sample(0.040, 20.0).unwrap();
        // Still holding: strict mode ignores the two-sample linear rung.
        assert_eq!(st.predict(0.045, 20.0).unwrap(), 20.0);
        st.push_sample(0.050, 30.0).unwrap();
        // Full buffer resumes quadratic: the ramp extrapolates past 30.
        let y = st.predict(0.055, 30.0).unwrap();
        assert!((y - 35.0).abs() < 1e-9);
    }

    #[test]
    fn graduated_refill_climbs_hold_linear_quadratic() {
        let mut st = primed(Method::Quadratic, false);
        st.reset_buffer();
        st.push_sample(0.030, 10.0).unwrap();
        assert_eq!(st.predict(0.035, 10.0).unwrap(), 10.0);
        st.push_sample(0.040, 20.0).unwrap();
        let y = st.predict(0.045, 20.0).unwrap();
        assert!((y - 25.0).abs() < 1e-9, "two samples should project linearly");
        st.push_sample(0.050, 30.0).unwrap();
        let y = st.predict(0.055, 30.0).unwrap();
        assert!((y - 35.0).abs() < 1e-9);
    }

    #[test]
    fn refilling_flag_tracks_refill_count() {
        let mut st = primed(Method::Quadratic, true);
        assert!(!st.refilling());
        st.reset_buffer();
        assert!(st.refilling());
        st.push_sample(0.030, 0.0).unwrap();
        st.push_sample(0.040, 0.0).unwrap();
        assert!(st.refilling());
        st.push_sample(0.050, 0.0).unwrap();
        assert!(!st.refilling());
    }

    // -- order of accuracy ---------------------------------------------------

    #[test]
    fn sin_extrapolation_error_scales_cubically() {
        let f = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
        let max_err = |dt: f64| -> f64 {
            let mut worst: f64 = 0.0;
            for i in 0..200 {
                let t0 = i as f64 / 200.0;
                let nodes = [t0 - 2.0 * dt, t0 - dt, t0];
                for k in 1..=20 {
                    let tau = t0 + dt * k as f64 / 20.0;
                    let w = lagrange_weights(tau, nodes).unwrap();
                    let y = w[0] * f(nodes[0]) + w[1] * f(nodes[1]) + w[2] * f(nodes[2]);
                    worst = worst.max((y - f(tau)).abs());
                }
            }
            worst
        };
        let errs: Vec<f64> = [0.020, 0.010, 0.005, 0.0025]
            .iter()
            .map(|dt| max_err(*dt))
            .collect();
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(
                (6.0..=10.0).contains(&ratio),
                "halving ratio {ratio} outside [6, 10]"
            );
        }
    }
}
