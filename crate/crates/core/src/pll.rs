//! Three-phase waveform synthesis and SRF-PLL frequency estimation.
//!
//! The distribution side does not receive a frequency from upstream; it
//! reconstructs balanced three-phase voltages from the boundary (V, theta)
//! at every fine step and measures frequency the way a real inverter would:
//! rotate the phases into a synchronous dq frame, drive the q-axis component
//! to zero with a PI loop, and read the loop frequency. Coarse-held boundary
//! data therefore produces the same estimation artifacts a hardware PLL
//! would see (phase steps at every exchange instant).

use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Instantaneous per-unit phase voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePhaseSample {
    pub va: f64,
    pub vb: f64,
    pub vc: f64,
}

/// Synchronous-reference-frame PLL state.
#[derive(Debug, Clone)]
pub struct PllState {
    /// Proportional gain, rad/s per unit q-axis error.
    pub kp: f64,
    /// Integral gain, rad/s^2 per unit q-axis error.
    pub ki: f64,
    /// Nominal angular frequency feed-forward, rad/s.
    pub omega0: f64,
    /// Accumulated integral term, rad/s.
    pub integrator: f64,
    /// Estimated electrical angle, rad, unwrapped.
    pub theta_hat: f64,
    /// Estimated angular frequency, rad/s.
    pub omega_hat: f64,
    /// First-order output-filter memory, Hz.
    pub f_filter_state: f64,
    /// Output filter time constant, s.
    pub f_filter_tau: f64,
    /// Amplitude-normalization floor, pu; prevents loop-gain blowup when
    /// the measured amplitude collapses during faults.
    pub amp_floor: f64,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Balanced three-phase synthesis from a boundary phasor at absolute fine
/// time `tau`. Phases b and c lag by 2pi/3 and 4pi/3 (peak-normalized
/// per-unit convention).
pub fn synthesize_abc(v_mag: f64, theta: f64, omega0: f64, tau: f64) -> ThreePhaseSample {
    let phase = omega0 * tau + theta;
    ThreePhaseSample {
        va: v_mag * phase.cos(),
        vb: v_mag * (phase - 2.0 * PI / 3.0).cos(),
        vc: v_mag * (phase - 4.0 * PI / 3.0).cos(),
    }
}

impl PllState {
    /// PLL initialized at nominal frequency with the loop angle pre-seeded
    /// to `theta0` (the known boundary angle at t = 0), so startup transients
    /// reflect loop dynamics rather than an arbitrary initial phase error.
    pub fn new(kp: f64, ki: f64, f0: f64, theta0: f64, f_filter_tau: f64, amp_floor: f64) -> Self {
        PllState {
            kp,
            ki,
            omega0: 2.0 * PI * f0,
            integrator: 0.0,
            theta_hat: theta0,
            omega_hat: 2.0 * PI * f0,
            f_filter_state: f0,
            f_filter_tau,
            amp_floor,
        }
    }

    /// Advances the loop by one fine step and returns the filtered frequency
    /// estimate in Hz.
    ///
    /// Amplitude-invariant Clarke transform, Park rotation by the estimated
    /// angle, q-axis error normalized by the measured amplitude (floored),
    /// PI update, then a first-order output filter on omega_hat/(2 pi).
    pub fn pll_step(&mut self, sample: &ThreePhaseSample, dt: f64) -> f64 {
        let v_alpha = (2.0 * sample.va - sample.vb - sample.vc) / 3.0;
        let v_beta = (sample.vb - sample.vc) / 3.0_f64.sqrt();
        let (sin_t, cos_t) = self.theta_hat.sin_cos();
        let vd = cos_t * v_alpha + sin_t * v_beta;
        let vq = -sin_t * v_alpha + cos_t * v_beta;
        let ampl = (vd * vd + vq * vq).sqrt();
        let e = vq / ampl.max(self.amp_floor);
        self.integrator += self.ki * e * dt;
        self.omega_hat = self.omega0 + self.kp * e + self.integrator;
        self.theta_hat += self.omega_hat * dt;
        let alpha = (dt / self.f_filter_tau).min(1.0);
        self.f_filter_state += alpha * (self.omega_hat / (2.0 * PI) - self.f_filter_state);
        self.f_filter_state
    }
}

// ---------------------------------------------------------------------------
