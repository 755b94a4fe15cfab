//! Reduced-order transmission surrogate driven at the coarse rate.
//!
//! N generators couple through a uniform synchronizing coefficient to a
//! common load bus whose angle is eliminated algebraically, which keeps the
//! model a pure ODE system: swing + first-order governor per machine,
//! forward-Euler integrated. The boundary bus presents a voltage magnitude
//! (nominal 1 pu, load-sensitive, overridden by fault events) and an angle
//! that integrates the system frequency deviation on top of a static
//! power-flow offset. AGC closes a PI loop on the area control error once
//! per coarse step and splits the resulting secondary request across
//! generators and the downstream PV plant by participation factor.
//!
//! Swing and governor states advance in `n_substeps` Euler substeps per
//! coarse step, and the ambient load is evaluated on that same substep grid.
//! A comparison pair (method run vs. fine-rate reference run) configured
//! with the same substep size then shares one integration grid and one
//! forcing trajectory, so measured boundary-method error is not confounded
//! with integrator truncation or load-sampling differences between the two
//! runs.

use std::fmt;

use crate::angle::wrap_to_pi;
use crate::extrap::BoundarySample;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum TxError {
    /// Every generator is offline; frequency is undefined and the run ends.
    Collapse { t: f64 },
    /// Participation factors must sum to 1.
    Participation { sum: f64 },
}

impl fmt::Display for TxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxError::Collapse { t } => {
                write!(f, "all generators offline at t = {t} s: system collapse")
            }
            TxError::Participation { sum } => {
                write!(f, "participation factors sum to {sum}, expected 1")
            }
        }
    }
}

impl std::error::Error for TxError {}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One synchronous machine on the common system base.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    /// Normalized inertia constant (2H), s.
    pub inertia_m: f64,
    /// Damping coefficient, pu power per pu speed deviation.
    pub damping_d: f64,
    /// Governor droop, pu speed per pu power.
    pub droop_r: f64,
    /// Governor time constant, s.
    pub governor_tg: f64,
    /// Rotor speed, pu.
    pub omega: f64,
    /// Mechanical power, pu.
    pub pm: f64,
    /// Electrical power, pu (last computed).
    pub pe: f64,
    /// Synchronizing coefficient toward the load bus, pu/rad.
    pub swing_coupling: f64,
    /// Rotor angle, rad.
    pub delta: f64,
    /// Dispatch setpoint the governor regulates around, pu.
    pub pm_set: f64,
    /// Offline machines contribute nothing and are excluded from f_sys.
    pub online: bool,
}

impl GeneratorState {
    /// Machine at synchronous speed with dispatch `pm_set` pu.
    pub fn new(
        inertia_m: f64,
        damping_d: f64,
        droop_r: f64,
        governor_tg: f64,
        swing_coupling: f64,
        pm_set: f64,
    ) -> Self {
        assert!(inertia_m > 0.0 && droop_r > 0.0 && governor_tg > 0.0);
        GeneratorState {
            inertia_m,
            damping_d,
            droop_r,
            governor_tg,
            omega: 1.0,
            pm: pm_set,
            pe: pm_set,
            swing_coupling,
            delta: 0.0,
            pm_set,
            online: true,
        }
    }
}

/// Automatic generation control (secondary frequency loop).
#[derive(Debug, Clone)]
pub struct AgcState {
    /// Frequency bias, MW per 0.1 Hz.
    pub bias_b: f64,
    /// Proportional gain on ACE.
    pub kp_agc: f64,
    /// Integral gain on ACE.
    pub ki_agc: f64,
    /// Running ACE integral, MW*s.
    pub ace_integral: f64,
    /// Resource participation factors; entries 0..n_gens address the
    /// generators in order, the final entry the downstream DPV plant.
    pub participation: Vec<f64>,
}

/// Event kinds; `magnitude` is the fault residual voltage (pu) for
/// `ThreePhaseFault` and MW for `GenTrip` / `LoadStep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ThreePhaseFault,
    FaultClear,
    GenTrip,
    LoadStep,
}

#[derive(Debug, Clone, Copy)]
pub struct GridEvent {
    pub kind: EventKind,
    pub t: f64,
    pub magnitude: f64,
    /// Target machine for `GenTrip`; ignored otherwise.
    pub gen_index: usize,
}

/// Aggregate powers reported by the distribution side (one-interval delayed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackPowers {
    pub p_kw: f64,
    pub q_kvar: f64,
    pub p_avail_kw: f64,
}

/// Smooth ambient load variation: two superposed sinusoids under an
/// exponential turn-on envelope. Unequal periods give a slow beat whose
/// alternating active and quiet intervals exercise the boundary anomaly
/// detectors; the envelope bounds the variation's relative growth rate at
/// 1/tau_env per second, so adaptive thresholds that track at a comparable
/// rate see a learnable ramp-up from rest instead of a cold-start step.
#[derive(Debug, Clone, Copy)]
pub struct AmbientLoad {
    pub a1_mw: f64,
    pub period1_s: f64,
    pub a2_mw: f64,
    pub period2_s: f64,
    /// Time at which the envelope reaches 1 and stays there, s.
    pub t_full_s: f64,
    /// Envelope growth time constant, s; 0 means always full.
    pub tau_env_s: f64,
}

impl AmbientLoad {
    pub fn mw(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        let base = self.a1_mw * (TAU * t / self.period1_s).sin()
            + self.a2_mw * (TAU * t / self.period2_s).sin();
        if self.tau_env_s > 0.0 && t < self.t_full_s {
            base * ((t - self.t_full_s) / self.tau_env_s).exp()
        } else {
            base
        }
    }

    pub fn none() -> Self {
        AmbientLoad {
            a1_mw: 0.0,
            period1_s: 1.0,
            a2_mw: 0.0,
            period2_s: 1.0,
            t_full_s: 0.0,
            tau_env_s: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// System
// ---------------------------------------------------------------------------

/// Full transmission-side state plus the scenario knobs needed to advance it.
#[derive(Debug, Clone)]
pub struct TxSystem {
    pub f0: f64,
    pub s_base_mw: f64,
    pub gens: Vec<GeneratorState>,
    pub agc: AgcState,
    pub agc_enabled: bool,
    pub events: Vec<GridEvent>,
    /// Scheduled local load at the transmission bus, MW.
    pub p_load0_mw: f64,
    pub ambient: AmbientLoad,
    /// Boundary-bus voltage sensitivity, pu per pu net-load deviation.
    pub kv: f64,
    /// Static power-flow angle offset, rad.
    pub theta_pf0: f64,
    /// Extra boundary-angle excursion while a fault is active, rad.
    pub fault_theta_shift: f64,
    /// Permanent boundary-angle step applied when a trip event fires, rad.
    pub trip_theta_step: f64,
    /// Euler substeps per coarse step (see module docs).
    pub n_substeps: u32,

    // -- dynamic state --
    /// Integrated boundary angle deviation, rad, unwrapped.
    pub theta_dev: f64,
    /// Accumulated permanent event angle offset, rad.
    pub theta_event_offset: f64,
    /// Latest AGC total request, MW.
    pub p_sfr_total_mw: f64,
    /// Latest per-generator SFR shares, pu.
    sfr_gen_pu: Vec<f64>,
    /// Accumulated load-step events, MW.
    p_step_mw: f64,
    /// Scheduled net load at equilibrium (local + feeder feedback), pu.
    p_sched0_pu: f64,
    applied: Vec<bool>,
}

impl TxSystem {
    /// Assembles a system and pins the equilibrium operating point implied
    /// by the dispatch: every machine at synchronous speed with pe = pm and
    /// rotor angles consistent with the algebraic load bus at angle 0.
    /// `p_feedback0_kw` is the feeder feedback expected at equilibrium so the
    /// scheduled net load matches what the first exchanges will report.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f0: f64,
        s_base_mw: f64,
        mut gens: Vec<GeneratorState>,
        agc: AgcState,
        agc_enabled: bool,
        events: Vec<GridEvent>,
        p_load0_mw: f64,
        p_feedback0_kw: f64,
        ambient: AmbientLoad,
        kv: f64,
        theta_pf0: f64,
        fault_theta_shift: f64,
        trip_theta_step: f64,
        n_substeps: u32,
    ) -> Self {
        let p_sched0_pu = (p_load0_mw + p_feedback0_kw / 1000.0) / s_base_mw;
        for g in gens.iter_mut() {
            g.delta = g.pm_set / g.swing_coupling;
            g.pm = g.pm_set;
            g.pe = g.pm_set;
            g.omega = 1.0;
        }
        let n_events = events.len();
        let n_gens = gens.len();
        TxSystem {
            f0,
            s_base_mw,
            gens,
            agc,
            agc_enabled,
            events,
            p_load0_mw,
            ambient,
            kv,
            theta_pf0,
            fault_theta_shift,
            trip_theta_step,
            n_substeps,
            theta_dev: 0.0,
            theta_event_offset: 0.0,
            p_sfr_total_mw: 0.0,
            sfr_gen_pu: vec![0.0; n_gens],
            p_step_mw: 0.0,
            p_sched0_pu,
            applied: vec![false; n_events],
        }
    }

    /// True while a fault event is in force at time `t`; returns the residual.
    fn fault_residual(&self, t: f64) -> Option<f64> {
        let mut latest_fault: Option<(f64, f64)> = None;
        let mut latest_clear: Option<f64> = None;
        for ev in &self.events {
            if ev.t > t + 1e-12 {
                continue;
            }
            match ev.kind {
                EventKind::ThreePhaseFault
                    if latest_fault.is_none_or(|(tf, _)| ev.t >= tf) =>
                {
                    latest_fault = Some((ev.t, ev.magnitude));
                }
                EventKind::FaultClear if latest_clear.is_none_or(|tc| ev.t >= tc) => {
                    latest_clear = Some(ev.t);
                }
                _ => {}
            }
        }
        match (latest_fault, latest_clear) {
            (Some((tf, _)), Some(tc)) if tc > tf - 1e-12 => None,
            (Some((_, residual)), _) => Some(residual),
            (None, _) => None,
        }
    }

    /// Applies one-shot events whose time has arrived.
    fn apply_pending_events(&mut self, t: f64) {
        for i in 0..self.events.len() {
            if self.applied[i] || self.events[i].t > t + 1e-12 {
                continue;
            }
            let ev = self.events[i];
            match ev.kind {
                EventKind::GenTrip => {
                    if let Some(g) = self.gens.get_mut(ev.gen_index) {
                        let trip_pu = ev.magnitude / self.s_base_mw;
                        if trip_pu >= g.pm_set - 1e-12 {
                            g.online = false;
                            g.pm_set = 0.0;
                            g.pm = 0.0;
                            g.pe = 0.0;
                        } else {
                            g.pm_set -= trip_pu;
                        }
                    }
                    self.theta_event_offset += self.trip_theta_step;
                }
                EventKind::LoadStep => {
                    self.p_step_mw += ev.magnitude;
                }
                EventKind::ThreePhaseFault | EventKind::FaultClear => {}
            }
            self.applied[i] = true;
        }
    }

    /// Advances the system one coarse step starting at `t` and returns the
    /// boundary sample for the exchange at `t`, the SFR request for the
    /// downstream plant (kW), and the system frequency.
    pub fn tx_step(
        &mut self,
        feedback: &FeedbackPowers,
        t: f64,
        dt_t: f64,
    ) -> Result<(BoundarySample, f64, f64), TxError> {
        assert!(dt_t > 0.0 && feedback.p_kw.is_finite() && feedback.q_kvar.is_finite());
        self.apply_pending_events(t);
        if !self.gens.iter().any(|g| g.online) {
            return Err(TxError::Collapse { t });
        }

        let p_fixed_mw = self.p_load0_mw + self.p_step_mw + feedback.p_kw / 1000.0;
        let p_net_pu = (p_fixed_mw + self.ambient.mw(t)) / self.s_base_mw;

        // Boundary sample reflects the state at the exchange instant `t`,
        // before integrating toward t + dt_t.
        let v_mag = match self.fault_residual(t) {
            Some(residual) => residual,
            None => 1.0 - self.kv * (p_net_pu - self.p_sched0_pu),
        };
        let mut theta_out = self.theta_pf0 + self.theta_dev + self.theta_event_offset;
        if self.fault_residual(t).is_some() {
            theta_out += self.fault_theta_shift;
        }
        let sample = BoundarySample {
            t,
            v_mag,
            theta: wrap_to_pi(theta_out),
        };

        // Integrate swing + governor over the coarse interval in substeps.
        let n_sub = self.n_substeps.max(1);
        let dt = dt_t / n_sub as f64;
        let omega_base = std::f64::consts::TAU * self.f0;
        for i in 0..n_sub {
            let n_online = self.gens.iter().filter(|g| g.online).count();
            if n_online == 0 {
                return Err(TxError::Collapse { t });
            }
            // Ambient load is sampled on the substep grid: runs that share a
            // substep size then share the whole forcing trajectory, whatever
            // their exchange cadence.
            let p_net_sub =
                (p_fixed_mw + self.ambient.mw(t + i as f64 * dt)) / self.s_base_mw;
            let mean_delta: f64 = self
                .gens
                .iter()
                .filter(|g| g.online)
                .map(|g| g.delta)
                .sum::<f64>()
                / n_online as f64;
            // Uniform coupling: load-bus angle solving sum(pe_i) = p_net.
            let ks = self.gens.iter().find(|g| g.online).unwrap().swing_coupling;
            let delta_l = mean_delta - p_net_sub / (ks * n_online as f64);

            let mut d_omega = vec![0.0; self.gens.len()];
            let mut d_pm = vec![0.0; self.gens.len()];
            let mut d_delta = vec![0.0; self.gens.len()];
            for (i, g) in self.gens.iter_mut().enumerate() {
                if !g.online {
                    continue;
                }
                let pe = g.swing_coupling * (g.delta - delta_l);
                g.pe = pe;
                let pm_ref = g.pm_set + self.sfr_gen_pu[i] + (1.0 - g.omega) / g.droop_r;
                d_pm[i] = (pm_ref - g.pm) / g.governor_tg;
                d_omega[i] = (g.pm - pe - g.damping_d * (g.omega - 1.0)) / g.inertia_m;
                d_delta[i] = omega_base * (g.omega - 1.0);
            }
            let f_sub = system_frequency(&self.gens)?;
            for (i, g) in self.gens.iter_mut().enumerate() {
                if !g.online {
                    continue;
                }
                g.pm += d_pm[i] * dt;
                g.omega += d_omega[i] * dt;
                g.delta += d_delta[i] * dt;
            }
            self.theta_dev += std::f64::consts::TAU * (f_sub - self.f0) * dt;
        }

        // Secondary loop runs at the coarse cadence on the post-step frequency.
        let f_sys_new = system_frequency(&self.gens)?;
        let ace_now = ace(f_sys_new, self.f0, self.agc.bias_b);
        if self.agc_enabled {
            self.p_sfr_total_mw = agc_step(&mut self.agc, ace_now, dt_t);
        } else {
            self.p_sfr_total_mw = 0.0;
        }
        let shares = allocate_sfr(self.p_sfr_total_mw, &self.agc.participation)?;
        // shares has one entry per machine plus the trailing DPV share; zip
        // stops at the machine count.
        for (slot, &share) in self.sfr_gen_pu.iter_mut().zip(&shares) {
            *slot = share / self.s_base_mw;
        }
        let p_sfr_request_kw = shares[self.gens.len()] * 1000.0;

        Ok((sample, p_sfr_request_kw, f_sys_new))
    }
}

// ---------------------------------------------------------------------------
// Free operations
// ---------------------------------------------------------------------------

/// Nominal system frequency. Machine speeds are stored per-unit on this
/// base; the surrogate models a 60 Hz interconnection throughout.
pub const NOMINAL_HZ: f64 = 60.0;

/// Mean electrical frequency over active machines, Hz: the per-unit speeds
/// averaged and rescaled to the nominal base.
pub fn system_frequency(gens: &[GeneratorState]) -> Result<f64, TxError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for g in gens {
        if g.online {
            sum += g.omega;
            n += 1;
        }
    }
    if n == 0 {
        return Err(TxError::Collapse { t: f64::NAN });
    }
    Ok(sum / n as f64 * NOMINAL_HZ)
}

/// Area control error, MW. Negative under low frequency.
pub fn ace(f_sys: f64, f0: f64, bias_b: f64) -> f64 {
    10.0 * bias_b * (f_sys - f0)
}

/// One PI update on ACE; returns the total secondary request, MW.
/// Under-frequency (negative ACE) yields a positive generation-increase
/// request, so the PI output carries a leading negative sign.
pub fn agc_step(agc: &mut AgcState, ace_now: f64, dt: f64) -> f64 {
    assert!(dt > 0.0);
    agc.ace_integral += ace_now * dt;
    -(agc.kp_agc * ace_now + agc.ki_agc * agc.ace_integral)
}

/// Splits the total secondary request by participation factor.
pub fn allocate_sfr(p_sfr_total: f64, participation: &[f64]) -> Result<Vec<f64>, TxError> {
    let sum: f64 = participation.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || participation.iter().any(|b| *b < 0.0) {
        return Err(TxError::Participation { sum });
    }
    Ok(participation.iter().map(|b| b * p_sfr_total).collect())
}

// ---------------------------------------------------------------------------
