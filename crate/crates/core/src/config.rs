//! Scenario schema, validation, and construction of engine state.
//!
//! A scenario is a JSON document with sections {timesteps, method, detector,
//! transmission, distribution, events, output}. Angles in the file are
//! degrees; everything internal is radians. `ScenarioConfig::standard()`
//! builds the tuned 60 s reference scenario: smooth two-sinusoid ambient
//! load variation, a three-phase fault at 20 s (80 ms, 0.2 pu residual),
//! and a 40 MW generator trip at 40 s.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::angle::deg_to_rad;
use crate::anomaly::{Scheme, ThresholdState};
use crate::distribution::{DpvPlant, FeederState};
use crate::extrap::{ExtrapolatorState, Method};
use crate::pll::PllState;
use crate::transmission::{
    AgcState, AmbientLoad, EventKind, GeneratorState, GridEvent, TxSystem,
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    BadTimesteps(String),
    BadTransmission(String),
    BadDistribution(String),
    BadEvent(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::BadTimesteps(m) => write!(f, "timesteps: {m}"),
            ConfigError::BadTransmission(m) => write!(f, "transmission: {m}"),
            ConfigError::BadDistribution(m) => write!(f, "distribution: {m}"),
            ConfigError::BadEvent(m) => write!(f, "events: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timesteps {
    /// Coarse (transmission) timestep, s.
    pub t_t: f64,
    /// Fine (distribution) timestep, s.
    pub t_d: f64,
    /// Simulated duration, s.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub inertia_m: f64,
    pub damping_d: f64,
    pub droop_r: f64,
    pub governor_tg: f64,
    pub swing_coupling: f64,
    pub pm_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgcConfig {
    pub enabled: bool,
    /// Frequency bias, MW per 0.1 Hz.
    pub bias_b: f64,
    pub kp_agc: f64,
    pub ki_agc: f64,
    /// One entry per generator plus a final entry for the DPV plant; must
    /// sum to 1.
    pub participation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    pub a1_mw: f64,
    pub period1_s: f64,
    pub a2_mw: f64,
    pub period2_s: f64,
    /// Exponential turn-on envelope: full amplitude from `t_full_s` on,
    /// scaled by exp((t - t_full_s)/tau_env_s) before; tau 0 disables.
    #[serde(default)]
    pub t_full_s: f64,
    #[serde(default)]
    pub tau_env_s: f64,
}

impl Default for AmbientConfig {
    fn default() -> Self {
        AmbientConfig {
            a1_mw: 0.0,
            period1_s: 1.0,
            a2_mw: 0.0,
            period2_s: 1.0,
            t_full_s: 0.0,
            tau_env_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    /// Nominal frequency; the surrogate models a 60 Hz system.
    pub f0: f64,
    pub s_base_mw: f64,
    pub generators: Vec<GeneratorConfig>,
    pub agc: AgcConfig,
    pub p_load0_mw: f64,
    #[serde(default)]
    pub ambient: AmbientConfig,
    /// Boundary voltage sensitivity, pu per pu net-load deviation.
    pub kv: f64,
    /// Static power-flow angle offset at the boundary bus, deg.
    pub theta_pf0_deg: f64,
    /// Boundary-angle excursion while a fault is active, deg.
    #[serde(default)]
    pub fault_theta_shift_deg: f64,
    /// Permanent boundary-angle step at each trip event, deg.
    #[serde(default)]
    pub trip_theta_step_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub p_mpp_kw: f64,
    pub reserve_kw: f64,
    pub p_min_kw: f64,
    pub droop_d_kw_per_hz: f64,
    pub db_uf_hz: f64,
    pub db_of_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllConfig {
    pub kp: f64,
    pub ki: f64,
    pub f_filter_tau_s: f64,
    pub amp_floor_pu: f64,
}

impl Default for PllConfig {
    fn default() -> Self {
        PllConfig {
            kp: 180.0,
            ki: 3200.0,
            f_filter_tau_s: 0.010,
            amp_floor_pu: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
    pub plants: Vec<PlantConfig>,
    #[serde(default)]
    pub pll: PllConfig,
    /// Per-fine-step low-pass coefficient for the Lpf method.
    #[serde(default = "default_lpf_alpha")]
    pub lpf_alpha: f64,
}

fn default_lpf_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub kind: EventKindConfig,
    pub t: f64,
    /// Fault: residual voltage, pu. Trip / load step: MW.
    pub magnitude: f64,
    #[serde(default)]
    pub gen_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKindConfig {
    ThreePhaseFault,
    FaultClear,
    GenTrip,
    LoadStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

/// Optional seeded Gaussian noise on the boundary samples entering the
/// bridge; defaults off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_v: f64,
    pub sigma_theta_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_v: 0.0,
            sigma_theta_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub timesteps: Timesteps,
    pub method: Method,
    pub detector: Scheme,
    #[serde(default = "default_true")]
    pub strict_refill: bool,
    #[serde(default)]
    pub rate_limit_enabled: bool,
    #[serde(default = "default_window")]
    pub detector_window: usize,
    #[serde(default)]
    pub seed: u64,
    pub transmission: TransmissionConfig,
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn default_true() -> bool {
    true
}

fn default_window() -> usize {
    100
}

// ---------------------------------------------------------------------------
// Validation and derived quantities
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// Exchange ratio R = t_t / t_d. Call `validate` first.
    pub fn ratio(&self) -> u32 {
        (self.timesteps.t_t / self.timesteps.t_d).round() as u32
    }

    pub fn n_coarse(&self) -> usize {
        (self.timesteps.duration / self.timesteps.t_t).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ts = &self.timesteps;
        if !(ts.t_d > 0.0 && ts.t_t >= ts.t_d) {
            return Err(ConfigError::BadTimesteps(format!(
                "need t_t >= t_d > 0, got t_t={} t_d={}",
                ts.t_t, ts.t_d
            )));
        }
        let r = ts.t_t / ts.t_d;
        if (r - r.round()).abs() > 1e-6 * r.round().max(1.0) || r.round() < 1.0 {
            return Err(ConfigError::BadTimesteps(format!(
                "t_t/t_d = {r} is not a positive integer"
            )));
        }
        if ts.duration <= 0.0 {
            return Err(ConfigError::BadTimesteps(format!(
                "duration must be positive, got {}",
                ts.duration
            )));
        }

        let tx = &self.transmission;
        if tx.f0 != 60.0 {
            return Err(ConfigError::BadTransmission(format!(
                "the surrogate is a 60 Hz system; got f0 = {}",
                tx.f0
            )));
        }
        if tx.s_base_mw <= 0.0 || tx.p_load0_mw < 0.0 || tx.kv < 0.0 {
            return Err(ConfigError::BadTransmission(
                "need s_base_mw > 0, p_load0_mw >= 0, kv >= 0".into(),
            ));
        }
        if tx.generators.is_empty() {
            return Err(ConfigError::BadTransmission("no generators".into()));
        }
        for (i, g) in tx.generators.iter().enumerate() {
            if !(g.inertia_m > 0.0 && g.droop_r > 0.0 && g.governor_tg > 0.0) {
                return Err(ConfigError::BadTransmission(format!(
                    "generator {i}: inertia_m, droop_r, governor_tg must be positive"
                )));
            }
            if g.swing_coupling <= 0.0 || g.damping_d < 0.0 || g.pm_set < 0.0 {
                return Err(ConfigError::BadTransmission(format!(
                    "generator {i}: need swing_coupling > 0, damping_d >= 0, pm_set >= 0"
                )));
            }
            // Explicit fixed-step integration needs the coarse step well
            // under the fastest time constant.
            let limit = g.governor_tg.min(g.inertia_m) / 10.0;
            if ts.t_t > limit {
                return Err(ConfigError::BadTransmission(format!(
                    "t_t = {} exceeds stability limit {limit} for generator {i}",
                    ts.t_t
                )));
            }
        }
        let parts = &tx.agc.participation;
        if parts.len() != tx.generators.len() + 1 {
            return Err(ConfigError::BadTransmission(format!(
                "participation needs {} entries (generators + DPV plant), got {}",
                tx.generators.len() + 1,
                parts.len()
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || parts.iter().any(|b| *b < 0.0) {
            return Err(ConfigError::BadTransmission(format!(
                "participation must be nonnegative and sum to 1, got sum {sum}"
            )));
        }
        if tx.ambient.period1_s <= 0.0 || tx.ambient.period2_s <= 0.0 {
            return Err(ConfigError::BadTransmission(
                "ambient periods must be positive".into(),
            ));
        }
        if tx.ambient.t_full_s < 0.0 || tx.ambient.tau_env_s < 0.0 {
            return Err(ConfigError::BadTransmission(
                "ambient envelope parameters must be nonnegative".into(),
            ));
        }

        let dx = &self.distribution;
        if dx.p_load_kw < 0.0 {
            return Err(ConfigError::BadDistribution("p_load_kw < 0".into()));
        }
        if dx.plants.is_empty() {
            return Err(ConfigError::BadDistribution("no plants".into()));
        }
        for (i, p) in dx.plants.iter().enumerate() {
            let p_base = p.p_mpp_kw - p.reserve_kw;
            if !(0.0 <= p.p_min_kw && p.p_min_kw <= p_base && p_base <= p.p_mpp_kw) {
                return Err(ConfigError::BadDistribution(format!(
                    "plant {i}: need 0 <= p_min <= p_mpp - reserve <= p_mpp"
                )));
            }
            if p.reserve_kw < 0.0 || p.droop_d_kw_per_hz < 0.0 || p.db_uf_hz < 0.0 || p.db_of_hz < 0.0
            {
                return Err(ConfigError::BadDistribution(format!(
                    "plant {i}: reserve, droop, deadbands must be nonnegative"
                )));
            }
        }
        if !(dx.lpf_alpha > 0.0 && dx.lpf_alpha <= 1.0) {
            return Err(ConfigError::BadDistribution(format!(
                "lpf_alpha must be in (0, 1], got {}",
                dx.lpf_alpha
            )));
        }
        if !(dx.pll.kp > 0.0 && dx.pll.ki > 0.0 && dx.pll.f_filter_tau_s > 0.0) {
            return Err(ConfigError::BadDistribution(
                "pll gains and filter tau must be positive".into(),
            ));
        }
        if dx.pll.amp_floor_pu <= 0.0 {
            return Err(ConfigError::BadDistribution(
                "pll amp_floor_pu must be positive".into(),
            ));
        }

        for (i, ev) in self.events.iter().enumerate() {
            if ev.t < 0.0 {
                return Err(ConfigError::BadEvent(format!("event {i}: t < 0")));
            }
            match ev.kind {
                EventKindConfig::ThreePhaseFault => {
                    if !(0.0..1.0).contains(&ev.magnitude) {
                        return Err(ConfigError::BadEvent(format!(
                            "event {i}: fault residual must be in [0, 1), got {}",
                            ev.magnitude
                        )));
                    }
                }
                EventKindConfig::GenTrip => {
                    if ev.gen_index >= tx.generators.len() {
                        return Err(ConfigError::BadEvent(format!(
                            "event {i}: gen_index {} out of range",
                            ev.gen_index
                        )));
                    }
                }
                EventKindConfig::FaultClear | EventKindConfig::LoadStep => {}
            }
        }

        if self.noise.sigma_v < 0.0 || self.noise.sigma_theta_deg < 0.0 {
            return Err(ConfigError::BadDistribution(
                "noise sigmas must be nonnegative".into(),
            ));
        }
        if self.detector_window == 0 {
            return Err(ConfigError::BadTimesteps(
                "detector_window must be at least 1".into(),
            ));
        }
        Ok(())
    }

    // -- engine construction -------------------------------------------------

    pub fn build_events(&self) -> Vec<GridEvent> {
        self.events
            .iter()
            .map(|ev| GridEvent {
                kind: match ev.kind {
                    EventKindConfig::ThreePhaseFault => EventKind::ThreePhaseFault,
                    EventKindConfig::FaultClear => EventKind::FaultClear,
                    EventKindConfig::GenTrip => EventKind::GenTrip,
                    EventKindConfig::LoadStep => EventKind::LoadStep,
                },
                t: ev.t,
                magnitude: ev.magnitude,
                gen_index: ev.gen_index,
            })
            .collect()
    }

    /// Transmission system initialized at the equilibrium implied by the
    /// dispatch and the feeder's scheduled feedback. `n_substeps` sets the
    /// internal Euler grid; the engine derives it from the fine step so a
    /// run and its matched-rate reference share one grid.
    pub fn build_tx(&self, n_substeps: u32) -> TxSystem {
        let tx = &self.transmission;
        let gens = tx
            .generators
            .iter()
            .map(|g| {
                GeneratorState::new(
                    g.inertia_m,
                    g.damping_d,
                    g.droop_r,
                    g.governor_tg,
                    g.swing_coupling,
                    g.pm_set,
                )
            })
            .collect();
        let agc = AgcState {
            bias_b: tx.agc.bias_b,
            kp_agc: tx.agc.kp_agc,
            ki_agc: tx.agc.ki_agc,
            ace_integral: 0.0,
            participation: tx.agc.participation.clone(),
        };
        let feeder = self.build_feeder();
        TxSystem::new(
            tx.f0,
            tx.s_base_mw,
            gens,
            agc,
            tx.agc.enabled,
            self.build_events(),
            tx.p_load0_mw,
            feeder.equilibrium_feedback_kw(),
            AmbientLoad {
                a1_mw: tx.ambient.a1_mw,
                period1_s: tx.ambient.period1_s,
                a2_mw: tx.ambient.a2_mw,
                period2_s: tx.ambient.period2_s,
                t_full_s: tx.ambient.t_full_s,
                tau_env_s: tx.ambient.tau_env_s,
            },
            tx.kv,
            deg_to_rad(tx.theta_pf0_deg),
            deg_to_rad(tx.fault_theta_shift_deg),
            deg_to_rad(tx.trip_theta_step_deg),
            n_substeps,
        )
    }

    pub fn build_feeder(&self) -> FeederState {
        let dx = &self.distribution;
        let plants = dx
            .plants
            .iter()
            .map(|p| {
                DpvPlant::new(
                    p.p_mpp_kw,
                    p.reserve_kw,
                    p.p_min_kw,
                    p.droop_d_kw_per_hz,
                    p.db_uf_hz,
                    p.db_of_hz,
                )
            })
            .collect();
        FeederState::new(dx.p_load_kw, dx.q_load_kvar, plants)
    }

    pub fn build_pll(&self, theta0: f64) -> PllState {
        let p = &self.distribution.pll;
        PllState::new(
            p.kp,
            p.ki,
            self.transmission.f0,
            theta0,
            p.f_filter_tau_s,
            p.amp_floor_pu,
        )
    }

    pub fn build_extrapolator(&self) -> ExtrapolatorState {
        ExtrapolatorState::new(
            self.method,
            self.distribution.lpf_alpha,
            self.strict_refill,
        )
    }

    pub fn build_detector(&self) -> ThresholdState {
        ThresholdState::new(self.detector, self.detector_window)
    }

    // -- standard scenario ---------------------------------------------------

    /// The tuned 60 s reference scenario: three machines on a 600 MW base
    /// serving a 400 MW local load plus the feeder. Dispatch balances the
    /// scheduled load including the feeder's equilibrium feedback, so the
    /// run starts at an exact fixed point and every later excursion is
    /// attributable to the ambient variation or an injected event.
    pub fn standard() -> Self {
        let s_base_mw = 600.0;
        let p_load0_mw = 400.0;
        let p_load_kw = 2000.0;
        let p_base_total_kw = 1050.0;
        let feedback0_mw = (p_load_kw - p_base_total_kw) / 1000.0;
        let sched_pu = (p_load0_mw + feedback0_mw) / s_base_mw;
        let pm0 = 0.25;
        let pm1 = 0.22;
        let pm2 = sched_pu - pm0 - pm1;
        let mk = |inertia_m: f64, pm_set: f64| GeneratorConfig {
            inertia_m,
            damping_d: 1.5,
            droop_r: 0.05,
            governor_tg: 0.15,
            swing_coupling: 20.0,
            pm_set,
        };
        ScenarioConfig {
            timesteps: Timesteps {
                t_t: 0.010,
                t_d: 1e-4,
                duration: 60.0,
            },
            method: Method::Quadratic,
            detector: Scheme::EwmaRtta,
            strict_refill: true,
            rate_limit_enabled: false,
            detector_window: 100,
            seed: 1,
            transmission: TransmissionConfig {
                f0: 60.0,
                s_base_mw,
                generators: vec![mk(7.0, pm0), mk(8.0, pm1), mk(9.0, pm2)],
                agc: AgcConfig {
                    enabled: true,
                    bias_b: 63.0,
                    kp_agc: 0.0,
                    ki_agc: 0.6,
                    participation: vec![0.333, 0.333, 0.3338, 0.0002],
                },
                p_load0_mw,
                ambient: AmbientConfig {
                    a1_mw: 9.0,
                    period1_s: 0.2,
                    a2_mw: 1.0,
                    period2_s: 0.17,
                    t_full_s: 0.0,
                    tau_env_s: 0.0,
                },
                kv: 0.05,
                theta_pf0_deg: -18.5,
                fault_theta_shift_deg: -6.0,
                trip_theta_step_deg: -4.0,
            },
            distribution: DistributionConfig {
                p_load_kw,
                q_load_kvar: 400.0,
                plants: vec![PlantConfig {
                    p_mpp_kw: 1250.0,
                    reserve_kw: 200.0,
                    p_min_kw: 0.0,
                    droop_d_kw_per_hz: 40000.0,
                    db_uf_hz: 0.036,
                    db_of_hz: 0.036,
                }],
                pll: PllConfig::default(),
                lpf_alpha: 0.01,
            },
            events: vec![
                EventConfig {
                    kind: EventKindConfig::ThreePhaseFault,
                    t: 20.0,
                    magnitude: 0.2,
                    gen_index: 0,
                },
                EventConfig {
                    kind: EventKindConfig::FaultClear,
                    t: 20.08,
                    magnitude: 0.0,
                    gen_index: 0,
                },
                EventConfig {
                    kind: EventKindConfig::GenTrip,
                    t: 40.0,
                    magnitude: 40.0,
                    gen_index: 0,
                },
            ],
            output: OutputConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
