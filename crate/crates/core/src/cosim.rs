//! Lockstep two-rate engine.
//!
//! One coarse transmission step per exchange, R fine distribution steps per
//! coarse interval, feedback transported one coarse interval late. The loop
//! is split into a transmission half and a distribution half so the
//! two-process wire mode drives exactly the same state machines and stays
//! bit-identical to the in-process run.
//!
//! Exchange-time alignment: the boundary sample sent at t is the
//! transmission state at t, while frequency, ACE and the secondary request
//! carried by the same exchange are the values computed at the end of the
//! previous coarse step — which is the state at t as well. The request
//! produced while integrating [t, t+T_T] rides the next exchange.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle::deg_to_rad;
use crate::bridge::BoundaryBridge;
use crate::config::{ConfigError, ScenarioConfig};
use crate::distribution::FeederState;
use crate::extrap::ExtrapError;
use crate::pll::{synthesize_abc, PllState};
use crate::trace::{CoarseRow, FineRow, RunTrace, VarId, VerdictRow};
use crate::transmission::{ace, FeedbackPowers, TxError, TxSystem};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum CosimError {
    Config(ConfigError),
    Tx(TxError),
    Extrap(ExtrapError),
}

impl std::fmt::Display for CosimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CosimError::Config(e) => write!(f, "configuration: {e}"),
            CosimError::Tx(e) => write!(f, "transmission: {e}"),
            CosimError::Extrap(e) => write!(f, "boundary bridge: {e}"),
        }
    }
}

impl std::error::Error for CosimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CosimError::Config(e) => Some(e),
            CosimError::Tx(e) => Some(e),
            CosimError::Extrap(e) => Some(e),
        }
    }
}

/// A failed run still surrenders everything simulated before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: CosimError,
    pub partial: RunTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (partial trace: {} coarse steps)",
            self.error,
            self.partial.coarse.len()
        )
    }
}

impl std::error::Error for RunFailure {}

// ---------------------------------------------------------------------------
// Exchange payload
// ---------------------------------------------------------------------------

/// Downstream half of one exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxExchange {
    pub t: f64,
    pub v_mag: f64,
    /// Wrapped, rad.
    pub theta: f64,
    pub p_sfr_request_kw: f64,
}

// ---------------------------------------------------------------------------
// Transmission half
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TxSide {
    pub tx: TxSystem,
    pub t_t: f64,
    /// Feedback latched from the previous interval's last fine step.
    pub feedback: FeedbackPowers,
    /// Secondary request computed at the end of the previous coarse step,
    /// i.e. the value valid at the next exchange instant, kW.
    pub pending_request_kw: f64,
    // State rolled to the current exchange instant.
    pub f_sys: f64,
    pub ace_mw: f64,
    pub p_sfr_total_mw: f64,
}

/// Euler stability ceiling for the transmission substep, seconds. The
/// lightly damped inter-machine swing mode sits near ±31 rad/s; explicit
/// Euler leaves its decay region once the step passes ~2e-4 s, so the
/// integration grid must not follow a coarsened t_d upward.
const TX_SUBSTEP_MAX_S: f64 = 1e-4;

impl TxSide {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        // One substep per fine step, split further while a fine step exceeds
        // the stability ceiling. The split depends on t_d alone, so a run and
        // its matched-rate reference always integrate on the same grid.
        let split = (config.timesteps.t_d / TX_SUBSTEP_MAX_S - 1e-9).ceil().max(1.0) as u32;
        let tx = config.build_tx(config.ratio().saturating_mul(split));
        let feeder = config.build_feeder();
        let feedback = FeedbackPowers {
            p_kw: feeder.equilibrium_feedback_kw(),
            q_kvar: feeder.q_load,
            p_avail_kw: feeder.plants.iter().map(|p| p.reserve).sum(),
        };
        let f0 = tx.f0;
        TxSide {
            tx,
            t_t: config.timesteps.t_t,
            feedback,
            pending_request_kw: 0.0,
            f_sys: f0,
            ace_mw: 0.0,
            p_sfr_total_mw: 0.0,
        }
    }

    /// Advances one coarse step starting at `t`; returns the exchange
    /// payload and the coarse trace row, both aligned to `t`.
    pub fn exchange(&mut self, t: f64) -> Result<(TxExchange, CoarseRow), TxError> {
        let (sample, next_request_kw, f_new) = self.tx.tx_step(&self.feedback, t, self.t_t)?;
        let msg = TxExchange {
            t,
            v_mag: sample.v_mag,
            theta: sample.theta,
            p_sfr_request_kw: self.pending_request_kw,
        };
        let row = CoarseRow {
            t,
            v: sample.v_mag,
            theta: sample.theta,
            f_sys: self.f_sys,
            ace: self.ace_mw,
            p_sfr_total: self.p_sfr_total_mw,
        };
        self.f_sys = f_new;
        self.ace_mw = ace(f_new, self.tx.f0, self.tx.agc.bias_b);
        self.p_sfr_total_mw = self.tx.p_sfr_total_mw;
        self.pending_request_kw = next_request_kw;
        Ok((msg, row))
    }

    pub fn absorb_feedback(&mut self, feedback: FeedbackPowers) {
        self.feedback = feedback;
    }
}

// ---------------------------------------------------------------------------
// Distribution half
// ---------------------------------------------------------------------------

/// Seeded Gaussian measurement noise on the received boundary sample.
#[derive(Debug, Clone)]
pub struct NoiseGen {
    rng: ChaCha8Rng,
    sigma_v: f64,
    sigma_theta: f64,
}

impl NoiseGen {
    pub fn new(seed: u64, sigma_v: f64, sigma_theta: f64) -> Self {
        NoiseGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sigma_v,
            sigma_theta,
        }
    }

    /// Box-Muller pair: one draw each for magnitude and angle.
    fn perturb(&mut self, v: f64, theta: f64) -> (f64, f64) {
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (v + self.sigma_v * r * c, theta + self.sigma_theta * r * s)
    }
}

#[derive(Debug, Clone)]
pub struct DxSide {
    pub bridge: BoundaryBridge,
    pub pll: PllState,
    pub feeder: FeederState,
    pub noise: Option<NoiseGen>,
    pub f0: f64,
    pub t_d: f64,
    pub steps_per_exchange: u32,
    omega0: f64,
}

impl DxSide {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let bridge = BoundaryBridge::new(
            config.build_extrapolator(),
            config.build_detector(),
            config.rate_limit_enabled,
            config.ratio(),
        );
        let theta0 = deg_to_rad(config.transmission.theta_pf0_deg);
        let noise = if config.noise.sigma_v > 0.0 || config.noise.sigma_theta_deg > 0.0 {
            Some(NoiseGen::new(
                config.seed,
                config.noise.sigma_v,
                deg_to_rad(config.noise.sigma_theta_deg),
            ))
        } else {
            None
        };
        let f0 = config.transmission.f0;
        DxSide {
            bridge,
            pll: config.build_pll(theta0),
            feeder: config.build_feeder(),
            noise,
            f0,
            t_d: config.timesteps.t_d,
            steps_per_exchange: config.ratio(),
            omega0: std::f64::consts::TAU * f0,
        }
    }

    /// Ingests one exchange and runs the coarse interval's fine steps,
    /// appending to `trace`. Returns the end-of-interval feedback, which the
    /// transmission side consumes at the next exchange.
    pub fn process_exchange(
        &mut self,
        msg: TxExchange,
        trace: &mut RunTrace,
    ) -> Result<FeedbackPowers, ExtrapError> {
        let (v_meas, theta_meas) = match self.noise.as_mut() {
            Some(n) => n.perturb(msg.v_mag, msg.theta),
            None => (msg.v_mag, msg.theta),
        };
        let outcome = self.bridge.on_exchange(msg.t, v_meas, theta_meas)?;
        if let (Some(vv), Some(vt)) = (outcome.verdict_v, outcome.verdict_th) {
            trace.verdicts.push(VerdictRow {
                t: msg.t,
                var: VarId::V,
                delta: vv.delta,
                th: vv.threshold,
                outlier: vv.is_outlier,
                reset: outcome.reset,
            });
            trace.verdicts.push(VerdictRow {
                t: msg.t,
                var: VarId::Theta,
                delta: vt.delta,
                th: vt.threshold,
                outlier: vt.is_outlier,
                reset: outcome.reset,
            });
        }
        let mut feedback = FeedbackPowers {
            p_kw: 0.0,
            q_kvar: 0.0,
            p_avail_kw: 0.0,
        };
        for j in 0..self.steps_per_exchange {
            let tau = msg.t + f64::from(j) * self.t_d;
            let (v_hat, theta_hat) = self.bridge.fine_step(tau)?;
            let sample = synthesize_abc(v_hat, theta_hat, self.omega0, tau);
            let f_pcc = self.pll.pll_step(&sample, self.t_d);
            let res = self
                .feeder
                .feeder_step(v_hat, f_pcc, msg.p_sfr_request_kw, self.f0, self.t_d);
            trace.fine.push(FineRow {
                t: tau,
                v_hat,
                theta_hat,
                f_pcc,
                p_dpv: res.p_dpv_kw,
                p_pfr: res.p_pfr_kw,
                p_sfr: res.p_sfr_kw,
                p_fb: res.feedback.p_kw,
                q_fb: res.feedback.q_kvar,
                p_avail: res.feedback.p_avail_kw,
                p_sfr_request: msg.p_sfr_request_kw,
            });
            feedback = res.feedback;
        }
        Ok(feedback)
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Runs the full lockstep loop in process. Deterministic for a fixed
/// (config, seed); a mid-run failure carries the partial trace out.
pub fn run(config: &ScenarioConfig) -> Result<RunTrace, RunFailure> {
    let mut trace = RunTrace::default();
    match run_inner(config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure {
            error,
            partial: trace,
        }),
    }
}

fn run_inner(config: &ScenarioConfig, trace: &mut RunTrace) -> Result<(), CosimError> {
    config.validate().map_err(CosimError::Config)?;
    let t_t = config.timesteps.t_t;
    let n = config.n_coarse();
    let r = config.ratio() as usize;
    trace.coarse.reserve(n);
    trace.fine.reserve(n * r);
    trace.verdicts.reserve(2 * n);

    let mut tx_side = TxSide::from_config(config);
    let mut dx_side = DxSide::from_config(config);
    for k in 0..n {
        let t = k as f64 * t_t;
        let (msg, row) = tx_side.exchange(t).map_err(CosimError::Tx)?;
        trace.coarse.push(row);
        let feedback = dx_side
            .process_exchange(msg, trace)
            .map_err(CosimError::Extrap)?;
        tx_side.absorb_feedback(feedback);
    }
    Ok(())
}

/// The matched-rate reference for `config`: both sides stepped at t_d, with
/// the detector window rescaled so its time span survives the rate change
/// and post-reset rate limiting disabled. The method is kept: polynomial
/// methods pass the boundary through bitwise at an exchange ratio of one,
/// so their reference is the plain transmission output, while the low-pass
/// filter's reference is the same filter fed fine-rate data — the error
/// charged to each method is its rate-transition error, not its filtering.
pub fn ground_truth_config(config: &ScenarioConfig) -> ScenarioConfig {
    let mut gt = config.clone();
    let r = config.ratio() as usize;
    gt.timesteps.t_t = gt.timesteps.t_d;
    gt.detector_window = config.detector_window.saturating_mul(r).max(1);
    gt.rate_limit_enabled = false;
    gt
}

// ---------------------------------------------------------------------------
