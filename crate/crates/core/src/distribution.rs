//! Fine-timestep feeder-head model.
//!
//! The feeder is a lumped constant-impedance load plus one or more
//! distributed-PV plants. Each plant holds a reserve below its
//! maximum-power-point output and deploys it two ways: droop on the locally
//! estimated frequency (primary response, with a deadband) and allocated
//! secondary requests from the transmission AGC. Aggregate feeder-head
//! powers and remaining PV headroom flow back upstream each exchange.

use crate::transmission::FeedbackPowers;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One distributed-PV plant with frequency-response headroom.
#[derive(Debug, Clone)]
pub struct DpvPlant {
    /// Available maximum-power-point output, kW.
    pub p_mpp: f64,
    /// Headroom held below MPP, kW.
    pub reserve: f64,
    /// Minimum output, kW.
    pub p_min: f64,
    /// Droop gain D, kW/Hz.
    pub droop_d: f64,
    /// Under-frequency deadband, Hz.
    pub db_uf: f64,
    /// Over-frequency deadband, Hz.
    pub db_of: f64,
    /// Scheduled base output, kW; always p_mpp - reserve.
    pub p_base: f64,
}

impl DpvPlant {
    pub fn new(p_mpp: f64, reserve: f64, p_min: f64, droop_d: f64, db_uf: f64, db_of: f64) -> Self {
        let p_base = p_mpp - reserve;
        assert!(
            0.0 <= p_min && p_min <= p_base && p_base <= p_mpp,
            "plant power limits must satisfy 0 <= p_min <= p_base <= p_mpp"
        );
        assert!(reserve >= 0.0 && droop_d >= 0.0 && db_uf >= 0.0 && db_of >= 0.0);
        DpvPlant {
            p_mpp,
            reserve,
            p_min,
            droop_d,
            db_uf,
            db_of,
            p_base,
        }
    }
}

/// Lumped feeder: one load, a set of plants, and fixed secondary-allocation
/// weights (reserve-proportional; equal split when no plant holds reserve).
#[derive(Debug, Clone)]
pub struct FeederState {
    /// Lumped active load at nominal voltage, kW.
    pub p_load: f64,
    /// Lumped reactive load at nominal voltage, kvar.
    pub q_load: f64,
    pub plants: Vec<DpvPlant>,
    sfr_weights: Vec<f64>,
}

/// Per-step outcome of the feeder model: upstream feedback plus the plant
/// aggregates recorded in the fine trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeederStepResult {
    pub feedback: FeedbackPowers,
    /// Total plant output, kW.
    pub p_dpv_kw: f64,
    /// Total primary (droop) response commanded, kW.
    pub p_pfr_kw: f64,
    /// Total secondary response delivered after limits, kW.
    pub p_sfr_kw: f64,
}

impl FeederState {
    pub fn new(p_load: f64, q_load: f64, plants: Vec<DpvPlant>) -> Self {
        assert!(p_load >= 0.0);
        assert!(!plants.is_empty(), "feeder needs at least one plant");
        let total_reserve: f64 = plants.iter().map(|p| p.reserve).sum();
        let sfr_weights = if total_reserve > 0.0 {
            plants.iter().map(|p| p.reserve / total_reserve).collect()
        } else {
            vec![1.0 / plants.len() as f64; plants.len()]
        };
        FeederState {
            p_load,
            q_load,
            plants,
            sfr_weights,
        }
    }

    /// Scheduled plant output with no frequency response active, kW.
    pub fn total_p_base(&self) -> f64 {
        self.plants.iter().map(|p| p.p_base).sum()
    }

    /// Feeder-head feedback at the equilibrium operating point (v = 1 pu,
    /// frequency inside the deadband, no secondary request), kW.
    pub fn equilibrium_feedback_kw(&self) -> f64 {
        self.p_load - self.total_p_base()
    }

    /// Applies the boundary condition and frequency estimate for one fine
    /// step and returns feedback powers plus plant aggregates.
    pub fn feeder_step(
        &mut self,
        v_mag: f64,
        f_pcc: f64,
        p_sfr_request: f64,
        f0: f64,
        dt_d: f64,
    ) -> FeederStepResult {
        assert!(dt_d > 0.0);
        let mut p_dpv = 0.0;
        let mut p_pfr = 0.0;
        let mut p_sfr_delivered = 0.0;
        for (plant, w) in self.plants.iter().zip(self.sfr_weights.iter()) {
            let pfr = dpv_pfr(f_pcc, plant, f0);
            let sfr_share = w * p_sfr_request;
            let requested = plant.p_base + pfr + sfr_share;
            let p_ref = dpv_reference(plant, pfr, sfr_share);
            let out = dpv_output(p_ref, plant);
            // Attribute any limit shortfall to the secondary channel; when no
            // limit binds this is exactly the allocated share (out == requested
            // bitwise), which keeps delivered-vs-requested SFR error at zero.
            p_sfr_delivered += sfr_share + (out - requested);
            p_pfr += pfr;
            p_dpv += out;
        }
        let scale = v_mag * v_mag;
        let p_avail: f64 = self.plants.iter().map(|p| p.p_mpp).sum::<f64>() - p_dpv;
        FeederStepResult {
            feedback: FeedbackPowers {
                p_kw: self.p_load * scale - p_dpv,
                q_kvar: self.q_load * scale,
                p_avail_kw: p_avail,
            },
            p_dpv_kw: p_dpv,
            p_pfr_kw: p_pfr,
            p_sfr_kw: p_sfr_delivered,
        }
    }
}

// ---------------------------------------------------------------------------
// Plant operations
// ---------------------------------------------------------------------------

/// Deadbanded droop response to the PCC frequency, kW. Positive below the
/// under-frequency deadband edge, negative above the over-frequency edge,
/// zero inside.
pub fn dpv_pfr(f_pcc: f64, plant: &DpvPlant, f0: f64) -> f64 {
    assert!(f_pcc.is_finite());
    let uf_edge = f0 - plant.db_uf;
    let of_edge = f0 + plant.db_of;
    if f_pcc < uf_edge {
        (uf_edge - f_pcc) / f0 * plant.droop_d
    } else if f_pcc > of_edge {
        (of_edge - f_pcc) / f0 * plant.droop_d
    } else {
        0.0
    }
}

/// Reference command: base plus both response channels, floored at the
/// plant minimum.
pub fn dpv_reference(plant: &DpvPlant, p_pfr: f64, p_sfr: f64) -> f64 {
    let sum = plant.p_base + p_pfr + p_sfr;
    sum.max(plant.p_min)
}

/// Physical output: reference constrained to [p_min, p_mpp].
pub fn dpv_output(p_ref: f64, plant: &DpvPlant) -> f64 {
    p_ref.clamp(plant.p_min, plant.p_mpp)
}

// ---------------------------------------------------------------------------
