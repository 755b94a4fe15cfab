//! Run artifacts: in-memory series for metric computation and CSV writers.
//!
//! Angles are radians everywhere in memory and degrees in the CSV files.
//! Numbers are written with 12 significant digits (printf %g style) and LF
//! line endings, so traces diff cleanly across platforms.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::angle::rad_to_deg;

// ---------------------------------------------------------------------------
// Rows
// ---------------------------------------------------------------------------

/// One fine-step record at the feeder head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineRow {
    pub t: f64,
    /// Extrapolated boundary voltage, pu.
    pub v_hat: f64,
    /// Extrapolated boundary angle, rad.
    pub theta_hat: f64,
    /// PLL frequency estimate, Hz.
    pub f_pcc: f64,
    /// Total plant output, kW.
    pub p_dpv: f64,
    /// Total primary response, kW.
    pub p_pfr: f64,
    /// Total secondary response delivered, kW.
    pub p_sfr: f64,
    /// Feeder-head active feedback, kW.
    pub p_fb: f64,
    /// Feeder-head reactive feedback, kvar.
    pub q_fb: f64,
    /// Remaining plant headroom, kW.
    pub p_avail: f64,
    /// Secondary request allocated to the plant this interval, kW.
    /// Not part of the CSV schema; kept for delivered-vs-requested checks.
    pub p_sfr_request: f64,
}

/// One coarse-exchange record at the transmission boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseRow {
    pub t: f64,
    /// Boundary voltage sent downstream, pu.
    pub v: f64,
    /// Boundary angle sent downstream, rad (wrapped).
    pub theta: f64,
    pub f_sys: f64,
    /// Area control error, MW.
    pub ace: f64,
    /// Total secondary request, MW.
    pub p_sfr_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarId {
    V,
    Theta,
}

impl VarId {
    pub fn name(self) -> &'static str {
        match self {
            VarId::V => "v",
            VarId::Theta => "theta",
        }
    }
}

/// One detector verdict; two per exchange (one per boundary variable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictRow {
    pub t: f64,
    pub var: VarId,
    /// Increment tested, pu or rad.
    pub delta: f64,
    /// Threshold in force when tested.
    pub th: f64,
    pub outlier: bool,
    /// True when this exchange reset the extrapolation buffers (set on both
    /// variables' rows for the exchange).
    pub reset: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub coarse: Vec<CoarseRow>,
    pub fine: Vec<FineRow>,
    pub verdicts: Vec<VerdictRow>,
}

impl RunTrace {
    /// Number of exchanges at which the bridge reset its buffers.
    pub fn reset_count(&self) -> usize {
        self.verdicts
            .iter()
            .filter(|v| v.reset && v.var == VarId::V)
            .count()
    }

    pub fn fine_f_pcc(&self) -> Vec<f64> {
        self.fine.iter().map(|r| r.f_pcc).collect()
    }

    pub fn fine_theta_hat(&self) -> Vec<f64> {
        self.fine.iter().map(|r| r.theta_hat).collect()
    }

    pub fn fine_v_hat(&self) -> Vec<f64> {
        self.fine.iter().map(|r| r.v_hat).collect()
    }

    pub fn fine_p_dpv(&self) -> Vec<f64> {
        self.fine.iter().map(|r| r.p_dpv).collect()
    }
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Formats with 12 significant digits, choosing fixed or exponential notation
/// the way printf %.12g does, with trailing zeros trimmed.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Render once in exponential form to learn the rounded decimal exponent.
    let sci = format!("{:.11e}", x);
    let (_, exp_str) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp_str.parse().expect("decimal exponent");
    if !(-4..12).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').unwrap();
        let trimmed = trim_decimal(mantissa);
        format!("{}e{}{:02}", trimmed, if exp < 0 { "-" } else { "+" }, exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_decimal(&format!("{:.*}", decimals, x))
    }
}

fn trim_decimal(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

pub fn write_fine_csv(path: &Path, rows: &[FineRow]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"t,v_hat,theta_hat,f_pcc,p_dpv,p_pfr,p_sfr,p_fb,q_fb,p_avail\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_g12(r.t),
            fmt_g12(r.v_hat),
            fmt_g12(rad_to_deg(r.theta_hat)),
            fmt_g12(r.f_pcc),
            fmt_g12(r.p_dpv),
            fmt_g12(r.p_pfr),
            fmt_g12(r.p_sfr),
            fmt_g12(r.p_fb),
            fmt_g12(r.q_fb),
            fmt_g12(r.p_avail),
        )?;
    }
    w.flush()
}

pub fn write_coarse_csv(path: &Path, rows: &[CoarseRow]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"t,v,theta,f_sys,ace,p_sfr_total\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_g12(r.t),
            fmt_g12(r.v),
            fmt_g12(rad_to_deg(r.theta)),
            fmt_g12(r.f_sys),
            fmt_g12(r.ace),
            fmt_g12(r.p_sfr_total),
        )?;
    }
    w.flush()
}

pub fn write_verdicts_csv(path: &Path, rows: &[VerdictRow]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"t,var,delta,th,outlier,reset\n")?;
    for r in rows {
        // Angle deltas and thresholds are degrees in the file, like every
        // other angle-valued column.
        let (delta, th) = match r.var {
            VarId::V => (r.delta, r.th),
            VarId::Theta => (rad_to_deg(r.delta), rad_to_deg(r.th)),
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_g12(r.t),
            r.var.name(),
            fmt_g12(delta),
            fmt_g12(th),
            r.outlier as u8,
            r.reset as u8,
        )?;
    }
    w.flush()
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g12_fixed_point_forms() {
        assert_eq!(fmt_g12(0.0), "0");
        assert_eq!(fmt_g12(60.0), "60");
        assert_eq!(fmt_g12(-18.5), "-18.5");
        assert_eq!(fmt_g12(0.01), "0.01");
        assert_eq!(fmt_g12(0.0001), "0.0001");
        assert_eq!(fmt_g12(1.0 / 3.0), "0.333333333333");
    }

    #[test]
    fn g12_exponential_forms() {
        assert_eq!(fmt_g12(1e-5), "1e-05");
        assert_eq!(fmt_g12(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_g12(-2.5e-7), "-2.5e-07");
    }

    #[test]
    fn g12_twelve_significant_digits() {
        assert_eq!(fmt_g12(59.9999999999), "59.9999999999");
        assert_eq!(fmt_g12(59.99999999999999), "60");
        assert_eq!(fmt_g12(1.234567890123456), "1.23456789012");
    }

    #[test]
    fn g12_round_trips_within_tolerance() {
        let mut state = 0x1234_5678_9abc_def0u64;
        for _ in 0..2000 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let mag = ((state >> 8) % 24) as i32 - 12;
            let x = ((state % 2_000_001) as f64 / 1_000_000.0 - 1.0) * 10f64.powi(mag);
            let back: f64 = fmt_g12(x).parse().unwrap();
            if x == 0.0 {
                assert_eq!(back, 0.0);
            } else {
                assert!(
                    ((back - x) / x).abs() < 1e-11,
                    "{x} -> {} -> {back}",
                    fmt_g12(x)
                );
            }
        }
    }

    #[test]
    fn csv_headers_match_interface() {
        let dir = tempfile::tempdir().unwrap();
        let fine_path = dir.path().join("fine.csv");
        let coarse_path = dir.path().join("coarse.csv");
        let verdicts_path = dir.path().join("verdicts.csv");
        write_fine_csv(&fine_path, &[]).unwrap();
        write_coarse_csv(&coarse_path, &[]).unwrap();
        write_verdicts_csv(&verdicts_path, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&fine_path).unwrap(),
            "t,v_hat,theta_hat,f_pcc,p_dpv,p_pfr,p_sfr,p_fb,q_fb,p_avail\n"
        );
        assert_eq!(
            std::fs::read_to_string(&coarse_path).unwrap(),
            "t,v,theta,f_sys,ace,p_sfr_total\n"
        );
        assert_eq!(
            std::fs::read_to_string(&verdicts_path).unwrap(),
            "t,var,delta,th,outlier,reset\n"
        );
    }

    #[test]
    fn csv_angles_are_degrees_with_lf_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coarse.csv");
        let row = CoarseRow {
            t: 0.01,
            v: 1.0,
            theta: std::f64::consts::PI,
            f_sys: 60.0,
            ace: 0.0,
            p_sfr_total: 0.0,
        };
        write_coarse_csv(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().nth(1).unwrap(), "0.01,1,180,60,0,0");
    }

    #[test]
    fn verdict_rows_carry_variable_names_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.csv");
        let rows = [
            VerdictRow {
                t: 0.02,
                var: VarId::V,
                delta: -0.8,
                th: 0.1,
                outlier: true,
                reset: true,
            },
            VerdictRow {
                t: 0.02,
                var: VarId::Theta,
                delta: std::f64::consts::PI / 180.0,
                th: std::f64::consts::PI / 90.0,
                outlier: false,
                reset: true,
            },
        ];
        write_verdicts_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0.02,v,-0.8,0.1,1,1");
        assert_eq!(text.lines().nth(2).unwrap(), "0.02,theta,1,2,0,1");
    }

    #[test]
    fn reset_count_counts_exchanges_not_rows() {
        let v = |reset| VerdictRow {
            t: 0.0,
            var: VarId::V,
            delta: 0.0,
            th: 0.0,
            outlier: false,
            reset,
        };
        let th = |reset| VerdictRow {
            t: 0.0,
            var: VarId::Theta,
            delta: 0.0,
            th: 0.0,
            outlier: false,
            reset,
        };
        let trace = RunTrace {
            coarse: vec![],
            fine: vec![],
            verdicts: vec![v(true), th(true), v(false), th(false), v(true), th(true)],
        };
        assert_eq!(trace.reset_count(), 2);
    }
}
