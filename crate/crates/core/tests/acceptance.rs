//! Acceptance checklist for the engine as a whole.
//!
//! Each test covers one acceptance criterion and prints a single PASS/FAIL
//! line with the measured numbers, so `cargo test --test acceptance --
//! --nocapture` reads as a checklist. The 60 s standard-scenario artifacts
//! are simulated once and shared across criteria.

use std::hint::black_box;
use std::net::TcpListener;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdcs_core::anomaly::{stability_metric, AnomalyVerdict, Scheme};
use tdcs_core::bridge::BoundaryBridge;
use tdcs_core::config::ScenarioConfig;
use tdcs_core::cosim::{ground_truth_config, run};
use tdcs_core::extrap::{lagrange_weights, ExtrapolatorState, Method};
use tdcs_core::metrics::{mape, nmae};
use tdcs_core::pll::{synthesize_abc, PllState};
use tdcs_core::trace::{FineRow, VarId, VerdictRow};
use tdcs_core::wire::{decode, encode, run_dx_node, run_tx_node_on, Msg};

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

fn report(criterion: &str, ok: bool, detail: &str) {
    println!("[{}] {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// Shared standard-scenario artifacts
// ---------------------------------------------------------------------------

struct Artifacts {
    /// Matched-rate reference series (fine grid).
    gt_f: Vec<f64>,
    gt_dpv: Vec<f64>,
    /// Matched-rate reference for the low-pass method (the filter itself run
    /// at fine rate; for the polynomial methods the reference above applies).
    lpf_ref_f: Vec<f64>,
    hold_f: Vec<f64>,
    hold_dpv: Vec<f64>,
    linear_f: Vec<f64>,
    lpf_f: Vec<f64>,
    quad_f: Vec<f64>,
    quad_dpv: Vec<f64>,
    quad_fine: Vec<FineRow>,
    quad_verdicts: Vec<VerdictRow>,
    mw_verdicts: Vec<VerdictRow>,
}

fn artifacts() -> &'static Artifacts {
    static CELL: OnceLock<Artifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let base = ScenarioConfig::standard();
        let run_method = |method: Method, detector: Scheme| {
            let mut c = base.clone();
            c.method = method;
            c.detector = detector;
            run(&c).expect("standard scenario run")
        };

        let gt = run(&ground_truth_config(&base)).expect("reference run");
        let (gt_f, gt_dpv) = (gt.fine_f_pcc(), gt.fine_p_dpv());
        drop(gt);

        let mut lpf_cfg = base.clone();
        lpf_cfg.method = Method::Lpf;
        let lpf_ref = run(&ground_truth_config(&lpf_cfg)).expect("filter reference run");
        let lpf_ref_f = lpf_ref.fine_f_pcc();
        drop(lpf_ref);

        let hold = run_method(Method::Hold, Scheme::EwmaRtta);
        let (hold_f, hold_dpv) = (hold.fine_f_pcc(), hold.fine_p_dpv());
        drop(hold);
        let linear_f = run_method(Method::Linear, Scheme::EwmaRtta).fine_f_pcc();
        let lpf_f = run_method(Method::Lpf, Scheme::EwmaRtta).fine_f_pcc();
        let quad = run_method(Method::Quadratic, Scheme::EwmaRtta);
        let mw_verdicts = run_method(Method::Quadratic, Scheme::MovingWindow).verdicts;

        Artifacts {
            gt_f,
            gt_dpv,
            lpf_ref_f,
            hold_f,
            hold_dpv,
            linear_f,
            lpf_f,
            quad_f: quad.fine_f_pcc(),
            quad_dpv: quad.fine_p_dpv(),
            quad_fine: quad.fine,
            quad_verdicts: quad.verdicts,
            mw_verdicts,
        }
    })
}

const EVENT_TIMES: [f64; 3] = [20.0, 20.08, 40.0];

fn near_event(t: f64) -> bool {
    EVENT_TIMES.iter().any(|e| (t - e).abs() < 1e-9)
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn c01_three_node_worked_example() {
    let w = lagrange_weights(25.0, [0.0, 10.0, 20.0]).unwrap();
    let weights_exact = w == [0.375, -1.25, 1.875];
    let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
    st.push_sample(0.0, -18.5).unwrap();
    st.push_sample(10.0, -18.3).unwrap();
    st.push_sample(20.0, -18.0).unwrap();
    let y = st.predict(25.0, -18.0).unwrap();
    let ok = weights_exact && (y - (-17.8125)).abs() < 1e-9 && (y - (-17.81)).abs() < 0.01;
    report(
        "01 three-node worked example",
        ok,
        &format!("weights {w:?}, predicted angle {y} deg"),
    );
}

#[test]
fn c02_polynomial_exactness_and_order() {
    // Exact on quadratics.
    let f = |t: f64| 1.7 * t * t - 0.4 * t + 2.9;
    let mut st = ExtrapolatorState::new(Method::Quadratic, 0.01, true);
    for t in [0.0, 0.01, 0.02] {
        st.push_sample(t, f(t)).unwrap();
    }
    let mut worst_rel: f64 = 0.0;
    for k in 1..=40 {
        let tau = 0.02 + 2.5e-4 * f64::from(k);
        let y = st.predict(tau, f(0.02)).unwrap();
        worst_rel = worst_rel.max((y - f(tau)).abs() / f(tau).abs());
    }

    // Third-order contraction on a sine as the node spacing halves.
    let g = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
    let max_err = |dt: f64| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let t0 = f64::from(i) / 200.0;
            let nodes = [t0 - 2.0 * dt, t0 - dt, t0];
            for k in 1..=20 {
                let tau = t0 + dt * f64::from(k) / 20.0;
                let w = lagrange_weights(tau, nodes).unwrap();
                let y = w[0] * g(nodes[0]) + w[1] * g(nodes[1]) + w[2] * g(nodes[2]);
                worst = worst.max((y - g(tau)).abs());
            }
        }
        worst
    };
    let errs: Vec<f64> = [0.020, 0.010, 0.005, 0.0025].iter().map(|dt| max_err(*dt)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|p| p[0] / p[1]).collect();
    let ok = worst_rel < 1e-9 && ratios.iter().all(|r| (6.0..=10.0).contains(r));
    report(
        "02 polynomial exactness and cubic order",
        ok,
        &format!("worst quadratic rel err {worst_rel:.2e}, halving ratios {ratios:?}"),
    );
}

#[test]
fn c03_pll_locks_and_relocks() {
    let pll_cfg = ScenarioConfig::standard().distribution.pll;
    let mut pll = PllState::new(
        pll_cfg.kp,
        pll_cfg.ki,
        60.0,
        0.0,
        pll_cfg.f_filter_tau_s,
        pll_cfg.amp_floor_pu,
    );
    let omega0 = 2.0 * std::f64::consts::PI * 60.0;
    let dt = 1e-4;
    let mut locked = true;
    let mut f_steady = 0.0;
    for k in 0..10_000u32 {
        let tau = f64::from(k) * dt;
        f_steady = pll.pll_step(&synthesize_abc(1.0, 0.0, omega0, tau), dt);
        if k >= 5_000 {
            locked &= (f_steady - 60.0).abs() < 1e-4;
        }
    }
    // Phase steps by -6 deg; the loop must settle again.
    let step = -6.0_f64.to_radians();
    let mut relocked = true;
    let mut f_after = 0.0;
    for k in 10_000..20_000u32 {
        let tau = f64::from(k) * dt;
        f_after = pll.pll_step(&synthesize_abc(1.0, step, omega0, tau), dt);
        if k >= 15_000 {
            relocked &= (f_after - 60.0).abs() < 1e-3;
        }
    }
    let ok = locked && relocked;
    report(
        "03 pll locks and re-locks",
        ok,
        &format!("steady f {f_steady} Hz, f after phase step {f_after} Hz"),
    );
}

#[test]
fn c04_frequency_error_ranking() {
    let a = artifacts();
    let hold = mape(&a.gt_f, &a.hold_f).unwrap();
    let linear = mape(&a.gt_f, &a.linear_f).unwrap();
    let lpf = mape(&a.lpf_ref_f, &a.lpf_f).unwrap();
    let quad = mape(&a.gt_f, &a.quad_f).unwrap();
    let spread = linear.max(lpf) / linear.min(lpf);
    let improvement = 1.0 - quad / hold;
    let ok = quad < linear
        && quad < lpf
        && linear < hold
        && lpf < hold
        && spread <= 10.0
        && improvement >= 0.90;
    report(
        "04 frequency-error ranking",
        ok,
        &format!(
            "MAPE_f% quadratic {quad:.3e} < linear {linear:.3e} ~ lpf {lpf:.3e} < hold {hold:.3e}; \
             linear/lpf spread {spread:.2}x, quadratic improvement {:.2}%",
            improvement * 100.0
        ),
    );
}

#[test]
fn c05_detector_comparison() {
    let a = artifacts();
    let reset_times: Vec<f64> = a
        .quad_verdicts
        .iter()
        .filter(|v| v.reset && v.var == VarId::V)
        .map(|v| v.t)
        .collect();
    let events_hit = EVENT_TIMES
        .iter()
        .all(|e| reset_times.iter().any(|t| (t - e).abs() < 1e-9));
    let total_resets = reset_times.len();
    let outliers = a.quad_verdicts.iter().filter(|v| v.outlier).count();
    let stability = 1.0 - outliers as f64 / a.quad_verdicts.len() as f64;
    let angle_fp = |vs: &[VerdictRow]| {
        vs.iter()
            .filter(|v| v.outlier && v.var == VarId::Theta && !near_event(v.t))
            .count()
    };
    let (ewma_fp, mw_fp) = (angle_fp(&a.quad_verdicts), angle_fp(&a.mw_verdicts));
    let ok = events_hit && total_resets <= 15 && stability >= 0.997 && mw_fp > ewma_fp;
    report(
        "05 detector comparison",
        ok,
        &format!(
            "all 3 events flagged: {events_hit}; resets {total_resets} (budget 15); \
             stability {stability:.6}; angle false positives moving-window {mw_fp} vs ewma {ewma_fp}"
        ),
    );
}

#[test]
fn c06_response_error_propagation() {
    let a = artifacts();
    let hold = nmae(&a.gt_dpv, &a.hold_dpv).unwrap();
    let quad = nmae(&a.gt_dpv, &a.quad_dpv).unwrap();
    let gain = hold / quad;

    // Delivered secondary response is exact whenever the plant reference
    // (base + primary + requested secondary) stays inside its limits.
    let plant = &ScenarioConfig::standard().distribution.plants[0];
    let p_base = plant.p_mpp_kw - plant.reserve_kw;
    let (mut requested, mut delivered) = (Vec::new(), Vec::new());
    for row in &a.quad_fine {
        let reference = p_base + row.p_pfr + row.p_sfr_request;
        if plant.p_min_kw <= reference && reference <= plant.p_mpp_kw {
            requested.push(row.p_sfr_request);
            delivered.push(row.p_sfr);
        }
    }
    let sfr_nmae = nmae(&requested, &delivered).unwrap();
    let ok = gain >= 10.0 && !requested.is_empty() && sfr_nmae == 0.0;
    report(
        "06 response-error propagation",
        ok,
        &format!(
            "pv-output nMAE hold/quadratic {gain:.1}x (budget 10x); \
             delivered-secondary nMAE {sfr_nmae} over {} in-headroom steps",
            requested.len()
        ),
    );
}

#[test]
fn c07_matched_rate_identity() {
    let mut c = ScenarioConfig::standard();
    c.timesteps.t_t = 1e-3;
    c.timesteps.t_d = 1e-3;
    c.timesteps.duration = 2.0;
    let trace = run(&c).unwrap();
    let pass_through = trace.fine.len() == trace.coarse.len()
        && trace
            .fine
            .iter()
            .zip(trace.coarse.iter())
            .all(|(f, co)| f.v_hat == co.v && f.theta_hat == co.theta);
    let f = trace.fine_f_pcc();
    let v = trace.fine_v_hat();
    let self_zero = mape(&f, &f).unwrap() == 0.0 && nmae(&v, &v).unwrap() == 0.0;
    let ok = pass_through && self_zero;
    report(
        "07 matched-rate identity",
        ok,
        &format!(
            "bridge == boundary on {} exchanges: {pass_through}; self-metrics zero: {self_zero}",
            trace.coarse.len()
        ),
    );
}

#[test]
fn c08_two_process_equivalence() {
    let config = ScenarioConfig::standard();
    let single = run(&config).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let tx_cfg = config.clone();
    let tx_thread = std::thread::spawn(move || run_tx_node_on(listener, &tx_cfg));
    let dx_trace = run_dx_node(&config, addr).expect("dx node");
    let tx_trace = tx_thread.join().unwrap().expect("tx node");

    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
    let coarse_ok = tx_trace.coarse.len() == single.coarse.len()
        && tx_trace.coarse.iter().zip(&single.coarse).all(|(a, b)| {
            close(a.v, b.v)
                && close(a.theta, b.theta)
                && close(a.f_sys, b.f_sys)
                && close(a.ace, b.ace)
                && close(a.p_sfr_total, b.p_sfr_total)
        });
    let fine_ok = dx_trace.fine.len() == single.fine.len()
        && dx_trace.fine.iter().zip(&single.fine).all(|(a, b)| {
            close(a.v_hat, b.v_hat)
                && close(a.theta_hat, b.theta_hat)
                && close(a.f_pcc, b.f_pcc)
                && close(a.p_dpv, b.p_dpv)
                && close(a.p_fb, b.p_fb)
        });

    // Frame round trip on randomized payloads.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut roundtrip_ok = true;
    for _ in 0..10_000 {
        let f: [f64; 4] = [
            rng.gen_range(-1e6..1e6),
            rng.gen_range(-1e6..1e6),
            rng.gen_range(-1e6..1e6),
            rng.gen_range(-1e6..1e6),
        ];
        let msg = match rng.gen_range(0..4) {
            0 => Msg::Handshake {
                t_t: f[0],
                t_d: f[1],
                duration: f[2],
            },
            1 => Msg::TxToDx {
                t: f[0],
                v_mag: f[1],
                theta: f[2],
                p_sfr_request_kw: f[3],
            },
            2 => Msg::DxToTx {
                t: f[0],
                p_kw: f[1],
                q_kvar: f[2],
                p_avail_kw: f[3],
            },
            _ => Msg::End { t: f[0] },
        };
        let seq: u32 = rng.gen();
        match decode(&encode(&msg, seq)) {
            Ok((m, s)) => roundtrip_ok &= m == msg && s == seq,
            Err(_) => roundtrip_ok = false,
        }
    }

    let ok = coarse_ok && fine_ok && roundtrip_ok;
    report(
        "08 two-process equivalence",
        ok,
        &format!(
            "coarse match {coarse_ok}, fine match {fine_ok}, 10000 frame round-trips {roundtrip_ok}"
        ),
    );
}

#[test]
fn c09_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=200);
        let actual: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.gen_range(0.5..100.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let predicted: Vec<f64> = actual.iter().map(|a| a + rng.gen_range(-1.0..1.0)).collect();

        let brute_mape = actual
            .iter()
            .zip(&predicted)
            .map(|(a, p)| ((a - p) / a).abs())
            .sum::<f64>()
            / n as f64
            * 100.0;
        let d_mape = (mape(&actual, &predicted).unwrap() - brute_mape).abs();

        let max_abs = actual.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
        let brute_nmae = actual
            .iter()
            .zip(&predicted)
            .map(|(a, p)| (a - p).abs())
            .sum::<f64>()
            / n as f64
            / max_abs;
        let d_nmae = (nmae(&actual, &predicted).unwrap() - brute_nmae).abs();

        worst = worst.max(d_mape).max(d_nmae);
        ok &= d_mape < 1e-12 && d_nmae < 1e-12;
    }

    // Stability is an exact recount.
    for _ in 0..20 {
        let n = rng.gen_range(1..=500);
        let verdicts: Vec<AnomalyVerdict> = (0..n)
            .map(|_| AnomalyVerdict {
                is_outlier: rng.gen_bool(0.1),
                delta: rng.gen_range(-1.0..1.0),
                threshold: rng.gen_range(0.0..1.0),
            })
            .collect();
        let outliers = verdicts.iter().filter(|v| v.is_outlier).count();
        ok &= stability_metric(&verdicts).unwrap() == 1.0 - outliers as f64 / n as f64;
    }
    report(
        "09 metric oracles",
        ok,
        &format!("worst disagreement vs brute force {worst:.2e} over 100 series"),
    );
}

#[test]
fn c10_exchange_ratio_sensitivity() {
    let base = ScenarioConfig::standard();
    let mut by_ratio = Vec::new();
    for ratio in [10u32, 50, 100, 200] {
        let mut c = base.clone();
        c.timesteps.t_d = c.timesteps.t_t / f64::from(ratio);
        c.validate().unwrap();
        let reference = run(&ground_truth_config(&c)).unwrap().fine_f_pcc();
        let trace = run(&c).unwrap();
        by_ratio.push((ratio, mape(&reference, &trace.fine_f_pcc()).unwrap()));
    }
    let anchor = by_ratio[0].1;
    let ok = by_ratio
        .iter()
        .all(|(_, m)| *m <= 5.0 * anchor && *m >= anchor / 5.0);
    let shown: Vec<String> = by_ratio
        .iter()
        .map(|(r, m)| format!("{r}:{m:.3e}"))
        .collect();
    report(
        "10 exchange-ratio sensitivity",
        ok,
        &format!("MAPE_f% flat within 5x of the ratio-10 value: {}", shown.join(", ")),
    );
}

#[test]
fn c11_bridge_overhead() {
    let config = ScenarioConfig::standard();
    let r = config.ratio();
    let mut bridge = BoundaryBridge::new(
        config.build_extrapolator(),
        config.build_detector(),
        config.rate_limit_enabled,
        r,
    );
    let t_t = config.timesteps.t_t;
    let t_d = config.timesteps.t_d;
    let boundary = |t: f64| (1.0 + 0.01 * (3.1 * t).sin(), -0.32 + 0.02 * (2.7 * t).sin());

    // Warm until the full-order path is active.
    for k in 0..4u32 {
        let t = f64::from(k) * t_t;
        let (v, th) = boundary(t);
        bridge.on_exchange(t, v, th).unwrap();
    }

    let exchanges = 2_000u32;
    let start = Instant::now();
    for k in 4..4 + exchanges {
        let t = f64::from(k) * t_t;
        let (v, th) = boundary(t);
        black_box(bridge.on_exchange(t, v, th).unwrap());
        for j in 0..r {
            let tau = t + f64::from(j) * t_d;
            black_box(bridge.fine_step(tau).unwrap());
        }
    }
    let per_step = start.elapsed().as_secs_f64() / f64::from(exchanges * r);
    let budget = 0.05 * 100e-6;
    let ok = per_step < budget;
    report(
        "11 bridge overhead",
        ok,
        &format!(
            "{:.0} ns per fine step including amortized exchange cost (budget {:.0} ns)",
            per_step * 1e9,
            budget * 1e9
        ),
    );
}
