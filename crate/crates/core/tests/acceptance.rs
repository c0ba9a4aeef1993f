//! Acceptance criteria. Runs as a plain binary so every verdict line is printed.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;

use common::*;
use dualrate::freqresp::{dr_bode, exclude_poles, log_grid};
use dualrate::lifting::{lift_digital, lift_zoh_plant, DualRateScheme};
use dualrate::loops::{assemble, stability, Channel, OutputRate, Strategy};
use dualrate::qft::gain_scan;
use dualrate::report;
use dualrate::scenario::{builtin, RunOptions, ScenarioFile};
use dualrate::simulation::{metrics, run, run_batch, RunOutput, Scenario};
use dualrate::ugv::run_ugv;
use nalgebra::DVector;
use rand::Rng;

type Verdict = (bool, String);

fn file(name: &str) -> ScenarioFile {
    ScenarioFile::parse(builtin(name).unwrap()).unwrap()
}

fn mpm() -> RunOptions {
    RunOptions { mpm: true, ..Default::default() }
}

fn scenario(f: &ScenarioFile, opts: &RunOptions, s: Strategy) -> Scenario {
    f.scenarios(opts, &[s]).unwrap().remove(0)
}

fn bandwidth(f: &ScenarioFile, opts: &RunOptions, s: Strategy) -> Option<f64> {
    let lcl = assemble(&f.setup(opts).unwrap(), s, Channel::YvsR, OutputRate::N1Slots).unwrap();
    let view = lcl.realization().unwrap();
    dr_bode(&view, &exclude_poles(&f.grid(None), &view)).unwrap().bandwidth()
}

fn show(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.4}"))
}

fn rho(f: &ScenarioFile, opts: &RunOptions, s: Strategy) -> f64 {
    stability(&assemble(&f.setup(opts).unwrap(), s, Channel::YvsR, OutputRate::N1Slots).unwrap()).spectral_radius
}

fn lifting_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let cases = 260;
    for seed in 0..cases {
        let mut r = rng(seed);
        let digital = seed % 5 >= 3;
        let n = r.random_range(1..=4);
        let (nu, ny) = coprime_pair(&mut r);
        let sys = stable_siso(&mut r, n, 0.1, digital);
        let scheme = DualRateScheme::new(0.1, nu, ny).unwrap();
        let lr = if digital { lift_digital(&sys, &scheme) } else { lift_zoh_plant(&sys, &scheme) }.unwrap();
        let u: Vec<f64> = (0..30 * nu).map(|_| r.random_range(-1.0..1.0)).collect();
        let direct = direct_multirate(&sys, &scheme, &u, !digital);
        let lifted = flatten(&lr.simulate(&stack(&u, nu)));
        assert_eq!(direct.len(), lifted.len());
        for (a, b) in direct.iter().zip(&lifted) {
            worst = worst.max((a - b).abs());
        }
    }
    (worst < 1e-10, format!("{cases} random systems, max abs error {worst:.2e} (tol 1e-10)"))
}

fn frequency_oracle() -> Verdict {
    let (mut mag_err, mut ph_err): (f64, f64) = (0.0, 0.0);
    let cases = 60;
    for seed in 0..cases {
        let mut r = rng(1000 + seed);
        let n = r.random_range(1..=3);
        let (nu, ny) = loop {
            let p = coprime_pair(&mut r);
            if p != (1, 1) {
                break p;
            }
        };
        let sys = stable_siso(&mut r, n, 0.1, false);
        let scheme = DualRateScheme::new(0.1, nu, ny).unwrap();
        let lr = lift_zoh_plant(&sys, &scheme).unwrap();
        let t0 = scheme.metaperiod();
        let w = r.random_range(0.05..0.9) * PI / t0;
        let metaperiods = 2000;
        let u: Vec<DVector<f64>> = (0..metaperiods)
            .map(|k| DVector::from_fn(nu, |p, _| (w * (k as f64 * t0 + p as f64 * scheme.t_u())).cos()))
            .collect();
        let y = lr.simulate(&u);
        let start = metaperiods * 3 / 4;
        let mut fit = num_complex::Complex64::new(0.0, 0.0);
        for q in 0..ny {
            let t: Vec<f64> = (start..metaperiods).map(|k| k as f64 * t0 + q as f64 * scheme.t_y()).collect();
            let yq: Vec<f64> = (start..metaperiods).map(|k| y[k][q]).collect();
            fit += phasor(&t, &yq, w);
        }
        let h = dr_bode(&lr, &[w]).unwrap().values[0];
        mag_err = mag_err.max((fit.norm() - h.norm()).abs() / h.norm());
        let d = (fit / h).arg().to_degrees().abs();
        ph_err = ph_err.max(d);
    }
    (
        mag_err < 1e-3 && ph_err < 0.1,
        format!("{cases} systems, worst magnitude rel error {mag_err:.2e} (tol 1e-3), worst phase error {ph_err:.2e} deg (tol 0.1)"),
    )
}

fn ic_equals_fast_without_mismatch() -> Verdict {
    let f = file("ex1");
    let opts = RunOptions::default();
    let fast = run(&scenario(&f, &opts, Strategy::FastSr)).unwrap();
    let ic = run(&scenario(&f, &opts, Strategy::Ic)).unwrap();
    let sub = f.setup(&opts).unwrap().substeps;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k * sub < fast.fine.y.len() {
        worst = worst.max((fast.fine.y[k * sub] - ic.fine.y[k * sub]).abs());
        k += 1;
    }
    (worst < 1e-9, format!("{k} control instants, max |y_ic - y_fast| {worst:.2e} (tol 1e-9)"))
}

fn mbdr_tracks_target() -> Verdict {
    let f = file("ex1");
    let opts = RunOptions::default();
    let mut sc = scenario(&f, &opts, Strategy::Mbdr);
    sc.horizon = 60.0;
    let out = run(&sc).unwrap();
    let per = sc.setup.n * sc.setup.substeps;
    let t0 = sc.setup.metaperiod();
    let (a, b, c) = ccf(&[1.5 * 1.6, 1.5 * 8.0, 1.5 * 2.5], &[1.0, 4.4, 12.75, 3.75]);
    let inner = 3000;
    let h = t0 / inner as f64;
    let mut x = DVector::zeros(3);
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k * per < out.fine.y.len() {
        let ym = (&c * &x)[0];
        worst = worst.max((out.fine.y[k * per] - ym).abs());
        for _ in 0..inner {
            x = rk4_step(&a, &b, &x, 1.0, h);
        }
        k += 1;
    }
    (worst < 1e-6, format!("{k} slow instants over 60 s, max |y - y_M| {worst:.2e} (tol 1e-6)"))
}

fn ic_slower_than_mbdr() -> Verdict {
    let f = file("ex1");
    let o = mpm();
    let ts = |s| metrics(&run(&scenario(&f, &o, s)).unwrap().fine, None).unwrap().settling_time_2pct;
    let (ts_ic, ts_mbdr) = (ts(Strategy::Ic), ts(Strategy::Mbdr));
    let (bw_ic, bw_mbdr) = (bandwidth(&f, &o, Strategy::Ic), bandwidth(&f, &o, Strategy::Mbdr));
    let ts_ok = ts_ic > 2.0 * ts_mbdr;
    let bw_ok = matches!((bw_ic, bw_mbdr), (Some(a), Some(b)) if a < b);
    (
        ts_ok && bw_ok,
        format!("settling IC {ts_ic:.2} s vs MBDR {ts_mbdr:.2} s; bandwidth IC {} vs MBDR {} rad/s", show(bw_ic), show(bw_mbdr)),
    )
}

fn ex1_qft() -> Verdict {
    let f = file("ex1");
    let o = mpm();
    let setup = f.setup(&o).unwrap();
    let spec = f.qft_specification().unwrap();
    let gains: Vec<f64> = (0..=20).map(|i| 1.0 + 0.05 * i as f64).collect();
    let scan = gain_scan(&setup, Strategy::Mbdr, &spec, &gains).unwrap();
    let mbdr_gain = scan.iter().find(|r| r.report.pass && r.stable).map(|r| r.gain);
    let ic300 = stability(&assemble(&setup.clone().with_gain(300.0), Strategy::Ic, Channel::YvsR, OutputRate::N1Slots).unwrap())
        .spectral_radius;
    let ic_gains = log_grid(1.0, 300.0, 8);
    let ic_scan = gain_scan(&setup, Strategy::Ic, &spec, &ic_gains).unwrap();
    let ic_low = ic_scan.iter().all(|r| r.report.disturbance_violations.iter().any(|w| *w < 0.1));
    (
        mbdr_gain.is_some() && ic300 > 1.0 && ic_low,
        format!(
            "MBDR passes at gain {}; IC x300 spectral radius {ic300:.3}; IC low-frequency delta violation at all {} gains: {ic_low}",
            show(mbdr_gain),
            ic_gains.len()
        ),
    )
}

fn disturbance_amplitude(out: &RunOutput, omega: f64) -> (f64, f64) {
    let n = out.fine.t.len();
    let from = n * 3 / 4;
    let (h, _) = phasor_with_offset(&out.fine.t[from..], &out.fine.y[from..], omega);
    let tail = &out.fine.y[from..];
    let p2p = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    (h.norm(), p2p / 2.0)
}

fn disturbance_rejection() -> Verdict {
    let f = file("ex1");
    let o = RunOptions { mpm: true, disturbance: true, ..Default::default() };
    let omega = f.experiment.disturbance.as_ref().unwrap().omega_rad_s;
    let outs = run_batch(&f.scenarios(&o, &[Strategy::Ic, Strategy::Mbdr]).unwrap());
    let ic = disturbance_amplitude(outs[0].as_ref().unwrap(), omega);
    let mbdr = disturbance_amplitude(outs[1].as_ref().unwrap(), omega);
    (
        ic.0 > 3.0 * mbdr.0 && ic.1 > 3.0 * mbdr.1,
        format!(
            "fitted amplitude IC {:.4} vs MBDR {:.4} (ratio {:.1}); half peak-to-peak IC {:.4} vs MBDR {:.4}",
            ic.0,
            mbdr.0,
            ic.0 / mbdr.0,
            ic.1,
            mbdr.1
        ),
    )
}

fn ex2() -> Verdict {
    let f = file("ex2");
    let nominal = RunOptions::default();
    let mut a_ok = true;
    let mut a = vec![];
    for s in Strategy::ALL {
        let lcl = assemble(&f.setup(&nominal).unwrap(), s, Channel::YvsR, OutputRate::N1Slots).unwrap();
        let st = stability(&lcl);
        let dc = lcl.dc_gain().unwrap();
        a_ok &= st.stable && (dc - 1.0).abs() < 1e-6;
        a.push(format!("{s} rho {:.3} dc {dc:.6}", st.spectral_radius));
    }

    let o = mpm();
    let setup = f.setup(&o).unwrap();
    let spec = f.qft_specification().unwrap();
    let fast_rho = rho(&f, &o, Strategy::FastSr);
    let ic_row = gain_scan(&setup, Strategy::Ic, &spec, &[1.0]).unwrap().remove(0);
    let mbdr_row = gain_scan(&setup, Strategy::Mbdr, &spec, &[1.3]).unwrap().remove(0);
    let hit = |w: f64| mbdr_row.report.stability_violations.iter().any(|v| (v - w).abs() < 1e-9);
    let b_fast = fast_rho > 1.0;
    let b_ic = ic_row.stable && ic_row.report.pass;
    let b_mbdr = hit(1.7) && hit(2.0);

    let alt = RunOptions { real_plant: Some("alternative".into()), ..Default::default() };
    let (ic_alt, mbdr_alt) = (rho(&f, &alt, Strategy::Ic), rho(&f, &alt, Strategy::Mbdr));
    let c_ok = ic_alt >= 1.0 && mbdr_alt < 1.0;

    let b_ok = b_fast && b_ic && b_mbdr;
    (
        a_ok && b_ok && c_ok,
        format!(
            "(a) {} [{}]; (b) {}: fast rho {fast_rho:.3}, IC stable {} qft pass {} (delta violations {}), MBDR x1.3 mu violations {:?}; (c) {}: IC rho {ic_alt:.3}, MBDR rho {mbdr_alt:.3}",
            if a_ok { "ok" } else { "FAIL" },
            a.join(", "),
            if b_ok { "ok" } else { "FAIL" },
            ic_row.stable,
            ic_row.report.pass,
            ic_row.report.disturbance_violations.len(),
            mbdr_row.report.stability_violations,
            if c_ok { "ok" } else { "FAIL" },
        ),
    )
}

fn ugv() -> Verdict {
    let f = file("ugv");
    let mut ok = true;
    let mut parts = vec![];
    for nonlinear in [false, true] {
        let o = RunOptions { mpm: true, disturbance: true, nonlinear, ..Default::default() };
        let r = |s| run_ugv(&f.ugv_scenario(&o, s).unwrap()).unwrap();
        let (ic, mbdr) = (r(Strategy::Ic), r(Strategy::Mbdr));
        ok &= mbdr.rms_path_error < ic.rms_path_error;
        parts.push(format!(
            "nonlinear {nonlinear}: rms IC {:.4} m vs MBDR {:.4} m",
            ic.rms_path_error, mbdr.rms_path_error
        ));
    }
    let o = RunOptions { mpm: true, disturbance: true, ..Default::default() };
    let fast = run_ugv(&f.ugv_scenario(&o, Strategy::FastSr).unwrap()).unwrap().sensor_reads;
    let mbdr = run_ugv(&f.ugv_scenario(&o, Strategy::Mbdr).unwrap()).unwrap().sensor_reads;
    let reads_ok = mbdr == fast / 3 || mbdr == fast / 3 + 1;
    ok &= reads_ok;
    parts.push(format!("sensor reads {mbdr} at N=3 vs {fast} at every T"));
    (ok, parts.join("; "))
}

fn artifacts() -> Vec<u8> {
    let mut bytes = vec![];
    let f = file("ex1");
    let src = builtin("ex1").unwrap();
    let o = RunOptions { mpm: true, disturbance: true, ..Default::default() };
    let prov = report::Provenance::new(&f.name, src, vec!["mpm".into(), "disturbance".into()]);
    for out in run_batch(&f.scenarios(&o, &Strategy::ALL).unwrap()) {
        let out = out.unwrap();
        bytes.extend(report::series_csv(&out.fine).unwrap());
        bytes.extend(report::json(&prov, &metrics(&out.fine, None).ok()).unwrap());
    }
    let setup = f.setup(&mpm()).unwrap();
    for s in Strategy::ALL {
        let view = assemble(&setup, s, Channel::YvsR, OutputRate::N1Slots).unwrap().realization().unwrap();
        bytes.extend(report::bode_csv(&dr_bode(&view, &exclude_poles(&f.grid(None), &view)).unwrap()).unwrap());
    }
    let spec = f.qft_specification().unwrap();
    let scan = gain_scan(&setup, Strategy::Mbdr, &spec, &[1.0, 1.8, 10.0]).unwrap();
    bytes.extend(report::gain_scan_csv(&scan).unwrap());
    bytes.extend(report::json(&prov, &scan).unwrap());
    let u = file("ugv");
    let run = run_ugv(&u.ugv_scenario(&o, Strategy::Mbdr).unwrap()).unwrap();
    bytes.extend(report::trajectory_csv(&run.trajectory).unwrap());
    bytes.extend(report::wheels_csv(&run.left, &run.right).unwrap());
    bytes
}

fn determinism() -> Verdict {
    let (a, b) = (artifacts(), artifacts());
    (
        a == b,
        format!("{} bytes, sha256 {} vs {}", a.len(), &report::sha256_hex(&a)[..16], &report::sha256_hex(&b)[..16]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("lifting matches direct multirate simulation", lifting_oracle),
        ("dual-rate frequency response matches sinusoidal steady state", frequency_oracle),
        ("IC equals fast single-rate without model mismatch", ic_equals_fast_without_mismatch),
        ("MBDR output follows the continuous target model", mbdr_tracks_target),
        ("IC is slower and narrower than MBDR under mismatch", ic_slower_than_mbdr),
        ("QFT verdicts for example 1", ex1_qft),
        ("disturbance rejection IC vs MBDR", disturbance_rejection),
        ("example 2 stability and QFT verdicts", ex2),
        ("UGV path following and sensor reads", ugv),
        ("artifacts are byte-identical across runs", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
