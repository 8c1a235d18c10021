//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use biphoton::calib::{ self, CountSummary, KlyshkoCounts };
use biphoton::polarization::{
    degree_of_polarization, stokes_from_density, von_neumann_entropy, PolarizationDensity,
};
use biphoton::sim::{ run_conditional_experiment, run_klyshko_experiment, scan_delay, scan_theta, subseed };
use biphoton::uncertainty::{
    budget_conditional, budget_klyshko, monte_carlo_uncertainty, EstimatorId, UncertainInput,
};
use biphoton::{ BenchConfig, FailureModel };

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// |ours − reference| within half a unit in the `digits`-th significant
/// figure of the reference.
fn sig_figs(ours: f64, reference: f64, digits: i32) -> bool {
    let exp = reference.abs().log10().floor() as i32 - digits + 1;
    (ours - reference).abs() <= 0.5 * 10f64.powi(exp) * (1.0 + 1e-9)
}

fn conditional_reference_inputs() -> [UncertainInput; 4] {
    [
        UncertainInput::gaussian("N_H", 76.6, 4.2),
        UncertainInput::gaussian("N_V", 165.9, 5.7),
        UncertainInput::gaussian("Nc_H", 4.4, 1.6),
        UncertainInput::gaussian("Nc_V", 48.7, 2.6),
    ]
}

fn coincidence_reference_inputs() -> [UncertainInput; 4] {
    [
        UncertainInput::gaussian("N_i", 1832.8, 9.0),
        UncertainInput::gaussian("N_c", 874.4, 5.2),
        UncertainInput::gaussian("N_s", 131777.0, 185.0),
        UncertainInput::rectangular("T", 9.3, 0.5),
    ]
}

fn criterion_1() -> Outcome {
    let c = CountSummary::new(76.6, 165.9, 4.4, 48.7).unwrap();
    let eta = calib::eta_conditional(&c).unwrap();
    let corrected = calib::apply_polarizer_correction(eta, 0.9842).unwrap();
    outcome(
        (eta.value - 0.441).abs() <= 0.001 && (corrected.value - 0.448).abs() <= 0.001,
        format!("eta = {:.5}, corrected = {:.5}", eta.value, corrected.value),
    )
}

fn criterion_2() -> Outcome {
    let b = budget_conditional(&conditional_reference_inputs()).unwrap();
    let sens = [-0.006763, 0.003123, 0.01827, -0.00165];
    let contrib = [0.02840, 0.01780, 0.02923, 0.00429];
    let mut ok = (b.combined_u - 0.045).abs() <= 0.001;
    for (r, (s, c)) in b.rows.iter().zip(sens.iter().zip(contrib)) {
        ok &= sig_figs(r.sensitivity, *s, 3) && sig_figs(r.contribution, c, 3);
    }
    let s: Vec<String> = b.rows.iter().map(|r| format!("{:.4e}/{:.5}", r.sensitivity, r.contribution)).collect();
    outcome(ok, format!("rows {} u = {:.5}", s.join(" "), b.combined_u))
}

fn criterion_3() -> Outcome {
    let vs = calib::visibility(165.9, 76.6).unwrap();
    let vc = calib::visibility(48.7, 4.4).unwrap();
    outcome(
        (vs - 0.368).abs() <= 0.001 && (vc - 0.834).abs() <= 0.001 && (vc - 0.832).abs() <= 0.003,
        format!("singles visibility = {vs:.4}, coincidence visibility = {vc:.4}"),
    )
}

fn criterion_4() -> Outcome {
    let k = KlyshkoCounts { n_signal: 131777.0, n_idler: 1832.8, n_coincidence: 874.4, tau_ns: 40.0, t_ns: 9.3 };
    let eta = calib::eta_klyshko(&k).unwrap().value;
    let [ni, nc, ns, t] = coincidence_reference_inputs();
    let b = budget_klyshko(&ni, &nc, &ns, &t, 40.0).unwrap();
    let ok = (eta - 0.480).abs() <= 0.001
        && (eta - 0.4812).abs() <= 0.005
        && sig_figs(b.rows[0].contribution, 0.00234, 2)
        && sig_figs(b.rows[1].contribution, 0.00284, 2)
        && b.notes.len() == 2;
    outcome(ok, format!(
        "eta = {eta:.5}, N_i contribution = {:.5}, N_c contribution = {:.5}, N_s/T discrepancies reported: {}",
        b.rows[0].contribution, b.rows[1].contribution, b.notes.len(),
    ))
}

/// η₁ and its Poisson standard error from H/V singles and coincidence
/// counts.
fn conditional_estimate(n_h: u64, n_v: u64, nc_h: u64, nc_v: u64) -> (f64, f64) {
    let g = |name: &str, n: u64| UncertainInput::gaussian(name, n as f64, (n as f64).sqrt());
    let b = budget_conditional(&[g("N_H", n_h), g("N_V", n_v), g("Nc_H", nc_h), g("Nc_V", nc_v)]).unwrap();
    (b.estimate, b.combined_u)
}

fn closure_config(eta1: f64, q: f64) -> BenchConfig {
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 1000.0;
    cfg.det1.eta = eta1;
    cfg.det2.eta = 0.4;
    cfg.pockels.q = q;
    cfg
}

fn criterion_5() -> Outcome {
    let cfg = closure_config(0.486, 0.832);
    let pairs = 1e6;
    let duration = pairs / cfg.pair_rate_hz;
    let angles: Vec<f64> = (0..19).map(|i| 10.0 * i as f64).collect();
    let scan = scan_theta(&cfg, &angles, duration, 5).unwrap();
    let at = |deg: f64| scan.iter().find(|p| p.theta_deg == deg).unwrap();
    let (h, v) = (at(0.0), at(90.0));
    let (eta, se) = conditional_estimate(h.singles, v.singles, h.coincidences, v.coincidences);
    let fit = calib::fit_theta_curve(
        &scan.iter().map(|p| (p.theta_deg, p.singles as f64)).collect::<Vec<_>>(),
    ).unwrap();
    outcome(
        (eta - 0.486).abs() <= 3.0 * se,
        format!("eta = {eta:.4} ± {se:.4} (true 0.486); singles fit modulation = {:.4} ± {:.4}",
            fit.modulation, fit.u_modulation),
    )
}

fn criterion_6() -> Outcome {
    let eta_signal = 0.48;
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 2.7e5;
    cfg.det1 = biphoton::DetectorParams::new(eta_signal, 40.0, 0.0);
    // idler detector without dead time, so that its losses do not
    // correlate with those of the signal detector
    cfg.det2 = biphoton::DetectorParams::new(0.6, 0.0, 0.0);
    cfg.tac.stop_delay_ns = 9.3;
    // narrow window keeps accidental coincidences below 0.02 %
    cfg.tac.window_ns = 1.0;
    let duration = 10.0;
    let r = run_klyshko_experiment(&cfg, duration, 6).unwrap();
    let n_s = r.trigger_rate();
    let n_i = r.analyzer_rate();
    let n_c = r.coincidence_rate();
    let raw = n_c / n_i;
    let k = KlyshkoCounts { n_signal: n_s, n_idler: n_i, n_coincidence: n_c, tau_ns: 40.0, t_ns: 9.3 };
    let corrected = calib::eta_klyshko(&k).unwrap().value;
    let bias = 1.0 - raw / eta_signal;
    // binomial spread of N_c given N_i, scaled by the correction
    let sigma = (raw * (1.0 - raw) / (n_i * duration)).sqrt() * corrected / raw;
    outcome(
        (0.003..=0.007).contains(&bias) && (corrected - eta_signal).abs() <= 3.0 * sigma,
        format!(
            "N_s = {n_s:.0}/s, uncorrected bias = {:.3}% (N_s*tau = {:.3}%), corrected = {corrected:.5} ± {sigma:.5} (true {eta_signal})",
            100.0 * bias, 100.0 * n_s * 40e-9,
        ),
    )
}

fn criterion_7() -> Outcome {
    let pairs = 4e5;
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut run_case = |cfg: &BenchConfig, target: f64, seed: u64| {
        let duration = pairs / cfg.pair_rate_hz;
        let mut h = cfg.clone();
        h.analyzer.angle_deg = 0.0;
        let mut v = cfg.clone();
        v.analyzer.angle_deg = 90.0;
        let rh = run_conditional_experiment(&h, duration, subseed(seed, 0)).unwrap();
        let rv = run_conditional_experiment(&v, duration, subseed(seed, 1)).unwrap();
        let (eta, se) = conditional_estimate(rh.singles_analyzer, rv.singles_analyzer, rh.coincidences, rv.coincidences);
        let z = (eta - target).abs() / se;
        worst = worst.max(z);
        ok &= z <= 3.0;
    };
    let mut seed = 700;
    for eta1 in [0.2, 0.5, 0.9] {
        for q in [0.6, 0.832, 1.0] {
            run_case(&closure_config(eta1, q), eta1, seed);
            seed += 1;
        }
    }
    let mut bern = closure_config(0.5, 1.0);
    bern.pockels.failure_model = FailureModel::BernoulliIdentity;
    bern.pockels.p = 0.916;
    let p = 0.916;
    run_case(&bern, 0.5 * p / (2.0 * p - 1.0), seed);
    outcome(ok, format!("10 cases, largest deviation {worst:.2} standard errors"))
}

fn criterion_8() -> Outcome {
    let mut cfg = closure_config(0.5, 1.0);
    cfg.pair_rate_hz = 2000.0;
    let delays = [0.0, 3700.0, 5000.0];
    let scan = scan_delay(&cfg, &delays, 200.0, 8).unwrap();
    let frac = |i: usize| {
        let p = &scan[i];
        p.coinc_v as f64 / (p.coinc_v + p.coinc_h) as f64
    };
    let (f0, f1, f2) = (frac(0), frac(1), frac(2));
    let reversed = scan[0].coinc_v > scan[0].coinc_h && scan[1].coinc_h > scan[1].coinc_v;
    outcome(
        f0 >= 0.95 && f1 <= 0.05 && f2 <= 0.05 && reversed,
        format!("rotated fraction {f0:.4} at 0 ns, {f1:.4} at 3700 ns, {f2:.4} at 5000 ns"),
    )
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut max_fd = 0.0f64;

    let t1 = conditional_reference_inputs();
    let b1 = budget_conditional(&t1).unwrap();
    let [ni, nc, ns, t] = coincidence_reference_inputs();
    let b2 = budget_klyshko(&ni, &nc, &ns, &t, 40.0).unwrap();
    let t2 = coincidence_reference_inputs();
    let cases = [
        (EstimatorId::Conditional, &t1, &b1),
        (EstimatorId::Klyshko { tau_ns: 40.0 }, &t2, &b2),
    ];
    let mut mc_ratios = Vec::new();
    for (k, (id, inputs, budget)) in cases.into_iter().enumerate() {
        let x: Vec<f64> = inputs.iter().map(|i| i.value).collect();
        for (i, row) in budget.rows.iter().enumerate() {
            let h = 1e-4 * x[i];
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (id.evaluate(&up) - id.evaluate(&dn)) / (2.0 * h);
            let rel = (row.sensitivity - fd).abs() / fd.abs();
            max_fd = max_fd.max(rel);
            ok &= rel <= 1e-6;
        }
        let mc = monte_carlo_uncertainty(id, inputs.as_slice(), 200_000, 90 + k as u64).unwrap();
        let ratio = mc / budget.combined_u;
        ok &= (ratio - 1.0).abs() <= 0.05;
        mc_ratios.push(ratio);
    }
    outcome(ok, format!(
        "max finite-difference mismatch {max_fd:.2e}; Monte Carlo/analytic = {:.4}, {:.4}",
        mc_ratios[0], mc_ratios[1],
    ))
}

fn criterion_10() -> Outcome {
    let s = |eta: f64| von_neumann_entropy(&PolarizationDensity::post_transform(eta).unwrap());
    let (s0, s1, s_half) = (s(0.0), s(1.0), s(0.5));
    let mut ok = s0 == 1.0 && s1 == 0.0 && (s_half - 0.8113).abs() <= 1e-4;
    let mut max_dp = 0.0f64;
    for eta in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let rho = PolarizationDensity::post_transform(eta).unwrap();
        let p = degree_of_polarization(&stokes_from_density(&rho));
        max_dp = max_dp.max((p - eta).abs());
    }
    ok &= max_dp <= 1e-12;
    outcome(ok, format!("S(0) = {s0}, S(1) = {s1}, S(0.5) = {s_half:.6}, max |P - eta| = {max_dp:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5),
        (6, criterion_6), (7, criterion_7), (8, criterion_8), (9, criterion_9), (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { failed += 1; "FAIL" };
        println!("criterion {n}: {tag} ({:.1} s) {}", start.elapsed().as_secs_f64(), o.detail);
    }
    if failed == 0 { ExitCode::SUCCESS } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
