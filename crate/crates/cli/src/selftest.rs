//! Small closure suite: every check compares a simulated count with its
//! closed-form prediction and reports the deviation in standard errors.

use biphoton::calib;
use biphoton::sim::{ run_conditional_experiment, run_klyshko_experiment };
use biphoton::uncertainty::{ budget_conditional, monte_carlo_uncertainty, EstimatorId, UncertainInput };
use biphoton::{ BenchConfig, DetectorParams };

const LIMIT: f64 = 4.0;

struct Check {
    name: &'static str,
    z: f64,
}

fn poisson_z(observed: u64, expected: f64) -> f64 {
    (observed as f64 - expected).abs() / expected.max(1.0).sqrt()
}

fn counts_vs_prediction(checks: &mut Vec<Check>) {
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 1000.0;
    let duration = 100.0;
    for (theta, name_s, name_c) in [(0.0, "singles at 0 deg", "coincidences at 0 deg"),
                                    (90.0, "singles at 90 deg", "coincidences at 90 deg")] {
        cfg.analyzer.angle_deg = theta;
        let r = run_conditional_experiment(&cfg, duration, theta as u64 + 1).expect("valid config");
        let p = cfg.predict_rates(theta).expect("closed form exists");
        checks.push(Check { name: name_s, z: poisson_z(r.singles_analyzer, p.singles * duration) });
        checks.push(Check { name: name_c, z: poisson_z(r.coincidences, p.coincidences * duration) });
    }
}

fn conditional_closure(checks: &mut Vec<Check>) {
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 1000.0;
    cfg.det1.eta = 0.486;
    let duration = 200.0;
    let mut counts = Vec::new();
    for (i, theta) in [0.0, 90.0].into_iter().enumerate() {
        cfg.analyzer.angle_deg = theta;
        counts.push(run_conditional_experiment(&cfg, duration, 10 + i as u64).expect("valid config"));
    }
    let g = |name: &str, n: u64| UncertainInput::gaussian(name, n as f64, (n as f64).sqrt());
    let b = budget_conditional(&[
        g("N_H", counts[0].singles_analyzer),
        g("N_V", counts[1].singles_analyzer),
        g("Nc_H", counts[0].coincidences),
        g("Nc_V", counts[1].coincidences),
    ]);
    let z = match b {
        Ok(b) => (b.estimate - cfg.det1.eta).abs() / b.combined_u,
        Err(_) => f64::INFINITY,
    };
    checks.push(Check { name: "conditional estimator recovers eta1", z });
}

fn klyshko_closure(checks: &mut Vec<Check>) {
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 2e4;
    cfg.det1 = DetectorParams::new(0.48, 40.0, 0.0);
    cfg.det2 = DetectorParams::new(0.5, 40.0, 0.0);
    let duration = 5.0;
    let r = run_klyshko_experiment(&cfg, duration, 20).expect("valid config");
    let k = calib::KlyshkoCounts {
        n_signal: r.trigger_rate(),
        n_idler: r.analyzer_rate(),
        n_coincidence: r.coincidence_rate(),
        tau_ns: 40.0,
        t_ns: cfg.tac.stop_delay_ns,
    };
    let eta = calib::eta_klyshko(&k).map(|e| e.value).unwrap_or(f64::NAN);
    let n_i = r.singles_analyzer as f64;
    let sigma = (0.48 * 0.52 / n_i).sqrt();
    checks.push(Check { name: "coincidence estimator recovers eta", z: (eta - 0.48).abs() / sigma });
}

fn budget_vs_monte_carlo(checks: &mut Vec<Check>) {
    let inputs = [
        UncertainInput::gaussian("N_H", 76.6, 4.2),
        UncertainInput::gaussian("N_V", 165.9, 5.7),
        UncertainInput::gaussian("Nc_H", 4.4, 1.6),
        UncertainInput::gaussian("Nc_V", 48.7, 2.6),
    ];
    let analytic = budget_conditional(&inputs).expect("valid counts").combined_u;
    let trials = 40_000;
    let mc = monte_carlo_uncertainty(EstimatorId::Conditional, &inputs, trials, 30).expect("enough trials");
    // standard error of a sample standard deviation
    let se = analytic / (2.0 * (trials as f64 - 1.0)).sqrt();
    // nonlinearity of the estimator adds about 1 % on these inputs
    let z = ((mc - analytic).abs() - 0.02 * analytic).max(0.0) / se;
    checks.push(Check { name: "budget agrees with Monte Carlo", z });
}

/// Runs every check and prints one line each; true if all pass.
pub fn run() -> bool {
    let mut checks = Vec::new();
    counts_vs_prediction(&mut checks);
    conditional_closure(&mut checks);
    klyshko_closure(&mut checks);
    budget_vs_monte_carlo(&mut checks);
    let mut ok = true;
    for c in &checks {
        let pass = c.z <= LIMIT;
        ok &= pass;
        println!("{:<40} {} deviation {:.2} of allowed {LIMIT} standard errors",
            c.name, if pass { "PASS" } else { "FAIL" }, c.z);
    }
    ok
}
