use std::fs;
use std::io::Write;
use std::path::{ Path, PathBuf };
use std::process::ExitCode;

use clap::{ Parser, Subcommand, ValueEnum };

use biphoton::calib::{ self, CountSummary, FitPoint };
use biphoton::scenario::{ self, KeyValues };
use biphoton::sim::{ self, Experiment };
use biphoton::uncertainty::{ budget_conditional, budget_klyshko, Budget, UncertainInput };
use biphoton::BenchConfig;

mod selftest;

const SEED_ENV: &str = "BIPHOTON_SEED";

#[derive(Parser)]
#[command(name = "biphoton", version, about = "Photon-pair detector calibration: simulation, estimators and uncertainty budgets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated experiment and write a summary CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        duration: f64,
        /// RNG seed; falls back to $BIPHOTON_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ExperimentArg::Conditional)]
        experiment: ExperimentArg,
        /// Also write every registered detection to this CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Sweep the analyzer angle or the electronic delay.
    Scan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scan: ScanKind,
        /// Comma-separated angles in degrees or delays in ns.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a detector efficiency from a counts file and print its budget.
    Calibrate {
        #[arg(long, value_enum)]
        scheme: Scheme,
        #[arg(long)]
        counts: PathBuf,
        /// Analyzer transmittance for the polarizer correction.
        #[arg(long)]
        epsilon: Option<f64>,
        /// File with `background_h` and `background_v` singles rates.
        #[arg(long)]
        background: Option<PathBuf>,
        /// Write the budget table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit R·[1 − m·cos 2(θ − θ₀)] to a `theta_deg,counts[,sigma]` CSV.
    Fit {
        #[arg(long)]
        points: PathBuf,
    },
    /// Reduced-scale closure checks of the simulator against the closed forms.
    Selftest,
}

#[derive(Copy, Clone, ValueEnum)]
enum ExperimentArg { Conditional, Klyshko }

#[derive(Copy, Clone, ValueEnum)]
enum ScanKind { Theta, Delay }

#[derive(Copy, Clone, ValueEnum)]
enum Scheme { Conditional, Klyshko }

/// Failures mapped onto the process exit code.
#[derive(Debug)]
enum Failure {
    /// Bad input: exit 2.
    Usage(String),
    /// Anything that went wrong after the input was accepted: exit 1.
    Runtime(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure { Failure::Usage(e.to_string()) }

fn runtime(e: impl std::fmt::Display) -> Failure { Failure::Runtime(e.to_string()) }

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<BenchConfig, Failure> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => scenario::parse_config(&read_text(p)?)
            .map_err(|e| usage(format!("{}: {e}", p.display()))),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag { return Ok(s); }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("{SEED_ENV} is not an unsigned integer: '{v}'"))),
        Err(_) => Ok(0),
    }
}

fn check_duration(d: f64) -> CmdResult {
    if d.is_finite() && d > 0.0 { Ok(()) } else { Err(usage(format!("--duration must be positive, got {d}"))) }
}

fn cmd_simulate(
    config: Option<&Path>, duration: f64, seed: Option<u64>, out: &Path,
    experiment: ExperimentArg, events: Option<&Path>,
) -> CmdResult {
    let cfg = load_config(config)?;
    let seed = resolve_seed(seed)?;
    check_duration(duration)?;
    let experiment = match experiment {
        ExperimentArg::Conditional => Experiment::Conditional,
        ExperimentArg::Klyshko => Experiment::Klyshko,
    };
    let run = sim::simulate(experiment, &cfg, duration, seed).map_err(runtime)?;
    let r = &run.result;
    write_text(out, &format!(
        "singles_trigger,singles_analyzer,coincidences,duration_s,seed\n{},{},{},{},{}\n",
        r.singles_trigger, r.singles_analyzer, r.coincidences, r.duration_s, r.seed,
    ))?;
    if let Some(path) = events {
        let mut all = run.trigger;
        all.extend(run.analyzer);
        all.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
        let file = fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        sim::write_events_csv(&mut w, &all)
            .and_then(|_| w.flush())
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    println!("singles_trigger = {}, singles_analyzer = {}, coincidences = {} in {} s (seed {})",
        r.singles_trigger, r.singles_analyzer, r.coincidences, r.duration_s, r.seed);
    Ok(())
}

fn cmd_scan(
    config: Option<&Path>, kind: ScanKind, values: &[f64], duration: f64, seed: Option<u64>, out: &Path,
) -> CmdResult {
    let cfg = load_config(config)?;
    let seed = resolve_seed(seed)?;
    check_duration(duration)?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(usage(format!("--values contains a non-finite entry {v}")));
    }
    let mut csv = String::new();
    match kind {
        ScanKind::Theta => {
            csv.push_str("theta_deg,singles,coincidences\n");
            for p in sim::scan_theta(&cfg, values, duration, seed).map_err(runtime)? {
                csv.push_str(&format!("{},{},{}\n", p.theta_deg, p.singles, p.coincidences));
            }
        },
        ScanKind::Delay => {
            csv.push_str("delay_ns,singles_h,singles_v,coinc_h,coinc_v\n");
            for p in sim::scan_delay(&cfg, values, duration, seed).map_err(runtime)? {
                csv.push_str(&format!("{},{},{},{},{}\n", p.delay_ns, p.singles_h, p.singles_v, p.coinc_h, p.coinc_v));
            }
        },
    }
    write_text(out, &csv)?;
    println!("wrote {} rows to {}", values.len(), out.display());
    Ok(())
}

const CONDITIONAL_KEYS: [&str; 8] = ["n_h", "n_v", "nc_h", "nc_v", "u_n_h", "u_n_v", "u_nc_h", "u_nc_v"];
const KLYSHKO_KEYS: [&str; 9] = [
    "n_signal", "n_idler", "n_coincidence", "tau_ns", "t_ns",
    "u_n_signal", "u_n_idler", "u_n_coincidence", "t_halfwidth_ns",
];

fn load_counts(path: &Path, allowed: &[&str]) -> Result<KeyValues, Failure> {
    let kv = KeyValues::parse(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    kv.reject_unknown(allowed).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(kv)
}

fn value(kv: &KeyValues, key: &str) -> Result<f64, Failure> {
    kv.require::<f64>(key).map_err(usage)
}

fn optional(kv: &KeyValues, key: &str) -> Result<f64, Failure> {
    Ok(kv.get::<f64>(key).map_err(usage)?.unwrap_or(0.0))
}

fn cmd_calibrate(
    scheme: Scheme, counts: &Path, epsilon: Option<f64>, background: Option<&Path>, out: Option<&Path>,
) -> CmdResult {
    let budget = match scheme {
        Scheme::Conditional => conditional_budget(counts, background)?,
        Scheme::Klyshko => {
            if background.is_some() {
                return Err(usage("--background applies to the conditional scheme only"));
            }
            klyshko_budget(counts)?
        },
    };
    print!("{}", budget.render_table());
    println!("eta = {:.4} ± {:.4}", budget.estimate, budget.combined_u);
    if let Some(eps) = epsilon {
        let corrected = calib::apply_polarizer_correction(budget.estimate(), eps).map_err(usage)?;
        println!("eta (polarizer corrected, epsilon = {eps}) = {:.4} ± {:.4}", corrected.value, corrected.u);
    }
    if let Some(path) = out {
        write_text(path, &budget.render_csv())?;
    }
    Ok(())
}

fn conditional_budget(counts: &Path, background: Option<&Path>) -> Result<Budget, Failure> {
    let kv = load_counts(counts, &CONDITIONAL_KEYS)?;
    let mut c = CountSummary::new(value(&kv, "n_h")?, value(&kv, "n_v")?, value(&kv, "nc_h")?, value(&kv, "nc_v")?)
        .map_err(usage)?;
    if let Some(bg) = background {
        let b = load_counts(bg, &["background_h", "background_v"])?;
        c = c.with_background(optional(&b, "background_h")?, optional(&b, "background_v")?).map_err(usage)?;
        c = calib::background_subtract(&c).map_err(usage)?;
    }
    let inputs = [
        UncertainInput::gaussian("N_H", c.n_h, optional(&kv, "u_n_h")?),
        UncertainInput::gaussian("N_V", c.n_v, optional(&kv, "u_n_v")?),
        UncertainInput::gaussian("Nc_H", c.nc_h, optional(&kv, "u_nc_h")?),
        UncertainInput::gaussian("Nc_V", c.nc_v, optional(&kv, "u_nc_v")?),
    ];
    budget_conditional(&inputs).map_err(usage)
}

fn klyshko_budget(counts: &Path) -> Result<Budget, Failure> {
    let kv = load_counts(counts, &KLYSHKO_KEYS)?;
    budget_klyshko(
        &UncertainInput::gaussian("N_i", value(&kv, "n_idler")?, optional(&kv, "u_n_idler")?),
        &UncertainInput::gaussian("N_c", value(&kv, "n_coincidence")?, optional(&kv, "u_n_coincidence")?),
        &UncertainInput::gaussian("N_s", value(&kv, "n_signal")?, optional(&kv, "u_n_signal")?),
        &UncertainInput::rectangular("T", value(&kv, "t_ns")?, optional(&kv, "t_halfwidth_ns")?),
        value(&kv, "tau_ns")?,
    )
    .map_err(usage)
}

fn parse_points(text: &str) -> Result<Vec<FitPoint>, Failure> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let with_sigma = match header {
        "theta_deg,counts" => false,
        "theta_deg,counts,sigma" => true,
        other => return Err(usage(format!("expected header 'theta_deg,counts[,sigma]', got '{other}'"))),
    };
    let width = if with_sigma { 3 } else { 2 };
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || usage(format!("line {}: expected {width} numeric fields", i + 1));
            if fields.len() != width { return Err(bad()); }
            let nums: Vec<f64> = fields.iter().map(|f| f.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
            Ok(FitPoint { theta_deg: nums[0], counts: nums[1], sigma: nums.get(2).copied() })
        })
        .collect()
}

fn cmd_fit(points: &Path) -> CmdResult {
    let pts = parse_points(&read_text(points)?)?;
    let f = calib::fit_theta_curve(&pts).map_err(runtime)?;
    println!("R = {:.4} ± {:.4}", f.amplitude, f.u_amplitude);
    println!("m = {:.4} ± {:.4}", f.modulation, f.u_modulation);
    println!("theta0 = {:.2} ± {:.2} deg", f.phase_deg, f.u_phase_deg);
    println!("u(m) = {:.4}", f.u_modulation);
    println!("chi2 = {:.3} for {} degrees of freedom", f.chi2, f.dof);
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Simulate { config, duration, seed, out, experiment, events } => {
            cmd_simulate(config.as_deref(), duration, seed, &out, experiment, events.as_deref())
        },
        Command::Scan { config, scan, values, duration, seed, out } => {
            cmd_scan(config.as_deref(), scan, &values, duration, seed, &out)
        },
        Command::Calibrate { scheme, counts, epsilon, background, out } => {
            cmd_calibrate(scheme, &counts, epsilon, background.as_deref(), out.as_deref())
        },
        Command::Fit { points } => cmd_fit(&points),
        Command::Selftest => {
            if selftest::run() { Ok(()) } else { Err(Failure::Runtime("self-test failed".into())) }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        },
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        },
    }
}
