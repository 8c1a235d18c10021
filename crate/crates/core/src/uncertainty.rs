//! First-order propagation of input uncertainties through both efficiency
//! estimators, rendered as budget tables, with a Monte Carlo cross-check.

use std::fmt::{ self, Write as _ };
use rand::Rng;
use rand_distr::{ Distribution, Normal };
use rayon::prelude::*;
use crate::calib::{ self, CalibError, CalibResult, CountSummary, KlyshkoCounts };
use crate::sim::RngSeed;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum InputDistribution {
    Gaussian,
    Rectangular,
}

impl InputDistribution {
    pub fn name(self) -> &'static str {
        match self { Self::Gaussian => "Gaussian", Self::Rectangular => "Rectangular" }
    }
}

impl fmt::Display for InputDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result { f.write_str(self.name()) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertainInput {
    pub name: String,
    pub value: f64,
    pub std_dev: f64,
    pub distribution: InputDistribution,
}

impl UncertainInput {
    pub fn gaussian(name: impl Into<String>, value: f64, std_dev: f64) -> Self {
        Self { name: name.into(), value, std_dev: std_dev.abs(), distribution: InputDistribution::Gaussian }
    }

    /// Uniform on `value ± half_width`; σ = half_width/√3.
    pub fn rectangular(name: impl Into<String>, value: f64, half_width: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_dev: half_width.abs() / 3f64.sqrt(),
            distribution: InputDistribution::Rectangular,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.std_dev == 0.0 { return self.value; }
        match self.distribution {
            InputDistribution::Gaussian => {
                Normal::new(self.value, self.std_dev).expect("finite sigma").sample(rng)
            },
            InputDistribution::Rectangular => {
                let hw = self.std_dev * 3f64.sqrt();
                self.value + hw * (2.0 * rng.random::<f64>() - 1.0)
            },
        }
    }
}

/// Poisson standard deviation of a rate measured over `integration_s`.
pub fn poisson_std(rate: f64, integration_s: f64) -> f64 {
    if integration_s > 0.0 { (rate.max(0.0) / integration_s).sqrt() } else { f64::INFINITY }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetRow {
    pub quantity: String,
    pub value: f64,
    pub std_dev: f64,
    pub distribution: InputDistribution,
    pub sensitivity: f64,
    pub contribution: f64,
    /// A reference coefficient this row is compared against, if any.
    pub reference_sensitivity: Option<f64>,
}

impl BudgetRow {
    fn new(input: &UncertainInput, sensitivity: f64) -> Self {
        Self {
            quantity: input.name.clone(),
            value: input.value,
            std_dev: input.std_dev,
            distribution: input.distribution,
            sensitivity,
            contribution: sensitivity.abs() * input.std_dev,
            reference_sensitivity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Budget {
    pub estimate: f64,
    pub rows: Vec<BudgetRow>,
    pub combined_u: f64,
    pub notes: Vec<String>,
}

impl Budget {
    pub fn from_rows(estimate: f64, rows: Vec<BudgetRow>) -> Self {
        let combined_u = rows.iter().map(|r| r.contribution.powi(2)).sum::<f64>().sqrt();
        Self { estimate, rows, combined_u, notes: Vec::new() }
    }

    pub fn estimate(&self) -> calib::Estimate {
        calib::Estimate::new(self.estimate, self.combined_u)
    }

    /// Fixed-column text table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>12} {:>12} {:<12} {:>14} {:>14}",
            "Quantity", "Value", "Std Dev", "Distribution", "Sensitivity", "Contribution");
        for r in &self.rows {
            let _ = writeln!(s, "{:<10} {:>12} {:>12} {:<12} {:>14} {:>14}",
                r.quantity, fmt_num(r.value), fmt_num(r.std_dev), r.distribution.name(),
                fmt_num(r.sensitivity), fmt_num(r.contribution));
        }
        let _ = writeln!(s, "estimate = {:.4}, combined standard uncertainty = {:.4}",
            self.estimate, self.combined_u);
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("quantity,value,std_dev,distribution,sensitivity,contribution\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}",
                r.quantity, r.value, r.std_dev, r.distribution.name(), r.sensitivity, r.contribution);
        }
        s
    }
}

fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) { format!("{x:.4e}") } else { format!("{x:.6}") }
}

/// ∂η₁/∂(N_H, N_V, N^c_H, N^c_V) of the conditional estimator.
pub fn sensitivities_conditional(c: &CountSummary) -> CalibResult<[f64; 4]> {
    calib::eta_conditional(c)?;
    let (h, v, ch, cv) = (c.n_h, c.n_v, c.nc_h, c.nc_v);
    let singles = (v - h) / (v + h);
    let pockels = (cv + ch) / (cv - ch);
    let s2 = (v + h).powi(2);
    let c2 = (cv - ch).powi(2);
    Ok([
        -2.0 * v / s2 * pockels,
        2.0 * h / s2 * pockels,
        2.0 * cv / c2 * singles,
        -2.0 * ch / c2 * singles,
    ])
}

/// Budget for η₁ from inputs ordered (N_H, N_V, N^c_H, N^c_V).
pub fn budget_conditional(inputs: &[UncertainInput; 4]) -> CalibResult<Budget> {
    let c = CountSummary::new(inputs[0].value, inputs[1].value, inputs[2].value, inputs[3].value)?;
    let eta = calib::eta_conditional(&c)?.value;
    let sens = sensitivities_conditional(&c)?;
    let rows = inputs.iter().zip(sens).map(|(i, s)| BudgetRow::new(i, s)).collect();
    Ok(Budget::from_rows(eta, rows))
}

/// Coefficients listed for the signal-rate and stop-delay rows in the
/// reference two-detector budget. They do not follow from
/// η = N_c/(N_i·γ·α) and are only reported next to ours.
pub const REFERENCE_KLYSHKO_NS_SENSITIVITY: f64 = 5.88e-10;
pub const REFERENCE_KLYSHKO_T_SENSITIVITY: f64 = 1572.0;

/// ∂η/∂(N_i, N_c, N_s, T) of the coincidence estimator; T in ns.
pub fn sensitivities_klyshko(k: &KlyshkoCounts) -> CalibResult<[f64; 4]> {
    let eta = calib::eta_klyshko(k)?.value;
    let (gamma, alpha) = k.corrections();
    let tau = k.tau_ns * 1e-9;
    let t = k.t_ns * 1e-9;
    let d_ni = -eta / k.n_idler;
    let d_nc = if k.n_coincidence > 0.0 { eta / k.n_coincidence } else { 1.0 / (k.n_idler * gamma * alpha) };
    let d_ns = eta * (tau / gamma + t / alpha);
    let d_t = eta * k.n_signal / alpha * 1e-9;
    Ok([d_ni, d_nc, d_ns, d_t])
}

/// Budget for η_signal from inputs (N_i, N_c, N_s, T[ns]) and a fixed dead
/// time `tau_ns`.
pub fn budget_klyshko(
    n_idler: &UncertainInput,
    n_coincidence: &UncertainInput,
    n_signal: &UncertainInput,
    stop_delay_ns: &UncertainInput,
    tau_ns: f64,
) -> CalibResult<Budget> {
    let k = KlyshkoCounts {
        n_signal: n_signal.value,
        n_idler: n_idler.value,
        n_coincidence: n_coincidence.value,
        tau_ns,
        t_ns: stop_delay_ns.value,
    };
    let eta = calib::eta_klyshko(&k)?.value;
    let sens = sensitivities_klyshko(&k)?;
    let inputs = [n_idler, n_coincidence, n_signal, stop_delay_ns];
    let mut rows: Vec<BudgetRow> = inputs.iter().zip(sens).map(|(i, s)| BudgetRow::new(i, s)).collect();
    rows[2].reference_sensitivity = Some(REFERENCE_KLYSHKO_NS_SENSITIVITY);
    rows[3].reference_sensitivity = Some(REFERENCE_KLYSHKO_T_SENSITIVITY);
    let mut b = Budget::from_rows(eta, rows);
    b.notes.push(format!(
        "N_s sensitivity {:.3e} /(counts/s) differs from the reference coefficient {:.3e}",
        sens[2], REFERENCE_KLYSHKO_NS_SENSITIVITY));
    b.notes.push(format!(
        "T sensitivity {:.3e} /ns ({:.3e} /s) differs from the reference coefficient {}",
        sens[3], sens[3] * 1e9, REFERENCE_KLYSHKO_T_SENSITIVITY));
    Ok(b)
}

/// Estimators known to the Monte Carlo propagator.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum EstimatorId {
    /// Inputs (N_H, N_V, N^c_H, N^c_V).
    Conditional,
    /// Inputs (N_i, N_c, N_s, T[ns]).
    Klyshko { tau_ns: f64 },
}

impl EstimatorId {
    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            Self::Conditional => {
                let (h, v, ch, cv) = (x[0], x[1], x[2], x[3]);
                (v - h) / (v + h) * (cv + ch) / (cv - ch)
            },
            Self::Klyshko { tau_ns } => {
                let (ni, nc, ns, t) = (x[0], x[1], x[2], x[3]);
                nc / (ni * (1.0 - ns * tau_ns * 1e-9) * (1.0 - ns * t * 1e-9))
            },
        }
    }
}

const MC_BLOCK: usize = 4096;

/// Sample standard deviation of `f` over inputs drawn from their
/// distributions. Trials run in fixed-size blocks with per-block
/// sub-seeds, so the result does not depend on the thread count.
pub fn monte_carlo_std<F>(f: F, inputs: &[UncertainInput], trials: usize, seed: u64) -> CalibResult<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if trials < 10_000 {
        return Err(CalibError::Fit(format!("Monte Carlo needs at least 10^4 trials, got {trials}")));
    }
    let blocks = trials.div_ceil(MC_BLOCK);
    let seed = RngSeed(seed);
    // per block: (n, mean, M2) for Chan's parallel variance merge
    let stats: Vec<(f64, f64, f64)> = (0..blocks).into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(b as u64);
            let n = MC_BLOCK.min(trials - b * MC_BLOCK);
            let mut x = vec![0.0; inputs.len()];
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 0..n {
                for (slot, inp) in x.iter_mut().zip(inputs) { *slot = inp.sample(&mut rng); }
                let y = f(&x);
                let d = y - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (y - mean);
            }
            (n as f64, mean, m2)
        })
        .collect();
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for (nb, mb, m2b) in stats {
        let tot = n + nb;
        let d = mb - mean;
        mean += d * nb / tot;
        m2 += m2b + d * d * n * nb / tot;
        n = tot;
    }
    Ok((m2 / (n - 1.0)).max(0.0).sqrt())
}

pub fn monte_carlo_uncertainty(id: EstimatorId, inputs: &[UncertainInput], trials: usize, seed: u64)
    -> CalibResult<f64>
{
    if inputs.len() != 4 {
        return Err(CalibError::Fit(format!("estimator takes 4 inputs, got {}", inputs.len())));
    }
    monte_carlo_std(|x| id.evaluate(x), inputs, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn conditional_reference_inputs() -> [UncertainInput; 4] {
        [
            UncertainInput::gaussian("N_H", 76.6, 4.2),
            UncertainInput::gaussian("N_V", 165.9, 5.7),
            UncertainInput::gaussian("Nc_H", 4.4, 1.6),
            UncertainInput::gaussian("Nc_V", 48.7, 2.6),
        ]
    }

    fn central_difference(c: &CountSummary, i: usize) -> f64 {
        let x = [c.n_h, c.n_v, c.nc_h, c.nc_v];
        let h = 1e-4 * x[i];
        let eval = |delta: f64| {
            let mut y = x;
            y[i] += delta;
            EstimatorId::Conditional.evaluate(&y)
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    #[test]
    fn reference_sensitivities() {
        let c = CountSummary::new(76.6, 165.9, 4.4, 48.7).unwrap();
        let s = sensitivities_conditional(&c).unwrap();
        let expect = [-0.006763, 0.003123, 0.01827, -0.00165];
        for (a, b) in s.iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 5e-3);
        }
        for i in 0..4 {
            assert_relative_eq!(s[i], central_difference(&c, i), max_relative = 1e-6);
        }
    }

    #[test]
    fn symmetric_singles() {
        // N_H = N_V: the singles contrast vanishes, so the coincidence
        // coefficients vanish and the singles ones are ∓C/(2N)
        let c = CountSummary::new(100.0, 100.0, 5.0, 45.0).unwrap();
        let s = sensitivities_conditional(&c).unwrap();
        let contrast = 50.0 / 40.0;
        assert_relative_eq!(s[0], -contrast / 200.0, max_relative = 1e-12);
        assert_relative_eq!(s[1], contrast / 200.0, max_relative = 1e-12);
        assert_eq!(s[2], 0.0);
        assert_eq!(s[3], 0.0);
    }

    #[test]
    fn reference_conditional_budget() {
        let b = budget_conditional(&conditional_reference_inputs()).unwrap();
        let expect = [0.02840, 0.01780, 0.02923, 0.00429];
        for (r, e) in b.rows.iter().zip(expect) {
            assert_relative_eq!(r.contribution, e, max_relative = 5e-3);
        }
        assert!((b.combined_u - 0.045).abs() < 1e-3);
        let sum2: f64 = b.rows.iter().map(|r| r.contribution.powi(2)).sum();
        assert_relative_eq!(b.combined_u.powi(2), sum2, max_relative = 1e-9);
    }

    #[test]
    fn budget_edge_cases() {
        let mut zero = conditional_reference_inputs();
        for i in zero.iter_mut() { i.std_dev = 0.0; }
        assert_eq!(budget_conditional(&zero).unwrap().combined_u, 0.0);

        let base = budget_conditional(&conditional_reference_inputs()).unwrap();
        let mut doubled = conditional_reference_inputs();
        doubled[2].std_dev *= 2.0;
        let b = budget_conditional(&doubled).unwrap();
        for i in 0..4 {
            let factor = if i == 2 { 2.0 } else { 1.0 };
            assert_relative_eq!(b.rows[i].contribution, factor * base.rows[i].contribution, max_relative = 1e-12);
        }

        let mut rows = base.rows.clone();
        rows.reverse();
        assert_relative_eq!(Budget::from_rows(base.estimate, rows).combined_u, base.combined_u, max_relative = 1e-12);
    }

    #[test]
    fn rectangular_conversion() {
        let t = UncertainInput::rectangular("T", 9.3, 0.5);
        assert_relative_eq!(t.std_dev, 0.288675, max_relative = 1e-5);
    }

    fn coincidence_reference() -> (UncertainInput, UncertainInput, UncertainInput, UncertainInput) {
        (
            UncertainInput::gaussian("N_i", 1832.8, 9.0),
            UncertainInput::gaussian("N_c", 874.4, 5.2),
            UncertainInput::gaussian("N_s", 131777.0, 185.0),
            UncertainInput::rectangular("T", 9.3, 0.5),
        )
    }

    #[test]
    fn reference_coincidence_budget() {
        let (ni, nc, ns, t) = coincidence_reference();
        let b = budget_klyshko(&ni, &nc, &ns, &t, 40.0).unwrap();
        assert_relative_eq!(b.estimate, 0.48020, max_relative = 1e-4);
        assert!((b.rows[0].contribution - 0.00234).abs() <= 5e-5);
        assert!((b.rows[1].contribution - 0.00284).abs() <= 5e-5);
        assert_eq!(b.rows[2].reference_sensitivity, Some(5.88e-10));
        assert_eq!(b.notes.len(), 2);

        // central differences on each input
        let x = [ni.value, nc.value, ns.value, t.value];
        let id = EstimatorId::Klyshko { tau_ns: 40.0 };
        for (i, row) in b.rows.iter().enumerate() {
            let h = 1e-4 * x[i];
            let mut up = x;
            let mut dn = x;
            up[i] += h;
            dn[i] -= h;
            let fd = (id.evaluate(&up) - id.evaluate(&dn)) / (2.0 * h);
            assert_relative_eq!(row.sensitivity, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn monte_carlo_matches_linear_propagation() {
        let inputs = vec![
            UncertainInput::gaussian("a", 1.0, 0.3),
            UncertainInput::rectangular("b", 2.0, 0.5),
        ];
        let analytic = (4.0f64 * 0.09 + 0.25 / 3.0).sqrt();
        let mc = monte_carlo_std(|x| 2.0 * x[0] - x[1], &inputs, 100_000, 1).unwrap();
        assert_relative_eq!(mc, analytic, max_relative = 0.01);
    }

    #[test]
    fn monte_carlo_zero_variance_and_determinism() {
        let mut zero = conditional_reference_inputs().to_vec();
        for i in zero.iter_mut() { i.std_dev = 0.0; }
        assert_eq!(monte_carlo_uncertainty(EstimatorId::Conditional, &zero, 10_000, 3).unwrap(), 0.0);
        let a = monte_carlo_uncertainty(EstimatorId::Conditional, &conditional_reference_inputs(), 20_000, 9).unwrap();
        let b = monte_carlo_uncertainty(EstimatorId::Conditional, &conditional_reference_inputs(), 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_uncertainty(EstimatorId::Conditional, &conditional_reference_inputs(), 100, 9).is_err());
    }

    #[test]
    fn table_rendering() {
        let b = budget_conditional(&conditional_reference_inputs()).unwrap();
        let t = b.render_table();
        assert!(t.starts_with("Quantity"));
        assert!(t.contains("Gaussian"));
        let csv = b.render_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("quantity,value,std_dev,distribution,sensitivity,contribution\n"));
    }
}
