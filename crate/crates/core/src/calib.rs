//! Estimators that turn count rates into detector efficiencies.
//!
//! Two schemes are covered: the conditional-rotation scheme, where the
//! analyzer-arm visibility is divided by the coincidence visibility, and the
//! two-detector coincidence scheme η = N_c / (N_i·γ·α) with dead-time and
//! converter-busy corrections.

use nalgebra::{ Matrix3, Vector3 };
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error("background subtraction leaves negative {0}")]
    NegativeAfterBackground(&'static str),

    #[error("visibility undefined: both counts are zero")]
    NoCounts,

    #[error("uncalibratable: zero Pockels contrast (N^c_V = N^c_H)")]
    ZeroContrast,

    #[error("singles contrast undefined (N_V + N_H = 0)")]
    ZeroSingles,

    #[error("coincidences ({coincidences}) exceed singles ({singles})")]
    CoincidencesExceedSingles { coincidences: f64, singles: f64 },

    #[error("correction factor {name} = {value} is not positive (rate × time ≥ 1)")]
    Saturated { name: &'static str, value: f64 },

    #[error("{name} must lie in (0, 1], got {value}")]
    BadTransmittance { name: &'static str, value: f64 },

    #[error("fit failure: {0}")]
    Fit(String),
}

pub type CalibResult<T> = Result<T, CalibError>;

fn non_negative(name: &'static str, value: f64) -> CalibResult<f64> {
    if value.is_finite() && value >= 0.0 { Ok(value) } else { Err(CalibError::Negative { name, value }) }
}

/// A value with its standard uncertainty.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub u: f64,
}

impl Estimate {
    pub fn new(value: f64, u: f64) -> Self {
        Self { value, u: u.abs() }
    }

    /// Value only; the uncertainty is filled in by a budget.
    pub fn point(value: f64) -> Self { Self { value, u: 0.0 } }

    pub fn with_u(self, u: f64) -> Self { Self::new(self.value, u) }
}

/// Analyzer-arm rates (counts/s) with the polarizer at 0° (H) and 90° (V).
#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct CountSummary {
    pub n_h: f64,
    pub n_v: f64,
    pub nc_h: f64,
    pub nc_v: f64,
    pub background_h: Option<f64>,
    pub background_v: Option<f64>,
}

impl CountSummary {
    pub fn new(n_h: f64, n_v: f64, nc_h: f64, nc_v: f64) -> CalibResult<Self> {
        let c = Self { n_h, n_v, nc_h, nc_v, background_h: None, background_v: None };
        c.validate()?;
        Ok(c)
    }

    pub fn with_background(mut self, h: f64, v: f64) -> CalibResult<Self> {
        self.background_h = Some(non_negative("background_h", h)?);
        self.background_v = Some(non_negative("background_v", v)?);
        Ok(self)
    }

    pub fn validate(&self) -> CalibResult<()> {
        non_negative("n_h", self.n_h)?;
        non_negative("n_v", self.n_v)?;
        non_negative("nc_h", self.nc_h)?;
        non_negative("nc_v", self.nc_v)?;
        if let Some(b) = self.background_h { non_negative("background_h", b)?; }
        if let Some(b) = self.background_v { non_negative("background_v", b)?; }
        Ok(())
    }

    /// All rates multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            n_h: k * self.n_h,
            n_v: k * self.n_v,
            nc_h: k * self.nc_h,
            nc_v: k * self.nc_v,
            background_h: self.background_h.map(|b| k * b),
            background_v: self.background_v.map(|b| k * b),
        }
    }
}

/// (n_max − n_min) / (n_max + n_min). Negative if the arguments are
/// swapped.
pub fn visibility(n_max: f64, n_min: f64) -> CalibResult<f64> {
    let sum = n_max + n_min;
    if !(sum > 0.0) { return Err(CalibError::NoCounts); }
    Ok((n_max - n_min) / sum)
}

/// Trigger-detector efficiency from the rotation experiment:
/// η₁ = [(N_V − N_H)/(N_V + N_H)] · [(N^c_V + N^c_H)/(N^c_V − N^c_H)].
///
/// Backgrounds stored in `c` are not subtracted here; see
/// [`background_subtract`].
pub fn eta_conditional(c: &CountSummary) -> CalibResult<Estimate> {
    c.validate()?;
    if c.nc_v == c.nc_h { return Err(CalibError::ZeroContrast); }
    if c.n_v + c.n_h <= 0.0 { return Err(CalibError::ZeroSingles); }
    let singles = (c.n_v - c.n_h) / (c.n_v + c.n_h);
    let pockels = (c.nc_v + c.nc_h) / (c.nc_v - c.nc_h);
    Ok(Estimate::point(singles * pockels))
}

/// Undo the trigger-arm polarizer transmittance `epsilon`.
pub fn apply_polarizer_correction(e: Estimate, epsilon: f64) -> CalibResult<Estimate> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CalibError::BadTransmittance { name: "epsilon", value: epsilon });
    }
    Ok(Estimate::new(e.value / epsilon, e.u / epsilon))
}

/// Remove the uncorrelated background from the singles. Coincidences are
/// left untouched. Missing backgrounds count as zero.
pub fn background_subtract(c: &CountSummary) -> CalibResult<CountSummary> {
    c.validate()?;
    let n_h = c.n_h - c.background_h.unwrap_or(0.0);
    let n_v = c.n_v - c.background_v.unwrap_or(0.0);
    if n_h < 0.0 { return Err(CalibError::NegativeAfterBackground("n_h")); }
    if n_v < 0.0 { return Err(CalibError::NegativeAfterBackground("n_v")); }
    Ok(CountSummary { n_h, n_v, background_h: None, background_v: None, ..*c })
}

/// Rescale every rate by `reference_singles / observed_singles` to undo a
/// drift of the pump power.
pub fn drift_rescale(c: &CountSummary, reference_singles: f64, observed_singles: f64)
    -> CalibResult<CountSummary>
{
    non_negative("reference_singles", reference_singles)?;
    if !(observed_singles > 0.0 && observed_singles.is_finite()) {
        return Err(CalibError::Negative { name: "observed_singles", value: observed_singles });
    }
    Ok(c.scaled(reference_singles / observed_singles))
}

/// Inputs of the two-detector coincidence scheme. Rates in counts/s,
/// times in nanoseconds.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct KlyshkoCounts {
    pub n_signal: f64,
    pub n_idler: f64,
    pub n_coincidence: f64,
    pub tau_ns: f64,
    pub t_ns: f64,
}

impl KlyshkoCounts {
    pub fn validate(&self) -> CalibResult<()> {
        non_negative("n_signal", self.n_signal)?;
        non_negative("n_idler", self.n_idler)?;
        non_negative("n_coincidence", self.n_coincidence)?;
        non_negative("tau_ns", self.tau_ns)?;
        non_negative("t_ns", self.t_ns)?;
        let singles = self.n_signal.min(self.n_idler);
        if self.n_coincidence > singles {
            return Err(CalibError::CoincidencesExceedSingles { coincidences: self.n_coincidence, singles });
        }
        let (gamma, alpha) = self.corrections();
        if !(gamma > 0.0) { return Err(CalibError::Saturated { name: "gamma", value: gamma }); }
        if !(alpha > 0.0) { return Err(CalibError::Saturated { name: "alpha", value: alpha }); }
        Ok(())
    }

    /// (γ, α) = (1 − N_s·τ, 1 − N_s·T).
    pub fn corrections(&self) -> (f64, f64) {
        (1.0 - self.n_signal * self.tau_ns * 1e-9, 1.0 - self.n_signal * self.t_ns * 1e-9)
    }
}

/// η_signal = N_c / (N_i·γ·α).
pub fn eta_klyshko(k: &KlyshkoCounts) -> CalibResult<Estimate> {
    k.validate()?;
    if k.n_idler <= 0.0 { return Err(CalibError::NoCounts); }
    let (gamma, alpha) = k.corrections();
    Ok(Estimate::point(k.n_coincidence / (k.n_idler * gamma * alpha)))
}

/// Result of fitting R·[1 − m·cos 2(θ − θ₀)].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ThetaFit {
    pub amplitude: f64,
    pub modulation: f64,
    pub phase_deg: f64,
    pub u_amplitude: f64,
    pub u_modulation: f64,
    pub u_phase_deg: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// One measured point: analyzer angle, counts, and an optional standard
/// deviation (defaults to √counts).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FitPoint {
    pub theta_deg: f64,
    pub counts: f64,
    pub sigma: Option<f64>,
}

impl From<(f64, f64)> for FitPoint {
    fn from((theta_deg, counts): (f64, f64)) -> Self {
        Self { theta_deg, counts, sigma: None }
    }
}

/// Weighted least-squares fit of R·[1 − m·cos 2(θ − θ₀)].
///
/// The model is linear in (R, R·m·cos 2θ₀, R·m·sin 2θ₀), so the normal
/// equations are solved directly; R, m and θ₀ and their standard errors
/// follow by first-order propagation of the parameter covariance. Weights
/// are 1/σ² with σ² = observed counts (at least 1) unless a σ is given.
pub fn fit_theta_curve<P: Into<FitPoint> + Copy>(points: &[P]) -> CalibResult<ThetaFit> {
    let points: Vec<FitPoint> = points.iter().map(|&p| p.into()).collect();
    if points.len() < 4 {
        return Err(CalibError::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    let lo = points.iter().map(|p| p.theta_deg).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.theta_deg).fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo >= 90.0) {
        return Err(CalibError::Fit(format!("angles span {:.1}°, need at least 90°", hi - lo)));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for p in &points {
        let var = match p.sigma {
            Some(s) if s > 0.0 => s * s,
            Some(s) => return Err(CalibError::Fit(format!("non-positive sigma {s}"))),
            None => p.counts.max(1.0),
        };
        let (s2, c2) = (2.0 * p.theta_deg).to_radians().sin_cos();
        let row = Vector3::new(1.0, c2, s2);
        normal += row * row.transpose() / var;
        rhs += row * (p.counts / var);
    }
    let sv = normal.singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(CalibError::Fit("normal equations are singular".into()));
    }
    let cov = normal.try_inverse()
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or_else(|| CalibError::Fit("normal equations are singular".into()))?;
    let beta = cov * rhs;
    let (r, b1, b2) = (beta[0], beta[1], beta[2]);
    if !(r > 0.0) {
        return Err(CalibError::Fit(format!("non-positive mean level {r}")));
    }
    let chi2: f64 = points.iter().map(|p| {
        let (s2, c2) = (2.0 * p.theta_deg).to_radians().sin_cos();
        let var = p.sigma.map_or(p.counts.max(1.0), |s| s * s);
        (p.counts - (r + b1 * c2 + b2 * s2)).powi(2) / var
    }).sum();

    // counts = R − R·m·cos2θ₀·cos2θ − R·m·sin2θ₀·sin2θ
    let h = b1.hypot(b2);
    let m = h / r;
    let phase = (0.5 * (-b2).atan2(-b1).to_degrees()).rem_euclid(180.0);
    let grad_m = if h > 0.0 {
        Vector3::new(-m / r, b1 / (r * h), b2 / (r * h))
    } else {
        Vector3::zeros()
    };
    let mut u_m = (grad_m.transpose() * cov * grad_m)[(0, 0)].max(0.0).sqrt();
    if h == 0.0 {
        // modulation exactly zero: report the scale of the cos/sin terms
        u_m = (cov[(1, 1)].max(cov[(2, 2)])).sqrt() / r;
    }
    let u_phase = if h > 0.0 {
        let g = Vector3::new(0.0, -b2 / (h * h), b1 / (h * h)) * (0.5 * 180.0 / std::f64::consts::PI);
        (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt()
    } else {
        90.0
    };
    Ok(ThetaFit {
        amplitude: r,
        modulation: m,
        phase_deg: phase,
        u_amplitude: cov[(0, 0)].sqrt(),
        u_modulation: u_m,
        u_phase_deg: u_phase,
        chi2,
        dof: points.len() - 3,
    })
}
