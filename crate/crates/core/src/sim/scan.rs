use rayon::prelude::*;
use crate::bench::BenchConfig;
use super::{ engine::run_conditional_experiment, subseed, SimResultT };

/// Counts at one analyzer angle.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ThetaPoint {
    pub theta_deg: f64,
    pub singles: u64,
    pub coincidences: u64,
    pub duration_s: f64,
}

/// Counts at θ = 0° (H) and θ = 90° (V) for one electronic delay.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DelayPoint {
    pub delay_ns: f64,
    pub singles_h: u64,
    pub singles_v: u64,
    pub coinc_h: u64,
    pub coinc_v: u64,
    pub duration_s: f64,
}

/// One independent run per analyzer angle, seeded by position in `angles`.
/// Runs execute in parallel; output order follows `angles`.
pub fn scan_theta(cfg: &BenchConfig, angles: &[f64], duration_s: f64, seed: u64)
    -> SimResultT<Vec<ThetaPoint>>
{
    angles.par_iter().enumerate()
        .map(|(i, &theta)| {
            let mut c = cfg.clone();
            c.analyzer.angle_deg = theta;
            let r = run_conditional_experiment(&c, duration_s, subseed(seed, i as u64))?;
            Ok(ThetaPoint {
                theta_deg: theta,
                singles: r.singles_analyzer,
                coincidences: r.coincidences,
                duration_s,
            })
        })
        .collect()
}

/// Two runs (analyzer H and V) per electronic delay.
pub fn scan_delay(cfg: &BenchConfig, delays_ns: &[f64], duration_s: f64, seed: u64)
    -> SimResultT<Vec<DelayPoint>>
{
    delays_ns.par_iter().enumerate()
        .map(|(i, &delay)| {
            let run = |theta: f64, k: u64| {
                let mut c = cfg.clone();
                c.electronic_delay_ns = delay;
                c.analyzer.angle_deg = theta;
                run_conditional_experiment(&c, duration_s, subseed(seed, 2 * i as u64 + k))
            };
            let h = run(0.0, 0)?;
            let v = run(90.0, 1)?;
            Ok(DelayPoint {
                delay_ns: delay,
                singles_h: h.singles_analyzer,
                singles_v: v.singles_analyzer,
                coinc_h: h.coincidences,
                coinc_v: v.coincidences,
                duration_s,
            })
        })
        .collect()
}
