use super::{ DetectionRecord, SimError, SimResultT };

fn check_ordered(times: &[f64], channel: &'static str) -> SimResultT<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(SimError::Unordered { channel, index: i + 1 }),
        None => Ok(()),
    }
}

/// Count start/stop coincidences.
///
/// A start at `t` arms the converter, which then accepts the first unused
/// stop in `[t + stop_delay − window/2, t + stop_delay + window/2]`. Until
/// that stop arrives (or the window closes) further starts are ignored.
/// Each stop is used at most once.
pub fn tac_coincidences(
    starts: &[DetectionRecord],
    stops: &[DetectionRecord],
    window_ns: f64,
    stop_delay_ns: f64,
) -> SimResultT<u64> {
    let starts: Vec<f64> = starts.iter().map(|r| r.time_ns).collect();
    let stops: Vec<f64> = stops.iter().map(|r| r.time_ns).collect();
    check_ordered(&starts, "start")?;
    check_ordered(&stops, "stop")?;
    Ok(count_sorted(&starts, &stops, window_ns, stop_delay_ns))
}

pub(crate) fn count_sorted(starts: &[f64], stops: &[f64], window_ns: f64, stop_delay_ns: f64) -> u64 {
    let half = 0.5 * window_ns;
    let mut busy_until = f64::NEG_INFINITY;
    let mut next_stop = 0;
    let mut count = 0;
    for &t in starts {
        if t < busy_until { continue; }
        let lo = t + stop_delay_ns - half;
        let hi = t + stop_delay_ns + half;
        while next_stop < stops.len() && stops[next_stop] < lo {
            next_stop += 1;
        }
        match stops.get(next_stop) {
            Some(&s) if s <= hi => {
                count += 1;
                next_stop += 1;
                busy_until = s;
            },
            _ => busy_until = hi,
        }
    }
    count
}
