use std::collections::{ HashMap, VecDeque };
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ Distribution, Exp };
use crate::bench::{ BenchConfig, FailureModel };
use crate::polarization::{ self as pol, Arm, PolarizationDensity };
use super::{
    tac, Channel, DetectionRecord, Experiment, Origin, RngSeed, Run, SimError,
    SimResult, SimResultT,
};

// independent random streams per physical process
const STREAM_PAIRS: u64 = 0;
const STREAM_DARK1: u64 = 1;
const STREAM_DARK2: u64 = 2;
const STREAM_BACKGROUND: u64 = 3;
const STREAM_IDLER: u64 = 4;

const NS_PER_S: f64 = 1e9;
const DRIVER_WINDOW_NS: f64 = 1e9;

#[derive(Copy, Clone, Debug)]
struct Candidate {
    time_ns: f64,
    origin: Origin,
}

/// Arrival times of a homogeneous Poisson process on `[0, span_ns)`.
fn poisson_times(rate_hz: f64, span_ns: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 || span_ns <= 0.0 { return out; }
    let gap = Exp::new(rate_hz / NS_PER_S).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= span_ns { return out; }
        out.push(t);
    }
}

fn extra_events(times: Vec<f64>, origin: Origin) -> impl Iterator<Item = Candidate> {
    times.into_iter().map(move |time_ns| Candidate { time_ns, origin })
}

/// Merge candidates into one time-ordered stream and apply a
/// non-paralyzable dead time.
fn register(channel: Channel, mut cands: Vec<Candidate>, dead_time_ns: f64) -> Vec<DetectionRecord> {
    cands.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
    let mut out: Vec<DetectionRecord> = Vec::with_capacity(cands.len());
    let mut last = f64::NEG_INFINITY;
    for c in cands {
        if c.time_ns - last >= dead_time_ns {
            out.push(DetectionRecord { channel, time_ns: c.time_ns, origin: c.origin });
            last = c.time_ns;
        }
    }
    out
}

/// Apply the driver policy to the trigger stream; returns pulse start
/// times and the number of times the driver disabled itself.
fn fire_pulses(triggers: &[DetectionRecord], cfg: &BenchConfig) -> (Vec<f64>, u64) {
    let mut pulses = Vec::with_capacity(triggers.len());
    let mut trailing: VecDeque<f64> = VecDeque::new();
    let mut disabled_until = f64::NEG_INFINITY;
    let mut trips = 0;
    let limit = cfg.driver.rate_threshold * DRIVER_WINDOW_NS / NS_PER_S;
    let lag = cfg.pockels.latency_ns + cfg.electronic_delay_ns;
    for r in triggers {
        let t = r.time_ns;
        trailing.push_back(t);
        while trailing.front().is_some_and(|&f| f <= t - DRIVER_WINDOW_NS) {
            trailing.pop_front();
        }
        if t < disabled_until { continue; }
        if trailing.len() as f64 > limit {
            disabled_until = t + cfg.driver.disable_duration_s * NS_PER_S;
            trips += 1;
            continue;
        }
        pulses.push(t + lag);
    }
    (pulses, trips)
}

fn check_duration(duration_s: f64) -> SimResultT<f64> {
    if duration_s.is_finite() && duration_s >= 0.0 {
        Ok(duration_s * NS_PER_S)
    } else {
        Err(SimError::BadDuration(duration_s))
    }
}

/// Run one experiment and keep both detection streams.
pub fn simulate(experiment: Experiment, cfg: &BenchConfig, duration_s: f64, seed: u64)
    -> SimResultT<Run>
{
    cfg.validate()?;
    let span = check_duration(duration_s)?;
    let seed = RngSeed(seed);
    let (trigger, analyzer, pairs, pulses, trips, offset) = match experiment {
        Experiment::Conditional => conditional_streams(cfg, span, seed)?,
        Experiment::Klyshko => klyshko_streams(cfg, span, seed),
    };
    let coincidences = tac::count_sorted(
        &trigger.iter().map(|r| r.time_ns).collect::<Vec<_>>(),
        &analyzer.iter().map(|r| r.time_ns).collect::<Vec<_>>(),
        cfg.tac.window_ns,
        offset,
    );
    let result = SimResult {
        duration_s,
        pairs_emitted: pairs,
        singles_trigger: trigger.len() as u64,
        singles_analyzer: analyzer.len() as u64,
        coincidences,
        pulses_fired: pulses,
        driver_trips: trips,
        config: cfg.clone(),
        seed: seed.0,
    };
    Ok(Run { result, trigger, analyzer })
}

type Streams = (Vec<DetectionRecord>, Vec<DetectionRecord>, u64, u64, u64, f64);

fn conditional_streams(cfg: &BenchConfig, span: f64, seed: RngSeed) -> SimResultT<Streams> {
    let joint = pol::make_state(cfg.source_kind, cfg.state_visibility)?;
    let trig = &cfg.trigger_projector;
    // conditional idler states: [passed the trigger projector, blocked]
    let branches = [
        joint.condition_on_effect(&trig.effect(), Arm::One).ok(),
        joint.condition_on_effect(&trig.complement_effect(), Arm::One).ok(),
    ];
    let p_pass = branches[0].as_ref().map_or(0.0, |b| b.0);

    let mut rng = seed.stream(STREAM_PAIRS);
    let mut emitted = Vec::new();
    let mut passed = Vec::new();
    let mut det1 = Vec::new();
    if cfg.pair_rate_hz > 0.0 {
        let gap = Exp::new(cfg.pair_rate_hz / NS_PER_S).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= span { break; }
            let pass = rng.random::<f64>() < p_pass;
            if pass && rng.random::<f64>() < cfg.det1.eta {
                det1.push(Candidate { time_ns: t, origin: Origin::Pair });
            }
            emitted.push(t);
            passed.push(pass);
        }
    }
    det1.extend(extra_events(
        poisson_times(cfg.det1.dark_rate_hz, span, &mut seed.stream(STREAM_DARK1)), Origin::Dark));
    let trigger = register(Channel::Trigger, det1, cfg.det1.dead_time_ns);

    let (pulses, trips) = if cfg.pockels.enabled {
        fire_pulses(&trigger, cfg)
    } else {
        (Vec::new(), 0)
    };

    let mut idlers = IdlerOptics::new(cfg, branches.map(|b| b.map(|(_, rho)| rho)))?;
    let mut rng = seed.stream(STREAM_IDLER);
    let stop_shift = cfg.fiber_delay_ns + cfg.tac.stop_delay_ns;
    let pulse_len = cfg.pulse.duration_ns();
    let mut first_live = 0;
    let mut det2 = Vec::new();
    for (&t_e, &pass) in emitted.iter().zip(&passed) {
        let arrival = t_e + cfg.fiber_delay_ns;
        while first_live < pulses.len() && pulses[first_live] + pulse_len < arrival {
            first_live += 1;
        }
        let amplitude = pulses[first_live..].iter()
            .take_while(|&&p| p <= arrival)
            .map(|&p| cfg.pulse.amplitude(arrival - p))
            .fold(0.0, f64::max);
        let branch = if pass { 0 } else { 1 };
        let prob = idlers.detection_probability(branch, amplitude, &mut rng)?;
        if rng.random::<f64>() < prob {
            det2.push(Candidate { time_ns: t_e + stop_shift, origin: Origin::Pair });
        }
    }
    add_analyzer_noise(&mut det2, cfg, span, seed);
    let analyzer = register(Channel::Analyzer, det2, cfg.det2.dead_time_ns);
    Ok((trigger, analyzer, emitted.len() as u64, pulses.len() as u64, trips, stop_shift))
}

fn klyshko_streams(cfg: &BenchConfig, span: f64, seed: RngSeed) -> Streams {
    let mut rng = seed.stream(STREAM_PAIRS);
    let idler_eff = cfg.idler_path_loss * cfg.det2.eta;
    let mut det1 = Vec::new();
    let mut det2 = Vec::new();
    let mut pairs = 0u64;
    if cfg.pair_rate_hz > 0.0 {
        let gap = Exp::new(cfg.pair_rate_hz / NS_PER_S).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= span { break; }
            pairs += 1;
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            if u1 < cfg.det1.eta {
                det1.push(Candidate { time_ns: t, origin: Origin::Pair });
            }
            if u2 < idler_eff {
                det2.push(Candidate { time_ns: t + cfg.tac.stop_delay_ns, origin: Origin::Pair });
            }
        }
    }
    det1.extend(extra_events(
        poisson_times(cfg.det1.dark_rate_hz, span, &mut seed.stream(STREAM_DARK1)), Origin::Dark));
    add_analyzer_noise(&mut det2, cfg, span, seed);
    let trigger = register(Channel::Trigger, det1, cfg.det1.dead_time_ns);
    let analyzer = register(Channel::Analyzer, det2, cfg.det2.dead_time_ns);
    (trigger, analyzer, pairs, 0, 0, cfg.tac.stop_delay_ns)
}

fn add_analyzer_noise(det2: &mut Vec<Candidate>, cfg: &BenchConfig, span: f64, seed: RngSeed) {
    det2.extend(extra_events(
        poisson_times(cfg.det2.dark_rate_hz, span, &mut seed.stream(STREAM_DARK2)), Origin::Dark));
    det2.extend(extra_events(
        poisson_times(cfg.background_rate_hz, span, &mut seed.stream(STREAM_BACKGROUND)),
        Origin::Background));
}

/// Per-idler detection probabilities on the analyzer arm, computed exactly
/// from the conditional states and cached per (branch, pulse amplitude).
struct IdlerOptics<'a> {
    cfg: &'a BenchConfig,
    states: [Option<PolarizationDensity>; 2],
    idle: [f64; 2],
    driven: HashMap<(usize, u64), f64>,
}

impl<'a> IdlerOptics<'a> {
    fn new(cfg: &'a BenchConfig, states: [Option<PolarizationDensity>; 2]) -> SimResultT<Self> {
        let idle_ch = cfg.pockels.idle_channel()?;
        let mut idle = [0.0; 2];
        for (slot, rho) in idle.iter_mut().zip(&states) {
            if let Some(rho) = rho {
                *slot = Self::through_analyzer(cfg, &pol::apply_channel(rho, &idle_ch));
            }
        }
        Ok(Self { cfg, states, idle, driven: HashMap::new() })
    }

    fn through_analyzer(cfg: &BenchConfig, rho: &PolarizationDensity) -> f64 {
        cfg.idler_path_loss * rho.transmission(&cfg.analyzer) * cfg.det2.eta
    }

    fn detection_probability(&mut self, branch: usize, amplitude: f64, rng: &mut ChaCha8Rng)
        -> SimResultT<f64>
    {
        if amplitude <= 0.0 { return Ok(self.idle[branch]); }
        let pockels = &self.cfg.pockels;
        if pockels.failure_model == FailureModel::BernoulliIdentity
            && rng.random::<f64>() >= pockels.p
        {
            return Ok(self.idle[branch]);
        }
        let key = (branch, amplitude.to_bits());
        if let Some(&p) = self.driven.get(&key) { return Ok(p); }
        let Some(rho) = &self.states[branch] else { return Ok(0.0) };
        let rot = pol::rotator(amplitude * pockels.rotation_deg);
        let ch = match pockels.failure_model {
            FailureModel::UniformDepolarizer => rot.then(&pol::depolarizer(pockels.q)?),
            FailureModel::BernoulliIdentity => rot,
        };
        let p = Self::through_analyzer(self.cfg, &pol::apply_channel(rho, &ch));
        // the tail produces a continuum of amplitudes; keep the cache bounded
        if self.driven.len() < 4096 { self.driven.insert(key, p); }
        Ok(p)
    }
}

/// Trigger-conditioned rotation experiment; counts only.
pub fn run_conditional_experiment(cfg: &BenchConfig, duration_s: f64, seed: u64) -> SimResultT<SimResult> {
    Ok(simulate(Experiment::Conditional, cfg, duration_s, seed)?.result)
}

/// Two-detector coincidence experiment; counts only.
pub fn run_klyshko_experiment(cfg: &BenchConfig, duration_s: f64, seed: u64) -> SimResultT<SimResult> {
    Ok(simulate(Experiment::Klyshko, cfg, duration_s, seed)?.result)
}
