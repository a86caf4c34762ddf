//! Seeded synthetic sessions with exact ground truth.
//!
//! Timeline of one set: lift from the resting angle to the set posture,
//! a short hold, the repetitions (each a V built from two half-cosine
//! limbs, separated by micro-pauses at the top), a hold, and the lowering
//! back to rest. The annotated set spans first rep start to last rep end;
//! every boundary falls on a sample instant.
//!
//! Randomness comes from [`SplitMix`], a counter-based generator whose
//! output is fully specified below, so a seed reproduces the same session
//! in any implementation:
//!
//! ```text
//! state_k   = seed + k * 0x9E3779B97F4A7C15          (wrapping, k = 1, 2, ...)
//! z         = (state_k ^ (state_k >> 30)) * 0xBF58476D1CE4E5B9
//! z         = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! u64_k     = z ^ (z >> 31)
//! uniform_k = (u64_k >> 11) * 2^-53                    in [0, 1)
//! normal    = sqrt(-2 ln(1 - u_a)) * cos(2 pi u_b)     (two uniforms per draw)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Axis, AxisMapping};
use crate::trace::{
    GroundTruth, ImuSample, OrientationSample, PhaseOrder, RepInterval, SetInterval, Trace,
    TraceMeta,
};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("trace has no orientation stream")]
    NoOrientation,
    #[error("orientation stream is not uniformly sampled at row {0}")]
    NonUniform(usize),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Counter-based SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix {
    seed: u64,
    counter: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// An independent stream for a named purpose.
    pub fn derive(&self, stream: u64) -> Self {
        let mut base = SplitMix::new(self.seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
        Self::new(base.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        let mut z = self
            .seed
            .wrapping_add(self.counter.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, r: Range) -> f64 {
        r.lo + (r.hi - r.lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let a = self.uniform();
        let b = self.uniform();
        (-2.0 * (1.0 - a).ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    }

    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        if hi <= lo {
            return lo;
        }
        lo + (self.uniform() * (hi - lo + 1) as f64) as usize
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn check(&self, name: &str, allow_zero: bool) -> Result<(), SynthError> {
        let ok_lo = if allow_zero { self.lo >= 0.0 } else { self.lo > 0.0 };
        if !(self.lo.is_finite() && self.hi.is_finite() && ok_lo && self.hi >= self.lo) {
            return Err(SynthError::InvalidPlan(format!(
                "{name} range [{}, {}] is empty or not positive",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseProfile {
    pub name: String,
    /// degrees
    pub rom: Range,
    /// seconds
    pub eccentric: Range,
    /// seconds
    pub concentric: Range,
    /// seconds between sets
    pub rest: Range,
    /// elevation of the set posture above the resting angle, degrees
    pub posture: Range,
    /// pause at the top between reps, seconds
    pub pause: Range,
    /// lift into / lower out of the set posture, seconds
    pub transition: Range,
    /// hold in posture before the first rep, seconds
    pub hold_before: Range,
    /// hold in posture after the last rep, seconds
    pub hold_after: Range,
}

impl ExerciseProfile {
    fn base(name: &str) -> Self {
        Self {
            name: name.to_string(),
            rom: Range::new(35.0, 50.0),
            eccentric: Range::new(0.65, 0.95),
            concentric: Range::new(0.45, 0.65),
            rest: Range::new(30.0, 60.0),
            posture: Range::new(75.0, 90.0),
            pause: Range::new(0.1, 0.4),
            transition: Range::new(0.8, 1.2),
            hold_before: Range::new(0.4, 0.8),
            hold_after: Range::new(0.2, 0.5),
        }
    }

    pub fn bench_press() -> Self {
        Self::base("bench_press")
    }

    pub fn behind_neck_press() -> Self {
        Self {
            rom: Range::new(50.0, 70.0),
            eccentric: Range::new(0.8, 1.2),
            concentric: Range::new(0.6, 0.9),
            posture: Range::new(120.0, 145.0),
            ..Self::base("behind_neck_press")
        }
    }

    pub fn lat_pulldown() -> Self {
        Self {
            rom: Range::new(50.0, 70.0),
            eccentric: Range::new(0.9, 1.3),
            concentric: Range::new(0.7, 1.0),
            posture: Range::new(125.0, 150.0),
            ..Self::base("lat_pulldown")
        }
    }

    pub fn flys() -> Self {
        Self {
            rom: Range::new(55.0, 75.0),
            eccentric: Range::new(1.0, 1.4),
            concentric: Range::new(0.8, 1.1),
            posture: Range::new(80.0, 95.0),
            ..Self::base("flys")
        }
    }

    /// Short, explosive reps with a large excursion.
    pub fn push_jerk() -> Self {
        Self {
            rom: Range::new(70.0, 90.0),
            eccentric: Range::new(0.45, 0.65),
            concentric: Range::new(0.35, 0.5),
            posture: Range::new(110.0, 130.0),
            pause: Range::new(0.2, 0.6),
            ..Self::base("push_jerk")
        }
    }

    pub fn all() -> Vec<Self> {
        vec![
            Self::bench_press(),
            Self::behind_neck_press(),
            Self::lat_pulldown(),
            Self::flys(),
            Self::push_jerk(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::all().into_iter().find(|p| p.name == name)
    }

    fn validate(&self) -> Result<(), SynthError> {
        self.rom.check("rom", false)?;
        self.eccentric.check("eccentric", false)?;
        self.concentric.check("concentric", false)?;
        self.rest.check("rest", false)?;
        self.posture.check("posture", false)?;
        self.pause.check("pause", true)?;
        self.transition.check("transition", false)?;
        self.hold_before.check("hold_before", true)?;
        self.hold_after.check("hold_after", true)?;
        if self.posture.hi + 10.0 > 180.0 {
            return Err(SynthError::InvalidPlan("posture too close to 180°".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseProfile {
    /// white noise on the angle, degrees
    pub sensor_noise_deg: f64,
    /// slow drift of the resting angle, deg/min
    pub drift_deg_per_min: f64,
    /// stretch-like excursions per minute of rest
    pub stretch_rate_per_min: f64,
    /// amplitude of ordinary excursions, degrees
    pub stretch_amplitude_deg: f64,
    /// fraction of excursions that reach 50-80% of the set posture
    pub large_stretch_fraction: f64,
    /// accelerometer white noise, m/s²
    pub accel_noise: f64,
    /// gyroscope white noise, deg/s
    pub gyro_noise: f64,
    /// constant gyroscope bias, deg/s
    pub gyro_bias: f64,
}

impl NoiseProfile {
    pub fn zero() -> Self {
        Self {
            sensor_noise_deg: 0.0,
            drift_deg_per_min: 0.0,
            stretch_rate_per_min: 0.0,
            stretch_amplitude_deg: 0.0,
            large_stretch_fraction: 0.0,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            gyro_bias: 0.0,
        }
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            sensor_noise_deg: 0.5,
            drift_deg_per_min: 0.5,
            stretch_rate_per_min: 1.0,
            stretch_amplitude_deg: 4.0,
            large_stretch_fraction: 0.2,
            accel_noise: 0.05,
            gyro_noise: 0.3,
            gyro_bias: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub seed: u64,
    pub subject: String,
    pub profile: ExerciseProfile,
    pub sets: usize,
    pub reps_per_set: (usize, usize),
    pub noise: NoiseProfile,
    /// rest before the first set, seconds
    pub lead_in: Range,
    /// rest after the last set, seconds
    pub lead_out: Range,
    pub rate_hz: f64,
}

impl SessionPlan {
    pub fn new(profile: ExerciseProfile, seed: u64) -> Self {
        Self {
            seed,
            subject: format!("synth{seed}"),
            profile,
            sets: 3,
            reps_per_set: (4, 8),
            noise: NoiseProfile::default(),
            lead_in: Range::new(4.0, 8.0),
            lead_out: Range::new(8.0, 12.0),
            rate_hz: 50.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.profile.validate()?;
        self.lead_in.check("lead_in", false)?;
        self.lead_out.check("lead_out", false)?;
        if self.sets == 0 {
            return Err(SynthError::InvalidPlan("sets must be > 0".into()));
        }
        let (lo, hi) = self.reps_per_set;
        if lo == 0 || hi < lo {
            return Err(SynthError::InvalidPlan("reps_per_set range is empty".into()));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(SynthError::InvalidPlan("rate_hz must be > 0".into()));
        }
        let n = &self.noise;
        for v in [
            n.sensor_noise_deg,
            n.drift_deg_per_min,
            n.stretch_rate_per_min,
            n.stretch_amplitude_deg,
            n.accel_noise,
            n.gyro_noise,
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidPlan("noise values must be >= 0".into()));
            }
        }
        if !(0.0..=1.0).contains(&n.large_stretch_fraction) {
            return Err(SynthError::InvalidPlan(
                "large_stretch_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One piece of the clean angle signal, in sample indices.
#[derive(Debug, Clone, Copy)]
enum Piece {
    /// Constant offset above the resting angle.
    Hold { level: f64 },
    /// Half-cosine move between two offsets.
    Move { from: f64, to: f64 },
    /// Rest with a raised-cosine excursion in the middle of `[rise_at, fall_end)`.
    Bump {
        amplitude: f64,
        rise: usize,
        hold: usize,
        fall: usize,
        offset: usize,
    },
}

struct Timeline {
    pieces: Vec<(usize, usize, Piece)>,
    len: usize,
}

impl Timeline {
    fn new() -> Self {
        Self {
            pieces: Vec::new(),
            len: 0,
        }
    }

    fn push(&mut self, n: usize, piece: Piece) {
        if n > 0 {
            self.pieces.push((self.len, n, piece));
            self.len += n;
        }
    }

    fn value(piece: &Piece, k: usize, n: usize) -> f64 {
        match *piece {
            Piece::Hold { level } => level,
            Piece::Move { from, to } => {
                let u = k as f64 / n as f64;
                from + (to - from) * 0.5 * (1.0 - (std::f64::consts::PI * u).cos())
            }
            Piece::Bump {
                amplitude,
                rise,
                hold,
                fall,
                offset,
            } => {
                let half_cos = |u: f64| 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
                if k < offset {
                    0.0
                } else if k < offset + rise {
                    amplitude * half_cos((k - offset) as f64 / rise as f64)
                } else if k < offset + rise + hold {
                    amplitude
                } else if k < offset + rise + hold + fall {
                    amplitude * (1.0 - half_cos((k - offset - rise - hold) as f64 / fall as f64))
                } else {
                    0.0
                }
            }
        }
    }

    fn render(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len);
        for (_, n, piece) in &self.pieces {
            out.extend((0..*n).map(|k| Self::value(piece, k, *n)));
        }
        out
    }
}

fn samples(seconds: f64, rate: f64) -> usize {
    (seconds * rate).round().max(1.0) as usize
}

/// Builds a session. Deterministic for a fixed plan.
pub fn generate_session(plan: &SessionPlan) -> Result<Trace, SynthError> {
    plan.validate()?;
    let rate = plan.rate_hz;
    let p = &plan.profile;
    let root = SplitMix::new(plan.seed);
    let mut shape = root.derive(1);
    let mut rest_rng = root.derive(2);
    let mut noise_rng = root.derive(3);

    let rest_angle = shape.range(Range::new(-10.0, 10.0));
    let drift_sign = if shape.uniform() < 0.5 { -1.0 } else { 1.0 };

    let mut timeline = Timeline::new();
    let mut truth = GroundTruth::default();
    let at = |idx: usize| idx as f64 / rate;

    let add_rest = |timeline: &mut Timeline, rng: &mut SplitMix, seconds: f64, posture: f64| {
        let n = samples(seconds, rate);
        let minutes = seconds / 60.0;
        // expected count rate*minutes, drawn as a Bernoulli sequence per 10 s slot
        let slots = (seconds / 10.0).floor() as usize;
        let mut cursor = 0usize;
        let mut bumps = Vec::new();
        for s in 0..slots {
            let draw = rng.uniform();
            if draw < plan.noise.stretch_rate_per_min * minutes / slots.max(1) as f64 {
                let large = rng.uniform() < plan.noise.large_stretch_fraction;
                let amplitude = if large {
                    posture * rng.range(Range::new(0.5, 0.8))
                } else {
                    plan.noise.stretch_amplitude_deg * rng.range(Range::new(0.5, 1.0))
                };
                let sign = if large || rng.uniform() < 0.5 { 1.0 } else { -1.0 };
                let rise = samples(rng.range(Range::new(0.8, 1.5)), rate);
                let hold = samples(rng.range(Range::new(0.5, 2.5)), rate);
                let fall = samples(rng.range(Range::new(0.8, 1.5)), rate);
                let slot_start = samples(s as f64 * 10.0 + 2.0, rate);
                let offset = slot_start.max(cursor);
                if offset + rise + hold + fall + samples(2.0, rate) < n {
                    bumps.push((offset, sign * amplitude, rise, hold, fall));
                    cursor = offset + rise + hold + fall;
                }
            }
        }
        let mut pos = 0usize;
        for (offset, amplitude, rise, hold, fall) in bumps {
            let len = offset + rise + hold + fall - pos;
            timeline.push(
                len,
                Piece::Bump {
                    amplitude,
                    rise,
                    hold,
                    fall,
                    offset: offset - pos,
                },
            );
            pos += len;
        }
        timeline.push(n - pos, Piece::Hold { level: 0.0 });
    };

    add_rest(&mut timeline, &mut rest_rng, shape.range(plan.lead_in), 0.0);
    for set_index in 0..plan.sets {
        let posture = shape.range(p.posture);
        timeline.push(
            samples(shape.range(p.transition), rate),
            Piece::Move {
                from: 0.0,
                to: posture,
            },
        );
        timeline.push(
            samples(shape.range(p.hold_before), rate),
            Piece::Hold { level: posture },
        );
        let reps = shape.int_range(plan.reps_per_set.0, plan.reps_per_set.1);
        let set_start = timeline.len;
        for r in 0..reps {
            if r > 0 {
                let pause = (shape.range(p.pause) * rate).round() as usize;
                timeline.push(pause, Piece::Hold { level: posture });
            }
            let rom = shape.range(p.rom);
            let n_ecc = samples(shape.range(p.eccentric), rate);
            let n_con = samples(shape.range(p.concentric), rate);
            let start = timeline.len;
            timeline.push(
                n_ecc,
                Piece::Move {
                    from: posture,
                    to: posture - rom,
                },
            );
            let apex = timeline.len;
            timeline.push(
                n_con,
                Piece::Move {
                    from: posture - rom,
                    to: posture,
                },
            );
            truth.reps.push(RepInterval {
                start_t: at(start),
                apex_t: at(apex),
                end_t: at(timeline.len),
                set_index,
                phase_order: PhaseOrder::EccentricFirst,
            });
        }
        truth.sets.push(SetInterval {
            start_t: at(set_start),
            end_t: at(timeline.len),
        });
        timeline.push(
            samples(shape.range(p.hold_after), rate),
            Piece::Hold { level: posture },
        );
        timeline.push(
            samples(shape.range(p.transition), rate),
            Piece::Move {
                from: posture,
                to: 0.0,
            },
        );
        let rest = if set_index + 1 == plan.sets {
            shape.range(plan.lead_out)
        } else {
            shape.range(p.rest)
        };
        add_rest(&mut timeline, &mut rest_rng, rest, posture);
    }
    // the rep ending a segment lands one sample past the last rendered value
    timeline.push(1, Piece::Hold { level: 0.0 });

    let clean = timeline.render();
    let drift_per_sample = drift_sign * plan.noise.drift_deg_per_min / 60.0 / rate;
    let orientation = clean
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let noise = plan.noise.sensor_noise_deg * noise_rng.normal();
            let theta = rest_angle + drift_per_sample * i as f64 + v + noise;
            OrientationSample::new(at(i), theta.clamp(-180.0, 180.0))
        })
        .collect();

    let meta = TraceMeta {
        exercise: p.name.clone(),
        subject: plan.subject.clone(),
        rate_hz: rate,
    };
    let mut trace = Trace::from_orientation(orientation, meta);
    trace.truth = Some(truth);
    Ok(trace)
}

/// Synthesizes 6-axis IMU readings consistent with the trace's angle.
///
/// The gyro channel carries the backward difference of θ (forward
/// difference for the first sample) plus bias and noise; the accelerometer
/// carries gravity rotated by θ plus noise. Other axes carry noise only.
pub fn generate_imu(
    trace: &Trace,
    noise: &NoiseProfile,
    axes: &AxisMapping,
    seed: u64,
) -> Result<Trace, SynthError> {
    let theta = trace.orientation.as_ref().ok_or(SynthError::NoOrientation)?;
    let period = 1.0 / trace.meta.rate_hz;
    for (i, w) in theta.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - period).abs() > 1e-6 {
            return Err(SynthError::NonUniform(i + 2));
        }
    }
    let mut rng = SplitMix::new(seed).derive(4);
    let mut samples = Vec::with_capacity(theta.len());
    for (i, o) in theta.iter().enumerate() {
        let rate = match (i.checked_sub(1).map(|j| theta[j]), theta.get(i + 1)) {
            (Some(prev), _) => (o.theta - prev.theta) / (o.t - prev.t),
            (None, Some(next)) => (next.theta - o.theta) / (next.t - o.t),
            (None, None) => 0.0,
        };
        let rad = o.theta.to_radians();
        let mut accel = [0.0; 3];
        set_axis(&mut accel, axes.arm, GRAVITY * rad.sin());
        set_axis(&mut accel, axes.vertical, GRAVITY * rad.cos());
        let mut gyro = [0.0; 3];
        set_axis(&mut gyro, axes.gyro, axes.gyro_sign * (rate + noise.gyro_bias));
        for a in &mut accel {
            *a += noise.accel_noise * rng.normal();
        }
        for g in &mut gyro {
            *g += noise.gyro_noise * rng.normal();
        }
        samples.push(ImuSample {
            t: o.t,
            ax: accel[0],
            ay: accel[1],
            az: accel[2],
            gx: gyro[0],
            gy: gyro[1],
            gz: gyro[2],
        });
    }
    Ok(Trace {
        samples: Some(samples),
        orientation: Some(theta.clone()),
        truth: trace.truth.clone(),
        meta: trace.meta.clone(),
    })
}

fn set_axis(v: &mut [f64; 3], axis: Axis, value: f64) {
    match axis {
        Axis::X => v[0] = value,
        Axis::Y => v[1] = value,
        Axis::Z => v[2] = value,
    }
}

/// A corpus of sessions, `sessions` per profile, seeds derived from `seed`.
pub fn generate_corpus(
    profiles: &[ExerciseProfile],
    sessions: usize,
    seed: u64,
    noise: NoiseProfile,
) -> Result<Vec<Trace>, SynthError> {
    let mut out = Vec::with_capacity(profiles.len() * sessions);
    for (pi, profile) in profiles.iter().enumerate() {
        for s in 0..sessions {
            let session_seed = seed
                .wrapping_mul(1_000_003)
                .wrapping_add((pi * 10_000 + s) as u64);
            let mut plan = SessionPlan::new(profile.clone(), session_seed);
            plan.noise = noise;
            out.push(generate_session(&plan)?);
        }
    }
    Ok(out)
}
