//! Session state, the wire message schema and the replay driver.
//!
//! Every message is one JSON object per line carrying `"v": 1` and a
//! `"type"` tag. Server messages also carry `seq`, a per-session counter.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineConfig, PipelineError, PipelineEvent};
use crate::repdetect::{DnbModel, Mode, RepEvent, RepMetrics, RepOutput, RepProgress};
use crate::segmentation::SegmentEvent;
use crate::trace::{ImuSample, OrientationSample, Trace};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is not open")]
    NotOpen,
    #[error("session is already open")]
    AlreadyOpen,
    #[error("timestamp {t} does not follow {last}")]
    TimestampRegression { t: f64, last: f64 },
    #[error("non-finite sample at t={0}")]
    NonFinite(f64),
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("trace has no samples")]
    EmptyTrace,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Range of motion, degrees.
    #[default]
    Distance,
    /// Seconds.
    Duration,
    /// Degrees per second.
    Velocity,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Distance, Metric::Duration, Metric::Velocity];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Distance => "distance",
            Metric::Duration => "duration",
            Metric::Velocity => "velocity",
        }
    }

    pub fn of(self, m: &RepMetrics) -> f64 {
        match self {
            Metric::Distance => m.range_of_motion,
            Metric::Duration => m.duration,
            Metric::Velocity => m.mean_velocity,
        }
    }

    /// Estimate from a rep still in progress.
    pub fn provisional(self, p: &RepProgress) -> f64 {
        match self {
            Metric::Distance => p.rom_so_far,
            Metric::Duration => p.elapsed,
            Metric::Velocity if p.elapsed > 0.0 => p.rom_so_far / p.elapsed,
            Metric::Velocity => 0.0,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SessionError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Start,
    Stop,
    SelectMetric { metric: Metric },
    ResetBaseline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Stop => "stop",
            Command::SelectMetric { .. } => "select_metric",
            Command::ResetBaseline => "reset_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Sample {
    Imu(ImuSample),
    Orientation(OrientationSample),
}

impl Sample {
    pub fn t(&self) -> f64 {
        match self {
            Sample::Imu(s) => s.t,
            Sample::Orientation(s) => s.t,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Sample::Imu(s) => s.is_finite(),
            Sample::Orientation(s) => s.t.is_finite() && s.theta.is_finite(),
        }
    }
}

/// Messages from clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientMsg {
    Imu(ImuSample),
    Orientation(OrientationSample),
    Batch { samples: Vec<Sample> },
    Control(Command),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incoming {
    pub v: u32,
    #[serde(flatten)]
    pub msg: ClientMsg,
}

impl Incoming {
    pub fn new(msg: ClientMsg) -> Self {
        Self { v: SCHEMA_VERSION, msg }
    }

    pub fn parse(line: &str) -> Result<ClientMsg, SessionError> {
        let raw: serde_json::Value =
            serde_json::from_str(line).map_err(|e| SessionError::Schema(e.to_string()))?;
        match raw.get("v").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(SessionError::Schema(format!("unsupported version {v}"))),
            None => return Err(SessionError::Schema("missing version field v".into())),
        }
        let inc: Incoming = serde_json::from_value(raw).map_err(|e| SessionError::Schema(e.to_string()))?;
        Ok(inc.msg)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub open: bool,
    pub metric: Metric,
    pub baseline: Option<f64>,
    pub reps: usize,
    pub sets: usize,
}

/// Messages to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventMsg {
    SampleAck {
        t: f64,
    },
    OrientationUpdate {
        t: f64,
        theta: f64,
        /// Angle relative to the current set's range so far, in [0, 1].
        position: f64,
    },
    SetStarted {
        t: f64,
        set_index: usize,
    },
    SetEnded {
        t: f64,
        end_t: f64,
        set_index: usize,
    },
    RepDetected {
        t: f64,
        set_index: usize,
        rep_index: usize,
        metric: Metric,
        value: f64,
    },
    RepFinalized {
        rep: RepEvent,
        metric: Metric,
        value: f64,
    },
    RepRetracted {
        set_index: usize,
        rep_index: usize,
    },
    BaselineSet {
        metric: Metric,
        value: f64,
    },
    BaselineCleared,
    ControlAck {
        command: String,
        status: SessionStatus,
    },
    Rejected {
        reason: String,
        t: Option<f64>,
    },
    Error {
        message: String,
    },
    SessionSummary {
        session: String,
        reps: usize,
        sets: usize,
        samples: u64,
        dropped: u64,
    },
}

impl EventMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            EventMsg::SampleAck { .. } => "SampleAck",
            EventMsg::OrientationUpdate { .. } => "OrientationUpdate",
            EventMsg::SetStarted { .. } => "SetStarted",
            EventMsg::SetEnded { .. } => "SetEnded",
            EventMsg::RepDetected { .. } => "RepDetected",
            EventMsg::RepFinalized { .. } => "RepFinalized",
            EventMsg::RepRetracted { .. } => "RepRetracted",
            EventMsg::BaselineSet { .. } => "BaselineSet",
            EventMsg::BaselineCleared => "BaselineCleared",
            EventMsg::ControlAck { .. } => "ControlAck",
            EventMsg::Rejected { .. } => "Rejected",
            EventMsg::Error { .. } => "Error",
            EventMsg::SessionSummary { .. } => "SessionSummary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub msg: EventMsg,
}

impl Envelope {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event messages serialize")
    }

    pub fn parse(line: &str) -> Result<Self, SessionError> {
        serde_json::from_str(line).map_err(|e| SessionError::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Baseline {
    set_index: usize,
    rep_index: usize,
    metrics: RepMetrics,
}

/// Running min/max for the cursor position; restarts at each set.
#[derive(Debug, Clone, Copy, Default)]
struct PositionScale {
    lo: f64,
    hi: f64,
    seen: bool,
}

impl PositionScale {
    fn reset(&mut self) {
        self.seen = false;
    }

    fn position(&mut self, theta: f64) -> f64 {
        if !self.seen {
            (self.lo, self.hi, self.seen) = (theta, theta, true);
        }
        self.lo = self.lo.min(theta);
        self.hi = self.hi.max(theta);
        let range = self.hi - self.lo;
        if range > 0.0 {
            ((theta - self.lo) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub struct Session {
    id: String,
    config: PipelineConfig,
    model: DnbModel,
    mode: Mode,
    rate_hz: f64,
    pipeline: Option<Pipeline>,
    metric: Metric,
    baseline: Option<Baseline>,
    reps: usize,
    sets: usize,
    samples: u64,
    dropped: u64,
    last_t: Option<f64>,
    open_set: Option<usize>,
    scale: PositionScale,
    seq: u64,
}

impl Session {
    /// A closed session; see [`Session::start`].
    pub fn new(
        id: impl Into<String>,
        config: PipelineConfig,
        model: DnbModel,
        mode: Mode,
        rate_hz: f64,
    ) -> Result<Self, SessionError> {
        // fail early on bad configs rather than at start
        Pipeline::new(config, model.clone(), model.threshold(mode), rate_hz)?;
        Ok(Self {
            id: id.into(),
            config,
            model,
            mode,
            rate_hz,
            pipeline: None,
            metric: Metric::default(),
            baseline: None,
            reps: 0,
            sets: 0,
            samples: 0,
            dropped: 0,
            last_t: None,
            open_set: None,
            scale: PositionScale::default(),
            seq: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_open(&self) -> bool {
        self.pipeline.is_some()
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            open: self.is_open(),
            metric: self.metric,
            baseline: self.baseline.map(|b| self.metric.of(&b.metrics)),
            reps: self.reps,
            sets: self.sets,
        }
    }

    /// Messages dropped by the publisher, reported in the summary.
    pub fn note_dropped(&mut self, dropped: u64) {
        self.dropped = dropped;
    }

    /// Wraps messages with the schema version and sequence numbers.
    pub fn seal(&mut self, msgs: Vec<EventMsg>) -> Vec<Envelope> {
        msgs.into_iter()
            .map(|msg| {
                self.seq += 1;
                Envelope {
                    v: SCHEMA_VERSION,
                    seq: self.seq,
                    msg,
                }
            })
            .collect()
    }

    /// Opens the session with fresh pipeline state and counters.
    pub fn start(&mut self) -> Result<(), SessionError> {
        if self.is_open() {
            return Err(SessionError::AlreadyOpen);
        }
        self.pipeline = Some(Pipeline::new(
            self.config,
            self.model.clone(),
            self.model.threshold(self.mode),
            self.rate_hz,
        )?);
        self.baseline = None;
        self.reps = 0;
        self.sets = 0;
        self.samples = 0;
        self.last_t = None;
        self.open_set = None;
        self.scale = PositionScale::default();
        Ok(())
    }

    /// Closes the session, flushing any open set, and ends with the summary.
    pub fn stop(&mut self) -> Result<Vec<EventMsg>, SessionError> {
        let mut pipeline = self.pipeline.take().ok_or(SessionError::NotOpen)?;
        let mut out = Vec::new();
        for ev in pipeline.finish() {
            self.translate(ev, &mut out);
        }
        if let Some(set_index) = self.open_set {
            let t = self.last_t.unwrap_or(0.0);
            self.translate(
                PipelineEvent::Segment(SegmentEvent::SetEnded { t, end_t: t, set_index }),
                &mut out,
            );
        }
        out.push(self.summary());
        Ok(out)
    }

    pub fn summary(&self) -> EventMsg {
        EventMsg::SessionSummary {
            session: self.id.clone(),
            reps: self.reps,
            sets: self.sets,
            samples: self.samples,
            dropped: self.dropped,
        }
    }

    pub fn control(&mut self, command: Command) -> Result<Vec<EventMsg>, SessionError> {
        let mut out = Vec::new();
        match command {
            Command::Start => self.start()?,
            Command::Stop => out = self.stop()?,
            Command::SelectMetric { metric } => {
                self.metric = metric;
                if let Some(b) = self.baseline {
                    out.push(EventMsg::BaselineSet {
                        metric,
                        value: metric.of(&b.metrics),
                    });
                }
            }
            Command::ResetBaseline => {
                if self.baseline.take().is_some() {
                    out.push(EventMsg::BaselineCleared);
                }
            }
        }
        out.insert(
            0,
            EventMsg::ControlAck {
                command: command.name().to_string(),
                status: self.status(),
            },
        );
        Ok(out)
    }

    /// Live ingest: each accepted sample is acknowledged ahead of the
    /// events it causes. Rejected samples leave the session untouched.
    pub fn ingest(&mut self, sample: Sample) -> Result<Vec<EventMsg>, SessionError> {
        self.check(&sample)?;
        let mut out = vec![EventMsg::SampleAck { t: sample.t() }];
        self.process(sample, &mut out)?;
        Ok(out)
    }

    /// Replay ingest: like [`Session::ingest`] without acknowledgements.
    pub fn feed(&mut self, sample: Sample) -> Result<Vec<EventMsg>, SessionError> {
        self.check(&sample)?;
        let mut out = Vec::new();
        self.process(sample, &mut out)?;
        Ok(out)
    }

    fn check(&self, sample: &Sample) -> Result<(), SessionError> {
        if !self.is_open() {
            return Err(SessionError::NotOpen);
        }
        if !sample.is_finite() {
            return Err(SessionError::NonFinite(sample.t()));
        }
        match self.last_t {
            Some(last) if sample.t() <= last => Err(SessionError::TimestampRegression { t: sample.t(), last }),
            _ => Ok(()),
        }
    }

    fn process(&mut self, sample: Sample, out: &mut Vec<EventMsg>) -> Result<(), SessionError> {
        let pipeline = self.pipeline.as_mut().ok_or(SessionError::NotOpen)?;
        let events = match sample {
            Sample::Imu(s) => pipeline.push_imu(&s)?,
            Sample::Orientation(s) => pipeline.push_orientation(s)?,
        };
        self.last_t = Some(sample.t());
        self.samples += 1;
        for ev in events {
            self.translate(ev, out);
        }
        Ok(())
    }

    fn translate(&mut self, ev: PipelineEvent, out: &mut Vec<EventMsg>) {
        match ev {
            PipelineEvent::Orientation(o) => out.push(EventMsg::OrientationUpdate {
                t: o.t,
                theta: o.theta,
                position: self.scale.position(o.theta),
            }),
            PipelineEvent::Segment(SegmentEvent::SetStarted { t, set_index }) => {
                self.scale.reset();
                self.open_set = Some(set_index);
                out.push(EventMsg::SetStarted { t, set_index });
            }
            PipelineEvent::Segment(SegmentEvent::SetEnded { t, end_t, set_index }) => {
                self.sets += 1;
                self.open_set = None;
                out.push(EventMsg::SetEnded { t, end_t, set_index });
            }
            PipelineEvent::Rep(RepOutput::Detected(p)) => out.push(EventMsg::RepDetected {
                t: p.t,
                set_index: p.set_index,
                rep_index: p.rep_index,
                metric: self.metric,
                value: self.metric.provisional(&p),
            }),
            PipelineEvent::Rep(RepOutput::Finalized(rep)) => {
                self.reps += 1;
                let value = self.metric.of(&rep.metrics);
                out.push(EventMsg::RepFinalized {
                    rep,
                    metric: self.metric,
                    value,
                });
                if self.baseline.is_none() {
                    self.baseline = Some(Baseline {
                        set_index: rep.set_index,
                        rep_index: rep.rep_index,
                        metrics: rep.metrics,
                    });
                    out.push(EventMsg::BaselineSet {
                        metric: self.metric,
                        value,
                    });
                }
            }
            PipelineEvent::Rep(RepOutput::Retracted { set_index, rep_index }) => {
                self.reps = self.reps.saturating_sub(1);
                out.push(EventMsg::RepRetracted { set_index, rep_index });
                if self
                    .baseline
                    .is_some_and(|b| b.set_index == set_index && b.rep_index == rep_index)
                {
                    self.baseline = None;
                    out.push(EventMsg::BaselineCleared);
                }
            }
        }
    }
}

/// Samples of a trace in replay order: orientation when present, IMU
/// otherwise.
pub fn trace_samples(trace: &Trace) -> Vec<Sample> {
    if let Some(o) = &trace.orientation {
        o.iter().copied().map(Sample::Orientation).collect()
    } else if let Some(s) = &trace.samples {
        s.iter().copied().map(Sample::Imu).collect()
    } else {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayStats {
    pub samples: usize,
    pub messages: usize,
    pub wall: Duration,
}

/// Feeds a trace through a fresh session, pacing samples at
/// `speed` times real time (`0` = as fast as possible), and hands every
/// sealed message to `sink`. `dropped` is consulted once, for the summary.
pub fn run_replay(
    trace: &Trace,
    speed: f64,
    mut session: Session,
    mut sink: impl FnMut(Envelope),
    dropped: impl FnOnce() -> u64,
) -> Result<ReplayStats, SessionError> {
    if !(speed >= 0.0 && speed.is_finite()) {
        return Err(SessionError::Schema(format!("speed must be >= 0, got {speed}")));
    }
    let begin = Instant::now();
    session.start()?;
    let samples = trace_samples(trace);
    let t0 = samples.first().map(Sample::t).unwrap_or(0.0);
    let mut messages = 0;
    for s in &samples {
        if speed > 0.0 {
            let due = Duration::from_secs_f64(((s.t() - t0) / speed).max(0.0));
            let now = begin.elapsed();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let msgs = session.feed(*s)?;
        for e in session.seal(msgs) {
            messages += 1;
            sink(e);
        }
    }
    let mut tail = session.stop()?;
    if let Some(EventMsg::SessionSummary { dropped: d, .. }) = tail.last_mut() {
        *d = dropped();
    }
    for e in session.seal(tail) {
        messages += 1;
        sink(e);
    }
    Ok(ReplayStats {
        samples: samples.len(),
        messages,
        wall: begin.elapsed(),
    })
}
