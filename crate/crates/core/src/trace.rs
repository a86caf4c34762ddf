//! Trace data types and the on-disk trace / annotation formats.
//!
//! A trace file is CSV preceded by a single metadata comment line:
//!
//! ```text
//! # repwatch-trace v1; rate=50; exercise=bench_press; subject=s01
//! t,theta
//! 0.000000,12.5
//! ```
//!
//! The column header is `t,ax,ay,az,gx,gy,gz` for raw IMU data, `t,theta`
//! for orientation, or `t,ax,ay,az,gx,gy,gz,theta` when both streams share
//! timestamps. Ground truth lives in a sidecar next to the trace
//! (`session.csv` -> `session.truth.csv`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "v1";
const MAGIC: &str = "repwatch-trace";
const IMU_HEADER: &str = "t,ax,ay,az,gx,gy,gz";
const THETA_HEADER: &str = "t,theta";
const BOTH_HEADER: &str = "t,ax,ay,az,gx,gy,gz,theta";
const TRUTH_HEADER: &str = "kind,start_t,apex_t,end_t,set_index";
const TRUTH_HEADER_PHASED: &str = "kind,start_t,apex_t,end_t,set_index,phase_order";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing or malformed metadata line")]
    MissingMetadata,
    #[error("unknown format version {0:?}")]
    UnknownVersion(String),
    #[error("bad metadata field {0:?}")]
    BadMetadata(String),
    #[error("unrecognized column header {0:?}")]
    BadHeader(String),
    #[error("wrong column count at row {row}: expected {expected}, got {got}")]
    ColumnCount {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unparsable value {value:?} at row {row}")]
    Parse { row: usize, value: String },
    #[error("non-finite channel value at row {row}")]
    NonFinite { row: usize },
    #[error("non-monotonic timestamp at row {row}")]
    NonMonotonic { row: usize },
    #[error("negative timestamp at row {row}")]
    NegativeTime { row: usize },
    #[error("orientation out of range at row {row}")]
    AngleRange { row: usize },
    #[error("invalid annotation at row {row}: {reason}")]
    Annotation { row: usize, reason: String },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// One 6-axis inertial reading. Accelerations in m/s², rates in deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl ImuSample {
    pub fn channels(&self) -> [f64; 6] {
        [self.ax, self.ay, self.az, self.gx, self.gy, self.gz]
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.channels().iter().all(|v| v.is_finite())
    }
}

/// Fused arm elevation angle at time `t`, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationSample {
    pub t: f64,
    pub theta: f64,
}

impl OrientationSample {
    pub fn new(t: f64, theta: f64) -> Self {
        Self { t, theta }
    }
}

pub type OrientationSeries = Vec<OrientationSample>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PhaseOrder {
    /// Lowering first, then lifting (a V in the angle signal).
    #[default]
    EccentricFirst,
    ConcentricFirst,
}

impl PhaseOrder {
    fn as_str(self) -> &'static str {
        match self {
            PhaseOrder::EccentricFirst => "ecc-con",
            PhaseOrder::ConcentricFirst => "con-ecc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ecc-con" | "" => Some(PhaseOrder::EccentricFirst),
            "con-ecc" => Some(PhaseOrder::ConcentricFirst),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetInterval {
    pub start_t: f64,
    pub end_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepInterval {
    pub start_t: f64,
    pub apex_t: f64,
    pub end_t: f64,
    pub set_index: usize,
    pub phase_order: PhaseOrder,
}

impl RepInterval {
    pub fn duration(&self) -> f64 {
        self.end_t - self.start_t
    }
}

/// Annotated set and repetition boundaries for a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sets: Vec<SetInterval>,
    pub reps: Vec<RepInterval>,
}

impl GroundTruth {
    /// Checks ordering and nesting. Never reorders.
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |row: usize, reason: &str| TraceError::Annotation {
            row,
            reason: reason.to_string(),
        };
        let mut prev_end = f64::NEG_INFINITY;
        for (i, s) in self.sets.iter().enumerate() {
            if !(s.start_t.is_finite() && s.end_t.is_finite()) || s.end_t <= s.start_t {
                return Err(bad(i + 1, "set end must follow its start"));
            }
            if s.start_t < prev_end {
                return Err(bad(i + 1, "sets overlap or are out of order"));
            }
            prev_end = s.end_t;
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (j, r) in self.reps.iter().enumerate() {
            let row = self.sets.len() + j + 1;
            if !(r.start_t < r.apex_t && r.apex_t < r.end_t) {
                return Err(bad(row, "apex must lie strictly inside the rep"));
            }
            if r.start_t < prev_end {
                return Err(bad(row, "reps overlap or are out of order"));
            }
            let set = self
                .sets
                .get(r.set_index)
                .ok_or_else(|| bad(row, "rep refers to a missing set"))?;
            if r.start_t < set.start_t || r.end_t > set.end_t {
                return Err(bad(row, "rep not nested in its set"));
            }
            prev_end = r.end_t;
        }
        Ok(())
    }

    pub fn reps_in_set(&self, set_index: usize) -> impl Iterator<Item = &RepInterval> {
        self.reps.iter().filter(move |r| r.set_index == set_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub exercise: String,
    pub subject: String,
    pub rate_hz: f64,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            exercise: "unknown".into(),
            subject: "anon".into(),
            rate_hz: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Option<Vec<ImuSample>>,
    pub orientation: Option<OrientationSeries>,
    pub truth: Option<GroundTruth>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn from_orientation(orientation: OrientationSeries, meta: TraceMeta) -> Self {
        Self {
            samples: None,
            orientation: Some(orientation),
            truth: None,
            meta,
        }
    }

    pub fn from_imu(samples: Vec<ImuSample>, meta: TraceMeta) -> Self {
        Self {
            samples: Some(samples),
            orientation: None,
            truth: None,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.samples
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.orientation.as_ref().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        let span = |first: Option<f64>, last: Option<f64>| match (first, last) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        if let Some(s) = &self.samples {
            span(s.first().map(|x| x.t), s.last().map(|x| x.t))
        } else if let Some(o) = &self.orientation {
            span(o.first().map(|x| x.t), o.last().map(|x| x.t))
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.samples.is_none() && self.orientation.is_none() {
            return Err(TraceError::Invalid("trace has no sample stream".into()));
        }
        if !(self.meta.rate_hz.is_finite() && self.meta.rate_hz > 0.0) {
            return Err(TraceError::BadMetadata(format!("rate={}", self.meta.rate_hz)));
        }
        if let Some(samples) = &self.samples {
            check_times(samples.iter().map(|s| s.t))?;
            if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
                return Err(TraceError::NonFinite { row: i + 1 });
            }
        }
        if let Some(orientation) = &self.orientation {
            check_times(orientation.iter().map(|s| s.t))?;
            for (i, s) in orientation.iter().enumerate() {
                if !s.theta.is_finite() {
                    return Err(TraceError::NonFinite { row: i + 1 });
                }
                if !(-180.0..=180.0).contains(&s.theta) {
                    return Err(TraceError::AngleRange { row: i + 1 });
                }
            }
        }
        if let (Some(s), Some(o)) = (&self.samples, &self.orientation) {
            let period = 1.0 / self.meta.rate_hz;
            let ends = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= period + 1e-9,
                (None, None) => true,
                _ => false,
            };
            if !ends(s.first().map(|x| x.t), o.first().map(|x| x.t))
                || !ends(s.last().map(|x| x.t), o.last().map(|x| x.t))
            {
                return Err(TraceError::Invalid(
                    "IMU and orientation streams cover different spans".into(),
                ));
            }
        }
        if let Some(truth) = &self.truth {
            truth.validate()?;
        }
        Ok(())
    }
}

fn check_times(times: impl Iterator<Item = f64>) -> Result<(), TraceError> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        if !t.is_finite() {
            return Err(TraceError::NonFinite { row: i + 1 });
        }
        if t < 0.0 {
            return Err(TraceError::NegativeTime { row: i + 1 });
        }
        if t <= prev {
            return Err(TraceError::NonMonotonic { row: i + 1 });
        }
        prev = t;
    }
    Ok(())
}

/// Path of the ground-truth sidecar for a trace file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.truth.csv"))
}

fn fmt_time(t: f64) -> String {
    format!("{t:.6}")
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    trace.validate()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {MAGIC} {FORMAT_VERSION}; rate={}; exercise={}; subject={}",
        trace.meta.rate_hz, trace.meta.exercise, trace.meta.subject
    );
    match (&trace.samples, &trace.orientation) {
        (Some(imu), Some(theta)) => {
            if imu.len() != theta.len() || imu.iter().zip(theta).any(|(a, b)| a.t != b.t) {
                return Err(TraceError::Invalid(
                    "IMU and orientation streams must share timestamps to be saved together"
                        .into(),
                ));
            }
            out.push_str(BOTH_HEADER);
            out.push('\n');
            for (s, o) in imu.iter().zip(theta) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    fmt_time(s.t),
                    s.ax,
                    s.ay,
                    s.az,
                    s.gx,
                    s.gy,
                    s.gz,
                    o.theta
                );
            }
        }
        (Some(imu), None) => {
            out.push_str(IMU_HEADER);
            out.push('\n');
            for s in imu {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_time(s.t),
                    s.ax,
                    s.ay,
                    s.az,
                    s.gx,
                    s.gy,
                    s.gz
                );
            }
        }
        (None, Some(theta)) => {
            out.push_str(THETA_HEADER);
            out.push('\n');
            for o in theta {
                let _ = writeln!(out, "{},{}", fmt_time(o.t), o.theta);
            }
        }
        (None, None) => unreachable!("validated above"),
    }
    fs::write(path, out).map_err(|source| TraceError::Write {
        path: path.to_path_buf(),
        source,
    })?;

    let sidecar = sidecar_path(path);
    if let Some(truth) = &trace.truth {
        fs::write(&sidecar, format_truth(truth)).map_err(|source| TraceError::Write {
            path: sidecar.clone(),
            source,
        })?;
    } else if sidecar.exists() {
        // a stale sidecar would attach someone else's annotations on load
        fs::remove_file(&sidecar).map_err(|source| TraceError::Write {
            path: sidecar,
            source,
        })?;
    }
    Ok(())
}

pub fn format_truth(truth: &GroundTruth) -> String {
    let mut out = String::new();
    out.push_str(TRUTH_HEADER_PHASED);
    out.push('\n');
    for (i, s) in truth.sets.iter().enumerate() {
        let _ = writeln!(
            out,
            "set,{},,{},{},",
            fmt_time(s.start_t),
            fmt_time(s.end_t),
            i
        );
    }
    for r in &truth.reps {
        let _ = writeln!(
            out,
            "rep,{},{},{},{},{}",
            fmt_time(r.start_t),
            fmt_time(r.apex_t),
            fmt_time(r.end_t),
            r.set_index,
            r.phase_order.as_str()
        );
    }
    out
}

pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut trace = parse_trace(&text)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|source| TraceError::Read {
            path: sidecar.clone(),
            source,
        })?;
        trace.truth = Some(parse_truth(&text)?);
    }
    trace.validate()?;
    Ok(trace)
}

fn parse_meta(line: &str) -> Result<TraceMeta, TraceError> {
    let body = line
        .strip_prefix('#')
        .ok_or(TraceError::MissingMetadata)?
        .trim();
    let mut parts = body.split(';').map(str::trim);
    let tag = parts.next().ok_or(TraceError::MissingMetadata)?;
    let version = tag
        .strip_prefix(MAGIC)
        .ok_or(TraceError::MissingMetadata)?
        .trim();
    if version != FORMAT_VERSION {
        return Err(TraceError::UnknownVersion(version.to_string()));
    }
    let mut meta = TraceMeta::default();
    let mut have_rate = false;
    for field in parts.filter(|p| !p.is_empty()) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| TraceError::BadMetadata(field.to_string()))?;
        match key.trim() {
            "rate" => {
                meta.rate_hz = value
                    .trim()
                    .parse()
                    .map_err(|_| TraceError::BadMetadata(field.to_string()))?;
                have_rate = true;
            }
            "exercise" => meta.exercise = value.trim().to_string(),
            "subject" => meta.subject = value.trim().to_string(),
            _ => return Err(TraceError::BadMetadata(field.to_string())),
        }
    }
    if !have_rate {
        return Err(TraceError::BadMetadata("rate missing".into()));
    }
    Ok(meta)
}

fn parse_row(line: &str, row: usize, expected: usize) -> Result<Vec<f64>, TraceError> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != expected {
        return Err(TraceError::ColumnCount {
            row,
            expected,
            got: cells.len(),
        });
    }
    cells
        .iter()
        .map(|c| {
            let v: f64 = c.trim().parse().map_err(|_| TraceError::Parse {
                row,
                value: c.to_string(),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TraceError::NonFinite { row })
            }
        })
        .collect()
}

/// Parses trace text (without sidecar). Row numbers count data rows from 1.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut lines = text.lines();
    let meta = parse_meta(lines.next().ok_or(TraceError::MissingMetadata)?)?;
    let header = lines
        .next()
        .ok_or_else(|| TraceError::BadHeader(String::new()))?
        .trim();
    let (has_imu, has_theta, cols) = match header {
        IMU_HEADER => (true, false, 7),
        THETA_HEADER => (false, true, 2),
        BOTH_HEADER => (true, true, 8),
        other => return Err(TraceError::BadHeader(other.to_string())),
    };
    let mut imu = Vec::new();
    let mut theta = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let row = i + 1;
        let v = parse_row(line, row, cols)?;
        let t = v[0];
        if t < 0.0 {
            return Err(TraceError::NegativeTime { row });
        }
        if t <= prev_t {
            return Err(TraceError::NonMonotonic { row });
        }
        prev_t = t;
        if has_imu {
            imu.push(ImuSample {
                t,
                ax: v[1],
                ay: v[2],
                az: v[3],
                gx: v[4],
                gy: v[5],
                gz: v[6],
            });
        }
        if has_theta {
            let angle = v[cols - 1];
            if !(-180.0..=180.0).contains(&angle) {
                return Err(TraceError::AngleRange { row });
            }
            theta.push(OrientationSample::new(t, angle));
        }
    }
    let trace = Trace {
        samples: has_imu.then_some(imu),
        orientation: has_theta.then_some(theta),
        truth: None,
        meta,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn parse_truth(text: &str) -> Result<GroundTruth, TraceError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim();
    let phased = match header {
        TRUTH_HEADER => false,
        TRUTH_HEADER_PHASED => true,
        other => return Err(TraceError::BadHeader(other.to_string())),
    };
    let mut truth = GroundTruth::default();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let row = i + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if phased { 6 } else { 5 };
        if cells.len() != expected {
            return Err(TraceError::ColumnCount {
                row,
                expected,
                got: cells.len(),
            });
        }
        let num = |s: &str| -> Result<f64, TraceError> {
            let v: f64 = s.parse().map_err(|_| TraceError::Parse {
                row,
                value: s.to_string(),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TraceError::NonFinite { row })
            }
        };
        let set_index: usize = cells[4].parse().map_err(|_| TraceError::Parse {
            row,
            value: cells[4].to_string(),
        })?;
        match cells[0] {
            "set" => {
                if !cells[2].is_empty() {
                    return Err(TraceError::Annotation {
                        row,
                        reason: "set rows carry no apex".into(),
                    });
                }
                if set_index != truth.sets.len() {
                    return Err(TraceError::Annotation {
                        row,
                        reason: "set indices must be contiguous from 0".into(),
                    });
                }
                truth.sets.push(SetInterval {
                    start_t: num(cells[1])?,
                    end_t: num(cells[3])?,
                });
            }
            "rep" => {
                let phase_order = if phased {
                    PhaseOrder::parse(cells[5]).ok_or_else(|| TraceError::Annotation {
                        row,
                        reason: format!("unknown phase order {:?}", cells[5]),
                    })?
                } else {
                    PhaseOrder::default()
                };
                truth.reps.push(RepInterval {
                    start_t: num(cells[1])?,
                    apex_t: num(cells[2])?,
                    end_t: num(cells[3])?,
                    set_index,
                    phase_order,
                });
            }
            other => {
                return Err(TraceError::Annotation {
                    row,
                    reason: format!("unknown kind {other:?}"),
                })
            }
        }
    }
    truth.validate()?;
    Ok(truth)
}

/// Linear interpolation onto a uniform grid at `rate_hz` starting at the
/// first sample. Grid points that coincide with an input sample (within
/// 1 ns) take that sample verbatim, so uniform input is returned unchanged.
pub fn resample_uniform(
    series: &[OrientationSample],
    rate_hz: f64,
) -> Result<OrientationSeries, TraceError> {
    if series.len() < 2 {
        return Err(TraceError::TooFewSamples(series.len()));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(TraceError::BadMetadata(format!("rate={rate_hz}")));
    }
    check_times(series.iter().map(|s| s.t))?;
    const SNAP: f64 = 1e-9;
    let t0 = series[0].t;
    let t_end = series[series.len() - 1].t;
    let mut out = Vec::with_capacity(((t_end - t0) * rate_hz) as usize + 2);
    let mut j = 0;
    let mut i = 0usize;
    loop {
        let t = t0 + i as f64 / rate_hz;
        if t > t_end + SNAP {
            break;
        }
        while j + 1 < series.len() && series[j + 1].t <= t + SNAP {
            j += 1;
        }
        let a = series[j];
        let sample = if (a.t - t).abs() <= SNAP {
            a
        } else if j + 1 < series.len() {
            let b = series[j + 1];
            let w = (t - a.t) / (b.t - a.t);
            OrientationSample::new(t, a.theta + w * (b.theta - a.theta))
        } else {
            break;
        };
        out.push(sample);
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_trace(points: &[(f64, f64)]) -> Trace {
        Trace::from_orientation(
            points
                .iter()
                .map(|&(t, th)| OrientationSample::new(t, th))
                .collect(),
            TraceMeta::default(),
        )
    }

    #[test]
    fn parses_three_imu_rows() {
        let text = "# repwatch-trace v1; rate=50; exercise=bench; subject=a\n\
                    t,ax,ay,az,gx,gy,gz\n\
                    0.000000,0,0,9.81,0,0,0\n\
                    0.020000,0,0,9.81,0,0.5,0\n\
                    0.040000,0.1,0,9.8,0,1,0\n";
        let trace = parse_trace(text).unwrap();
        assert_eq!(trace.samples.as_ref().unwrap().len(), 3);
        assert!(trace.orientation.is_none());
        assert_eq!(trace.meta.exercise, "bench");
    }

    #[test]
    fn repeated_timestamp_reports_row() {
        let text = "# repwatch-trace v1; rate=50; exercise=x; subject=y\n\
                    t,theta\n0.00,1\n0.02,2\n0.02,3\n";
        let err = parse_trace(text).unwrap_err();
        assert_eq!(err.to_string(), "non-monotonic timestamp at row 3");
    }

    #[test]
    fn rejects_unknown_version_and_nan() {
        let text = "# repwatch-trace v9; rate=50\nt,theta\n0,1\n";
        assert!(matches!(
            parse_trace(text),
            Err(TraceError::UnknownVersion(v)) if v == "v9"
        ));
        let text = "# repwatch-trace v1; rate=50\nt,theta\n0,1\n0.02,NaN\n";
        assert!(matches!(
            parse_trace(text),
            Err(TraceError::NonFinite { row: 2 })
        ));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_trace(Path::new("/nonexistent/trace.csv")).unwrap_err();
        assert!(matches!(err, TraceError::Read { .. }));
    }

    #[test]
    fn saves_imu_only_trace_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let s = ImuSample {
            t: 0.0,
            ax: 0.0,
            ay: 0.0,
            az: 9.81,
            gx: 0.0,
            gy: 0.0,
            gz: 0.0,
        };
        let trace = Trace::from_imu(vec![s, ImuSample { t: 0.02, ..s }], TraceMeta::default());
        save_trace(&trace, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], IMU_HEADER);
        assert!(!sidecar_path(&path).exists());
    }

    #[test]
    fn truth_goes_to_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut trace = theta_trace(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        trace.truth = Some(GroundTruth {
            sets: vec![SetInterval {
                start_t: 0.5,
                end_t: 2.5,
            }],
            reps: vec![RepInterval {
                start_t: 0.5,
                apex_t: 1.0,
                end_t: 2.0,
                set_index: 0,
                phase_order: PhaseOrder::EccentricFirst,
            }],
        });
        save_trace(&trace, &path).unwrap();
        let sidecar = dir.path().join("s.truth.csv");
        assert!(sidecar.exists());
        assert_eq!(load_trace(&path).unwrap(), trace);
    }

    #[test]
    fn plain_five_column_annotations_load() {
        let text = "kind,start_t,apex_t,end_t,set_index\nset,1,,5,0\nrep,1,2,3,0\n";
        let truth = parse_truth(text).unwrap();
        assert_eq!(truth.reps[0].phase_order, PhaseOrder::EccentricFirst);
    }

    #[test]
    fn annotation_order_is_validated_not_repaired() {
        let text = "kind,start_t,apex_t,end_t,set_index\nset,1,,5,0\nrep,3,3.5,4,0\nrep,1,2,2.5,0\n";
        assert!(matches!(
            parse_truth(text),
            Err(TraceError::Annotation { .. })
        ));
        let text = "kind,start_t,apex_t,end_t,set_index\nset,1,,5,0\nrep,1,1,2,0\n";
        assert!(parse_truth(text).is_err());
        let text = "kind,start_t,apex_t,end_t,set_index\nset,1,,5,0\nrep,4,4.5,6,0\n";
        assert!(parse_truth(text).is_err());
    }

    #[test]
    fn resample_two_points_at_two_hz() {
        let s = [OrientationSample::new(0.0, 10.0), OrientationSample::new(1.0, 20.0)];
        let out = resample_uniform(&s, 2.0).unwrap();
        assert_eq!(
            out,
            vec![
                OrientationSample::new(0.0, 10.0),
                OrientationSample::new(0.5, 15.0),
                OrientationSample::new(1.0, 20.0)
            ]
        );
    }

    #[test]
    fn resample_uniform_input_is_identity() {
        let s: Vec<_> = (0..200)
            .map(|i| OrientationSample::new(3.0 + i as f64 / 50.0, (i as f64).sin()))
            .collect();
        let out = resample_uniform(&s, 50.0).unwrap();
        assert_eq!(out, s);
        assert_eq!(resample_uniform(&out, 50.0).unwrap(), out);
    }

    #[test]
    fn resample_needs_two_samples() {
        assert!(matches!(
            resample_uniform(&[OrientationSample::new(0.0, 1.0)], 50.0),
            Err(TraceError::TooFewSamples(1))
        ));
    }
}
