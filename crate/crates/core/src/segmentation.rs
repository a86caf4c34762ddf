//! Online set segmentation.
//!
//! Each orientation sample is rebased to its absolute deviation from the
//! session's first angle, then passed through a causal median filter and a
//! moving average. The range `R` of the smoothed signal over the trailing
//! range window is compared against a dynamic threshold `I`, half the
//! running mean of all median-filtered values seen so far. A rising
//! transition (`R > I` with a positive trend) opens a set. A falling
//! transition arms the exit, which is confirmed after `exit_hold` windows
//! without a new rise provided the smoothed level has fallen back below
//! `I`; the reported
//! boundary is the last sample before the final descent that was still
//! near the set's top level.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;
use crate::trace::OrientationSample;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("dynamic threshold requested before any sample")]
    NoSamples,
    #[error("invalid segmenter config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// samples
    pub median_window: usize,
    /// samples
    pub ma_window: usize,
    /// steps of `batch_size` samples
    pub range_window: usize,
    pub batch_size: usize,
    /// windows (steps) without a new rise before a set is closed
    pub exit_hold: usize,
    /// |trend| below this is treated as no transition
    pub min_trend: f64,
    pub gate_entry_on_trend: bool,
    pub gate_exit_on_trend: bool,
    /// A closed set ends at the last sample whose rebased angle was within
    /// this fraction of the set's top level.
    pub end_fraction: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            median_window: 100,
            ma_window: 25,
            range_window: 5,
            batch_size: 5,
            exit_hold: 20,
            min_trend: 0.2,
            gate_entry_on_trend: true,
            gate_exit_on_trend: true,
            end_fraction: 0.1,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let positive = [
            ("median_window", self.median_window),
            ("ma_window", self.ma_window),
            ("range_window", self.range_window),
            ("batch_size", self.batch_size),
            ("exit_hold", self.exit_hold),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SegmentationError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.median_window < self.ma_window {
            return Err(SegmentationError::InvalidConfig(
                "median_window must be >= ma_window".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.end_fraction) {
            return Err(SegmentationError::InvalidConfig(
                "end_fraction must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.min_trend) {
            return Err(SegmentationError::InvalidConfig(
                "min_trend must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Samples spanned by the range window.
    pub fn range_span(&self) -> usize {
        self.range_window * self.batch_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SegmentEvent {
    SetStarted {
        t: f64,
        set_index: usize,
    },
    /// `t` is the confirming sample, `end_t` the estimated set boundary.
    SetEnded {
        t: f64,
        end_t: f64,
        set_index: usize,
    },
}

impl SegmentEvent {
    pub fn t(&self) -> f64 {
        match *self {
            SegmentEvent::SetStarted { t, .. } | SegmentEvent::SetEnded { t, .. } => t,
        }
    }

    pub fn set_index(&self) -> usize {
        match *self {
            SegmentEvent::SetStarted { set_index, .. } | SegmentEvent::SetEnded { set_index, .. } => {
                set_index
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSegment {
    pub start_t: f64,
    pub end_t: Option<f64>,
}

/// Causal trailing median. Even-sized windows average the two middle values.
#[derive(Debug, Clone)]
pub struct TrailingMedian {
    window: usize,
    recent: VecDeque<f64>,
    sorted: Vec<f64>,
}

impl TrailingMedian {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::with_capacity(window + 1),
            sorted: Vec::with_capacity(window + 1),
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        self.recent.push_back(x);
        let at = self.sorted.partition_point(|v| *v < x);
        self.sorted.insert(at, x);
        if self.recent.len() > self.window {
            let old = self.recent.pop_front().expect("non-empty");
            let at = self.sorted.partition_point(|v| *v < old);
            debug_assert_eq!(self.sorted[at], old);
            self.sorted.remove(at);
        }
        stats::median_of_sorted(&self.sorted)
    }
}

/// Causal trailing mean, summed afresh over the window on every step.
#[derive(Debug, Clone)]
pub struct TrailingMean {
    window: usize,
    recent: VecDeque<f64>,
}

impl TrailingMean {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        self.recent.push_back(x);
        if self.recent.len() > self.window {
            self.recent.pop_front();
        }
        self.recent.iter().sum::<f64>() / self.recent.len() as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct ExitCandidate {
    boundary_t: f64,
}

#[derive(Debug, Clone)]
pub struct SegmenterState {
    config: SegmenterConfig,
    origin: Option<f64>,
    median: TrailingMedian,
    mean: TrailingMean,
    ma_history: VecDeque<f64>,
    running_sum: f64,
    running_count: usize,
    samples_seen: usize,
    in_moi: bool,
    consecutive_below: usize,
    current_set_start: Option<f64>,
    exit: Option<ExitCandidate>,
    /// (t, rebased) since the current set opened
    set_raw: Vec<(f64, f64)>,
    sets_opened: usize,
    last_t: f64,
    last_theta_med: f64,
    last_theta_ma: f64,
    last_range: f64,
    last_trend: f64,
}

/// Filter outputs for one sample, exposed for plotting and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterTap {
    pub t: f64,
    pub rebased: f64,
    pub theta_med: f64,
    pub theta_ma: f64,
    pub range: f64,
    pub threshold: f64,
    pub trend: f64,
}

impl SegmenterState {
    pub fn new(config: SegmenterConfig) -> Result<Self, SegmentationError> {
        config.validate()?;
        Ok(Self {
            config,
            origin: None,
            median: TrailingMedian::new(config.median_window),
            mean: TrailingMean::new(config.ma_window),
            ma_history: VecDeque::with_capacity(config.range_span() + 1),
            running_sum: 0.0,
            running_count: 0,
            samples_seen: 0,
            in_moi: false,
            consecutive_below: 0,
            current_set_start: None,
            exit: None,
            set_raw: Vec::new(),
            sets_opened: 0,
            last_t: f64::NEG_INFINITY,
            last_theta_med: 0.0,
            last_theta_ma: 0.0,
            last_range: 0.0,
            last_trend: 0.0,
        })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    pub fn in_moi(&self) -> bool {
        self.in_moi
    }

    pub fn current_set_start(&self) -> Option<f64> {
        self.current_set_start
    }

    pub fn running_count(&self) -> usize {
        self.running_count
    }

    pub fn consecutive_below(&self) -> usize {
        self.consecutive_below
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    pub fn last_t(&self) -> f64 {
        self.last_t
    }

    /// Trailing median of the inputs seen so far.
    pub fn median_filter_step(&mut self, theta: f64) -> f64 {
        self.last_theta_med = self.median.push(theta);
        self.last_theta_med
    }

    /// Trailing mean of the median-filtered values seen so far.
    pub fn moving_average_step(&mut self, theta_med: f64) -> f64 {
        self.last_theta_ma = self.mean.push(theta_med);
        self.last_theta_ma
    }

    fn record_theta_med(&mut self, theta_med: f64) {
        self.running_sum += theta_med;
        self.running_count += 1;
    }

    /// Half the running mean of every median-filtered value this session.
    pub fn dynamic_threshold(&self) -> Result<f64, SegmentationError> {
        if self.running_count == 0 {
            return Err(SegmentationError::NoSamples);
        }
        Ok(self.running_sum / (2.0 * self.running_count as f64))
    }

    fn rebase(&mut self, theta: f64) -> f64 {
        let origin = *self.origin.get_or_insert(theta);
        let d = (theta - origin).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    /// Runs one sample through the cascade; returns the filter outputs and
    /// any boundary event triggered by it.
    pub fn process_sample(&mut self, sample: &OrientationSample) -> (FilterTap, Option<SegmentEvent>) {
        let cfg = self.config;
        self.samples_seen += 1;
        self.last_t = sample.t;
        let rebased = self.rebase(sample.theta);
        let theta_med = self.median_filter_step(rebased);
        self.record_theta_med(theta_med);
        let theta_ma = self.moving_average_step(theta_med);

        self.ma_history.push_back(theta_ma);
        if self.ma_history.len() > cfg.range_span() {
            self.ma_history.pop_front();
        }
        let (lo, hi) = self
            .ma_history
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let trend = trend_correlation(self.ma_history.make_contiguous());
        let threshold = self.dynamic_threshold().expect("at least one sample recorded");
        self.last_range = range;
        self.last_trend = trend;

        let tap = FilterTap {
            t: sample.t,
            rebased,
            theta_med,
            theta_ma,
            range,
            threshold,
            trend,
        };

        let warmed = self.samples_seen >= cfg.median_window;
        let above = range > threshold;
        let rising = above && (!cfg.gate_entry_on_trend || trend > cfg.min_trend);
        let falling = above && (!cfg.gate_exit_on_trend || trend < -cfg.min_trend);
        let window_boundary = self.samples_seen % cfg.batch_size == 0;

        if self.in_moi {
            self.set_raw.push((sample.t, rebased));
        }
        let mut event = None;
        if !self.in_moi {
            if warmed && rising {
                self.in_moi = true;
                self.sets_opened += 1;
                self.current_set_start = Some(sample.t);
                self.set_raw.clear();
                self.exit = None;
                self.consecutive_below = 0;
                event = Some(SegmentEvent::SetStarted {
                    t: sample.t,
                    set_index: self.sets_opened,
                });
            }
        } else if rising && !falling {
            self.exit = None;
            self.consecutive_below = 0;
        } else {
            if self.exit.is_none() && falling {
                self.exit = Some(ExitCandidate {
                    boundary_t: sample.t,
                });
                self.consecutive_below = 0;
            }
            if let Some(candidate) = self.exit {
                if window_boundary {
                    self.consecutive_below += 1;
                }
                if self.consecutive_below >= cfg.exit_hold {
                    if theta_ma < threshold {
                        self.in_moi = false;
                        self.current_set_start = None;
                        event = Some(SegmentEvent::SetEnded {
                            t: sample.t,
                            end_t: self.set_end(candidate.boundary_t),
                            set_index: self.sets_opened,
                        });
                    }
                    self.exit = None;
                    self.consecutive_below = 0;
                }
            }
        }
        (tap, event)
    }

    /// Last time the raw signal sat near the set's top level, where the
    /// top is the 90th percentile before the exit was armed.
    fn set_end(&self, armed_t: f64) -> f64 {
        let before: Vec<f64> = self
            .set_raw
            .iter()
            .filter(|(t, _)| *t <= armed_t)
            .map(|(_, v)| *v)
            .collect();
        if before.is_empty() {
            return armed_t;
        }
        let top = stats::quantile(&before, 0.9);
        let floor = top * (1.0 - self.config.end_fraction);
        self.set_raw
            .iter()
            .rev()
            .find(|(_, v)| *v >= floor)
            .map_or(armed_t, |(t, _)| *t)
    }

    /// Feeds a batch and returns the events it triggered, in order.
    pub fn process_batch(&mut self, batch: &[OrientationSample]) -> Vec<SegmentEvent> {
        batch
            .iter()
            .filter_map(|s| self.process_sample(s).1)
            .collect()
    }
}

/// Pearson correlation of the values against their index; 0 when either
/// side is constant.
pub fn trend_correlation(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    stats::pearson(&xs, values).unwrap_or(0.0)
}

/// Runs a whole series through a fresh segmenter and pairs up the events.
pub fn segment_series(
    series: &[OrientationSample],
    config: SegmenterConfig,
) -> Result<(Vec<SegmentEvent>, Vec<SetSegment>), SegmentationError> {
    let mut state = SegmenterState::new(config)?;
    let events: Vec<SegmentEvent> = series
        .chunks(config.batch_size)
        .flat_map(|b| state.process_batch(b))
        .collect();
    Ok((events.clone(), segments_from_events(&events)))
}

pub fn segments_from_events(events: &[SegmentEvent]) -> Vec<SetSegment> {
    let mut out: Vec<SetSegment> = Vec::new();
    for e in events {
        match *e {
            SegmentEvent::SetStarted { t, .. } => out.push(SetSegment {
                start_t: t,
                end_t: None,
            }),
            SegmentEvent::SetEnded { end_t, .. } => {
                if let Some(last) = out.last_mut() {
                    last.end_t = Some(end_t.max(last.start_t));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_constants() {
        let mut m = TrailingMedian::new(100);
        for _ in 0..300 {
            assert_eq!(m.push(10.0), 10.0);
        }
    }

    #[test]
    fn median_suppresses_spike() {
        let mut m = TrailingMedian::new(3);
        m.push(1.0);
        m.push(2.0);
        assert_eq!(m.push(100.0), 2.0);
    }

    #[test]
    fn moving_average_step_response() {
        let mut a = TrailingMean::new(4);
        for _ in 0..10 {
            assert_eq!(a.push(0.0), 0.0);
        }
        let out: Vec<f64> = (0..5).map(|_| a.push(10.0)).collect();
        assert_eq!(out, vec![2.5, 5.0, 7.5, 10.0, 10.0]);
    }

    #[test]
    fn threshold_is_half_mean() {
        let mut s = SegmenterState::new(SegmenterConfig::default()).unwrap();
        assert_eq!(s.dynamic_threshold(), Err(SegmentationError::NoSamples));
        for x in [10.0, 20.0, 30.0] {
            s.record_theta_med(x);
        }
        assert_eq!(s.dynamic_threshold().unwrap(), 10.0);
        let mut s = SegmenterState::new(SegmenterConfig::default()).unwrap();
        for _ in 0..7 {
            s.record_theta_med(4.0);
        }
        assert_eq!(s.dynamic_threshold().unwrap(), 2.0);
    }

    #[test]
    fn flat_stream_emits_nothing() {
        let series: Vec<_> = (0..3000)
            .map(|i| OrientationSample::new(i as f64 / 50.0, 0.0))
            .collect();
        let (events, _) = segment_series(&series, SegmenterConfig::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SegmenterConfig {
            ma_window: 200,
            ..Default::default()
        };
        assert!(SegmenterState::new(cfg).is_err());
        let cfg = SegmenterConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(SegmenterState::new(cfg).is_err());
    }

    #[test]
    fn rebase_handles_wraparound() {
        let mut s = SegmenterState::new(SegmenterConfig::default()).unwrap();
        assert_eq!(s.rebase(170.0), 0.0);
        assert!((s.rebase(-170.0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn step_up_and_down_opens_and_closes_one_set() {
        // 20 s rest, 20 s elevated, 20 s rest
        let series: Vec<_> = (0..3000)
            .map(|i| {
                let t = i as f64 / 50.0;
                let theta = if (20.0..40.0).contains(&t) { 60.0 } else { 0.0 };
                OrientationSample::new(t, theta)
            })
            .collect();
        let (events, segments) = segment_series(&series, SegmenterConfig::default()).unwrap();
        assert_eq!(events.len(), 2, "{events:?}");
        assert_eq!(segments.len(), 1);
        let seg = segments[0];
        assert!((seg.start_t - 20.0).abs() < 1.5, "{seg:?}");
        assert!((seg.end_t.unwrap() - 40.0).abs() < 1.5, "{seg:?}");
    }
}
