//! Dynamic windowing and online event tracking for one open set.
//!
//! [`Windower`] owns the DTW-driven window and yields a feature vector every
//! `hop` samples; it does not depend on the model's probabilities, so its
//! output can be cached and replayed through a [`Tracker`] at different
//! thresholds.

use serde::{Deserialize, Serialize};

use super::dnb::{forward_step, initial_belief, Belief, DnbModel, EVENT};
use super::dtw::dtw_distance;
use super::features::{extract_features, RepTemplate, WindowFeatures};
use super::metrics::{compute_metrics, RepMetrics};
use super::DetectError;
use crate::stats;
use crate::trace::OrientationSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Samples between window updates.
    pub hop: usize,
    /// Above-threshold span required before a rep is reported.
    pub min_event_s: f64,
    /// Longest window the DTW growth may reach, in samples.
    pub max_window: usize,
    /// Samples from before SetStarted fed to the detector.
    pub lookback_s: f64,
    /// Below-threshold span tolerated before an open event closes.
    pub close_grace_s: f64,
    /// Angle range, degrees, an event must cover before it is reported.
    pub min_rom_deg: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hop: 1,
            min_event_s: 0.0,
            max_window: 250,
            lookback_s: 0.0,
            close_grace_s: 0.2,
            min_rom_deg: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.hop == 0 || self.max_window < 3 {
            return Err(DetectError::InvalidModel("hop and max_window must be positive".into()));
        }
        if !(self.min_event_s >= 0.0 && self.lookback_s >= 0.0 && self.close_grace_s >= 0.0 && self.min_rom_deg >= 0.0) {
            return Err(DetectError::InvalidModel("durations must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Growth {
    Merged(Vec<f64>),
    Reset,
}

/// True when the z-normalized window is within `accept` of the template.
pub fn conforms(window: &[f64], template: &RepTemplate, accept: f64) -> bool {
    match stats::znormalize(window) {
        Some(z) => dtw_distance(&z, template.values()).is_ok_and(|d| d < accept),
        None => false,
    }
}

/// Aggregates `next` onto `window` when the concatenation still conforms to
/// the template.
pub fn grow_window(window: &[f64], next: &[f64], model: &DnbModel, template: &RepTemplate) -> Growth {
    let merged: Vec<f64> = window.iter().chain(next).copied().collect();
    if conforms(&merged, template, model.dtw_accept) {
        Growth::Merged(merged)
    } else {
        Growth::Reset
    }
}

/// One window update: sample index range `[start, end)` into the set buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowUpdate {
    pub start: usize,
    pub end: usize,
    pub start_t: f64,
    pub end_t: f64,
    pub features: WindowFeatures,
    pub growing: bool,
}

#[derive(Debug, Clone)]
pub struct Windower {
    w0: usize,
    hop: usize,
    max_window: usize,
    accept: f64,
    template: RepTemplate,
    buf: Vec<OrientationSample>,
    anchor: usize,
    growing: bool,
}

impl Windower {
    pub fn new(model: &DnbModel, config: &DetectorConfig) -> Self {
        Self {
            w0: model.w0.max(3),
            hop: config.hop,
            max_window: config.max_window.max(model.w0),
            accept: model.dtw_accept,
            template: RepTemplate::v_shape(model.template_len),
            buf: Vec::new(),
            anchor: 0,
            growing: false,
        }
    }

    pub fn samples(&self) -> &[OrientationSample] {
        &self.buf
    }

    fn accepts(&self, start: usize, end: usize) -> bool {
        let values: Vec<f64> = self.buf[start..end].iter().map(|s| s.theta).collect();
        conforms(&values, &self.template, self.accept)
    }

    pub fn push(&mut self, sample: OrientationSample) -> Option<WindowUpdate> {
        self.buf.push(sample);
        let end = self.buf.len();
        if end < self.w0 || (end - self.w0) % self.hop != 0 {
            return None;
        }
        if self.growing && (end - self.anchor > self.max_window || !self.accepts(self.anchor, end)) {
            self.growing = false;
        }
        if !self.growing {
            self.anchor = end - self.w0;
            self.growing = self.accepts(self.anchor, end);
        }
        let values: Vec<f64> = self.buf[self.anchor..end].iter().map(|s| s.theta).collect();
        let features = extract_features(&values, &self.template).expect("window has at least 3 samples");
        Some(WindowUpdate {
            start: self.anchor,
            end,
            start_t: self.buf[self.anchor].t,
            end_t: sample.t,
            features,
            growing: self.growing,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepEvent {
    pub set_index: usize,
    pub rep_index: usize,
    pub start_t: f64,
    pub apex_t: f64,
    pub end_t: f64,
    pub detect_t: f64,
    /// `detect_t - end_t`; negative when the rep was reported before its end.
    pub detection_delay: f64,
    pub metrics: RepMetrics,
}

/// Provisional figures at detection time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepProgress {
    pub set_index: usize,
    pub rep_index: usize,
    pub t: f64,
    pub start_t: f64,
    pub rom_so_far: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RepOutput {
    Detected(RepProgress),
    Finalized(RepEvent),
    /// A rep found to lie past the end of its set once the set closed.
    Retracted { set_index: usize, rep_index: usize },
}

#[derive(Debug, Clone, Copy)]
struct OpenEvent {
    start: usize,
    cross_t: f64,
    last_end: usize,
    detect_t: Option<f64>,
    rep_index: usize,
    below_since: Option<f64>,
}

/// Forward filter plus the threshold state machine.
#[derive(Debug, Clone)]
pub struct Tracker {
    threshold: f64,
    min_event_s: f64,
    close_grace_s: f64,
    min_rom_deg: f64,
    set_index: usize,
    next_rep: usize,
    belief: Option<Belief>,
    open: Option<OpenEvent>,
    floor: usize,
}

impl Tracker {
    pub fn new(threshold: f64, config: &DetectorConfig, set_index: usize, first_rep_index: usize) -> Self {
        Self {
            threshold,
            min_event_s: config.min_event_s,
            close_grace_s: config.close_grace_s,
            min_rom_deg: config.min_rom_deg,
            set_index,
            next_rep: first_rep_index,
            belief: None,
            open: None,
            floor: 0,
        }
    }

    pub fn belief(&self) -> Option<Belief> {
        self.belief
    }

    /// Index the next rep will get.
    pub fn next_rep_index(&self) -> usize {
        self.next_rep
    }

    pub fn on_update(
        &mut self,
        update: &WindowUpdate,
        model: &DnbModel,
        buf: &[OrientationSample],
    ) -> Result<Option<RepOutput>, DetectError> {
        let obs = model.discretize(&update.features);
        let belief = match &self.belief {
            None => initial_belief(&obs, model)?,
            Some(b) => forward_step(b, &obs, model)?,
        };
        self.belief = Some(belief);
        if belief[EVENT] > self.threshold {
            let open = self.open.get_or_insert(OpenEvent {
                start: update.start.max(self.floor),
                cross_t: update.end_t,
                last_end: update.end,
                detect_t: None,
                rep_index: 0,
                below_since: None,
            });
            open.last_end = update.end;
            open.below_since = None;
            if open.detect_t.is_none() && update.end_t - open.cross_t >= self.min_event_s - 1e-9 {
                let (lo, hi) = buf[open.start..update.end]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.theta), hi.max(s.theta)));
                if hi - lo < self.min_rom_deg {
                    return Ok(None);
                }
                open.detect_t = Some(update.end_t);
                open.rep_index = self.next_rep;
                self.next_rep += 1;
                let start_t = buf[open.start].t;
                return Ok(Some(RepOutput::Detected(RepProgress {
                    set_index: self.set_index,
                    rep_index: open.rep_index,
                    t: update.end_t,
                    start_t,
                    rom_so_far: hi - lo,
                    elapsed: update.end_t - start_t,
                })));
            }
            Ok(None)
        } else {
            let Some(open) = &mut self.open else { return Ok(None) };
            let since = *open.below_since.get_or_insert(update.end_t);
            if update.end_t - since >= self.close_grace_s - 1e-9 {
                Ok(self.close(buf))
            } else {
                Ok(None)
            }
        }
    }

    /// Closes any open event, as at SetEnded.
    pub fn finish(&mut self, buf: &[OrientationSample]) -> Option<RepOutput> {
        self.close(buf)
    }

    fn close(&mut self, buf: &[OrientationSample]) -> Option<RepOutput> {
        let open = self.open.take()?;
        let detect_t = open.detect_t?;
        let (start, end) = (open.start, open.last_end);
        self.floor = end;
        if end < start + 3 {
            return None;
        }
        let seg = &buf[start..end];
        let mut apex = (0..seg.len())
            .min_by(|&a, &b| seg[a].theta.total_cmp(&seg[b].theta))
            .expect("non-empty");
        apex = apex.clamp(1, seg.len() - 2);
        let (start_t, apex_t, end_t) = (seg[0].t, seg[apex].t, seg[seg.len() - 1].t);
        let metrics = compute_metrics(seg, start_t, apex_t, end_t).ok()?;
        Some(RepOutput::Finalized(RepEvent {
            set_index: self.set_index,
            rep_index: open.rep_index,
            start_t,
            apex_t,
            end_t,
            detect_t,
            detection_delay: detect_t - end_t,
            metrics,
        }))
    }
}

/// Windower and tracker for one open set.
#[derive(Debug, Clone)]
pub struct RepDetector {
    model: DnbModel,
    windower: Windower,
    tracker: Tracker,
}

impl RepDetector {
    pub fn new(
        model: DnbModel,
        threshold: f64,
        config: &DetectorConfig,
        set_index: usize,
        first_rep_index: usize,
    ) -> Self {
        Self {
            windower: Windower::new(&model, config),
            tracker: Tracker::new(threshold, config, set_index, first_rep_index),
            model,
        }
    }

    pub fn next_rep_index(&self) -> usize {
        self.tracker.next_rep_index()
    }

    pub fn belief(&self) -> Option<Belief> {
        self.tracker.belief()
    }

    pub fn push(&mut self, sample: OrientationSample) -> Result<Option<RepOutput>, DetectError> {
        match self.windower.push(sample) {
            Some(update) => self.tracker.on_update(&update, &self.model, self.windower.samples()),
            None => Ok(None),
        }
    }

    pub fn finish(&mut self) -> Option<RepOutput> {
        self.tracker.finish(self.windower.samples())
    }
}

/// Runs a detector over samples of one set that is known to be open.
pub fn detect_stream(
    samples: &[OrientationSample],
    model: &DnbModel,
    threshold: f64,
    config: &DetectorConfig,
) -> Result<Vec<RepOutput>, DetectError> {
    let mut det = RepDetector::new(model.clone(), threshold, config, 1, 1);
    let mut out = Vec::new();
    for s in samples {
        out.extend(det.push(*s)?);
    }
    out.extend(det.finish());
    Ok(out)
}
