//! Per-stream pipeline: fusion, set segmentation and rep detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FusionConfig, FusionError, Fuser};
use crate::repdetect::detector::{Tracker, WindowUpdate, Windower};
use crate::repdetect::{DetectError, DetectorConfig, DnbModel, RepEvent, RepOutput};
use crate::segmentation::{SegmentEvent, SegmentationError, SegmenterConfig, SegmenterState};
use crate::trace::{ImuSample, OrientationSample, Trace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("trace has neither orientation nor IMU samples")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub segmentation: SegmenterConfig,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PipelineEvent {
    Orientation(OrientationSample),
    Segment(SegmentEvent),
    Rep(RepOutput),
}

/// Window updates of one set, kept for threshold replays.
#[derive(Debug, Clone)]
pub struct SetWindows {
    pub set_index: usize,
    pub first_rep_index: usize,
    pub samples: Vec<OrientationSample>,
    pub updates: Vec<WindowUpdate>,
    /// Set boundary from SetEnded; `None` while the set is open.
    pub end_t: Option<f64>,
}

struct OpenSet {
    windower: Windower,
    tracker: Tracker,
    updates: Vec<WindowUpdate>,
    first_rep_index: usize,
    set_index: usize,
    finalized: Vec<RepEvent>,
}

/// True when a rep belongs to a set that ended at `end_t`.
pub fn within_set(rep: &RepEvent, end_t: f64) -> bool {
    rep.apex_t <= end_t
}

pub struct Pipeline {
    config: PipelineConfig,
    model: DnbModel,
    threshold: f64,
    fuser: Fuser,
    segmenter: SegmenterState,
    lookback: VecDeque<OrientationSample>,
    lookback_len: usize,
    open: Option<OpenSet>,
    next_rep: usize,
    record: bool,
    recorded: Vec<SetWindows>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, model: DnbModel, threshold: f64, rate_hz: f64) -> Result<Self, PipelineError> {
        config.fusion.validate()?;
        config.detector.validate()?;
        model.validate()?;
        Ok(Self {
            segmenter: SegmenterState::new(config.segmentation)?,
            fuser: Fuser::new(config.fusion),
            lookback: VecDeque::new(),
            lookback_len: (config.detector.lookback_s * rate_hz).round() as usize,
            open: None,
            next_rep: 1,
            record: false,
            recorded: Vec::new(),
            config,
            model,
            threshold,
        })
    }

    /// Keep every set's window updates; see [`Pipeline::take_recorded`].
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn take_recorded(&mut self) -> Vec<SetWindows> {
        let mut out = std::mem::take(&mut self.recorded);
        if self.record {
            if let Some(open) = &self.open {
                out.push(SetWindows {
                    set_index: open.set_index,
                    first_rep_index: open.first_rep_index,
                    samples: open.windower.samples().to_vec(),
                    updates: open.updates.clone(),
                    end_t: None,
                });
            }
        }
        out
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> &DnbModel {
        &self.model
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn in_set(&self) -> bool {
        self.open.is_some()
    }

    pub fn push_imu(&mut self, sample: &ImuSample) -> Result<Vec<PipelineEvent>, PipelineError> {
        let o = self.fuser.push(sample)?;
        self.push_orientation(o)
    }

    pub fn push_orientation(&mut self, sample: OrientationSample) -> Result<Vec<PipelineEvent>, PipelineError> {
        let mut out = vec![PipelineEvent::Orientation(sample)];
        let (_, seg) = self.segmenter.process_sample(&sample);
        if let Some(ev @ SegmentEvent::SetStarted { set_index, .. }) = seg {
            out.push(PipelineEvent::Segment(ev));
            let mut open = OpenSet {
                windower: Windower::new(&self.model, &self.config.detector),
                tracker: Tracker::new(self.threshold, &self.config.detector, set_index, self.next_rep),
                updates: Vec::new(),
                first_rep_index: self.next_rep,
                set_index,
                finalized: Vec::new(),
            };
            for s in self.lookback.drain(..) {
                Self::feed(&mut open, &self.model, s, &mut out, self.record)?;
            }
            self.open = Some(open);
        }
        if let Some(open) = &mut self.open {
            Self::feed(open, &self.model, sample, &mut out, self.record)?;
        }
        if let Some(ev @ SegmentEvent::SetEnded { end_t, .. }) = seg {
            if let Some(mut open) = self.open.take() {
                match open.tracker.finish(open.windower.samples()) {
                    Some(RepOutput::Finalized(r)) if !within_set(&r, end_t) => {
                        out.push(PipelineEvent::Rep(RepOutput::Retracted {
                            set_index: r.set_index,
                            rep_index: r.rep_index,
                        }));
                    }
                    Some(r) => out.push(PipelineEvent::Rep(r)),
                    None => {}
                }
                self.next_rep = open.first_rep_index;
                for r in &open.finalized {
                    if within_set(r, end_t) {
                        self.next_rep = r.rep_index + 1;
                    } else {
                        out.push(PipelineEvent::Rep(RepOutput::Retracted {
                            set_index: r.set_index,
                            rep_index: r.rep_index,
                        }));
                    }
                }
                if let Some(PipelineEvent::Rep(RepOutput::Finalized(r))) = out.last() {
                    self.next_rep = r.rep_index + 1;
                }
                if self.record {
                    self.recorded.push(SetWindows {
                        set_index: open.set_index,
                        first_rep_index: open.first_rep_index,
                        samples: open.windower.samples().to_vec(),
                        updates: open.updates,
                        end_t: Some(end_t),
                    });
                }
            }
            out.push(PipelineEvent::Segment(ev));
        }
        if self.open.is_none() && self.lookback_len > 0 {
            self.lookback.push_back(sample);
            if self.lookback.len() > self.lookback_len {
                self.lookback.pop_front();
            }
        }
        Ok(out)
    }

    fn feed(
        open: &mut OpenSet,
        model: &DnbModel,
        sample: OrientationSample,
        out: &mut Vec<PipelineEvent>,
        record: bool,
    ) -> Result<(), PipelineError> {
        if let Some(update) = open.windower.push(sample) {
            if record {
                open.updates.push(update);
            }
            if let Some(r) = open.tracker.on_update(&update, model, open.windower.samples())? {
                if let RepOutput::Finalized(e) = r {
                    open.finalized.push(e);
                }
                out.push(PipelineEvent::Rep(r));
            }
        }
        Ok(())
    }

    /// Closes an open set at end of stream without a SetEnded event.
    pub fn finish(&mut self) -> Vec<PipelineEvent> {
        let mut out = Vec::new();
        if let Some(open) = &mut self.open {
            if let Some(r) = open.tracker.finish(open.windower.samples()) {
                out.push(PipelineEvent::Rep(r));
            }
        }
        out
    }
}

/// Runs a whole trace through a fresh pipeline, using orientation when the
/// trace has it and fusing IMU samples otherwise.
pub fn run_trace(
    trace: &Trace,
    config: &PipelineConfig,
    model: &DnbModel,
    threshold: f64,
) -> Result<Vec<PipelineEvent>, PipelineError> {
    let mut p = Pipeline::new(*config, model.clone(), threshold, trace.meta.rate_hz)?;
    let mut out = Vec::new();
    if let Some(o) = &trace.orientation {
        for s in o {
            out.extend(p.push_orientation(*s)?);
        }
    } else if let Some(imu) = &trace.samples {
        for s in imu {
            out.extend(p.push_imu(s)?);
        }
    } else {
        return Err(PipelineError::EmptyTrace);
    }
    out.extend(p.finish());
    Ok(out)
}

/// Replays recorded set windows through fresh trackers at `threshold`,
/// returning the finalized reps that were not retracted.
pub fn replay_sets(
    sets: &[SetWindows],
    model: &DnbModel,
    threshold: f64,
    config: &DetectorConfig,
) -> Result<Vec<RepEvent>, DetectError> {
    let mut out = Vec::new();
    let mut next_rep = 1;
    for set in sets {
        let mut tracker = Tracker::new(threshold, config, set.set_index, next_rep);
        let mut reps = Vec::new();
        for u in &set.updates {
            if let Some(RepOutput::Finalized(r)) = tracker.on_update(u, model, &set.samples[..u.end])? {
                reps.push(r);
            }
        }
        if let Some(RepOutput::Finalized(r)) = tracker.finish(&set.samples) {
            reps.push(r);
        }
        match set.end_t {
            Some(end_t) => {
                reps.retain(|r| within_set(r, end_t));
                next_rep = reps.last().map_or(next_rep, |r| r.rep_index + 1);
            }
            None => next_rep = tracker.next_rep_index(),
        }
        out.extend(reps);
    }
    Ok(out)
}

/// Finalized reps minus any later retracted.
pub fn finalized(events: &[PipelineEvent]) -> Vec<RepEvent> {
    let mut out: Vec<RepEvent> = Vec::new();
    for e in events {
        match e {
            PipelineEvent::Rep(RepOutput::Finalized(r)) => out.push(*r),
            PipelineEvent::Rep(RepOutput::Retracted { set_index, rep_index }) => {
                out.retain(|r| !(r.set_index == *set_index && r.rep_index == *rep_index))
            }
            _ => {}
        }
    }
    out
}

pub fn segment_events(events: &[PipelineEvent]) -> Vec<SegmentEvent> {
    events
        .iter()
        .filter_map(|e| match e {
            PipelineEvent::Segment(s) => Some(*s),
            _ => None,
        })
        .collect()
}
