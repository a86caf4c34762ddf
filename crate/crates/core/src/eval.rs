//! Corpus evaluation: rep matching, precision/recall, delay statistics,
//! segmentation accuracy, threshold sweeps and feature ablation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{self, PipelineConfig, PipelineError, SetWindows};
use crate::repdetect::detector::conforms;
use crate::repdetect::train::{train_model, TrainConfig, TrainReport, TrainingSequence};
use crate::repdetect::{DetectError, DnbModel, Feature, RepEvent, RepTemplate, EVENT, NON_EVENT};
use crate::segmentation::SegmentEvent;
use crate::stats;
use crate::synth::{generate_corpus, ExerciseProfile, NoiseProfile};
use crate::trace::{GroundTruth, OrientationSample, RepInterval, Trace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace {0} has no ground truth")]
    Unannotated(usize),
    #[error("threshold list is empty")]
    NoThresholds,
    #[error("thresholds must be strictly increasing inside (0, 1)")]
    BadThresholds,
    #[error("feature subset is empty")]
    EmptySubset,
    #[error("feature {0} listed twice")]
    DuplicateFeature(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("report table {0}: {1}")]
    Csv(String, String),
    #[error("synthetic corpus: {0}")]
    Synth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    /// Seconds; used for set boundary hits.
    pub boundary_tolerance: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            boundary_tolerance: 1.0,
        }
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Greedy one-to-one matching by overlap (ties: earlier detection start,
/// then earlier truth start). Returns `(truth index, detection index)`.
pub fn match_intervals(truth: &[(f64, f64)], detected: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let o = overlap(*t, *d);
            if o > 0.0 {
                candidates.push((o, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(detected[a.2].0.total_cmp(&detected[b.2].0))
            .then(truth[a.1].0.total_cmp(&truth[b.1].0))
    });
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut out = Vec::new();
    for (_, i, j) in candidates {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            out.push((i, j));
        }
    }
    out.sort();
    out
}

/// Rep-level outcome for one trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RepScore {
    pub truth_reps: usize,
    pub detections: usize,
    pub true_positives: usize,
    /// `detect_t - truth end_t` for every matched detection.
    pub delays: Vec<f64>,
}

pub fn score_reps(truth: &[RepInterval], detections: &[RepEvent]) -> RepScore {
    let t: Vec<(f64, f64)> = truth.iter().map(|r| (r.start_t, r.end_t)).collect();
    let d: Vec<(f64, f64)> = detections.iter().map(|r| (r.start_t, r.end_t)).collect();
    let pairs = match_intervals(&t, &d);
    RepScore {
        truth_reps: truth.len(),
        detections: detections.len(),
        true_positives: pairs.len(),
        delays: pairs
            .iter()
            .map(|&(i, j)| detections[j].detect_t - truth[i].end_t)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quartiles {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            count: v.len(),
            q1: stats::quantile_sorted(&v, 0.25),
            median: stats::quantile_sorted(&v, 0.5),
            q3: stats::quantile_sorted(&v, 0.75),
        }
    }
}

/// Delay histogram bin width and range, seconds.
pub const HIST_BIN: f64 = 0.1;
pub const HIST_MIN: f64 = -2.0;
pub const HIST_MAX: f64 = 2.0;

/// Counts per bin over [HIST_MIN, HIST_MAX); values outside are clamped
/// into the end bins.
pub fn delay_histogram(delays: &[f64]) -> Vec<usize> {
    let bins = ((HIST_MAX - HIST_MIN) / HIST_BIN).round() as usize;
    let mut h = vec![0; bins];
    for d in delays {
        let i = ((d - HIST_MIN) / HIST_BIN).floor().clamp(0.0, (bins - 1) as f64) as usize;
        h[i] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub exercise: String,
    pub truth_reps: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1.0 when there are no detections; see `no_detections`.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Share of detections that matched no rep.
    pub false_positive_rate: f64,
    pub no_detections: bool,
    pub delay_q1: f64,
    pub delay_median: f64,
    pub delay_q3: f64,
}

impl DetectionRow {
    pub fn from_scores<'a>(exercise: &str, scores: impl IntoIterator<Item = &'a RepScore>) -> Self {
        let mut total = RepScore::default();
        for s in scores {
            total.truth_reps += s.truth_reps;
            total.detections += s.detections;
            total.true_positives += s.true_positives;
            total.delays.extend_from_slice(&s.delays);
        }
        let tp = total.true_positives as f64;
        let no_detections = total.detections == 0;
        let precision = if no_detections { 1.0 } else { tp / total.detections as f64 };
        let recall = if total.truth_reps == 0 { 1.0 } else { tp / total.truth_reps as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let q = Quartiles::of(&total.delays);
        Self {
            exercise: exercise.to_string(),
            truth_reps: total.truth_reps,
            detections: total.detections,
            true_positives: total.true_positives,
            false_positives: total.detections - total.true_positives,
            false_negatives: total.truth_reps - total.true_positives,
            precision,
            recall,
            f1,
            false_positive_rate: if no_detections { 0.0 } else { 1.0 - precision },
            no_detections,
            delay_q1: q.q1,
            delay_median: q.median,
            delay_q3: q.q3,
        }
    }
}

/// Set segmentation outcome for one trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentScore {
    pub truth_sets: usize,
    pub detected_sets: usize,
    /// Sets whose onset and offset are both within tolerance.
    pub hits: usize,
    pub onset_errors: Vec<f64>,
    pub offset_errors: Vec<f64>,
    pub noise_s: f64,
    pub noise_excluded_s: f64,
}

/// Detected set intervals `[start, boundary end]`; a set still open at the
/// end of the trace runs to `trace_end`.
pub fn detected_sets(events: &[SegmentEvent], trace_end: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut open = None;
    for e in events {
        match *e {
            SegmentEvent::SetStarted { t, .. } => open = Some(t),
            SegmentEvent::SetEnded { end_t, .. } => {
                if let Some(s) = open.take() {
                    out.push((s, end_t.max(s)));
                }
            }
        }
    }
    if let Some(s) = open {
        out.push((s, trace_end));
    }
    out
}

fn union_length(intervals: &[(f64, f64)], within: (f64, f64)) -> f64 {
    let mut v: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(a, b)| (a.max(within.0), b.min(within.1)))
        .filter(|(a, b)| b > a)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in v {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

pub fn score_segments(
    truth: &GroundTruth,
    events: &[SegmentEvent],
    span: (f64, f64),
    policy: &MatchPolicy,
) -> SegmentScore {
    let t: Vec<(f64, f64)> = truth.sets.iter().map(|s| (s.start_t, s.end_t)).collect();
    let d = detected_sets(events, span.1);
    let pairs = match_intervals(&t, &d);
    let mut score = SegmentScore {
        truth_sets: t.len(),
        detected_sets: d.len(),
        ..Default::default()
    };
    for (i, j) in pairs {
        let on = d[j].0 - t[i].0;
        let off = d[j].1 - t[i].1;
        score.onset_errors.push(on);
        score.offset_errors.push(off);
        if on.abs() <= policy.boundary_tolerance && off.abs() <= policy.boundary_tolerance {
            score.hits += 1;
        }
    }
    let total = span.1 - span.0;
    let in_sets = union_length(&t, span);
    score.noise_s = total - in_sets;
    // noise covered by a detected set = detected time minus detected time inside truth sets
    let detected = union_length(&d, span);
    let both: Vec<(f64, f64)> = d
        .iter()
        .flat_map(|&a| t.iter().map(move |&b| (a.0.max(b.0), a.1.min(b.1))))
        .filter(|(a, b)| b > a)
        .collect();
    let detected_in_sets = union_length(&both, span);
    score.noise_excluded_s = score.noise_s - (detected - detected_in_sets);
    score
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRow {
    pub exercise: String,
    pub truth_sets: usize,
    pub detected_sets: usize,
    pub hits: usize,
    pub hit_rate: f64,
    pub onset_error_median: f64,
    pub offset_error_median: f64,
    pub noise_s: f64,
    pub noise_excluded_s: f64,
    pub noise_excluded_fraction: f64,
}

impl SegmentationRow {
    pub fn from_scores<'a>(exercise: &str, scores: impl IntoIterator<Item = &'a SegmentScore>) -> Self {
        let mut truth_sets = 0;
        let mut detected_sets = 0;
        let mut hits = 0;
        let mut on = Vec::new();
        let mut off = Vec::new();
        let mut noise = 0.0;
        let mut excluded = 0.0;
        for s in scores {
            truth_sets += s.truth_sets;
            detected_sets += s.detected_sets;
            hits += s.hits;
            on.extend_from_slice(&s.onset_errors);
            off.extend_from_slice(&s.offset_errors);
            noise += s.noise_s;
            excluded += s.noise_excluded_s;
        }
        Self {
            exercise: exercise.to_string(),
            truth_sets,
            detected_sets,
            hits,
            hit_rate: if truth_sets == 0 { 1.0 } else { hits as f64 / truth_sets as f64 },
            onset_error_median: Quartiles::of(&on).median,
            offset_error_median: Quartiles::of(&off).median,
            noise_s: noise,
            noise_excluded_s: excluded,
            noise_excluded_fraction: if noise > 0.0 { excluded / noise } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub median_delay: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Feature names joined with `+`.
    pub features: String,
    pub exercise: String,
    pub detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    /// Mode label, e.g. `LD`.
    pub model: String,
    pub bin_start: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// One row per exercise, then a pooled `all` row.
    pub detection: Vec<DetectionRow>,
    pub segmentation: Vec<SegmentationRow>,
    pub delay_histogram: Vec<DelayRow>,
    pub sweep: Vec<SweepPoint>,
    pub ablation: Vec<AblationRow>,
    /// Per-mode pooled rows for the LD/HA comparison.
    pub comparison: Vec<DetectionRow>,
}

/// Name used for pooled rows.
pub const ALL: &str = "all";

/// Pipeline output kept per trace so thresholds can be replayed cheaply.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub exercise: String,
    pub truth: GroundTruth,
    pub span: (f64, f64),
    pub segments: Vec<SegmentEvent>,
    pub sets: Vec<SetWindows>,
    pub orientation: Vec<OrientationSample>,
}

pub struct CorpusCache {
    pub runs: Vec<TraceRun>,
    pub config: PipelineConfig,
}

impl CorpusCache {
    /// Runs segmentation and windowing once per trace. The model's window
    /// parameters (w0, dtw_accept, template) shape the cache; its
    /// probabilities do not.
    pub fn build(corpus: &[Trace], model: &DnbModel, config: &PipelineConfig) -> Result<Self, EvalError> {
        let mut runs = Vec::with_capacity(corpus.len());
        for (i, trace) in corpus.iter().enumerate() {
            let truth = trace.truth.clone().ok_or(EvalError::Unannotated(i))?;
            let mut p = pipeline::Pipeline::new(*config, model.clone(), 0.5, trace.meta.rate_hz)?.recording();
            let mut segments = Vec::new();
            let mut orientation = Vec::new();
            let mut push = |events: Vec<pipeline::PipelineEvent>| {
                for e in events {
                    match e {
                        pipeline::PipelineEvent::Segment(s) => segments.push(s),
                        pipeline::PipelineEvent::Orientation(o) => orientation.push(o),
                        _ => {}
                    }
                }
            };
            if let Some(o) = &trace.orientation {
                for s in o {
                    push(p.push_orientation(*s)?);
                }
            } else if let Some(imu) = &trace.samples {
                for s in imu {
                    push(p.push_imu(s)?);
                }
            }
            let span = match (orientation.first(), orientation.last()) {
                (Some(a), Some(b)) => (a.t, b.t),
                _ => (0.0, 0.0),
            };
            runs.push(TraceRun {
                exercise: trace.meta.exercise.clone(),
                truth,
                span,
                segments,
                sets: p.take_recorded(),
                orientation,
            });
        }
        Ok(Self { runs, config: *config })
    }

    pub fn detections(&self, model: &DnbModel, threshold: f64) -> Result<Vec<Vec<RepEvent>>, EvalError> {
        self.runs
            .iter()
            .map(|r| Ok(pipeline::replay_sets(&r.sets, model, threshold, &self.config.detector)?))
            .collect()
    }

    pub fn rep_scores(&self, model: &DnbModel, threshold: f64) -> Result<Vec<RepScore>, EvalError> {
        let dets = self.detections(model, threshold)?;
        Ok(self
            .runs
            .iter()
            .zip(&dets)
            .map(|(r, d)| score_reps(&r.truth.reps, d))
            .collect())
    }

    pub fn segment_scores(&self, policy: &MatchPolicy) -> Vec<SegmentScore> {
        self.runs
            .iter()
            .map(|r| score_segments(&r.truth, &r.segments, r.span, policy))
            .collect()
    }

    pub fn exercises(&self) -> Vec<String> {
        let mut names: Vec<String> = self.runs.iter().map(|r| r.exercise.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Per-exercise rows followed by the pooled row.
pub fn detection_rows(exercises: &[String], runs: &[TraceRun], scores: &[RepScore]) -> Vec<DetectionRow> {
    let mut rows: Vec<DetectionRow> = exercises
        .iter()
        .map(|ex| {
            DetectionRow::from_scores(
                ex,
                runs.iter().zip(scores).filter(|(r, _)| &r.exercise == ex).map(|(_, s)| s),
            )
        })
        .collect();
    rows.push(DetectionRow::from_scores(ALL, scores));
    rows
}

fn segmentation_rows(cache: &CorpusCache, policy: &MatchPolicy) -> Vec<SegmentationRow> {
    let scores = cache.segment_scores(policy);
    let mut rows: Vec<SegmentationRow> = cache
        .exercises()
        .iter()
        .map(|ex| {
            SegmentationRow::from_scores(
                ex,
                cache.runs.iter().zip(&scores).filter(|(r, _)| &r.exercise == ex).map(|(_, s)| s),
            )
        })
        .collect();
    rows.push(SegmentationRow::from_scores(ALL, &scores));
    rows
}

fn histogram_rows(label: &str, scores: &[RepScore]) -> Vec<DelayRow> {
    let delays: Vec<f64> = scores.iter().flat_map(|s| s.delays.iter().copied()).collect();
    delay_histogram(&delays)
        .into_iter()
        .enumerate()
        .map(|(i, count)| DelayRow {
            model: label.to_string(),
            bin_start: HIST_MIN + i as f64 * HIST_BIN,
            count,
        })
        .collect()
}

/// Full report at one threshold, plus the LD/HA comparison at the model's
/// two thresholds.
pub fn evaluate_cached(
    cache: &CorpusCache,
    model: &DnbModel,
    threshold: f64,
    policy: &MatchPolicy,
) -> Result<EvalReport, EvalError> {
    let exercises = cache.exercises();
    let scores = cache.rep_scores(model, threshold)?;
    let mut report = EvalReport {
        detection: detection_rows(&exercises, &cache.runs, &scores),
        segmentation: segmentation_rows(cache, policy),
        ..Default::default()
    };
    for (label, thr) in [("LD", model.ld_threshold), ("HA", model.ha_threshold)] {
        let s = cache.rep_scores(model, thr)?;
        report.comparison.push(DetectionRow::from_scores(label, &s));
        report.delay_histogram.extend(histogram_rows(label, &s));
    }
    Ok(report)
}

pub fn evaluate_corpus(
    corpus: &[Trace],
    model: &DnbModel,
    threshold: f64,
    policy: &MatchPolicy,
    config: &PipelineConfig,
) -> Result<EvalReport, EvalError> {
    let cache = CorpusCache::build(corpus, model, config)?;
    evaluate_cached(&cache, model, threshold, policy)
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<(), EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::NoThresholds);
    }
    if thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::BadThresholds);
    }
    Ok(())
}

pub fn delay_f1_sweep(
    cache: &CorpusCache,
    model: &DnbModel,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, EvalError> {
    check_thresholds(thresholds)?;
    thresholds
        .iter()
        .map(|&thr| {
            let row = DetectionRow::from_scores(ALL, &cache.rep_scores(model, thr)?);
            Ok(SweepPoint {
                threshold: thr,
                median_delay: row.delay_median,
                precision: row.precision,
                recall: row.recall,
                f1: row.f1,
            })
        })
        .collect()
}

/// Truth-derived state label for a window ending at `end_t`: Event when the
/// end lies in a rep's second phase, widened by `lead` seconds before the
/// apex.
pub fn window_label(reps: &[RepInterval], end_t: f64, lead: f64) -> usize {
    if reps.iter().any(|r| end_t >= r.apex_t - lead && end_t <= r.end_t) {
        EVENT
    } else {
        NON_EVENT
    }
}

/// Labeled feature sequences, one per detected set.
pub fn training_sequences(cache: &CorpusCache, lead: f64) -> Vec<TrainingSequence> {
    cache
        .runs
        .iter()
        .flat_map(|r| {
            r.sets.iter().map(move |set| TrainingSequence {
                features: set.updates.iter().map(|u| u.features).collect(),
                labels: Some(
                    set.updates
                        .iter()
                        .map(|u| window_label(&r.truth.reps, u.end_t, lead))
                        .collect(),
                ),
            })
        })
        .filter(|s| !s.features.is_empty())
        .collect()
}

pub fn train_on_cache(cache: &CorpusCache, lead: f64, config: &TrainConfig) -> Result<TrainReport, EvalError> {
    Ok(train_model(&training_sequences(cache, lead), config)?)
}

/// Windowing model matching a training config: uniform parameters with
/// the config's w0, DTW threshold and template length.
pub fn windowing_model(config: &TrainConfig) -> DnbModel {
    let mut m = DnbModel::uniform([(0.0, 1.0); 4]);
    m.w0 = config.w0;
    m.dtw_accept = config.dtw_accept;
    m.template_len = config.template_len;
    m
}

/// Runs the pipeline over an annotated corpus and trains on its windows.
pub fn train_on_corpus(
    corpus: &[Trace],
    pipeline: &PipelineConfig,
    config: &TrainConfig,
    lead: f64,
) -> Result<TrainReport, EvalError> {
    let cache = CorpusCache::build(corpus, &windowing_model(config), pipeline)?;
    train_on_cache(&cache, lead, config)
}

/// Model trained on a fresh synthetic corpus of `sessions` per shipped
/// profile; the fallback when no model file is given.
pub fn synthetic_model(sessions: usize, seed: u64, pipeline: &PipelineConfig) -> Result<DnbModel, EvalError> {
    let corpus = generate_corpus(&ExerciseProfile::all(), sessions, seed, NoiseProfile::default())
        .map_err(|e| EvalError::Synth(e.to_string()))?;
    Ok(train_on_corpus(&corpus, pipeline, &TrainConfig::default(), 0.0)?.model)
}

pub fn check_subset(features: &[Feature]) -> Result<(), EvalError> {
    if features.is_empty() {
        return Err(EvalError::EmptySubset);
    }
    for (i, f) in features.iter().enumerate() {
        if features[..i].contains(f) {
            return Err(EvalError::DuplicateFeature(f.name().to_string()));
        }
    }
    Ok(())
}

pub fn subset_name(features: &[Feature]) -> String {
    features.iter().map(|f| f.name()).collect::<Vec<_>>().join("+")
}

/// Retrains on `training` with each feature subset and scores `test` at
/// `threshold`; one row per subset and exercise, plus pooled rows.
pub fn feature_ablation(
    test: &CorpusCache,
    training: &CorpusCache,
    subsets: &[Vec<Feature>],
    lead: f64,
    base: &TrainConfig,
    threshold: f64,
) -> Result<Vec<AblationRow>, EvalError> {
    let sequences = training_sequences(training, lead);
    let exercises = test.exercises();
    let mut rows = Vec::new();
    for subset in subsets {
        check_subset(subset)?;
        let config = TrainConfig {
            features: subset.clone(),
            ..base.clone()
        };
        let model = train_model(&sequences, &config)?.model;
        let scores = test.rep_scores(&model, threshold)?;
        for row in detection_rows(&exercises, &test.runs, &scores) {
            rows.push(AblationRow {
                features: subset_name(subset),
                exercise: row.exercise,
                detections: row.detections,
                precision: row.precision,
                recall: row.recall,
                f1: row.f1,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub dtw_accept: f64,
    /// Share of in-rep windows that conform to the template.
    pub rep_accept_rate: f64,
    /// Share of flat or rest windows that are rejected.
    pub noise_reject_rate: f64,
}

/// Scores candidate `dtw_accept` values on windows cut from the corpus:
/// every truth rep as a whole, and w0-sample windows from between sets.
pub fn calibrate_dtw(
    corpus: &[Trace],
    w0: usize,
    template: &RepTemplate,
    candidates: &[f64],
) -> Result<Vec<CalibrationPoint>, EvalError> {
    let mut reps: Vec<Vec<f64>> = Vec::new();
    let mut noise: Vec<Vec<f64>> = Vec::new();
    for (i, trace) in corpus.iter().enumerate() {
        let truth = trace.truth.as_ref().ok_or(EvalError::Unannotated(i))?;
        let Some(o) = &trace.orientation else { continue };
        for r in &truth.reps {
            reps.push(o.iter().filter(|s| s.t >= r.start_t && s.t <= r.end_t).map(|s| s.theta).collect());
        }
        let mut k = 0;
        while k + w0 <= o.len() {
            let (a, b) = (o[k].t, o[k + w0 - 1].t);
            if truth.sets.iter().all(|s| b < s.start_t - 1.0 || a > s.end_t + 3.0) {
                noise.push(o[k..k + w0].iter().map(|s| s.theta).collect());
            }
            k += w0;
        }
    }
    Ok(candidates
        .iter()
        .map(|&accept| {
            let ok = reps.iter().filter(|w| conforms(w, template, accept)).count();
            let rejected = noise.iter().filter(|w| !conforms(w, template, accept)).count();
            CalibrationPoint {
                dtw_accept: accept,
                rep_accept_rate: ok as f64 / reps.len().max(1) as f64,
                noise_reject_rate: rejected as f64 / noise.len().max(1) as f64,
            }
        })
        .collect())
}

const TABLES: [&str; 6] = [
    "detection.csv",
    "segmentation.csv",
    "delay_histogram.csv",
    "sweep.csv",
    "ablation.csv",
    "comparison.csv",
];

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<(), EvalError> {
    let path = dir.join(name);
    let io = |e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&path)
        .map_err(|e| EvalError::Csv(name.into(), e.to_string()))?;
    w.write_record(header).map_err(|e| EvalError::Csv(name.into(), e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Csv(name.into(), e.to_string()))?;
    }
    w.flush().map_err(io)
}

fn read_table<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<T>, EvalError> {
    let mut r = csv::Reader::from_path(dir.join(name)).map_err(|e| EvalError::Csv(name.into(), e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| EvalError::Csv(name.into(), e.to_string())))
        .collect()
}

/// Writes the report tables as CSV files under `dir`, creating it.
pub fn export_report(report: &EvalReport, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    const DET: &[&str] = &[
        "exercise",
        "truth_reps",
        "detections",
        "true_positives",
        "false_positives",
        "false_negatives",
        "precision",
        "recall",
        "f1",
        "false_positive_rate",
        "no_detections",
        "delay_q1",
        "delay_median",
        "delay_q3",
    ];
    write_table(dir, TABLES[0], &report.detection, DET)?;
    write_table(
        dir,
        TABLES[1],
        &report.segmentation,
        &[
            "exercise",
            "truth_sets",
            "detected_sets",
            "hits",
            "hit_rate",
            "onset_error_median",
            "offset_error_median",
            "noise_s",
            "noise_excluded_s",
            "noise_excluded_fraction",
        ],
    )?;
    write_table(dir, TABLES[2], &report.delay_histogram, &["model", "bin_start", "count"])?;
    write_table(
        dir,
        TABLES[3],
        &report.sweep,
        &["threshold", "median_delay", "precision", "recall", "f1"],
    )?;
    write_table(
        dir,
        TABLES[4],
        &report.ablation,
        &["features", "exercise", "detections", "precision", "recall", "f1"],
    )?;
    write_table(dir, TABLES[5], &report.comparison, DET)?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        detection: read_table(dir, TABLES[0])?,
        segmentation: read_table(dir, TABLES[1])?,
        delay_histogram: read_table(dir, TABLES[2])?,
        sweep: read_table(dir, TABLES[3])?,
        ablation: read_table(dir, TABLES[4])?,
        comparison: read_table(dir, TABLES[5])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::PhaseOrder;

    fn rep(start: f64, end: f64) -> RepInterval {
        RepInterval {
            start_t: start,
            apex_t: 0.5 * (start + end),
            end_t: end,
            set_index: 1,
            phase_order: PhaseOrder::EccentricFirst,
        }
    }

    #[test]
    fn greedy_prefers_larger_overlap() {
        let truth = [(0.0, 2.0), (2.5, 4.5)];
        let det = [(1.0, 3.0), (3.0, 4.0)];
        assert_eq!(match_intervals(&truth, &det), vec![(0, 0), (1, 1)]);
        let det = [(1.5, 3.5)];
        // overlaps 0.5 and 1.0
        assert_eq!(match_intervals(&truth, &det), vec![(1, 0)]);
    }

    #[test]
    fn zero_detections_convention() {
        let s = score_reps(&[rep(0.0, 1.0)], &[]);
        let row = DetectionRow::from_scores("x", [&s]);
        assert_eq!(row.recall, 0.0);
        assert_eq!(row.precision, 1.0);
        assert!(row.no_detections);
    }

    #[test]
    fn union_merges_overlaps() {
        assert_eq!(union_length(&[(0.0, 2.0), (1.0, 3.0), (5.0, 6.0)], (0.0, 10.0)), 4.0);
        assert_eq!(union_length(&[(-1.0, 2.0)], (0.0, 1.5)), 1.5);
    }

    #[test]
    fn histogram_clamps() {
        let h = delay_histogram(&[-5.0, -0.05, 0.0, 9.0]);
        assert_eq!(h.len(), 40);
        assert_eq!(h[0], 1);
        assert_eq!(h[19], 1);
        assert_eq!(h[20], 1);
        assert_eq!(h[39], 1);
    }

    #[test]
    fn thresholds_validated() {
        assert!(matches!(check_thresholds(&[]), Err(EvalError::NoThresholds)));
        assert!(matches!(check_thresholds(&[0.5, 0.5]), Err(EvalError::BadThresholds)));
        assert!(check_thresholds(&[0.1, 0.9]).is_ok());
    }

    #[test]
    fn duplicate_feature_rejected() {
        assert!(matches!(
            check_subset(&[Feature::Std, Feature::Std]),
            Err(EvalError::DuplicateFeature(_))
        ));
        assert!(matches!(check_subset(&[]), Err(EvalError::EmptySubset)));
    }
}
