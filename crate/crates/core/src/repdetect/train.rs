//! Model training: tertile cutpoints, count-based initialization and
//! multi-stream Baum-Welch.
//!
//! Labeled windows clamp their state during the E-step, so labeled
//! sequences contribute complete-data counts and unlabeled ones expected
//! counts. EM iterations run unsmoothed so the training log-likelihood
//! (joint over labels where present) is non-decreasing; add-one smoothing
//! is applied to the label counts used for initialization and to the
//! expected counts of the final E-step, which yields the returned model.

use serde::{Deserialize, Serialize};

use super::dnb::{DnbModel, Observation, EVENT, STATES, SYMBOLS};
use super::features::{Cutpoints, Feature, WindowFeatures};
use super::DetectError;
use crate::stats;
use crate::synth::SplitMix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub features: Vec<WindowFeatures>,
    /// Per-window state labels (`EVENT` / `NON_EVENT`), when known.
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub features: Vec<Feature>,
    pub max_iterations: usize,
    /// Stop once the log-likelihood gain drops below this.
    pub tolerance: f64,
    pub min_repetitions: usize,
    /// Used to size the corpus check for unlabeled data.
    pub windows_per_repetition: usize,
    pub seed: u64,
    pub ld_threshold: f64,
    pub ha_threshold: f64,
    pub dtw_accept: f64,
    pub w0: usize,
    pub template_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let base = DnbModel::uniform([(0.0, 1.0); 4]);
        Self {
            features: Feature::ALL.to_vec(),
            max_iterations: 200,
            tolerance: 1e-6,
            min_repetitions: 50,
            windows_per_repetition: 10,
            seed: 0,
            ld_threshold: base.ld_threshold,
            ha_threshold: base.ha_threshold,
            dtw_accept: base.dtw_accept,
            w0: base.w0,
            template_len: base.template_len,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: DnbModel,
    /// Log-likelihood of the corpus under each EM iterate.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Expected sufficient statistics from one E-step.
#[derive(Debug, Clone, Default)]
pub struct Counts {
    pub prior: [f64; STATES],
    pub transition: [[f64; STATES]; STATES],
    pub observation: [[[f64; SYMBOLS]; STATES]; 4],
}

impl Counts {
    fn to_model(&self, base: &DnbModel, pseudo: f64) -> DnbModel {
        let mut m = base.clone();
        let norm = |row: &[f64], fallback: &[f64]| -> Vec<f64> {
            let total: f64 = row.iter().map(|c| c + pseudo).sum();
            if total > 0.0 {
                row.iter().map(|c| (c + pseudo) / total).collect()
            } else {
                fallback.to_vec()
            }
        };
        let p = norm(&self.prior, &base.prior);
        m.prior = [p[0], p[1]];
        for s in 0..STATES {
            let r = norm(&self.transition[s], &base.transition[s]);
            m.transition[s] = [r[0], r[1]];
            for f in 0..4 {
                let r = norm(&self.observation[f][s], &base.observation[f][s]);
                m.observation[f][s] = [r[0], r[1], r[2]];
            }
        }
        m
    }
}

/// Per-feature tertiles of the pooled values, made strictly increasing.
pub fn tertile_cutpoints(features: &[WindowFeatures]) -> Result<Cutpoints, DetectError> {
    if features.is_empty() {
        return Err(DetectError::CorpusTooSmall("no windows".into()));
    }
    let mut out = [(0.0, 0.0); 4];
    for f in Feature::ALL {
        let mut v: Vec<f64> = features.iter().map(|w| w.get(f)).collect();
        v.sort_by(f64::total_cmp);
        if v[0] == v[v.len() - 1] {
            return Err(DetectError::ConstantFeature(f.name().to_string()));
        }
        let mut c1 = stats::quantile_sorted(&v, 1.0 / 3.0);
        let mut c2 = stats::quantile_sorted(&v, 2.0 / 3.0);
        if c2 <= c1 {
            match v.iter().find(|x| **x > c1) {
                Some(&next) => c2 = next,
                None => {
                    c1 = *v.iter().rev().find(|x| **x < c2).expect("not constant");
                }
            }
        }
        out[f.index()] = (c1, c2);
    }
    Ok(out)
}

/// A discretized training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    pub obs: Vec<Observation>,
    pub labels: Option<Vec<usize>>,
}

impl SymbolSequence {
    pub fn unlabeled(obs: Vec<Observation>) -> Self {
        Self { obs, labels: None }
    }
}

/// Scaled forward-backward over one sequence, accumulating expected counts.
/// Returns the sequence log-likelihood.
fn accumulate(model: &DnbModel, seq: &SymbolSequence, counts: &mut Counts) -> Result<f64, DetectError> {
    let obs = &seq.obs;
    let n = obs.len();
    if n == 0 {
        return Ok(0.0);
    }
    let lik: Vec<[f64; STATES]> = obs
        .iter()
        .enumerate()
        .map(|(t, o)| {
            let mut l = model.likelihood(o);
            if let Some(labels) = &seq.labels {
                for (s, v) in l.iter_mut().enumerate() {
                    if s != labels[t] {
                        *v = 0.0;
                    }
                }
            }
            l
        })
        .collect();
    let mut alpha = vec![[0.0; STATES]; n];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        let mut a = [0.0; STATES];
        for s in 0..STATES {
            let pred = if t == 0 {
                model.prior[s]
            } else {
                (0..STATES).map(|r| alpha[t - 1][r] * model.transition[r][s]).sum()
            };
            a[s] = pred * lik[t][s];
        }
        let c: f64 = a.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(DetectError::Underflow);
        }
        scale[t] = c;
        alpha[t] = a.map(|x| x / c);
    }
    let mut beta = vec![[1.0; STATES]; n];
    for t in (0..n - 1).rev() {
        for s in 0..STATES {
            beta[t][s] = (0..STATES)
                .map(|r| model.transition[s][r] * lik[t + 1][r] * beta[t + 1][r])
                .sum::<f64>()
                / scale[t + 1];
        }
    }
    for t in 0..n {
        let gamma: [f64; STATES] = std::array::from_fn(|s| alpha[t][s] * beta[t][s]);
        let total: f64 = gamma.iter().sum();
        for s in 0..STATES {
            let g = gamma[s] / total;
            if t == 0 {
                counts.prior[s] += g;
            }
            for f in 0..4 {
                counts.observation[f][s][obs[t][f].index()] += g;
            }
        }
        if t + 1 < n {
            let mut xi = [[0.0; STATES]; STATES];
            let mut total = 0.0;
            for s in 0..STATES {
                for r in 0..STATES {
                    xi[s][r] = alpha[t][s] * model.transition[s][r] * lik[t + 1][r] * beta[t + 1][r];
                    total += xi[s][r];
                }
            }
            for s in 0..STATES {
                for r in 0..STATES {
                    counts.transition[s][r] += xi[s][r] / total;
                }
            }
        }
    }
    Ok(scale.iter().map(|c| c.ln()).sum())
}

/// One E-step over a corpus of symbol sequences.
pub fn expected_counts(model: &DnbModel, corpus: &[SymbolSequence]) -> Result<(Counts, f64), DetectError> {
    let mut counts = Counts::default();
    let mut ll = 0.0;
    for seq in corpus {
        ll += accumulate(model, seq, &mut counts)?;
    }
    Ok((counts, ll))
}

pub fn log_likelihood(model: &DnbModel, corpus: &[SymbolSequence]) -> Result<f64, DetectError> {
    Ok(expected_counts(model, corpus)?.1)
}

fn label_counts(corpus: &[SymbolSequence]) -> Counts {
    let mut c = Counts::default();
    for seq in corpus {
        let (obs, Some(labels)) = (&seq.obs, &seq.labels) else { continue };
        for (t, (o, &s)) in obs.iter().zip(labels).enumerate() {
            if t == 0 {
                c.prior[s] += 1.0;
            } else {
                c.transition[labels[t - 1]][s] += 1.0;
            }
            for f in 0..4 {
                c.observation[f][s][o[f].index()] += 1.0;
            }
        }
    }
    c
}

fn perturbed_uniform(base: &DnbModel, seed: u64) -> DnbModel {
    let mut rng = SplitMix::new(seed).derive(17);
    let mut jitter = |row: &mut [f64]| {
        for p in row.iter_mut() {
            *p = 1.0 + 0.1 * (rng.uniform() - 0.5);
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    };
    let mut m = base.clone();
    jitter(&mut m.prior);
    for s in 0..STATES {
        jitter(&mut m.transition[s]);
        for f in 0..4 {
            jitter(&mut m.observation[f][s]);
        }
    }
    m
}

/// Baum-Welch from a given starting model. Cutpoints and the corpus
/// discretization are the caller's.
pub fn baum_welch(
    start: DnbModel,
    corpus: &[SymbolSequence],
    max_iterations: usize,
    tolerance: f64,
) -> Result<TrainReport, DetectError> {
    let mut model = start;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut counts;
    loop {
        let (c, ll) = expected_counts(&model, corpus)?;
        counts = c;
        if let Some(prev) = trace.last() {
            if ll - prev < tolerance {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || trace.len() > max_iterations {
            break;
        }
        model = counts.to_model(&model, 0.0);
    }
    let model = counts.to_model(&model, 1.0);
    Ok(TrainReport {
        model,
        log_likelihood: trace,
        converged,
    })
}

pub fn train_model(corpus: &[TrainingSequence], config: &TrainConfig) -> Result<TrainReport, DetectError> {
    let mut features: Vec<Feature> = config.features.clone();
    features.sort();
    if features.is_empty() {
        return Err(DetectError::InvalidModel("no features selected".into()));
    }
    if features.windows(2).any(|w| w[0] == w[1]) {
        return Err(DetectError::InvalidModel("duplicate feature".into()));
    }
    for seq in corpus {
        if let Some(labels) = &seq.labels {
            if labels.len() != seq.features.len() || labels.iter().any(|&s| s >= STATES) {
                return Err(DetectError::InvalidModel("labels do not match windows".into()));
            }
        }
    }

    let labeled: Vec<&TrainingSequence> = corpus.iter().filter(|s| s.labels.is_some()).collect();
    let repetitions: usize = labeled
        .iter()
        .map(|s| {
            let l = s.labels.as_ref().expect("filtered");
            l.iter()
                .enumerate()
                .filter(|&(t, &x)| x == EVENT && (t == 0 || l[t - 1] != EVENT))
                .count()
        })
        .sum();
    let unlabeled_windows: usize = corpus
        .iter()
        .filter(|s| s.labels.is_none())
        .map(|s| s.features.len())
        .sum();
    let estimate = repetitions + unlabeled_windows / config.windows_per_repetition.max(1);
    if estimate < config.min_repetitions {
        return Err(DetectError::CorpusTooSmall(format!(
            "about {estimate} repetitions, need {}",
            config.min_repetitions
        )));
    }

    let pooled: Vec<WindowFeatures> = corpus.iter().flat_map(|s| s.features.iter().copied()).collect();
    let cutpoints = tertile_cutpoints(&pooled)?;
    let mut base = DnbModel::uniform(cutpoints);
    base.features = features;
    base.ld_threshold = config.ld_threshold;
    base.ha_threshold = config.ha_threshold;
    base.dtw_accept = config.dtw_accept;
    base.w0 = config.w0;
    base.template_len = config.template_len;

    let symbols: Vec<SymbolSequence> = corpus
        .iter()
        .map(|s| SymbolSequence {
            obs: s.features.iter().map(|f| base.discretize(f)).collect(),
            labels: s.labels.clone(),
        })
        .collect();

    let start = if labeled.is_empty() {
        perturbed_uniform(&base, config.seed)
    } else {
        label_counts(&symbols).to_model(&base, 1.0)
    };
    let report = baum_welch(start, &symbols, config.max_iterations, config.tolerance)?;
    report.model.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tertiles_split_evenly() {
        let f: Vec<WindowFeatures> = (0..300)
            .map(|i| {
                let x = i as f64;
                WindowFeatures {
                    corr: x,
                    rom: x,
                    std: x,
                    gradient: x,
                }
            })
            .collect();
        let c = tertile_cutpoints(&f).unwrap();
        assert!((c[0].0 - 99.666_666_666_666_67).abs() < 1e-9);
        assert!((c[0].1 - 199.333_333_333_333_34).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_rejected() {
        let f: Vec<WindowFeatures> = (0..10)
            .map(|i| WindowFeatures {
                corr: i as f64,
                rom: 1.0,
                std: i as f64,
                gradient: i as f64,
            })
            .collect();
        assert_eq!(
            tertile_cutpoints(&f),
            Err(DetectError::ConstantFeature("rom".into()))
        );
    }

    #[test]
    fn tied_tertiles_are_separated() {
        let mut f: Vec<WindowFeatures> = (0..9)
            .map(|_| WindowFeatures {
                corr: 0.5,
                rom: 0.5,
                std: 0.5,
                gradient: 0.5,
            })
            .collect();
        f[0] = WindowFeatures {
            corr: 0.0,
            rom: 0.0,
            std: 0.0,
            gradient: 0.0,
        };
        f[8] = WindowFeatures {
            corr: 1.0,
            rom: 1.0,
            std: 1.0,
            gradient: 1.0,
        };
        let c = tertile_cutpoints(&f).unwrap();
        assert!(c.iter().all(|(a, b)| a < b));
    }

    #[test]
    fn too_small_corpus_rejected() {
        let seq = TrainingSequence {
            features: vec![
                WindowFeatures {
                    corr: 0.1,
                    rom: 1.0,
                    std: 1.0,
                    gradient: 0.2,
                };
                5
            ],
            labels: Some(vec![EVENT; 5]),
        };
        assert!(matches!(
            train_model(&[seq], &TrainConfig::default()),
            Err(DetectError::CorpusTooSmall(_))
        ));
    }
}
