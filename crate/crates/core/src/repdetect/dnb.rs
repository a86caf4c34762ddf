//! Two-state dynamic naive Bayes model: a hidden Event/NonEvent chain with
//! four conditionally independent discrete observation streams.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{discretize_with, Cutpoints, Feature, Symbol, WindowFeatures, TEMPLATE_LEN};
use super::DetectError;
use crate::synth::SplitMix;

pub const EVENT: usize = 0;
pub const NON_EVENT: usize = 1;
pub const STATES: usize = 2;
pub const SYMBOLS: usize = 3;

const MODEL_MAGIC: &str = "# repwatch-dnb v1";
const ROW_TOLERANCE: f64 = 1e-9;

pub type Belief = [f64; STATES];
pub type Observation = [Symbol; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Low delay.
    #[serde(alias = "ld")]
    LD,
    /// High accuracy.
    #[serde(alias = "ha")]
    HA,
}

impl std::str::FromStr for Mode {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LD" => Ok(Mode::LD),
            "HA" => Ok(Mode::HA),
            _ => Err(DetectError::InvalidModel(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnbModel {
    /// Observation streams in use, sorted and unique.
    pub features: Vec<Feature>,
    pub prior: [f64; STATES],
    /// Row-stochastic, `transition[from][to]`.
    pub transition: [[f64; STATES]; STATES],
    /// `observation[feature][state][symbol]`, rows stochastic.
    pub observation: [[[f64; SYMBOLS]; STATES]; 4],
    pub cutpoints: Cutpoints,
    pub ld_threshold: f64,
    pub ha_threshold: f64,
    /// Aggregation threshold on the path-normalized DTW distance.
    pub dtw_accept: f64,
    /// Initial window length, samples.
    pub w0: usize,
    pub template_len: usize,
}

impl DnbModel {
    /// Uniform model with the given cutpoints; a starting point for training
    /// and for tests.
    pub fn uniform(cutpoints: Cutpoints) -> Self {
        Self {
            features: Feature::ALL.to_vec(),
            prior: [0.5; STATES],
            transition: [[0.5; STATES]; STATES],
            observation: [[[1.0 / 3.0; SYMBOLS]; STATES]; 4],
            cutpoints,
            ld_threshold: 0.6,
            ha_threshold: 0.9,
            dtw_accept: 0.35,
            w0: 25,
            template_len: TEMPLATE_LEN,
        }
    }

    pub fn threshold(&self, mode: Mode) -> f64 {
        match mode {
            Mode::LD => self.ld_threshold,
            Mode::HA => self.ha_threshold,
        }
    }

    pub fn uses(&self, f: Feature) -> bool {
        self.features.contains(&f)
    }

    pub fn discretize(&self, features: &WindowFeatures) -> Observation {
        discretize_with(features, &self.cutpoints)
    }

    /// Product of the active streams' observation probabilities per state.
    pub fn likelihood(&self, obs: &Observation) -> [f64; STATES] {
        std::array::from_fn(|s| {
            self.features
                .iter()
                .map(|f| self.observation[f.index()][s][obs[f.index()].index()])
                .product()
        })
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidModel(m));
        if self.features.is_empty() {
            return bad("no active features".into());
        }
        if self.features.windows(2).any(|w| w[0] >= w[1]) {
            return bad("features must be sorted and unique".into());
        }
        check_row("prior", &self.prior)?;
        for (i, row) in self.transition.iter().enumerate() {
            check_row(&format!("transition row {i}"), row)?;
        }
        for f in Feature::ALL {
            for (s, row) in self.observation[f.index()].iter().enumerate() {
                check_row(&format!("{} observation row {s}", f.name()), row)?;
            }
        }
        for f in Feature::ALL {
            let (c1, c2) = self.cutpoints[f.index()];
            if !(c1.is_finite() && c2.is_finite() && c1 < c2) {
                return bad(format!("{} cutpoints must be strictly increasing", f.name()));
            }
        }
        for (name, p) in [("ld_threshold", self.ld_threshold), ("ha_threshold", self.ha_threshold)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.dtw_accept.is_finite() && self.dtw_accept > 0.0) {
            return bad("dtw_accept must be > 0".into());
        }
        if self.w0 < 3 || self.template_len < 3 {
            return bad("w0 and template_len must be >= 3".into());
        }
        Ok(())
    }

    /// True when no probability entry is zero.
    pub fn is_smoothed(&self) -> bool {
        let obs = self.observation.iter().flatten().flatten();
        self.prior
            .iter()
            .chain(self.transition.iter().flatten())
            .chain(obs)
            .all(|p| *p > 0.0)
    }

    /// Draws `count` state/observation sequences of length `len`.
    pub fn sample(&self, count: usize, len: usize, seed: u64) -> Vec<(Vec<Observation>, Vec<usize>)> {
        let mut rng = SplitMix::new(seed);
        fn draw(rng: &mut SplitMix, p: &[f64]) -> usize {
            let u = rng.uniform();
            let mut acc = 0.0;
            for (i, w) in p.iter().enumerate() {
                acc += w;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        }
        (0..count)
            .map(|_| {
                let mut states: Vec<usize> = Vec::with_capacity(len);
                let mut obs = Vec::with_capacity(len);
                for t in 0..len {
                    let s = if t == 0 {
                        draw(&mut rng, &self.prior)
                    } else {
                        draw(&mut rng, &self.transition[states[t - 1]])
                    };
                    states.push(s);
                    obs.push(std::array::from_fn(|f| {
                        Symbol::from_index(draw(&mut rng, &self.observation[f][s]))
                    }));
                }
                (obs, states)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let num = |v: f64| format!("{v:.11e}");
        let row = |vals: &[f64]| vals.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let names: Vec<&str> = self.features.iter().map(|f| f.name()).collect();
        let _ = writeln!(out, "features {}", names.join(" "));
        let _ = writeln!(out, "prior {}", row(&self.prior));
        let _ = writeln!(out, "transition {}", row(&self.transition.concat()));
        for f in Feature::ALL {
            let _ = writeln!(out, "observation {} {}", f.name(), row(&self.observation[f.index()].concat()));
        }
        for f in Feature::ALL {
            let (c1, c2) = self.cutpoints[f.index()];
            let _ = writeln!(out, "cutpoints {} {}", f.name(), row(&[c1, c2]));
        }
        let _ = writeln!(out, "ld_threshold {}", num(self.ld_threshold));
        let _ = writeln!(out, "ha_threshold {}", num(self.ha_threshold));
        let _ = writeln!(out, "dtw_accept {}", num(self.dtw_accept));
        let _ = writeln!(out, "w0 {}", self.w0);
        let _ = writeln!(out, "template_len {}", self.template_len);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DetectError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(MODEL_MAGIC) => {}
            Some(other) => return Err(DetectError::ModelFormat(format!("bad header {other:?}"))),
            None => return Err(DetectError::ModelFormat("empty model file".into())),
        }
        let mut model = DnbModel::uniform([(0.0, 1.0); 4]);
        let mut seen = std::collections::BTreeSet::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let nums = |vals: &[&str], n: usize| -> Result<Vec<f64>, DetectError> {
                if vals.len() != n {
                    return Err(DetectError::ModelFormat(format!("{key}: expected {n} values")));
                }
                vals.iter()
                    .map(|v| {
                        v.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| DetectError::ModelFormat(format!("{key}: bad number {v:?}")))
                    })
                    .collect()
            };
            let feature = |name: Option<&&str>| -> Result<Feature, DetectError> {
                name.and_then(|n| Feature::parse(n))
                    .ok_or_else(|| DetectError::ModelFormat(format!("{key}: unknown feature")))
            };
            let int = |vals: &[&str]| -> Result<usize, DetectError> {
                match vals {
                    [v] => v
                        .parse()
                        .map_err(|_| DetectError::ModelFormat(format!("{key}: bad integer {v:?}"))),
                    _ => Err(DetectError::ModelFormat(format!("{key}: expected one integer"))),
                }
            };
            let tag = match key {
                "observation" | "cutpoints" => format!("{key} {}", rest.first().unwrap_or(&"")),
                _ => key.to_string(),
            };
            if !seen.insert(tag.clone()) {
                return Err(DetectError::ModelFormat(format!("duplicate entry {tag:?}")));
            }
            match key {
                "features" => {
                    let mut fs = rest
                        .iter()
                        .map(|n| feature(Some(n)))
                        .collect::<Result<Vec<_>, _>>()?;
                    fs.sort();
                    model.features = fs;
                }
                "prior" => {
                    let v = nums(&rest, 2)?;
                    model.prior = [v[0], v[1]];
                }
                "transition" => {
                    let v = nums(&rest, 4)?;
                    model.transition = [[v[0], v[1]], [v[2], v[3]]];
                }
                "observation" => {
                    let f = feature(rest.first())?;
                    let v = nums(&rest[1..], 6)?;
                    model.observation[f.index()] = [[v[0], v[1], v[2]], [v[3], v[4], v[5]]];
                }
                "cutpoints" => {
                    let f = feature(rest.first())?;
                    let v = nums(&rest[1..], 2)?;
                    model.cutpoints[f.index()] = (v[0], v[1]);
                }
                "ld_threshold" => model.ld_threshold = nums(&rest, 1)?[0],
                "ha_threshold" => model.ha_threshold = nums(&rest, 1)?[0],
                "dtw_accept" => model.dtw_accept = nums(&rest, 1)?[0],
                "w0" => model.w0 = int(&rest)?,
                "template_len" => model.template_len = int(&rest)?,
                other => return Err(DetectError::ModelFormat(format!("unknown key {other:?}"))),
            }
        }
        let required = 3 + 4 + 4 + 5;
        if seen.len() != required {
            return Err(DetectError::ModelFormat("model file is incomplete".into()));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectError> {
        std::fs::write(path, self.to_text()).map_err(|e| DetectError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, DetectError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DetectError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn check_row(name: &str, row: &[f64]) -> Result<(), DetectError> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(DetectError::InvalidModel(format!("{name} is not a probability vector")));
    }
    Ok(())
}

fn normalize(v: [f64; STATES]) -> Result<Belief, DetectError> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(DetectError::Underflow);
    }
    Ok(v.map(|x| x / total))
}

/// Filtered belief after the first observation: prior times likelihood.
pub fn initial_belief(obs: &Observation, model: &DnbModel) -> Result<Belief, DetectError> {
    let lik = model.likelihood(obs);
    normalize(std::array::from_fn(|s| model.prior[s] * lik[s]))
}

/// One forward-filter update: predict through the transition matrix, weight
/// by the observation likelihood, renormalize.
pub fn forward_step(belief: &Belief, obs: &Observation, model: &DnbModel) -> Result<Belief, DetectError> {
    let total: f64 = belief.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE || belief.iter().any(|p| *p < 0.0) {
        return Err(DetectError::InvalidBelief);
    }
    let lik = model.likelihood(obs);
    let predicted: [f64; STATES] = std::array::from_fn(|to| {
        (0..STATES).map(|from| belief[from] * model.transition[from][to]).sum()
    });
    normalize(std::array::from_fn(|s| predicted[s] * lik[s]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut() -> Cutpoints {
        [(0.2, 0.6), (10.0, 30.0), (3.0, 9.0), (0.3, 0.6)]
    }

    #[test]
    fn uniform_stays_uniform() {
        let m = DnbModel::uniform(cut());
        let b = forward_step(&[0.5, 0.5], &[Symbol::High; 4], &m).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && (b[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deterministic_observation_forces_posterior() {
        let mut m = DnbModel::uniform(cut());
        m.observation[Feature::Corr.index()] = [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]];
        let b = forward_step(&[0.3, 0.7], &[Symbol::High, Symbol::Low, Symbol::Low, Symbol::Low], &m).unwrap();
        assert_eq!(b, [1.0, 0.0]);
    }

    #[test]
    fn impossible_observation_underflows() {
        let mut m = DnbModel::uniform(cut());
        m.observation[Feature::Rom.index()] = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(
            forward_step(&[0.5, 0.5], &[Symbol::High; 4], &m),
            Err(DetectError::Underflow)
        );
        assert_eq!(
            forward_step(&[0.6, 0.6], &[Symbol::Low; 4], &m),
            Err(DetectError::InvalidBelief)
        );
    }

    #[test]
    fn inactive_features_are_ignored() {
        let mut m = DnbModel::uniform(cut());
        m.features = vec![Feature::Std];
        m.observation[Feature::Corr.index()] = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let b = forward_step(&[0.5, 0.5], &[Symbol::Low; 4], &m).unwrap();
        assert_eq!(b, [0.5, 0.5]);
    }

    #[test]
    fn text_round_trip_is_stable() {
        let mut m = DnbModel::uniform(cut());
        m.transition = [[0.9, 0.1], [0.123_456_789_012_345, 1.0 - 0.123_456_789_012_345]];
        m.prior = [1.0 / 3.0, 2.0 / 3.0];
        let text = m.to_text();
        let back = DnbModel::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert!((back.transition[1][0] - m.transition[1][0]).abs() < 1e-12);
    }

    #[test]
    fn malformed_model_text_rejected() {
        let text = DnbModel::uniform(cut()).to_text();
        assert!(DnbModel::from_text(&text.replace("# repwatch-dnb v1", "# repwatch-dnb v2")).is_err());
        let missing: String = text.lines().filter(|l| !l.starts_with("w0")).collect::<Vec<_>>().join("\n");
        assert!(DnbModel::from_text(&missing).is_err());
        let bad_row = text.replace("prior 5.00000000000e-1 5.00000000000e-1", "prior 0.7 0.7");
        assert!(DnbModel::from_text(&bad_row).is_err());
        let dup = format!("{text}w0 50\n");
        assert!(DnbModel::from_text(&dup).is_err());
    }

    #[test]
    fn validate_checks_cutpoints() {
        let mut m = DnbModel::uniform(cut());
        m.cutpoints[2] = (5.0, 5.0);
        assert!(m.validate().is_err());
    }
}
