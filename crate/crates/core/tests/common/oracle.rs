//! Brute-force reference implementations used by the oracle tests and the
//! acceptance run. None of these call into the crate's own algorithms.

use repwatch_core::repdetect::dnb::{SYMBOLS, STATES};
use repwatch_core::repdetect::{DnbModel, Feature, Observation, Symbol};
use repwatch_core::synth::SplitMix;

fn random_row<const N: usize>(rng: &mut SplitMix) -> [f64; N] {
    let mut row = [0.0; N];
    for p in row.iter_mut() {
        *p = 0.05 + rng.uniform();
    }
    let total: f64 = row.iter().sum();
    row.map(|p| p / total)
}

/// Random dense model; every feature active when `all_features`, otherwise
/// a random non-empty subset.
pub fn random_model(rng: &mut SplitMix, all_features: bool) -> DnbModel {
    let mut m = DnbModel::uniform([(0.0, 1.0); 4]);
    if !all_features {
        let mask = rng.int_range(1, 15);
        m.features = Feature::ALL
            .into_iter()
            .filter(|f| mask & (1 << f.index()) != 0)
            .collect();
    }
    m.prior = random_row(rng);
    for s in 0..STATES {
        m.transition[s] = random_row(rng);
        for f in 0..4 {
            m.observation[f][s] = random_row::<SYMBOLS>(rng);
        }
    }
    m
}

pub fn random_observation(rng: &mut SplitMix) -> Observation {
    std::array::from_fn(|_| Symbol::from_index(rng.int_range(0, SYMBOLS - 1)))
}

fn emission(m: &DnbModel, s: usize, o: &Observation) -> f64 {
    let mut p = 1.0;
    for f in Feature::ALL {
        if m.features.contains(&f) {
            p *= m.observation[f.index()][s][o[f.index()] as usize];
        }
    }
    p
}

/// P(state at the last step | all observations), by summing the joint
/// probability of every hidden path.
pub fn enumerated_marginal(m: &DnbModel, obs: &[Observation]) -> [f64; STATES] {
    let n = obs.len();
    let mut marginal = [0.0; STATES];
    for code in 0..(STATES.pow(n as u32)) {
        let path: Vec<usize> = (0..n).map(|t| (code / STATES.pow(t as u32)) % STATES).collect();
        let mut joint = m.prior[path[0]] * emission(m, path[0], &obs[0]);
        for t in 1..n {
            joint *= m.transition[path[t - 1]][path[t]] * emission(m, path[t], &obs[t]);
        }
        marginal[path[n - 1]] += joint;
    }
    let total: f64 = marginal.iter().sum();
    marginal.map(|p| p / total)
}

/// Walks every monotone warping path; keeps the cheapest, shortest on ties.
/// Costs are summed in path order.
pub fn dtw_exhaustive(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, cost: f64, len: usize, best: &mut (f64, usize)) {
        let d = a[i] - b[j];
        let cost = cost + d * d;
        let len = len + 1;
        if i + 1 == a.len() && j + 1 == b.len() {
            if cost < best.0 || (cost == best.0 && len < best.1) {
                *best = (cost, len);
            }
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, cost, len, best);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, cost, len, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, cost, len, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(a, b, 0, 0, 0.0, 0, &mut best);
    best.0 / best.1 as f64
}

/// Textbook full-matrix DTW with infinite borders.
pub fn dtw_full_matrix(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut cost = vec![vec![f64::INFINITY; m + 1]; n + 1];
    let mut len = vec![vec![usize::MAX; m + 1]; n + 1];
    cost[0][0] = 0.0;
    len[0][0] = 0;
    for i in 1..=n {
        for j in 1..=m {
            let mut best = (cost[i - 1][j - 1], len[i - 1][j - 1]);
            for (c, l) in [(cost[i - 1][j], len[i - 1][j]), (cost[i][j - 1], len[i][j - 1])] {
                if c < best.0 || (c == best.0 && l < best.1) {
                    best = (c, l);
                }
            }
            let d = a[i - 1] - b[j - 1];
            cost[i][j] = best.0 + d * d;
            len[i][j] = best.1 + 1;
        }
    }
    cost[n][m] / len[n][m] as f64
}

/// Median of the last `window` values up to and including index `i`.
pub fn trailing_median(xs: &[f64], i: usize, window: usize) -> f64 {
    let lo = (i + 1).saturating_sub(window);
    let mut w = xs[lo..=i].to_vec();
    w.sort_by(f64::total_cmp);
    let k = w.len();
    if k % 2 == 1 {
        w[k / 2]
    } else {
        (w[k / 2 - 1] + w[k / 2]) / 2.0
    }
}

pub fn trailing_mean(xs: &[f64], i: usize, window: usize) -> f64 {
    let lo = (i + 1).saturating_sub(window);
    let w = &xs[lo..=i];
    w.iter().sum::<f64>() / w.len() as f64
}

pub fn random_sequence(rng: &mut SplitMix, len: usize, integer: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if integer {
                rng.int_range(0, 6) as f64 - 3.0
            } else {
                rng.normal()
            }
        })
        .collect()
}
