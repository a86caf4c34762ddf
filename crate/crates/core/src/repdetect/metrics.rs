use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::trace::OrientationSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    /// Degrees.
    pub range_of_motion: f64,
    /// Seconds.
    pub duration: f64,
    /// Degrees per second over the down-and-up path.
    pub mean_velocity: f64,
    pub eccentric_duration: f64,
    pub concentric_duration: f64,
}

/// Metrics over the samples of `segment` within `[start_t, end_t]`, phases
/// split at `apex_t`.
pub fn compute_metrics(
    segment: &[OrientationSample],
    start_t: f64,
    apex_t: f64,
    end_t: f64,
) -> Result<RepMetrics, DetectError> {
    if !(start_t < apex_t && apex_t < end_t) {
        return Err(DetectError::Degenerate(format!(
            "boundaries {start_t} < {apex_t} < {end_t} do not hold"
        )));
    }
    let inside: Vec<f64> = segment
        .iter()
        .filter(|s| s.t >= start_t && s.t <= end_t)
        .map(|s| s.theta)
        .collect();
    if inside.len() < 3 {
        return Err(DetectError::Degenerate(format!("{} samples", inside.len())));
    }
    let (lo, hi) = inside
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let rom = hi - lo;
    let duration = end_t - start_t;
    Ok(RepMetrics {
        range_of_motion: rom,
        duration,
        mean_velocity: 2.0 * rom / duration,
        eccentric_duration: apex_t - start_t,
        concentric_duration: end_t - apex_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_triangle() {
        let seg: Vec<OrientationSample> = (0..=100)
            .map(|i| {
                let t = i as f64 * 0.02;
                let theta = if t <= 1.0 { 30.0 - 30.0 * t } else { 30.0 * (t - 1.0) };
                OrientationSample::new(t, theta)
            })
            .collect();
        let m = compute_metrics(&seg, 0.0, 1.0, 2.0).unwrap();
        assert!((m.range_of_motion - 30.0).abs() < 1e-9);
        assert_eq!(m.duration, 2.0);
        assert_eq!(m.eccentric_duration, 1.0);
        assert_eq!(m.concentric_duration, 1.0);
        assert!((m.mean_velocity - 30.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        let seg = [OrientationSample::new(0.0, 1.0), OrientationSample::new(1.0, 0.0)];
        assert!(matches!(
            compute_metrics(&seg, 0.0, 0.5, 1.0),
            Err(DetectError::Degenerate(_))
        ));
    }
}
