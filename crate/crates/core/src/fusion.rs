//! Accelerometer/gyroscope fusion into a single arm elevation angle.
//!
//! The filter tracks two states, the angle and the gyro bias on the
//! configured rotation axis. Prediction integrates the bias-corrected rate;
//! the update step corrects against the inclination implied by gravity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{ImuSample, OrientationSample, OrientationSeries, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("zero-magnitude acceleration at t={0}")]
    ZeroAcceleration(f64),
    #[error("non-increasing timestamp {t} after {last_t}")]
    NonIncreasingTime { t: f64, last_t: f64 },
    #[error("error covariance lost positive semi-definiteness at t={0}")]
    CovarianceNotPsd(f64),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("trace has no IMU samples")]
    NoImu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn pick(self, v: [f64; 3]) -> f64 {
        match self {
            Axis::X => v[0],
            Axis::Y => v[1],
            Axis::Z => v[2],
        }
    }
}

/// Which channels define elevation. The default assumes the sensor's z axis
/// is vertical in the reference pose, x points along the arm, and elevation
/// is a rotation about y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisMapping {
    pub vertical: Axis,
    pub arm: Axis,
    pub gyro: Axis,
    /// +1 or -1, the sign relating the gyro channel to d(theta)/dt.
    pub gyro_sign: f64,
}

impl Default for AxisMapping {
    fn default() -> Self {
        Self {
            vertical: Axis::Z,
            arm: Axis::X,
            gyro: Axis::Y,
            gyro_sign: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// deg²/s
    pub process_noise_angle: f64,
    /// (deg/s)²/s
    pub process_noise_bias: f64,
    /// deg²
    pub measurement_noise: f64,
    /// deg², used for both diagonal entries at start-up
    pub initial_covariance: f64,
    pub axes: AxisMapping,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            process_noise_angle: 0.01,
            process_noise_bias: 0.003,
            measurement_noise: 4.0,
            initial_covariance: 1.0,
            axes: AxisMapping::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let fields = [
            ("process_noise_angle", self.process_noise_angle),
            ("process_noise_bias", self.process_noise_bias),
            ("measurement_noise", self.measurement_noise),
            ("initial_covariance", self.initial_covariance),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(FusionError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.axes.vertical == self.axes.arm {
            return Err(FusionError::InvalidConfig(
                "vertical and arm axes must differ".into(),
            ));
        }
        if self.axes.gyro_sign.abs() != 1.0 {
            return Err(FusionError::InvalidConfig("gyro_sign must be ±1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub theta: f64,
    pub gyro_bias: f64,
    pub error_covariance: [[f64; 2]; 2],
    pub last_t: f64,
}

impl FusionState {
    /// Seeds the angle from the first sample's inclination, bias at zero.
    pub fn init(first: &ImuSample, config: &FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        let p = config.initial_covariance;
        Ok(Self {
            theta: accel_inclination(first, &config.axes)?,
            gyro_bias: 0.0,
            error_covariance: [[p, 0.0], [0.0, p]],
            last_t: first.t,
        })
    }

    /// Smallest eigenvalue of the (symmetric) error covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let [[a, b], [_, d]] = self.error_covariance;
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - radius
    }
}

fn wrap_degrees(a: f64) -> f64 {
    let mut x = (a + 180.0).rem_euclid(360.0) - 180.0;
    if x == -180.0 && a > 0.0 {
        x = 180.0;
    }
    x
}

/// Elevation of the arm axis relative to gravity, in degrees.
pub fn accel_inclination(sample: &ImuSample, axes: &AxisMapping) -> Result<f64, FusionError> {
    let a = [sample.ax, sample.ay, sample.az];
    if a.iter().all(|v| *v == 0.0) {
        return Err(FusionError::ZeroAcceleration(sample.t));
    }
    Ok(axes.arm.pick(a).atan2(axes.vertical.pick(a)).to_degrees())
}

/// One predict/update cycle.
pub fn fuse_step(
    state: &FusionState,
    sample: &ImuSample,
    config: &FusionConfig,
) -> Result<(FusionState, OrientationSample), FusionError> {
    if sample.t <= state.last_t {
        return Err(FusionError::NonIncreasingTime {
            t: sample.t,
            last_t: state.last_t,
        });
    }
    let dt = sample.t - state.last_t;
    let rate =
        config.axes.gyro_sign * config.axes.gyro.pick([sample.gx, sample.gy, sample.gz]);

    // predict: theta += (rate - bias) dt, F = [[1, -dt], [0, 1]]
    let theta_pred = state.theta + (rate - state.gyro_bias) * dt;
    let [[p00, p01], [p10, p11]] = state.error_covariance;
    let q0 = config.process_noise_angle * dt;
    let q1 = config.process_noise_bias * dt;
    let pp00 = p00 - dt * (p10 + p01) + dt * dt * p11 + q0;
    let pp01 = p01 - dt * p11;
    let pp10 = p10 - dt * p11;
    let pp11 = p11 + q1;

    // update against the gravity inclination, H = [1, 0]
    let measured = accel_inclination(sample, &config.axes)?;
    let innovation = wrap_degrees(measured - theta_pred);
    let s = pp00 + config.measurement_noise;
    let k0 = pp00 / s;
    let k1 = pp10 / s;
    let theta = wrap_degrees(theta_pred + k0 * innovation);
    let gyro_bias = state.gyro_bias + k1 * innovation;

    // Joseph form keeps the covariance symmetric PSD under rounding.
    let r = config.measurement_noise;
    let a00 = 1.0 - k0;
    let n00 = a00 * a00 * pp00 + k0 * k0 * r;
    let n01 = a00 * (pp01 - k1 * pp00) + k0 * k1 * r;
    let n11 = pp11 - k1 * (pp01 + pp10) + k1 * k1 * pp00 + k1 * k1 * r;
    let sym = 0.5 * (n01 + (a00 * (pp10 - k1 * pp00) + k0 * k1 * r));

    let next = FusionState {
        theta,
        gyro_bias,
        error_covariance: [[n00, sym], [sym, n11]],
        last_t: sample.t,
    };
    if !theta.is_finite() || next.min_eigenvalue() < -1e-9 {
        return Err(FusionError::CovarianceNotPsd(sample.t));
    }
    Ok((next, OrientationSample::new(sample.t, theta)))
}

/// Fuses a whole trace. A trace that already carries orientation is
/// returned as-is.
pub fn fuse_trace(trace: &Trace, config: &FusionConfig) -> Result<OrientationSeries, FusionError> {
    if let Some(orientation) = &trace.orientation {
        return Ok(orientation.clone());
    }
    let samples = trace.samples.as_ref().ok_or(FusionError::NoImu)?;
    let mut fuser = Fuser::new(*config);
    samples.iter().map(|s| fuser.push(s)).collect()
}

/// Streaming wrapper that seeds itself from the first sample.
#[derive(Debug, Clone)]
pub struct Fuser {
    config: FusionConfig,
    state: Option<FusionState>,
}

impl Fuser {
    pub fn new(config: FusionConfig) -> Self {
        Self {
            config,
            state: None,
        }
    }

    pub fn state(&self) -> Option<&FusionState> {
        self.state.as_ref()
    }

    pub fn push(&mut self, sample: &ImuSample) -> Result<OrientationSample, FusionError> {
        match &self.state {
            None => {
                let state = FusionState::init(sample, &self.config)?;
                let out = OrientationSample::new(sample.t, state.theta);
                self.state = Some(state);
                Ok(out)
            }
            Some(state) => {
                let (next, out) = fuse_step(state, sample, &self.config)?;
                self.state = Some(next);
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: f64 = 9.81;

    fn imu(t: f64, theta_deg: f64, rate: f64) -> ImuSample {
        let th = theta_deg.to_radians();
        ImuSample {
            t,
            ax: G * th.sin(),
            ay: 0.0,
            az: G * th.cos(),
            gx: 0.0,
            gy: rate,
            gz: 0.0,
        }
    }

    #[test]
    fn reference_and_orthogonal_poses() {
        let axes = AxisMapping::default();
        assert_eq!(accel_inclination(&imu(0.0, 0.0, 0.0), &axes).unwrap(), 0.0);
        let s = ImuSample {
            ax: G,
            az: 0.0,
            ..imu(0.0, 0.0, 0.0)
        };
        assert_eq!(accel_inclination(&s, &axes).unwrap(), 90.0);
        let z = ImuSample {
            az: 0.0,
            ..imu(0.0, 0.0, 0.0)
        };
        assert!(matches!(
            accel_inclination(&z, &axes),
            Err(FusionError::ZeroAcceleration(_))
        ));
    }

    #[test]
    fn stationary_converges() {
        let config = FusionConfig::default();
        let mut state = FusionState::init(&imu(0.0, 30.0, 0.0), &config).unwrap();
        let mut last = 0.0;
        for i in 1..=250 {
            let (s, out) = fuse_step(&state, &imu(i as f64 / 50.0, 30.0, 0.0), &config).unwrap();
            state = s;
            last = out.theta;
        }
        assert!((last - 30.0).abs() <= 0.5, "theta {last}");
    }

    #[test]
    fn integrates_constant_rate() {
        let config = FusionConfig::default();
        let mut state = FusionState::init(&imu(0.0, 0.0, 10.0), &config).unwrap();
        for i in 1..=50 {
            let t = i as f64 / 50.0;
            state = fuse_step(&state, &imu(t, 10.0 * t, 10.0), &config).unwrap().0;
        }
        assert!((state.theta - 10.0).abs() <= 0.5, "theta {}", state.theta);
    }

    #[test]
    fn rejects_time_regression_and_bad_config() {
        let config = FusionConfig::default();
        let state = FusionState::init(&imu(1.0, 0.0, 0.0), &config).unwrap();
        assert!(matches!(
            fuse_step(&state, &imu(1.0, 0.0, 0.0), &config),
            Err(FusionError::NonIncreasingTime { .. })
        ));
        let bad = FusionConfig {
            measurement_noise: 0.0,
            ..config
        };
        assert!(FusionState::init(&imu(0.0, 0.0, 0.0), &bad).is_err());
    }

    #[test]
    fn orientation_trace_passes_through() {
        let o = vec![OrientationSample::new(0.0, 1.0), OrientationSample::new(0.02, 2.0)];
        let trace = Trace::from_orientation(o.clone(), Default::default());
        assert_eq!(fuse_trace(&trace, &FusionConfig::default()).unwrap(), o);
    }

    #[test]
    fn wraps_angles() {
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
    }
}
