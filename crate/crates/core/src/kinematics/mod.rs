//! Trajectory cleaning and per-frame control derivation.
//!
//! Raw tracks carry positions and velocity components sampled at a fixed
//! rate. Processing smooths positions with a clamped cubic B-spline, filters
//! speed with a Savitzky–Golay filter, and derives acceleration, unwrapped
//! heading, yaw rate and the bicycle-model steering angle by forward
//! differences.

mod bspline;
mod savgol;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

pub use bspline::ClampedCubicBasis;
pub use savgol::sg_filter;

use crate::dynamics::VehicleSpec;
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Tolerance on sample-period uniformity, in seconds.
pub const SPACING_TOLERANCE: f64 = 1e-9;

/// Below this speed (m/s) heading falls back to displacement and steering is
/// reported as zero.
pub const STATIONARY_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawFrame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// A validated, uniformly sampled trajectory of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    agent_id: String,
    frames: Vec<RawFrame>,
    sample_period: f64,
}

impl RawTrack {
    pub const MIN_FRAMES: usize = 5;

    pub fn new(agent_id: impl Into<String>, frames: Vec<RawFrame>) -> Result<Self> {
        let agent_id = agent_id.into();
        let invalid = |reason: String| Error::InvalidTrack { agent: agent_id.clone(), reason };
        if frames.len() < Self::MIN_FRAMES {
            return Err(Error::TooShort { agent: agent_id, len: frames.len(), min: Self::MIN_FRAMES });
        }
        for (i, f) in frames.iter().enumerate() {
            if ![f.t, f.x, f.y, f.vx, f.vy].iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("non-finite value in frame {i}")));
            }
        }
        let n = frames.len();
        let period = (frames[n - 1].t - frames[0].t) / (n - 1) as f64;
        if period <= 0.0 {
            return Err(invalid("timestamps must be strictly increasing".to_string()));
        }
        for (i, w) in frames.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if dt <= 0.0 {
                return Err(invalid(format!("timestamps not increasing at frame {}", i + 1)));
            }
            if (dt - period).abs() > SPACING_TOLERANCE {
                return Err(invalid(format!("non-uniform spacing at frame {}: {dt} vs period {period}", i + 1)));
            }
        }
        Ok(Self { agent_id, frames, sample_period: period })
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn frames(&self) -> &[RawFrame] {
        &self.frames
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProcessedFrame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub speed: f64,
    pub accel: f64,
    /// Unwrapped heading, radians.
    pub heading: f64,
    pub yaw_rate: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrack {
    pub agent_id: String,
    pub frames: Vec<ProcessedFrame>,
    pub spec: VehicleSpec,
    pub sample_period: f64,
}

/// Default number of frames per spline control point.
pub const DEFAULT_CONTROL_POINT_SPACING: usize = 5;

/// Replaces positions with a least-squares clamped cubic B-spline fit in
/// time. One control point is used per `control_point_spacing` frames
/// (at least four); the first and last positions are kept exactly.
pub fn smooth_positions(track: &RawTrack, control_point_spacing: usize) -> Result<RawTrack> {
    if control_point_spacing < 2 {
        return Err(Error::InvalidConfig(format!(
            "control point spacing must be at least 2, got {control_point_spacing}"
        )));
    }
    let n = track.len();
    if n < RawTrack::MIN_FRAMES {
        return Err(Error::TooShort { agent: track.agent_id.clone(), len: n, min: RawTrack::MIN_FRAMES });
    }
    let n_ctrl = (n / control_point_spacing).max(4).min(n);
    let t0 = track.frames[0].t;
    let span = track.frames[n - 1].t - t0;
    let params: Vec<f64> = track.frames.iter().map(|f| (f.t - t0) / span).collect();
    let xs: Vec<f64> = track.frames.iter().map(|f| f.x).collect();
    let ys: Vec<f64> = track.frames.iter().map(|f| f.y).collect();
    let singular = || Error::InvalidTrack {
        agent: track.agent_id.clone(),
        reason: "spline normal equations are singular".to_string(),
    };
    let sx = bspline::smooth(&params, &xs, n_ctrl).ok_or_else(singular)?;
    let sy = bspline::smooth(&params, &ys, n_ctrl).ok_or_else(singular)?;
    let frames = track.frames.iter().zip(sx.into_iter().zip(sy)).map(|(f, (x, y))| RawFrame { x, y, ..*f }).collect();
    Ok(RawTrack { frames, ..track.clone() })
}

/// Per-frame speed, the Euclidean norm of the velocity components.
pub fn derive_speed(track: &RawTrack) -> Vec<f64> {
    track.frames.iter().map(|f| f.vx.hypot(f.vy)).collect()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a - TAU * ((a + PI) / TAU).floor();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Removes `2π` jumps so consecutive angles differ by at most `π`.
pub fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    for (i, &a) in raw.iter().enumerate() {
        if i == 0 {
            out.push(a);
        } else {
            let prev: f64 = out[i - 1];
            out.push(prev + wrap_angle(a - prev));
        }
    }
    out
}

fn raw_headings(frames: &[RawFrame]) -> Vec<f64> {
    let n = frames.len();
    let mut raw: Vec<Option<f64>> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.vx.hypot(f.vy) >= STATIONARY_SPEED {
                return Some(f.vy.atan2(f.vx));
            }
            let (a, b) = if i + 1 < n { (f, &frames[i + 1]) } else { (&frames[i - 1], f) };
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            (dx.hypot(dy) > 1e-6).then(|| dy.atan2(dx))
        })
        .collect();
    // Carry the last known heading forward, then back-fill the start.
    for i in 1..n {
        if raw[i].is_none() {
            raw[i] = raw[i - 1];
        }
    }
    let first = raw.iter().flatten().next().copied().unwrap_or(0.0);
    raw.into_iter().map(|h| h.unwrap_or(first)).collect()
}

fn forward_difference(values: &[f64], frames: &[RawFrame]) -> Vec<f64> {
    let n = values.len();
    let mut d: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / (frames[i + 1].t - frames[i].t)).collect();
    let last = d[n - 2];
    d.push(last);
    d
}

/// Derives controls from velocity components without speed filtering.
pub fn derive_dynamics(track: &RawTrack, spec: VehicleSpec) -> ProcessedTrack {
    derive_dynamics_with_speed(track, spec, &derive_speed(track))
}

/// Derives acceleration, heading, yaw rate and steering from a supplied
/// speed series (for example a filtered one).
pub fn derive_dynamics_with_speed(track: &RawTrack, spec: VehicleSpec, speed: &[f64]) -> ProcessedTrack {
    let frames = &track.frames;
    assert_eq!(speed.len(), frames.len(), "speed series length mismatch");
    let speed: Vec<f64> = speed.iter().map(|v| v.max(0.0)).collect();
    let accel = forward_difference(&speed, frames);
    let heading = unwrap_angles(&raw_headings(frames));
    let yaw_rate = forward_difference(&heading, frames);

    let frames = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v = speed[i];
            let steer = if v < STATIONARY_SPEED { 0.0 } else { (spec.wheelbase * yaw_rate[i] / v).atan() };
            ProcessedFrame {
                t: f.t,
                x: f.x,
                y: f.y,
                vx: f.vx,
                vy: f.vy,
                speed: v,
                accel: accel[i],
                heading: heading[i],
                yaw_rate: yaw_rate[i],
                steer,
            }
        })
        .collect();
    ProcessedTrack { agent_id: track.agent_id.clone(), frames, spec, sample_period: track.sample_period }
}

/// Settings of the full cleaning chain.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PreprocessConfig {
    /// Frames per spline control point; `0` disables position smoothing.
    pub control_point_spacing: usize,
    pub sg_window: usize,
    pub sg_order: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            control_point_spacing: DEFAULT_CONTROL_POINT_SPACING,
            // Largest odd window within an 11 s scenario at 10 Hz.
            sg_window: 109,
            sg_order: 2,
        }
    }
}

/// Smoothing, speed filtering and control derivation in one pass.
pub fn preprocess(track: &RawTrack, spec: VehicleSpec, cfg: &PreprocessConfig) -> Result<ProcessedTrack> {
    let smoothed = if cfg.control_point_spacing == 0 {
        track.clone()
    } else {
        smooth_positions(track, cfg.control_point_spacing)?
    };
    let speed = sg_filter(&derive_speed(&smoothed), cfg.sg_window, cfg.sg_order)?;
    Ok(derive_dynamics_with_speed(&smoothed, spec, &speed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn track_from(frames: Vec<RawFrame>) -> RawTrack {
        RawTrack::new("a", frames).unwrap()
    }

    fn line(n: usize) -> RawTrack {
        track_from(
            (0..n).map(|i| RawFrame { t: i as f64 * 0.1, x: i as f64 * 0.1, y: 0.0, vx: 1.0, vy: 0.0 }).collect(),
        )
    }

    #[test]
    fn validation() {
        let f = |t| RawFrame { t, x: 0.0, y: 0.0, vx: 0.0, vy: 0.0 };
        assert!(matches!(RawTrack::new("a", vec![f(0.0), f(0.1)]), Err(Error::TooShort { len: 2, .. })));
        let uneven = vec![f(0.0), f(0.1), f(0.2), f(0.35), f(0.4)];
        assert!(matches!(RawTrack::new("a", uneven), Err(Error::InvalidTrack { .. })));
        let backwards = vec![f(0.4), f(0.3), f(0.2), f(0.1), f(0.0)];
        assert!(RawTrack::new("a", backwards).is_err());
    }

    #[test]
    fn speed_examples() {
        let fr = |vx, vy| RawFrame { t: 0.0, x: 0.0, y: 0.0, vx, vy };
        let mut frames = vec![fr(3.0, 4.0), fr(0.0, 0.0), fr(-6.0, 8.0), fr(1.0, 0.0), fr(1.0, 0.0)];
        for (i, f) in frames.iter_mut().enumerate() {
            f.t = i as f64;
        }
        let v = derive_speed(&track_from(frames));
        assert_eq!(&v[..3], &[5.0, 0.0, 10.0]);
    }

    #[test]
    fn straight_line_is_unchanged_by_smoothing() {
        let tr = line(50);
        let s = smooth_positions(&tr, 5).unwrap();
        for (a, b) in tr.frames().iter().zip(s.frames()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            assert_eq!((a.t, a.vx, a.vy), (b.t, b.vx, b.vy));
        }
    }

    #[test]
    fn smoothing_rejects_bad_spacing() {
        assert!(matches!(smooth_positions(&line(20), 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unwrap_keeps_steps_below_pi() {
        let raw = [3.0, -3.1, 3.05, -3.0, 0.2];
        let u = unwrap_angles(&raw);
        for w in u.windows(2) {
            assert!((w[1] - w[0]).abs() <= PI);
        }
        assert!((u[1] - (TAU - 3.1)).abs() < 1e-12);
    }

    #[test]
    fn stationary_steer_is_zero() {
        let frames = (0..10).map(|i| RawFrame { t: i as f64 * 0.1, x: 0.0, y: 0.0, vx: 0.0, vy: 0.0 }).collect();
        let p = derive_dynamics(&track_from(frames), VehicleSpec::default());
        assert!(p.frames.iter().all(|f| f.steer == 0.0 && f.speed == 0.0));
    }

    #[test]
    fn constant_speed_has_zero_accel() {
        let p = derive_dynamics(&line(30), VehicleSpec::default());
        assert!(p.frames.iter().all(|f| f.accel == 0.0));
    }
}
