//! Joint two-vehicle kinematic bicycle model integrated with classical
//! fourth-order Runge–Kutta.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Centre position, heading and speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self { x, y, heading, speed }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }

    fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.heading, self.speed]
    }

    fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }
}

/// Acceleration and steering angle held constant over the prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlInput {
    pub accel: f64,
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }
}

/// Wheelbase and rectangular footprint of a vehicle, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleSpec {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleSpec {
    pub fn new(wheelbase: f64, length: f64, width: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(wheelbase) && ok(length) && ok(width)) {
            return Err(Error::InvalidParameter(format!(
                "vehicle dimensions must be positive: wheelbase={wheelbase}, length={length}, width={width}"
            )));
        }
        if wheelbase > length {
            return Err(Error::InvalidParameter(format!("wheelbase {wheelbase} exceeds vehicle length {length}")));
        }
        Ok(Self { wheelbase, length, width })
    }
}

impl Default for VehicleSpec {
    /// A mid-size passenger car.
    fn default() -> Self {
        Self { wheelbase: 2.7, length: 4.5, width: 1.8 }
    }
}

/// States of the two interacting vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub a: VehicleState,
    pub b: VehicleState,
}

impl JointState {
    pub fn new(a: VehicleState, b: VehicleState) -> Self {
        Self { a, b }
    }

    /// The eight-component joint vector `(x_A, y_A, θ_A, v_A, x_B, y_B, θ_B, v_B)`.
    pub fn to_array(self) -> [f64; 8] {
        let [a0, a1, a2, a3] = self.a.to_array();
        let [b0, b1, b2, b3] = self.b.to_array();
        [a0, a1, a2, a3, b0, b1, b2, b3]
    }

    pub fn from_array(x: [f64; 8]) -> Self {
        Self::new(VehicleState::from_slice(&x[..4]), VehicleState::from_slice(&x[4..]))
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

/// Step size and number of steps of the prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct IntegrationConfig {
    pub dt: f64,
    pub steps: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "integration needs dt > 0 and at least one step (dt={dt}, steps={steps})"
            )));
        }
        Ok(Self { dt, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

impl Default for IntegrationConfig {
    /// 3 s at 0.1 s steps.
    fn default() -> Self {
        Self { dt: 0.1, steps: 30 }
    }
}

#[inline]
fn vehicle_rate(s: &[f64], u: ControlInput, wheelbase: f64) -> [f64; 4] {
    let (sin, cos) = s[2].sin_cos();
    let v = s[3];
    [v * cos, v * sin, v / wheelbase * u.steer.tan(), u.accel]
}

/// Time derivative of the joint state.
pub fn vector_field(s: &JointState, controls: [ControlInput; 2], specs: [VehicleSpec; 2]) -> [f64; 8] {
    joint_rate(&s.to_array(), controls, specs)
}

fn joint_rate(x: &[f64; 8], controls: [ControlInput; 2], specs: [VehicleSpec; 2]) -> [f64; 8] {
    let ra = vehicle_rate(&x[..4], controls[0], specs[0].wheelbase);
    let rb = vehicle_rate(&x[4..], controls[1], specs[1].wheelbase);
    [ra[0], ra[1], ra[2], ra[3], rb[0], rb[1], rb[2], rb[3]]
}

/// One classical RK4 update of an `N`-dimensional autonomous system.
fn rk4<const N: usize>(x: &[f64; N], dt: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let offset = |k: &[f64; N], h: f64| {
        let mut y = *x;
        for i in 0..N {
            y[i] += h * k[i];
        }
        y
    };
    let k1 = f(x);
    let k2 = f(&offset(&k1, dt / 2.0));
    let k3 = f(&offset(&k2, dt / 2.0));
    let k4 = f(&offset(&k3, dt));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Advances the joint state by one RK4 step. Speeds are clamped at zero
/// after the step: braking vehicles stop rather than reverse.
pub fn rk4_step(s: &JointState, controls: [ControlInput; 2], specs: [VehicleSpec; 2], dt: f64) -> JointState {
    let mut x = rk4(&s.to_array(), dt, |x| joint_rate(x, controls, specs));
    x[3] = x[3].max(0.0);
    x[7] = x[7].max(0.0);
    JointState::from_array(x)
}

/// Single-vehicle RK4 step, used for vehicle–infrastructure interactions.
/// Produces exactly the same numbers as the corresponding half of
/// [`rk4_step`].
pub fn rk4_step_single(s: &VehicleState, control: ControlInput, spec: VehicleSpec, dt: f64) -> VehicleState {
    let mut x = rk4(&s.to_array(), dt, |x| vehicle_rate(x, control, spec.wheelbase));
    x[3] = x[3].max(0.0);
    VehicleState::from_slice(&x)
}

/// States at `t = n·dt` for `n = 0..=steps`; the first entry is `s0`.
pub fn simulate_horizon(
    s0: &JointState,
    controls: [ControlInput; 2],
    specs: [VehicleSpec; 2],
    cfg: &IntegrationConfig,
) -> Vec<JointState> {
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(*s0);
    let mut s = *s0;
    for _ in 0..cfg.steps {
        s = rk4_step(&s, controls, specs, cfg.dt);
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn spec(l: f64) -> VehicleSpec {
        VehicleSpec::new(l, 4.5, 1.8).unwrap()
    }

    #[test]
    fn field_examples() {
        let specs = [spec(2.5), spec(2.5)];
        let still = JointState::default();
        let r = vector_field(&still, [ControlInput::default(); 2], specs);
        assert_eq!(&r[..4], &[0.0; 4]);

        let s = JointState::new(VehicleState::new(0.0, 0.0, 0.0, 10.0), VehicleState::default());
        let r = vector_field(&s, [ControlInput::new(2.0, 0.0), ControlInput::default()], specs);
        assert_eq!(&r[..4], &[10.0, 0.0, 0.0, 2.0]);

        let s = JointState::new(VehicleState::new(0.0, 0.0, FRAC_PI_2, 8.0), VehicleState::default());
        let r = vector_field(&s, [ControlInput::new(1.5, 0.2), ControlInput::default()], specs);
        assert!(r[0].abs() < 1e-6);
        assert!((r[1] - 8.0).abs() < 1e-12);
        assert!((r[2] - 8.0 * 0.2f64.tan() / 2.5).abs() < 1e-12);
        assert!((r[2] - 0.6487).abs() < 1e-4);
        assert_eq!(r[3], 1.5);
    }

    #[test]
    fn straight_line_is_exact() {
        let s = JointState::new(VehicleState::new(0.0, 0.0, 0.0, 10.0), VehicleState::default());
        let n = rk4_step(&s, [ControlInput::default(); 2], [spec(2.5); 2], 0.1);
        assert!((n.a.x - 1.0).abs() < 1e-14);
        assert_eq!((n.a.y, n.a.heading, n.a.speed), (0.0, 0.0, 10.0));
        assert_eq!(n.b, s.b);
    }

    #[test]
    fn braking_stops_at_zero() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.5);
        let mut st = s;
        for _ in 0..20 {
            st = rk4_step_single(&st, ControlInput::new(-6.0, 0.0), spec(2.5), 0.1);
            assert!(st.speed >= 0.0);
        }
        assert_eq!(st.speed, 0.0);
    }

    #[test]
    fn single_matches_joint() {
        let a = VehicleState::new(1.0, -2.0, 0.3, 7.0);
        let u = ControlInput::new(0.4, 0.05);
        let j = rk4_step(
            &JointState::new(a, VehicleState::new(9.0, 9.0, 1.0, 3.0)),
            [u, ControlInput::new(-1.0, -0.1)],
            [spec(2.7), spec(3.0)],
            0.1,
        );
        assert_eq!(j.a, rk4_step_single(&a, u, spec(2.7), 0.1));
    }

    #[test]
    fn invalid_configs() {
        assert!(IntegrationConfig::new(0.0, 10).is_err());
        assert!(IntegrationConfig::new(0.1, 0).is_err());
        assert!(VehicleSpec::new(5.0, 4.0, 1.8).is_err());
        assert!(VehicleSpec::new(2.0, 4.0, -1.0).is_err());
    }
}
