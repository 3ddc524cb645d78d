//! Synthetic corridors with scripted conflicts and known contact times.
//!
//! The corridor runs along +x with one straight segment per group. Each
//! scenario occupies its own time window and its own stretch of the
//! group's segment, and holds at most one vehicle–vehicle conflict, one
//! vehicle–boundary conflict and a few background vehicles travelling the
//! other way. All vehicles keep a constant speed; conflicts are resolved by
//! steering, so the controls derived from the trajectories at a scenario's
//! first frame are exact. Every conflict approaches at an angle and is
//! resolved by straightening out, which leaves a lateral clearance larger
//! than the proximity threshold, so no later frame forecasts a closer call. Ground truth is the first contact time of that
//! frame's constant-control forecast, computed from closed-form arc and
//! line poses rather than by integration.
//!
//! The severity of each conflict is scripted: a target minimum TTC is drawn
//! from a group-specific GEV on the negated-TTC axis, and the evasive
//! manoeuvre starts when the forecast TTC reaches it. The north curb lies
//! beyond the reach of any turning forecast within the horizon.

use corisk_core::blocks::{Direction, GroupKind, GroupSpec, Median, SiteRegion};
use corisk_core::detection::{
    check_vv, BoundaryKind, BoundaryPolyline, DetectionConfig, EventKind, VvRule, DENSIFY_SPACING,
};
use corisk_core::dynamics::{rk4_step_single, ControlInput, VehicleSpec, VehicleState};
use corisk_core::geometry::{global_corners, CornerSet, Point};
use corisk_core::gev::GevParams;
use corisk_core::kinematics::RawFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CliError, Result};
use crate::io::TruthRow;

const LANE_1: f64 = 1.8;
const OPPOSING_LANE: f64 = 10.8;
const NORTH_CURB_Y: f64 = 30.0;
/// Forecast TTC at the first frame of a scripted conflict, seconds.
const INITIAL_TTC: f64 = 2.7;
const INITIAL_TTC_TURN: f64 = 2.5;
const MIN_TARGET_TTC: f64 = 0.5;
/// Yaw rate of evasive swerves and recoveries, rad/s.
const EVASIVE_YAW: f64 = 1.0;
/// Closing-speed range of the vehicle–vehicle scripts, m/s. A forecast
/// step must not carry the corners across the whole threshold window along
/// x, so `closing * dt` stays below twice the threshold.
const CLOSING: (f64, f64) = (2.0, 4.5);
/// Lateral gap between the facing corners, below the proximity threshold,
/// at the scripted contact time.
const LATERAL_MARGIN: f64 = 0.1;
/// Corner height above a boundary at the scripted contact time, meters.
const CONTACT_HEIGHT: f64 = 0.28;
/// Integration substeps per sample period.
const SUBSTEPS: usize = 20;
/// Scan step of the contact search before bisection, seconds.
const SEARCH_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    /// Location of the negated target TTC at the middle of a script's
    /// closing-speed range.
    pub mu: f64,
    /// Change of that location from the middle to the top of the range.
    pub speed_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VvScript {
    /// A faster vehicle drifts from the adjacent lane onto the rear corner
    /// of a slower one.
    RearEnd,
    /// An oncoming vehicle drifts toward the other's lane.
    HeadOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViScript {
    /// A straight path angled toward the curb.
    Drift,
    /// A constant-curvature path bending toward the curb.
    Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub groups: Vec<SynthGroup>,
    /// Scenarios, and hence blocks of each scripted kind, per group.
    pub scenarios_per_group: usize,
    /// Seconds; scenario `s` starts at `s * scenario_duration`.
    pub scenario_duration: f64,
    pub sample_period: f64,
    /// Vehicle–vehicle scripts, cycled over scenarios; empty disables them.
    pub vv_scripts: Vec<VvScript>,
    /// Vehicle–boundary scripts, cycled over scenarios; empty disables them.
    pub vi_scripts: Vec<ViScript>,
    /// Conflict-free vehicles in the opposing lane of each scenario.
    pub background_vehicles: usize,
    /// Standard deviation of the position noise, meters.
    pub position_noise: f64,
    /// Length of each group's segment, meters.
    pub segment_length: f64,
    /// Scale of the target GEV.
    pub sigma: f64,
    /// Shape of the target GEV.
    pub xi: f64,
    /// Location offset of boundary conflicts relative to vehicle ones.
    pub vi_shift: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let mu = [-1.5, -1.2, -0.95, -0.75];
        let slope = [0.15, 0.05, -0.05, 0.1];
        Self {
            groups: mu.iter().zip(slope).map(|(&mu, speed_slope)| SynthGroup { mu, speed_slope }).collect(),
            scenarios_per_group: 32,
            scenario_duration: 11.0,
            sample_period: 0.1,
            vv_scripts: vec![VvScript::RearEnd, VvScript::HeadOn],
            vi_scripts: vec![ViScript::Drift, ViScript::Turn],
            background_vehicles: 2,
            position_noise: 0.01,
            segment_length: 400.0,
            sigma: 0.25,
            xi: -0.2,
            vi_shift: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(format!("synth: {m}")));
        if self.groups.is_empty() || self.scenarios_per_group == 0 {
            return bad("at least one group and one scenario per group required".into());
        }
        if self.groups.iter().any(|g| !(g.mu.is_finite() && g.speed_slope.is_finite())) {
            return bad("group coefficients must be finite".into());
        }
        if !(self.sample_period > 0.0 && self.sample_period <= 0.5) {
            return bad(format!("sample_period must lie in (0, 0.5], got {}", self.sample_period));
        }
        if !(self.scenario_duration >= 5.0 && self.scenario_duration.is_finite()) {
            return bad(format!("scenario_duration must be at least 5 s, got {}", self.scenario_duration));
        }
        if !(self.segment_length >= 300.0 && self.segment_length.is_finite()) {
            return bad(format!("segment_length must be at least 300 m, got {}", self.segment_length));
        }
        if !(self.position_noise >= 0.0 && self.position_noise < 0.5) {
            return bad(format!("position_noise must lie in [0, 0.5), got {}", self.position_noise));
        }
        if GevParams::new(0.0, self.sigma, self.xi).is_err() || !self.vi_shift.is_finite() {
            return bad("sigma must be positive and xi, vi_shift finite".into());
        }
        Ok(())
    }

    pub fn n_scenarios(&self) -> usize {
        self.groups.len() * self.scenarios_per_group
    }

    pub fn frames_per_scenario(&self) -> usize {
        (self.scenario_duration / self.sample_period).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVehicle {
    pub id: String,
    pub spec: VehicleSpec,
    pub frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub index: usize,
    /// 1-based group id.
    pub group: usize,
    pub t0: f64,
    pub vehicles: Vec<SynthVehicle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub scenarios: Vec<Scenario>,
    /// Boundaries as straight polylines, before densification.
    pub boundaries: Vec<BoundaryPolyline>,
    pub regions: Vec<SiteRegion>,
    pub truth: Vec<TruthRow>,
}

/// Pose under constant speed and yaw rate, in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl Motion {
    pub fn at(&self, t: f64) -> VehicleState {
        let h = self.heading + self.yaw_rate * t;
        let (x, y) = if self.yaw_rate.abs() < 1e-12 {
            (self.x + self.speed * t * self.heading.cos(), self.y + self.speed * t * self.heading.sin())
        } else {
            let r = self.speed / self.yaw_rate;
            (self.x + r * (h.sin() - self.heading.sin()), self.y - r * (h.cos() - self.heading.cos()))
        };
        VehicleState::new(x, y, h, self.speed)
    }
}

/// Earliest `t` in `(0, horizon]` where `hit` holds: a fixed-step scan
/// followed by bisection of the first bracketing step.
pub fn first_contact(hit: impl Fn(f64) -> bool, horizon: f64) -> Option<f64> {
    let n = (horizon / SEARCH_STEP).round() as usize;
    let mut prev = 0.0;
    for i in 1..=n {
        let t = i as f64 * SEARCH_STEP;
        if hit(t) {
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if hit(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = t;
    }
    None
}

/// First vehicle–vehicle contact time of two closed-form motions.
pub fn vv_contact(
    a: (&Motion, &VehicleSpec),
    b: (&Motion, &VehicleSpec),
    epsilon: f64,
    rule: VvRule,
    horizon: f64,
) -> Option<f64> {
    first_contact(
        |t| {
            let ca = global_corners(&a.0.at(t), a.1);
            let cb = global_corners(&b.0.at(t), b.1);
            check_vv(&ca, &cb, epsilon, rule).is_some()
        },
        horizon,
    )
}

fn corners_near(c: &CornerSet, vertices: &[Point], epsilon: f64) -> bool {
    c.points().iter().any(|p| vertices.iter().any(|v| v.distance(p) <= epsilon))
}

/// First vehicle–boundary contact of a closed-form motion against densified
/// boundaries, with the boundary id.
pub fn vi_contact(
    m: &Motion,
    spec: &VehicleSpec,
    boundaries: &[BoundaryPolyline],
    epsilon: f64,
    horizon: f64,
) -> Option<(f64, String)> {
    let reach = m.speed * horizon + spec.length + epsilon;
    let start = Point::new(m.x, m.y);
    let mut best: Option<(f64, String)> = None;
    for b in boundaries {
        let near: Vec<Point> = b.points().iter().copied().filter(|v| v.distance(&start) <= reach).collect();
        if near.is_empty() {
            continue;
        }
        let t = first_contact(|t| corners_near(&global_corners(&m.at(t), spec), &near, epsilon), horizon);
        if let Some(t) = t {
            if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                best = Some((t, b.id.clone()));
            }
        }
    }
    best
}

/// Time closest to `t` midway between two forecast steps.
fn mid_step(t: f64, dt: f64) -> f64 {
    ((t / dt - 0.5).round() + 0.5) * dt
}

/// Shifts a vehicle–boundary conflict so that its contact falls midway
/// between forecast steps and the contacting corner lies on a boundary
/// vertex at the following step. Whether a corner at the threshold distance
/// counts as a hit depends on its offset from the nearest vertex; with this
/// placement that offset cannot move the detected step past the contact
/// step.
fn place_vi(mut m: Motion, spec: &VehicleSpec, dense: &[BoundaryPolyline], eps: f64, det: &DetectionConfig) -> Motion {
    let (dt, horizon) = (det.horizon.dt, det.horizon.horizon());
    let nearest = |m: &Motion, t: f64| {
        let corners = global_corners(&m.at(t), spec);
        corners
            .points()
            .iter()
            .flat_map(|c| {
                dense.iter().map(move |b| {
                    let (i, d) = b.nearest_vertex(c);
                    (d, *c, b.points()[i], b.direction_at(i))
                })
            })
            .fold(None, |best: Option<(f64, Point, Point, f64)>, cur| match best {
                Some(b) if b.0 <= cur.0 => Some(b),
                _ => Some(cur),
            })
    };
    let Some((t, _)) = vi_contact(&m, spec, dense, eps, horizon) else { return m };
    let goal = mid_step(t, dt);
    let step = goal + 0.5 * dt;
    let mut best = (f64::INFINITY, m);
    for _ in 0..6 {
        if let Some((_, c, v, dir)) = nearest(&m, step) {
            let along = (v.x - c.x) * dir.cos() + (v.y - c.y) * dir.sin();
            m.x += along * dir.cos();
            m.y += along * dir.sin();
        }
        let Some((t, _)) = vi_contact(&m, spec, dense, eps, horizon) else { break };
        if (t - goal).abs() < best.0 {
            best = ((t - goal).abs(), m);
        }
        // Approach speed toward the boundary from a short forward difference.
        let h = 1e-3;
        let (Some(now), Some(later)) = (nearest(&m, t), nearest(&m, t + h)) else { break };
        let (_, c, v, dir) = now;
        let normal = (-dir.sin(), dir.cos());
        let side = ((c.x - v.x) * normal.0 + (c.y - v.y) * normal.1).signum();
        let shift = (now.0 - later.0) / h * (goal - t) * side;
        m.x += shift * normal.0;
        m.y += shift * normal.1;
    }
    best.1
}

/// A vehicle's script: constant speed, piecewise-constant yaw rate.
#[derive(Debug, Clone)]
struct Plan {
    id: String,
    spec: VehicleSpec,
    start: Motion,
    /// `(start time, yaw rate)` segments; the first starts at 0.
    yaw: Vec<(f64, f64)>,
}

impl Plan {
    fn straight(id: String, spec: VehicleSpec, start: Motion) -> Self {
        Self { id, spec, start, yaw: vec![(0.0, start.yaw_rate)] }
    }

    fn yaw_at(&self, t: f64) -> f64 {
        self.yaw.iter().rev().find(|s| s.0 <= t).map_or(0.0, |s| s.1)
    }

    /// Turns from `heading` to `goal` starting at `t`.
    fn recover(&mut self, t: f64, heading: f64, goal: f64) {
        let turn = goal - heading;
        self.yaw.push((t, turn.signum() * EVASIVE_YAW));
        self.yaw.push((t + turn.abs() / EVASIVE_YAW, 0.0));
    }

    fn simulate(&self, n_frames: usize, period: f64, t0: f64, noise: &mut impl FnMut() -> f64) -> Vec<RawFrame> {
        let h = period / SUBSTEPS as f64;
        let mut s = VehicleState::new(self.start.x, self.start.y, self.start.heading, self.start.speed);
        let mut out = Vec::with_capacity(n_frames);
        for i in 0..n_frames {
            let (sin, cos) = s.heading.sin_cos();
            out.push(RawFrame {
                t: t0 + i as f64 * period,
                x: s.x + noise(),
                y: s.y + noise(),
                vx: s.speed * cos,
                vy: s.speed * sin,
            });
            for k in 0..SUBSTEPS {
                let mid = (i * SUBSTEPS + k) as f64 * h + 0.5 * h;
                let steer = (self.spec.wheelbase * self.yaw_at(mid) / s.speed).atan();
                s = rk4_step_single(&s, ControlInput::new(0.0, steer), self.spec, h);
            }
        }
        out
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_spec(rng: &mut ChaCha8Rng) -> VehicleSpec {
    let length = uniform(rng, 4.2, 5.0);
    let width = uniform(rng, 1.7, 1.95);
    VehicleSpec::new(0.6 * length, length, width).expect("valid dimensions")
}

/// Negated target TTC from the group GEV, clipped to what the script can
/// realise; returns the target TTC.
fn target_ttc(rng: &mut ChaCha8Rng, spec: &SynthSpec, location: f64, initial: f64) -> f64 {
    let p = GevParams { mu: location, sigma: spec.sigma, xi: spec.xi };
    let u: f64 = rng.random_range(1e-9..1.0);
    (-p.quantile(u)).clamp(MIN_TARGET_TTC, initial - 0.3)
}

fn group_spec(index: usize) -> GroupSpec {
    let intersection = index % 2 == 1;
    GroupSpec {
        group_id: index + 1,
        kind: if intersection { GroupKind::Intersection } else { GroupKind::Segment },
        direction: if intersection { Direction::None } else { Direction::NB },
        lane_count: (2 + (index / 2) % 2) as f64,
        lane_width: 3.6 - 0.1 * (index % 3) as f64,
        driveway_density: 0.005 * (1 + index % 4) as f64,
        median: Median::Undivided,
    }
}

fn layout(spec: &SynthSpec) -> (Vec<BoundaryPolyline>, Vec<SiteRegion>) {
    let k = spec.groups.len();
    let len = spec.segment_length;
    let x_end = k as f64 * len + 10.0;
    let line = |id: &str, kind, y: f64| {
        BoundaryPolyline::new(id, kind, vec![Point::new(-10.0, y), Point::new(x_end, y)]).expect("valid boundary")
    };
    let boundaries =
        vec![line("curb-south", BoundaryKind::Curb, 0.0), line("curb-north", BoundaryKind::Curb, NORTH_CURB_Y)];
    let regions = (0..k)
        .map(|g| {
            let (x0, x1) = (g as f64 * len, (g + 1) as f64 * len);
            SiteRegion {
                spec: group_spec(g),
                polygon: vec![Point::new(x0, -20.0), Point::new(x1, -20.0), Point::new(x1, 35.0), Point::new(x0, 35.0)],
            }
        })
        .collect();
    (boundaries, regions)
}

struct Built {
    plans: Vec<Plan>,
    truth: Vec<TruthRow>,
}

fn build_scenario(
    spec: &SynthSpec,
    det: &DetectionConfig,
    dense: &[BoundaryPolyline],
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Built {
    let g = s / spec.scenarios_per_group;
    let group = spec.groups[g];
    let t0 = s as f64 * spec.scenario_duration;
    let x0 = g as f64 * spec.segment_length + 100.0;
    let id = |role: &str| format!("s{s:04}-{role}");
    let eps = det.epsilon;
    let horizon = det.horizon.horizon();
    let mut plans = Vec::new();
    let mut truth = Vec::new();

    if !spec.vv_scripts.is_empty() {
        let script = spec.vv_scripts[s % spec.vv_scripts.len()];
        let (lo, hi) = CLOSING;
        let closing = uniform(rng, lo, hi);
        let target =
            target_ttc(rng, spec, group.mu + group.speed_slope * (2.0 * (closing - lo) / (hi - lo) - 1.0), INITIAL_TTC);
        let (sa, sb) = (random_spec(rng), random_spec(rng));
        // `a` drifts south onto `b`. The facing corners come within the
        // threshold along x midway between forecast steps near INITIAL_TTC,
        // when they are already
        // within it along y. Straightening out at the target leaves a
        // lateral gap of at least `eps - LATERAL_MARGIN + lateral * target`.
        // Sine of the drift angle of `a`; steeper for the slow head-on pairs
        // so that the lateral speed stays comparable.
        let (va, sin_phi) = match script {
            VvScript::RearEnd => (uniform(rng, 9.0, 12.0), uniform(rng, 0.05, 0.08)),
            VvScript::HeadOn => (closing * uniform(rng, 0.6, 0.7), uniform(rng, 0.2, 0.3)),
        };
        let phi = sin_phi.asin();
        let (vb, heading_b) = match script {
            VvScript::RearEnd => (va * phi.cos() - closing, 0.0),
            VvScript::HeadOn => (closing - va * phi.cos(), PI),
        };
        let lateral = va * sin_phi;
        let yb = LANE_1 + uniform(rng, -0.1, 0.1);
        let mb = Motion { x: x0, y: yb, heading: heading_b, speed: vb, yaw_rate: 0.0 };
        let probe = Motion { x: 0.0, y: 0.0, heading: -phi, speed: va, yaw_rate: 0.0 };
        let ca = global_corners(&probe.at(0.0), &sa);
        let cb = global_corners(&mb.at(0.0), &sb);
        // The lowest corner of `a` meets the rear (rear-end) or front
        // (head-on) corner of `b` nearest to it; both are extreme in x and y.
        let a_corner =
            ca.points().iter().copied().fold(Point::new(0.0, f64::INFINITY), |m, p| if p.y < m.y { p } else { m });
        let b_high = cb.points().iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let b_near_x = cb.points().iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let t_first = mid_step(INITIAL_TTC, det.horizon.dt);
        let ma = Motion {
            x: b_near_x - a_corner.x - closing * t_first - eps,
            y: b_high - a_corner.y + lateral * t_first + eps - LATERAL_MARGIN,
            heading: -phi,
            speed: va,
            yaw_rate: 0.0,
        };
        let t_c = vv_contact((&ma, &sa), (&mb, &sb), eps, det.vv_rule, horizon);
        let mut a = Plan::straight(id("a"), sa, ma);
        let b = Plan::straight(id("b"), sb, mb);
        let contact = t_c.unwrap_or(INITIAL_TTC);
        a.recover(contact - target, -phi, 0.0);
        if let Some(t_c) = t_c {
            truth.push(TruthRow {
                scenario: s,
                kind: EventKind::VehicleVehicle,
                frame_t: t0,
                ego: a.id.clone(),
                other: b.id.clone(),
                t_c,
                target_ttc: target,
            });
        }
        plans.push(a);
        plans.push(b);
    }

    if !spec.vi_scripts.is_empty() {
        let script = spec.vi_scripts[s % spec.vi_scripts.len()];
        let sd = random_spec(rng);
        let (half_l, half_w) = (sd.length / 2.0, sd.width / 2.0);
        let x = x0 + 90.0;
        let (mut d, target) = match script {
            ViScript::Drift => {
                let target = target_ttc(rng, spec, group.mu + spec.vi_shift, INITIAL_TTC);
                let v = uniform(rng, 9.0, 12.0);
                let lateral = uniform(rng, 0.6, 1.0);
                let phi = (lateral / v).asin();
                let y = CONTACT_HEIGHT + lateral * INITIAL_TTC + half_l * phi.sin() + half_w * phi.cos();
                (Plan::straight(id("d"), sd, Motion { x, y, heading: -phi, speed: v, yaw_rate: 0.0 }), target)
            }
            ViScript::Turn => {
                let target = target_ttc(rng, spec, group.mu + spec.vi_shift, INITIAL_TTC_TURN);
                let v = uniform(rng, 7.0, 8.5);
                let w = uniform(rng, 0.105, 0.12);
                let a = w * INITIAL_TTC_TURN;
                let y = CONTACT_HEIGHT + v / w * (1.0 - a.cos()) + half_l * a.sin() + half_w * a.cos();
                (Plan::straight(id("d"), sd, Motion { x, y, heading: 0.0, speed: v, yaw_rate: -w }), target)
            }
        };
        d.start = place_vi(d.start, &sd, dense, eps, det);
        let hit = vi_contact(&d.start, &sd, dense, eps, horizon);
        let onset = hit.as_ref().map_or(INITIAL_TTC, |h| h.0) - target;
        d.recover(onset, d.start.heading + d.start.yaw_rate * onset, 0.0);
        if let Some((t_c, other)) = hit {
            truth.push(TruthRow {
                scenario: s,
                kind: EventKind::VehicleInfrastructure,
                frame_t: t0,
                ego: d.id.clone(),
                other,
                t_c,
                target_ttc: target,
            });
        }
        plans.push(d);
    }

    let v_bg = uniform(rng, 10.0, 13.0);
    for i in 0..spec.background_vehicles {
        let m = Motion {
            x: x0 + 200.0 + 30.0 * i as f64,
            y: OPPOSING_LANE,
            heading: std::f64::consts::PI,
            speed: v_bg,
            yaw_rate: 0.0,
        };
        plans.push(Plan::straight(id(&format!("g{}", i + 1)), random_spec(rng), m));
    }
    Built { plans, truth }
}

/// Generates the corpus for `seed`. Ground-truth contacts use the proximity
/// threshold, rule and horizon of `det`.
pub fn generate(spec: &SynthSpec, det: &DetectionConfig, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    det.validate()?;
    let (boundaries, regions) = layout(spec);
    let dense: Vec<BoundaryPolyline> = boundaries.iter().map(|b| b.densify(DENSIFY_SPACING)).collect();
    let noise = Normal::new(0.0, spec.position_noise).expect("valid noise level");
    let n_frames = spec.frames_per_scenario();
    let mut scenarios = Vec::with_capacity(spec.n_scenarios());
    let mut truth = Vec::new();
    for s in 0..spec.n_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let built = build_scenario(spec, det, &dense, s, &mut rng);
        let t0 = s as f64 * spec.scenario_duration;
        let mut draw = || if spec.position_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let vehicles = built
            .plans
            .iter()
            .map(|p| SynthVehicle {
                id: p.id.clone(),
                spec: p.spec,
                frames: p.simulate(n_frames, spec.sample_period, t0, &mut draw),
            })
            .collect();
        scenarios.push(Scenario { index: s, group: s / spec.scenarios_per_group + 1, t0, vehicles });
        truth.extend(built.truth);
    }
    Ok(Corpus { scenarios, boundaries, regions, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_arc_matches_integration() {
        let spec = VehicleSpec::default();
        let m = Motion { x: 1.0, y: 2.0, heading: 0.3, speed: 8.0, yaw_rate: 0.2 };
        let steer = (spec.wheelbase * m.yaw_rate / m.speed).atan();
        let mut s = VehicleState::new(m.x, m.y, m.heading, m.speed);
        for _ in 0..300 {
            s = rk4_step_single(&s, ControlInput::new(0.0, steer), spec, 0.01);
        }
        let e = m.at(3.0);
        assert!((s.x - e.x).abs() < 1e-9 && (s.y - e.y).abs() < 1e-9);
        assert!((s.heading - e.heading).abs() < 1e-12);
    }

    #[test]
    fn contact_search_brackets_a_step() {
        let t = first_contact(|t| t >= 1.23456789, 3.0).unwrap();
        assert!((t - 1.23456789).abs() < 1e-12);
        assert!(first_contact(|_| false, 3.0).is_none());
    }

    #[test]
    fn scripted_conflicts_start_near_the_initial_ttc() {
        for vv in [VvScript::RearEnd, VvScript::HeadOn] {
            let spec = SynthSpec {
                groups: vec![SynthGroup { mu: -1.0, speed_slope: 0.0 }],
                scenarios_per_group: 2,
                vv_scripts: vec![vv],
                background_vehicles: 0,
                position_noise: 0.0,
                ..SynthSpec::default()
            };
            let c = generate(&spec, &DetectionConfig::default(), 7).unwrap();
            assert_eq!(c.truth.len(), 4);
            for g in &c.truth {
                let initial = if g.scenario % 2 == 1 && g.kind == EventKind::VehicleInfrastructure {
                    INITIAL_TTC_TURN
                } else {
                    INITIAL_TTC
                };
                assert!((g.t_c - initial).abs() < 0.25, "{vv:?} {g:?}");
                assert!(g.target_ttc >= MIN_TARGET_TTC && g.target_ttc < g.t_c);
            }
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let spec = SynthSpec { scenarios_per_group: 2, ..SynthSpec::default() };
        let det = DetectionConfig::default();
        assert_eq!(generate(&spec, &det, 3).unwrap(), generate(&spec, &det, 3).unwrap());
        assert_ne!(generate(&spec, &det, 3).unwrap(), generate(&spec, &det, 4).unwrap());
    }
}
