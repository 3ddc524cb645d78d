//! Forward-simulated near-miss detection.
//!
//! From an observed frame, each interaction is integrated with the joint
//! bicycle model under constant controls. After every step the rectangle
//! corners are checked for vehicle–vehicle corner proximity and for
//! vehicle–boundary vertex proximity; the earliest hit gives the 2D-TTC.

mod scan;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use scan::{describe_event, scan_frame, scan_scenario, sort_events, EventContext, ScenarioIndex, TURNING_YAW_RATE};

use crate::dynamics::{
    rk4_step, rk4_step_single, ControlInput, IntegrationConfig, JointState, VehicleSpec, VehicleState,
};
use crate::geometry::{global_corners, CornerSet, Point};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BoundaryKind {
    LaneEdge,
    Curb,
    Median,
    Barrier,
}

/// Static road boundary sampled as a polyline of vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolyline {
    pub id: String,
    pub kind: BoundaryKind,
    points: Vec<Point>,
    /// Largest distance between consecutive vertices.
    max_step: f64,
}

/// Default maximum vertex spacing after densification, meters.
pub const DENSIFY_SPACING: f64 = 0.25;

impl BoundaryPolyline {
    pub fn new(id: impl Into<String>, kind: BoundaryKind, points: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if points.len() < 2 {
            return Err(Error::InvalidConfig(format!("boundary `{id}` needs at least 2 points")));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidConfig(format!("boundary `{id}` has non-finite coordinates")));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("boundary `{id}` repeats a point")));
        }
        Ok(Self::from_parts(id, kind, points))
    }

    fn from_parts(id: String, kind: BoundaryKind, points: Vec<Point>) -> Self {
        let max_step = points.windows(2).map(|w| w[0].distance(&w[1])).fold(0.0, f64::max);
        Self { id, kind, points, max_step }
    }

    /// Vertices after `i` that are certainly farther than `excess` beyond
    /// the distance at `i`, given the bound on consecutive spacing.
    fn skip(&self, excess: f64) -> usize {
        let slack = 1e-9 * (1.0 + excess.abs());
        ((excess - slack) / self.max_step).floor().max(0.0) as usize
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Inserts evenly spaced vertices so that no two consecutive vertices
    /// are more than `max_spacing` apart. Original vertices are kept.
    pub fn densify(&self, max_spacing: f64) -> Self {
        let mut out = Vec::with_capacity(self.points.len());
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces = (a.distance(&b) / max_spacing).ceil().max(1.0) as usize;
            for i in 0..pieces {
                let f = i as f64 / pieces as f64;
                out.push(Point::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)));
            }
        }
        out.push(*self.points.last().unwrap());
        Self::from_parts(self.id.clone(), self.kind, out)
    }

    /// Smallest distance from `p` to any vertex, with the vertex index.
    pub fn nearest_vertex(&self, p: &Point) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        let mut i = 0;
        while i < self.points.len() {
            let d = self.points[i].distance(p);
            if d < best.1 {
                best = (i, d);
            }
            i += 1 + self.skip(d - best.1);
        }
        best
    }

    /// Whether any vertex lies within `radius` of `p`.
    pub fn any_within(&self, p: &Point, radius: f64) -> bool {
        let mut i = 0;
        while i < self.points.len() {
            let d = self.points[i].distance(p);
            if d <= radius {
                return true;
            }
            i += 1 + self.skip(d - radius);
        }
        false
    }

    /// Indices of the vertices within `radius` of `p`, in order.
    pub fn vertices_within(&self, p: &Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.points.len() {
            let d = self.points[i].distance(p);
            if d <= radius {
                out.push(i);
            }
            i += 1 + self.skip(d - radius);
        }
        out
    }

    /// Direction of the polyline at vertex `i`, radians.
    pub fn direction_at(&self, i: usize) -> f64 {
        let n = self.points.len();
        let (a, b) =
            if i + 1 < n { (self.points[i], self.points[i + 1]) } else { (self.points[i - 1], self.points[i]) };
        (b.y - a.y).atan2(b.x - a.x)
    }
}

/// How the two coordinate gaps combine in the vehicle–vehicle test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VvRule {
    /// Both `|Δx| ≤ ε` and `|Δy| ≤ ε`.
    #[default]
    And,
    /// Either gap within `ε`.
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DetectionConfig {
    /// Proximity threshold, meters.
    pub epsilon: f64,
    pub horizon: IntegrationConfig,
    pub vv_rule: VvRule,
    /// Vehicle pairs farther apart than this (centre distance, m) are skipped.
    pub vv_gate: f64,
    /// Boundaries with no vertex within this distance of the centre are skipped.
    pub vi_gate: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.30,
            horizon: IntegrationConfig::default(),
            vv_rule: VvRule::And,
            vv_gate: 50.0,
            vi_gate: 15.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        IntegrationConfig::new(self.horizon.dt, self.horizon.steps)?;
        if !(self.vv_gate > 0.0 && self.vi_gate > 0.0) {
            return Err(Error::InvalidConfig("gating radii must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    #[cfg_attr(feature = "serde", serde(rename = "VV"))]
    VehicleVehicle,
    #[cfg_attr(feature = "serde", serde(rename = "VI"))]
    VehicleInfrastructure,
}

impl EventKind {
    pub fn code(&self) -> &'static str {
        match self {
            EventKind::VehicleVehicle => "VV",
            EventKind::VehicleInfrastructure => "VI",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "VV" => Some(EventKind::VehicleVehicle),
            "VI" => Some(EventKind::VehicleInfrastructure),
            _ => None,
        }
    }
}

/// One detected near miss.
#[derive(Debug, Clone, PartialEq)]
pub struct NearMissEvent {
    pub kind: EventKind,
    /// Timestamp of the frame the prediction started from.
    pub frame_t: f64,
    pub ego: String,
    /// Other vehicle id (V–V) or boundary id (V–I).
    pub other: String,
    /// Time of the first proximity hit within the horizon.
    pub t_c: f64,
    /// The 2D-TTC; equal to `t_c`.
    pub ttc: f64,
    /// Ego corner index (0-based, [`crate::geometry::CORNER_NAMES`] order).
    pub corner: usize,
    /// Other vehicle's corner (V–V) or boundary vertex index (V–I), 0-based.
    pub target: usize,
}

/// A vehicle entering a detection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent<'a> {
    pub id: &'a str,
    pub state: VehicleState,
    pub control: ControlInput,
    pub spec: VehicleSpec,
}

#[derive(Debug, Clone, Copy)]
pub enum Interaction<'a> {
    Pair(Agent<'a>, Agent<'a>),
    Single(Agent<'a>),
}

/// Result of one forward simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub kind: EventKind,
    /// Simulation step (1-based) at which the hit occurred.
    pub step: usize,
    pub t_c: f64,
    /// Index of the vehicle within the interaction (0 = first agent).
    pub vehicle: usize,
    pub corner: usize,
    pub target: usize,
    /// Boundary id for V–I hits.
    pub boundary: Option<String>,
}

/// Scans the 16 corner pairs in row-major order and returns the first pair
/// meeting the proximity rule.
pub fn check_vv(a: &CornerSet, b: &CornerSet, epsilon: f64, rule: VvRule) -> Option<(usize, usize)> {
    for (j, pa) in a.0.iter().enumerate() {
        for (k, pb) in b.0.iter().enumerate() {
            let near_x = (pa.x - pb.x).abs() <= epsilon;
            let near_y = (pa.y - pb.y).abs() <= epsilon;
            let hit = match rule {
                VvRule::And => near_x && near_y,
                VvRule::Or => near_x || near_y,
            };
            if hit {
                return Some((j, k));
            }
        }
    }
    None
}

/// First `(corner, vertex)` pair closer than `epsilon`, corners outer.
pub fn check_vi(corners: &CornerSet, boundary: &BoundaryPolyline, epsilon: f64) -> Option<(usize, usize)> {
    check_vi_points(corners, &boundary.points, epsilon)
}

fn check_vi_points(corners: &CornerSet, vertices: &[Point], epsilon: f64) -> Option<(usize, usize)> {
    for (j, c) in corners.0.iter().enumerate() {
        for (l, v) in vertices.iter().enumerate() {
            if c.distance(v) <= epsilon {
                return Some((j, l));
            }
        }
    }
    None
}

/// Vertices of a boundary that a vehicle could reach within the horizon,
/// with their original indices and bounding box. Everything outside cannot
/// produce a hit, so scanning the subset gives the same first match as
/// scanning all vertices.
struct Reachable<'b> {
    boundary: &'b BoundaryPolyline,
    indices: Vec<usize>,
    points: Vec<Point>,
    /// Min x, min y, max x, max y.
    bbox: [f64; 4],
}

impl Reachable<'_> {
    /// Smallest vertex index within `epsilon` of `c`.
    fn first_near(&self, c: &Point, epsilon: f64) -> Option<usize> {
        let [x0, y0, x1, y1] = self.bbox;
        if c.x < x0 - epsilon || c.x > x1 + epsilon || c.y < y0 - epsilon || c.y > y1 + epsilon {
            return None;
        }
        self.points.iter().position(|v| c.distance(v) <= epsilon).map(|l| self.indices[l])
    }
}

fn reach_radius(agent: &Agent<'_>, horizon: &IntegrationConfig, epsilon: f64) -> f64 {
    let t = horizon.horizon();
    let vmax = agent.state.speed + agent.control.accel.max(0.0) * t;
    let half_diag = agent.spec.length.hypot(agent.spec.width) / 2.0;
    vmax * t + half_diag + epsilon + 1.0
}

fn reachable<'b>(boundary: &'b BoundaryPolyline, centre: Point, radius: f64) -> Reachable<'b> {
    let indices = boundary.vertices_within(&centre, radius);
    let points: Vec<Point> = indices.iter().map(|&i| boundary.points[i]).collect();
    let bbox = points.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, p| {
        [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)]
    });
    Reachable { boundary, indices, points, bbox }
}

fn first_vi_hit(corners: &CornerSet, sets: &[Reachable<'_>], epsilon: f64) -> Option<(usize, usize, usize)> {
    sets.iter()
        .enumerate()
        .find_map(|(b, r)| corners.0.iter().enumerate().find_map(|(j, c)| r.first_near(c, epsilon).map(|l| (b, j, l))))
}

/// Integrates the interaction forward and returns the earliest proximity
/// hit. At a given step vehicle–vehicle hits take precedence over
/// vehicle–boundary hits, and the first agent's corners are checked against
/// boundaries before the second's.
pub fn detect(
    interaction: Interaction<'_>,
    boundaries: &[&BoundaryPolyline],
    cfg: &DetectionConfig,
) -> Result<Option<Detection>> {
    let dt = cfg.horizon.dt;
    let agents: Vec<Agent<'_>> = match interaction {
        Interaction::Pair(a, b) => alloc::vec![a, b],
        Interaction::Single(a) => alloc::vec![a],
    };
    let reach: Vec<Vec<Reachable<'_>>> = agents
        .iter()
        .map(|ag| {
            let centre = Point::new(ag.state.x, ag.state.y);
            let radius = reach_radius(ag, &cfg.horizon, cfg.epsilon);
            boundaries.iter().map(|b| reachable(b, centre, radius)).filter(|r| !r.points.is_empty()).collect()
        })
        .collect();

    let vi_hit = |step: usize, corners: &[CornerSet]| -> Option<Detection> {
        corners.iter().enumerate().find_map(|(vehicle, c)| {
            first_vi_hit(c, &reach[vehicle], cfg.epsilon).map(|(b, j, l)| Detection {
                kind: EventKind::VehicleInfrastructure,
                step,
                t_c: step as f64 * dt,
                vehicle,
                corner: j,
                target: l,
                boundary: Some(reach[vehicle][b].boundary.id.clone()),
            })
        })
    };

    match interaction {
        Interaction::Pair(a, b) => {
            let controls = [a.control, b.control];
            let specs = [a.spec, b.spec];
            let mut s = JointState::new(a.state, b.state);
            for n in 0..cfg.horizon.steps {
                s = rk4_step(&s, controls, specs, dt);
                if !s.is_finite() {
                    return Err(Error::IntegrationDiverged { step: n + 1 });
                }
                let ca = global_corners(&s.a, &a.spec);
                let cb = global_corners(&s.b, &b.spec);
                if let Some((j, k)) = check_vv(&ca, &cb, cfg.epsilon, cfg.vv_rule) {
                    return Ok(Some(Detection {
                        kind: EventKind::VehicleVehicle,
                        step: n + 1,
                        t_c: (n + 1) as f64 * dt,
                        vehicle: 0,
                        corner: j,
                        target: k,
                        boundary: None,
                    }));
                }
                if let Some(d) = vi_hit(n + 1, &[ca, cb]) {
                    return Ok(Some(d));
                }
            }
        }
        Interaction::Single(a) => {
            if reach[0].is_empty() {
                return Ok(None);
            }
            let mut s = a.state;
            for n in 0..cfg.horizon.steps {
                s = rk4_step_single(&s, a.control, a.spec, dt);
                if !s.is_finite() {
                    return Err(Error::IntegrationDiverged { step: n + 1 });
                }
                if let Some(d) = vi_hit(n + 1, &[global_corners(&s, &a.spec)]) {
                    return Ok(Some(d));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn spec() -> VehicleSpec {
        VehicleSpec::new(2.7, 4.0, 2.0).unwrap()
    }

    fn agent(id: &str, x: f64, y: f64, heading: f64, speed: f64) -> Agent<'_> {
        Agent { id, state: VehicleState::new(x, y, heading, speed), control: ControlInput::default(), spec: spec() }
    }

    fn corners_at(x: f64, y: f64) -> CornerSet {
        global_corners(&VehicleState::new(x, y, 0.0, 0.0), &spec())
    }

    #[test]
    fn vv_examples() {
        let c = corners_at(0.0, 0.0);
        assert_eq!(check_vv(&c, &c, 0.3, VvRule::And), Some((0, 0)));
        assert_eq!(check_vv(&c, &corners_at(20.0, 0.0), 0.3, VvRule::And), None);
        // Every corner of the second rectangle sits (0.2, 0.4) off its twin.
        let shifted = corners_at(0.2, 0.4);
        assert_eq!(check_vv(&c, &shifted, 0.3, VvRule::And), None);
        assert!(check_vv(&c, &shifted, 0.3, VvRule::Or).is_some());
    }

    #[test]
    fn vi_examples() {
        let c = corners_at(0.0, 0.0);
        let on =
            BoundaryPolyline::new("b", BoundaryKind::Curb, vec![Point::new(9.0, 9.0), Point::new(2.0, 1.0)]).unwrap();
        assert_eq!(check_vi(&c, &on, 0.3), Some((0, 1)));
        let far = BoundaryPolyline::new("b", BoundaryKind::Curb, vec![Point::new(10.0, 10.0), Point::new(12.0, 10.0)])
            .unwrap();
        assert_eq!(check_vi(&c, &far, 0.3), None);
        let at = |d: f64| {
            BoundaryPolyline::new("b", BoundaryKind::Curb, vec![Point::new(2.0 + d, 1.0), Point::new(40.0, 1.0)])
                .unwrap()
        };
        assert!(check_vi(&c, &at(0.299), 0.3).is_some());
        assert!(check_vi(&c, &at(0.301), 0.3).is_none());
    }

    proptest::proptest! {
        #[test]
        fn skipping_searches_match_brute_force(
            pts in proptest::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..40),
            spacing in 0.1..3.0f64,
            px in -25.0..25.0f64,
            py in -25.0..25.0f64,
            radius in 0.0..15.0f64,
        ) {
            let b = BoundaryPolyline::new("b", BoundaryKind::Curb, pts.iter().map(|&(x, y)| Point::new(x, y)).collect());
            proptest::prop_assume!(b.is_ok());
            let b = b.unwrap().densify(spacing);
            let p = Point::new(px, py);
            let brute = b.points.iter().enumerate().map(|(i, v)| (i, v.distance(&p)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            proptest::prop_assert_eq!(b.nearest_vertex(&p), brute);
            let within: Vec<usize> = (0..b.points.len()).filter(|&i| b.points[i].distance(&p) <= radius).collect();
            proptest::prop_assert_eq!(b.any_within(&p, radius), !within.is_empty());
            proptest::prop_assert_eq!(b.vertices_within(&p, radius), within);
        }

        #[test]
        fn reachable_subset_matches_linear_scan(
            pts in proptest::collection::vec((-6.0..6.0f64, -6.0..6.0f64), 2..60),
            cx in -5.0..5.0f64,
            cy in -5.0..5.0f64,
            eps in 0.05..1.5f64,
        ) {
            let b = BoundaryPolyline::new("b", BoundaryKind::Curb, pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap();
            let r = reachable(&b, Point::new(0.0, 0.0), 100.0);
            let c = corners_at(cx, cy);
            let got = first_vi_hit(&c, &[r], eps).map(|(_, j, l)| (j, l));
            proptest::prop_assert_eq!(got, check_vi(&c, &b, eps));
        }
    }

    #[test]
    fn boundary_validation_and_densify() {
        assert!(BoundaryPolyline::new("b", BoundaryKind::Median, vec![Point::new(0.0, 0.0)]).is_err());
        assert!(BoundaryPolyline::new("b", BoundaryKind::Median, vec![Point::new(0.0, 0.0); 2]).is_err());
        let b =
            BoundaryPolyline::new("b", BoundaryKind::Median, vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        let d = b.densify(0.25);
        assert_eq!(d.points().len(), 5);
        assert!(d.points().windows(2).all(|w| w[0].distance(&w[1]) <= 0.25 + 1e-12));
    }

    #[test]
    fn head_on_closure() {
        // Facing bumpers 20 m apart, both at 5 m/s.
        let a = agent("a", 0.0, 0.0, 0.0, 5.0);
        let b = agent("b", 24.0, 0.0, PI, 5.0);
        let d = detect(Interaction::Pair(a, b), &[], &DetectionConfig::default()).unwrap().unwrap();
        assert_eq!(d.kind, EventKind::VehicleVehicle);
        assert!((d.t_c - 2.0).abs() <= 0.1 + 1e-9, "t_c = {}", d.t_c);
    }

    #[test]
    fn parallel_vehicles_never_meet() {
        let a = agent("a", 0.0, 0.0, 0.0, 10.0);
        let b = agent("b", 0.0, 3.5, 0.0, 10.0);
        assert_eq!(detect(Interaction::Pair(a, b), &[], &DetectionConfig::default()).unwrap(), None);
    }

    #[test]
    fn boundary_ahead() {
        // Front bumper at x = 2; wall of vertices 10 m ahead.
        let wall =
            BoundaryPolyline::new("w", BoundaryKind::Barrier, vec![Point::new(12.0, -5.0), Point::new(12.0, 5.0)])
                .unwrap()
                .densify(DENSIFY_SPACING);
        let a = agent("a", 0.0, 0.0, 0.0, 5.0);
        let d = detect(Interaction::Single(a), &[&wall], &DetectionConfig::default()).unwrap().unwrap();
        assert_eq!(d.kind, EventKind::VehicleInfrastructure);
        assert_eq!(d.boundary.as_deref(), Some("w"));
        assert!((d.t_c - 2.0).abs() <= 0.1 + 1e-9, "t_c = {}", d.t_c);
    }

    #[test]
    fn divergence_is_reported() {
        let mut a = agent("a", 0.0, 0.0, 0.0, 1.0);
        a.control.accel = f64::INFINITY;
        let wall =
            BoundaryPolyline::new("w", BoundaryKind::Barrier, vec![Point::new(1e300, 0.0), Point::new(1e300, 1.0)])
                .unwrap();
        let r = detect(Interaction::Single(a), &[&wall], &DetectionConfig::default());
        assert!(matches!(r, Err(Error::IntegrationDiverged { step: 1 })));
    }
}
