//! Rigid-rectangle vehicle footprints.

use crate::dynamics::{VehicleSpec, VehicleState};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Corner order used throughout: front-left, front-right, rear-left,
/// rear-right.
pub const CORNER_NAMES: [&str; 4] = ["front-left", "front-right", "rear-left", "rear-right"];

/// Global corner positions of one footprint, in [`CORNER_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSet(pub [Point; 4]);

impl CornerSet {
    pub fn points(&self) -> &[Point; 4] {
        &self.0
    }

    pub fn centroid(&self) -> Point {
        let (sx, sy) = self.0.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / 4.0, sy / 4.0)
    }
}

/// Corners in the body frame (x forward, y left), centred on the reference
/// point.
pub fn body_corners(spec: &VehicleSpec) -> [Point; 4] {
    let hl = spec.length / 2.0;
    let hw = spec.width / 2.0;
    [Point::new(hl, hw), Point::new(hl, -hw), Point::new(-hl, hw), Point::new(-hl, -hw)]
}

/// Rotates the body corners by the heading and translates them to the
/// vehicle centre.
pub fn global_corners(state: &VehicleState, spec: &VehicleSpec) -> CornerSet {
    let (sin, cos) = state.heading.sin_cos();
    CornerSet(body_corners(spec).map(|b| Point::new(state.x + cos * b.x - sin * b.y, state.y + sin * b.x + cos * b.y)))
}
