//! Block maxima samples from near-miss event streams.
//!
//! Events are labelled with the spatial group containing their initiating
//! position, then reduced per (interaction kind, group, window) to the
//! negated minimum TTC. Covariates of a block are those of the event that
//! attains the minimum.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::detection::{EventContext, EventKind, NearMissEvent};
use crate::geometry::Point;
use crate::stats;
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Groups with fewer blocks than this are flagged as small.
pub const DEFAULT_MIN_BLOCKS: usize = 30;
pub const DEFAULT_BLOCK_DURATION: f64 = 11.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GroupKind {
    Intersection,
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    NB,
    SB,
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Median {
    Divided,
    Undivided,
}

/// A spatial group and its geometry covariates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupSpec {
    /// 1-based group id.
    pub group_id: usize,
    pub kind: GroupKind,
    pub direction: Direction,
    pub lane_count: f64,
    /// Meters.
    pub lane_width: f64,
    /// Driveways per meter.
    pub driveway_density: f64,
    pub median: Median,
}

/// A group's polygonal region.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteRegion {
    pub spec: GroupSpec,
    pub polygon: Vec<Point>,
}

/// Non-overlapping regions, one per group.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMap {
    regions: Vec<SiteRegion>,
}

impl SiteMap {
    /// Validates polygons and rejects regions sharing interior area.
    /// Regions may touch along edges.
    pub fn new(regions: Vec<SiteRegion>) -> Result<Self> {
        for r in &regions {
            if r.spec.group_id == 0 {
                return Err(Error::InvalidConfig("group ids are 1-based".into()));
            }
            if r.polygon.len() < 3 || r.polygon.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "group {} needs a polygon of at least 3 finite vertices",
                    r.spec.group_id
                )));
            }
        }
        for (i, a) in regions.iter().enumerate() {
            for b in &regions[i + 1..] {
                if a.spec.group_id == b.spec.group_id {
                    return Err(Error::InvalidConfig(format!("duplicate group id {}", a.spec.group_id)));
                }
                if polygons_overlap(&a.polygon, &b.polygon) {
                    return Err(Error::OverlappingRegions { a: a.spec.group_id, b: b.spec.group_id });
                }
            }
        }
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[SiteRegion] {
        &self.regions
    }

    /// Group specs ordered by id.
    pub fn groups(&self) -> Vec<&GroupSpec> {
        let mut g: Vec<_> = self.regions.iter().map(|r| &r.spec).collect();
        g.sort_by_key(|s| s.group_id);
        g
    }

    pub fn group(&self, id: usize) -> Option<&GroupSpec> {
        self.regions.iter().map(|r| &r.spec).find(|s| s.group_id == id)
    }

    /// Id of the first region containing `p`.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        self.regions.iter().find(|r| point_in_polygon(p, &r.polygon)).map(|r| r.spec.group_id)
    }
}

/// Crossing-number test with half-open edges, so a point on an edge shared
/// by two regions is claimed by exactly one of them.
pub fn point_in_polygon(p: &Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn edges(poly: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

fn on_boundary(p: &Point, poly: &[Point]) -> bool {
    edges(poly).any(|(a, b)| {
        let scale = a.distance(&b).max(1.0);
        orient(a, b, *p).abs() <= 1e-12 * scale * scale
            && p.x >= a.x.min(b.x) - 1e-12
            && p.x <= a.x.max(b.x) + 1e-12
            && p.y >= a.y.min(b.y) - 1e-12
            && p.y <= a.y.max(b.y) + 1e-12
    })
}

fn strictly_inside(p: &Point, poly: &[Point]) -> bool {
    !on_boundary(p, poly) && point_in_polygon(p, poly)
}

fn polygons_overlap(a: &[Point], b: &[Point]) -> bool {
    for (p, q) in edges(a) {
        for (r, s) in edges(b) {
            let d1 = orient(p, q, r);
            let d2 = orient(p, q, s);
            let d3 = orient(r, s, p);
            let d4 = orient(r, s, q);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return true;
            }
        }
    }
    let probes = |poly: &[Point]| -> Vec<Point> {
        let mut v: Vec<Point> = poly.to_vec();
        v.extend(edges(poly).map(|(p, q)| Point { x: 0.5 * (p.x + q.x), y: 0.5 * (p.y + q.y) }));
        let n = poly.len() as f64;
        v.push(Point { x: poly.iter().map(|p| p.x).sum::<f64>() / n, y: poly.iter().map(|p| p.y).sum::<f64>() / n });
        v
    };
    probes(a).iter().any(|p| strictly_inside(p, b) && (point_in_polygon(p, a) || on_boundary(p, a)))
        || probes(b).iter().any(|p| strictly_inside(p, a) && (point_in_polygon(p, b) || on_boundary(p, b)))
}

/// An event with its covariate context and group label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedEvent {
    pub event: NearMissEvent,
    pub context: EventContext,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub events: Vec<GroupedEvent>,
    /// Events whose initiating position lies outside every region.
    pub dropped: usize,
}

/// Labels each event by the region containing the ego position at its
/// initiating frame.
pub fn assign_groups<I>(events: I, site: &SiteMap) -> Assignment
where
    I: IntoIterator<Item = (NearMissEvent, EventContext)>,
{
    let mut out = Assignment::default();
    for (event, context) in events {
        match site.locate(&Point { x: context.x, y: context.y }) {
            Some(group) => out.events.push(GroupedEvent { event, context, group }),
            None => out.dropped += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CovariateKind {
    Continuous,
    Indicator,
}

/// Whether a covariate is constant within a group or varies by block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CovariateLevel {
    Group,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CovariateDef {
    pub name: &'static str,
    pub kind: CovariateKind,
    pub level: CovariateLevel,
}

const fn cov(name: &'static str, kind: CovariateKind, level: CovariateLevel) -> CovariateDef {
    CovariateDef { name, kind, level }
}

/// Column layout of [`BlockRecord::covariates`].
pub const COVARIATES: [CovariateDef; 14] = {
    use CovariateKind::*;
    use CovariateLevel::*;
    [
        cov("lane_count", Continuous, Group),
        cov("lane_width", Continuous, Group),
        cov("driveway_density", Continuous, Group),
        cov("divided", Indicator, Group),
        cov("intersection", Indicator, Group),
        cov("rel_speed", Continuous, Block),
        cov("rel_accel", Continuous, Block),
        cov("rel_decel", Continuous, Block),
        cov("rel_distance", Continuous, Block),
        cov("jerk", Continuous, Block),
        cov("heading_diff", Continuous, Block),
        cov("steer_diff", Continuous, Block),
        cov("volume", Continuous, Block),
        cov("turning", Indicator, Block),
    ]
};

pub fn covariate_index(name: &str) -> Option<usize> {
    COVARIATES.iter().position(|c| c.name == name)
}

fn covariate_row(spec: Option<&GroupSpec>, ctx: &EventContext) -> Vec<f64> {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let (lanes, width, driveways, divided, intersection) = match spec {
        Some(s) => (
            s.lane_count,
            s.lane_width,
            s.driveway_density,
            ind(s.median == Median::Divided),
            ind(s.kind == GroupKind::Intersection),
        ),
        None => (0.0, 0.0, 0.0, 0.0, 0.0),
    };
    alloc::vec![
        lanes,
        width,
        driveways,
        divided,
        intersection,
        ctx.rel_speed,
        ctx.rel_accel.max(0.0),
        (-ctx.rel_accel).max(0.0),
        ctx.rel_distance,
        ctx.jerk,
        ctx.heading_diff,
        ctx.steer_diff,
        ctx.volume,
        ctx.turning,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BlockConfig {
    /// Window length in seconds; 0 makes every interaction (kind, ego,
    /// other) its own block.
    pub block_duration: f64,
    pub min_blocks_per_group: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { block_duration: DEFAULT_BLOCK_DURATION, min_blocks_per_group: DEFAULT_MIN_BLOCKS }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.block_duration >= 0.0 && self.block_duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "block_duration must be finite and non-negative, got {}",
                self.block_duration
            )));
        }
        Ok(())
    }
}

/// One block maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub kind: EventKind,
    /// 1-based group id.
    pub group: usize,
    /// Window number, or interaction ordinal within the group when blocks
    /// are per interaction.
    pub block: i64,
    /// Negated minimum TTC, seconds.
    pub z: f64,
    /// Number of events in the block.
    pub y: usize,
    /// Frame time of the extremal event.
    pub frame_t: f64,
    pub ego: String,
    pub other: String,
    /// Values in [`COVARIATES`] order.
    pub covariates: Vec<f64>,
}

fn event_order(a: &GroupedEvent, b: &GroupedEvent) -> Ordering {
    let (x, y) = (&a.event, &b.event);
    x.ttc
        .total_cmp(&y.ttc)
        .then(x.frame_t.total_cmp(&y.frame_t))
        .then_with(|| x.ego.cmp(&y.ego))
        .then_with(|| x.other.cmp(&y.other))
        .then(x.kind.code().cmp(y.kind.code()))
        .then(x.corner.cmp(&y.corner))
        .then(x.target.cmp(&y.target))
}

/// Reduces grouped events to block maxima, ordered by kind, group and
/// block. Events with non-positive TTC are skipped. Group covariates are
/// looked up in `site` when given, else left at zero.
pub fn extract_block_maxima(
    events: &[GroupedEvent],
    cfg: &BlockConfig,
    site: Option<&SiteMap>,
) -> Result<Vec<BlockRecord>> {
    cfg.validate()?;
    type Key<'a> = (&'static str, usize, i64);
    let mut windows: BTreeMap<Key<'_>, (usize, &GroupedEvent)> = BTreeMap::new();
    let mut interactions: BTreeMap<(&'static str, usize, &str, &str), Vec<&GroupedEvent>> = BTreeMap::new();

    for e in events.iter().filter(|e| e.event.ttc > 0.0) {
        let code = e.event.kind.code();
        if cfg.block_duration > 0.0 {
            let w = (e.event.frame_t / cfg.block_duration).floor() as i64;
            windows
                .entry((code, e.group, w))
                .and_modify(|(n, best)| {
                    *n += 1;
                    if event_order(e, best) == Ordering::Less {
                        *best = e;
                    }
                })
                .or_insert((1, e));
        } else {
            interactions.entry((code, e.group, &e.event.ego, &e.event.other)).or_default().push(e);
        }
    }
    if cfg.block_duration == 0.0 {
        // Ordinal by first appearance in time within (kind, group).
        let mut firsts: Vec<_> = interactions
            .into_iter()
            .map(|((code, g, _, _), evs)| {
                let first = evs.iter().map(|e| e.event.frame_t).fold(f64::INFINITY, f64::min);
                let best = *evs.iter().min_by(|a, b| event_order(a, b)).unwrap();
                (code, g, first, best.event.ego.as_str(), best.event.other.as_str(), evs.len(), best)
            })
            .collect();
        firsts.sort_by(|a, b| {
            a.0.cmp(b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)).then(a.3.cmp(b.3)).then(a.4.cmp(b.4))
        });
        let mut ordinal = 0i64;
        let mut prev: Option<(&str, usize)> = None;
        for (code, g, _, _, _, n, best) in firsts {
            if prev != Some((code, g)) {
                ordinal = 0;
                prev = Some((code, g));
            }
            windows.insert((code, g, ordinal), (n, best));
            ordinal += 1;
        }
    }

    Ok(windows
        .into_iter()
        .map(|((_, group, block), (y, e))| BlockRecord {
            kind: e.event.kind,
            group,
            block,
            z: -e.event.ttc,
            y,
            frame_t: e.event.frame_t,
            ego: e.event.ego.clone(),
            other: e.event.other.clone(),
            covariates: covariate_row(site.and_then(|s| s.group(group)), &e.context),
        })
        .collect())
}

/// Per-group block count summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: usize,
    pub blocks: usize,
    pub events: usize,
    /// Fewer than the configured minimum number of blocks.
    pub small: bool,
}

pub fn summarize_groups(records: &[BlockRecord], min_blocks: usize) -> Vec<GroupSummary> {
    let mut by: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = by.entry(r.group).or_default();
        e.0 += 1;
        e.1 += r.y;
    }
    by.into_iter()
        .map(|(group, (blocks, events))| GroupSummary { group, blocks, events, small: blocks < min_blocks })
        .collect()
}

/// Centre and scale of one covariate column.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColumnScale {
    pub name: String,
    pub kind: CovariateKind,
    pub mean: f64,
    pub sd: f64,
    /// Continuous column with zero variance: centred only, and unusable
    /// as a regressor.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StandardizationReport {
    pub columns: Vec<ColumnScale>,
}

impl StandardizationReport {
    /// Maps a standardized covariate row back to original units.
    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.columns).map(|(v, c)| v * c.sd + c.mean).collect()
    }

    /// Standardizes a row with the stored scales.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.columns).map(|(v, c)| (v - c.mean) / c.sd).collect()
    }

    pub fn excluded(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().filter(|c| c.excluded).map(|c| c.name.as_str())
    }
}

/// Centres continuous covariates and scales them to unit sample standard
/// deviation in place. Indicators keep mean 0 and sd 1 in the report.
pub fn standardize_covariates(records: &mut [BlockRecord]) -> Result<StandardizationReport> {
    if records.len() < 2 {
        return Err(Error::InvalidConfig(format!("standardization needs at least 2 records, got {}", records.len())));
    }
    let mut columns = Vec::with_capacity(COVARIATES.len());
    let mut col = Vec::with_capacity(records.len());
    for (j, def) in COVARIATES.iter().enumerate() {
        let mut scale = ColumnScale { name: def.name.into(), kind: def.kind, mean: 0.0, sd: 1.0, excluded: false };
        if def.kind == CovariateKind::Continuous {
            col.clear();
            col.extend(records.iter().map(|r| r.covariates[j]));
            scale.mean = stats::mean(&col);
            let sd = stats::variance(&col).sqrt();
            if sd > 0.0 && sd.is_finite() {
                scale.sd = sd;
            } else {
                scale.excluded = true;
            }
            for r in records.iter_mut() {
                r.covariates[j] = (r.covariates[j] - scale.mean) / scale.sd;
            }
        }
        columns.push(scale);
    }
    Ok(StandardizationReport { columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point> {
        vec![
            Point { x: x0, y: y0 },
            Point { x: x0 + s, y: y0 },
            Point { x: x0 + s, y: y0 + s },
            Point { x: x0, y: y0 + s },
        ]
    }

    fn spec(id: usize) -> GroupSpec {
        GroupSpec {
            group_id: id,
            kind: GroupKind::Segment,
            direction: Direction::NB,
            lane_count: 2.0,
            lane_width: 3.5,
            driveway_density: 0.01,
            median: Median::Divided,
        }
    }

    fn region(id: usize, x0: f64) -> SiteRegion {
        SiteRegion { spec: spec(id), polygon: square(x0, 0.0, 10.0) }
    }

    fn ev(ttc: f64, t: f64, group: usize) -> GroupedEvent {
        GroupedEvent {
            event: NearMissEvent {
                kind: EventKind::VehicleVehicle,
                frame_t: t,
                ego: "a".to_string(),
                other: "b".to_string(),
                t_c: ttc,
                ttc,
                corner: 0,
                target: 0,
            },
            context: EventContext { rel_speed: ttc * 10.0, rel_accel: -ttc, ..Default::default() },
            group,
        }
    }

    #[test]
    fn adjacent_regions_allowed_overlap_rejected() {
        assert!(SiteMap::new(vec![region(1, 0.0), region(2, 10.0)]).is_ok());
        assert!(matches!(
            SiteMap::new(vec![region(1, 0.0), region(2, 5.0)]),
            Err(Error::OverlappingRegions { a: 1, b: 2 })
        ));
        assert!(matches!(SiteMap::new(vec![region(1, 0.0), region(2, 0.0)]), Err(Error::OverlappingRegions { .. })));
        let inner = SiteRegion { spec: spec(2), polygon: square(2.0, 2.0, 1.0) };
        assert!(SiteMap::new(vec![region(1, 0.0), inner]).is_err());
    }

    #[test]
    fn shared_edge_claimed_once() {
        let site = SiteMap::new(vec![region(1, 0.0), region(2, 10.0)]).unwrap();
        assert_eq!(site.locate(&Point { x: 5.0, y: 5.0 }), Some(1));
        assert_eq!(site.locate(&Point { x: 15.0, y: 5.0 }), Some(2));
        let on_edge = Point { x: 10.0, y: 5.0 };
        let hits = site.regions().iter().filter(|r| point_in_polygon(&on_edge, &r.polygon)).count();
        assert_eq!(hits, 1);
    }

    #[test]
    fn assignment_drops_outside() {
        let site = SiteMap::new(vec![region(1, 0.0)]).unwrap();
        let inside = ev(1.0, 0.0, 0);
        let mut outside = ev(1.0, 0.0, 0);
        outside.context.x = 50.0;
        let mut inside_pos = inside.clone();
        inside_pos.context.x = 5.0;
        inside_pos.context.y = 5.0;
        let a = assign_groups([(inside_pos.event, inside_pos.context), (outside.event, outside.context)], &site);
        assert_eq!(a.events.len(), 1);
        assert_eq!(a.events[0].group, 1);
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn block_examples() {
        let cfg = BlockConfig::default();
        let r = extract_block_maxima(&[ev(1.2, 0.0, 1)], &cfg, None).unwrap();
        assert_eq!((r[0].z, r[0].y), (-1.2, 1));

        let evs = [ev(2.5, 0.0, 1), ev(0.4, 1.0, 1), ev(1.1, 2.0, 1)];
        let r = extract_block_maxima(&evs, &cfg, None).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].z, r[0].y), (-0.4, 3));
        // Covariates follow the extremal event; acceleration splits by sign.
        let s = covariate_index("rel_speed").unwrap();
        assert_eq!(r[0].covariates[s], 4.0);
        assert_eq!(r[0].covariates[covariate_index("rel_accel").unwrap()], 0.0);
        assert_eq!(r[0].covariates[covariate_index("rel_decel").unwrap()], 0.4);
    }

    #[test]
    fn windows_and_groups_split() {
        let cfg = BlockConfig { block_duration: 11.0, min_blocks_per_group: 2 };
        let evs = [ev(1.0, 0.0, 1), ev(2.0, 11.0, 1), ev(3.0, 0.5, 2), ev(0.0, 1.0, 2)];
        let r = extract_block_maxima(&evs, &cfg, None).unwrap();
        assert_eq!(
            r.iter().map(|b| (b.group, b.block, b.y)).collect::<Vec<_>>(),
            vec![(1, 0, 1), (1, 1, 1), (2, 0, 1)]
        );
        let s = summarize_groups(&r, cfg.min_blocks_per_group);
        assert!(!s[0].small && s[1].small);
    }

    #[test]
    fn per_interaction_blocks() {
        let cfg = BlockConfig { block_duration: 0.0, ..Default::default() };
        let mut e2 = ev(0.5, 30.0, 1);
        e2.event.other = "c".into();
        let evs = [ev(1.0, 0.0, 1), ev(0.7, 100.0, 1), e2];
        let r = extract_block_maxima(&evs, &cfg, None).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].other.as_str(), r[0].z, r[0].y, r[0].block), ("b", -0.7, 2, 0));
        assert_eq!((r[1].other.as_str(), r[1].block), ("c", 1));
    }

    #[test]
    fn group_covariates_from_site() {
        let site = SiteMap::new(vec![region(1, 0.0)]).unwrap();
        let r = extract_block_maxima(&[ev(1.0, 0.0, 1)], &BlockConfig::default(), Some(&site)).unwrap();
        assert_eq!(&r[0].covariates[..5], &[2.0, 3.5, 0.01, 1.0, 0.0]);
    }

    #[test]
    fn standardize_examples() {
        let mut recs: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .zip([0.0, 1.0, 1.0])
            .map(|(&v, ind)| {
                let mut r = extract_block_maxima(&[ev(1.0, 0.0, 1)], &BlockConfig::default(), None).unwrap().remove(0);
                r.covariates[covariate_index("rel_speed").unwrap()] = v;
                r.covariates[covariate_index("turning").unwrap()] = ind;
                r
            })
            .collect();
        let orig: Vec<_> = recs.iter().map(|r| r.covariates.clone()).collect();
        let rep = standardize_covariates(&mut recs).unwrap();
        let s = covariate_index("rel_speed").unwrap();
        let t = covariate_index("turning").unwrap();
        assert_eq!(recs.iter().map(|r| r.covariates[s]).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(recs.iter().map(|r| r.covariates[t]).collect::<Vec<_>>(), vec![0.0, 1.0, 1.0]);
        assert!(rep.excluded().any(|n| n == "lane_count"));
        for (r, o) in recs.iter().zip(&orig) {
            for (a, b) in rep.inverse(&r.covariates).iter().zip(o) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert!(standardize_covariates(&mut recs[..1]).is_err());
    }
}
