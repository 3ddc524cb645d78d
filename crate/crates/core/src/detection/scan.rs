//! Batch detection over a scenario of time-aligned processed tracks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{detect, Agent, BoundaryPolyline, DetectionConfig, EventKind, Interaction, NearMissEvent};
use crate::dynamics::{ControlInput, VehicleState};
use crate::geometry::Point;
use crate::kinematics::{wrap_angle, ProcessedFrame, ProcessedTrack};
use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Yaw rate (rad/s) above which a vehicle counts as turning.
pub const TURNING_YAW_RATE: f64 = 0.1;

/// Tracks keyed by frame so that vehicles present at the same instant can be
/// paired.
#[derive(Debug, Clone)]
pub struct ScenarioIndex<'a> {
    tracks: Vec<&'a ProcessedTrack>,
    period: f64,
    /// Frame key to `(track, frame)` positions, tracks in agent-id order.
    frames: BTreeMap<i64, Vec<(usize, usize)>>,
}

impl<'a> ScenarioIndex<'a> {
    pub fn new(tracks: &'a [ProcessedTrack]) -> Result<Self> {
        let mut sorted: Vec<&ProcessedTrack> = tracks.iter().collect();
        sorted.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
        if sorted.windows(2).any(|w| w[0].agent_id == w[1].agent_id) {
            return Err(Error::InvalidConfig("duplicate agent ids in scenario".to_string()));
        }
        let period = sorted.first().map_or(0.1, |t| t.sample_period);
        if sorted.iter().any(|t| (t.sample_period - period).abs() > 1e-9) {
            return Err(Error::InvalidConfig("tracks have different sample periods".to_string()));
        }
        let mut frames: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, tr) in sorted.iter().enumerate() {
            for (fi, f) in tr.frames.iter().enumerate() {
                frames.entry(frame_key(f.t, period)).or_default().push((ti, fi));
            }
        }
        Ok(Self { tracks: sorted, period, frames })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn frame_keys(&self) -> impl Iterator<Item = i64> + '_ {
        self.frames.keys().copied()
    }

    pub fn key_of(&self, t: f64) -> i64 {
        frame_key(t, self.period)
    }

    /// Vehicles observed at a frame, in agent-id order.
    pub fn present(&self, key: i64) -> impl Iterator<Item = (&'a ProcessedTrack, usize)> + '_ {
        self.frames.get(&key).into_iter().flatten().map(|&(ti, fi)| (self.tracks[ti], fi))
    }

    pub fn lookup(&self, agent: &str, t: f64) -> Option<(&'a ProcessedTrack, usize)> {
        let key = self.key_of(t);
        self.present(key).find(|(tr, _)| tr.agent_id == agent)
    }

    pub fn tracks(&self) -> &[&'a ProcessedTrack] {
        &self.tracks
    }
}

fn frame_key(t: f64, period: f64) -> i64 {
    (t / period).round() as i64
}

fn agent_at<'a>(track: &'a ProcessedTrack, i: usize) -> Agent<'a> {
    let f = &track.frames[i];
    Agent {
        id: &track.agent_id,
        state: VehicleState::new(f.x, f.y, f.heading, f.speed),
        control: ControlInput::new(f.accel, f.steer),
        spec: track.spec,
    }
}

fn centre(f: &ProcessedFrame) -> Point {
    Point::new(f.x, f.y)
}

/// Runs detection for every vehicle pair and every vehicle–boundary
/// combination present at one frame. Pairs are unordered with the smaller
/// agent id as ego; boundary checks for one vehicle are combined into a
/// single run that reports the earliest hit.
pub fn scan_frame(
    index: &ScenarioIndex<'_>,
    key: i64,
    boundaries: &[BoundaryPolyline],
    cfg: &DetectionConfig,
) -> Result<Vec<NearMissEvent>> {
    let present: Vec<(&ProcessedTrack, usize)> = index.present(key).collect();
    let mut out = Vec::new();
    for (ia, &(ta, fa)) in present.iter().enumerate() {
        let a = agent_at(ta, fa);
        let frame_t = ta.frames[fa].t;
        let ctx_err = |step: usize, other: &str| Error::ScenarioDiverged {
            step,
            frame_t,
            ego: ta.agent_id.clone(),
            other: other.to_string(),
        };

        for &(tb, fb) in &present[ia + 1..] {
            if centre(&ta.frames[fa]).distance(&centre(&tb.frames[fb])) > cfg.vv_gate {
                continue;
            }
            let b = agent_at(tb, fb);
            let hit = detect(Interaction::Pair(a, b), &[], cfg).map_err(|e| match e {
                Error::IntegrationDiverged { step } => ctx_err(step, &tb.agent_id),
                e => e,
            })?;
            if let Some(d) = hit {
                out.push(NearMissEvent {
                    kind: EventKind::VehicleVehicle,
                    frame_t,
                    ego: ta.agent_id.clone(),
                    other: tb.agent_id.clone(),
                    t_c: d.t_c,
                    ttc: d.t_c,
                    corner: d.corner,
                    target: d.target,
                });
            }
        }

        let c = centre(&ta.frames[fa]);
        let near: Vec<&BoundaryPolyline> = boundaries.iter().filter(|b| b.any_within(&c, cfg.vi_gate)).collect();
        if near.is_empty() {
            continue;
        }
        let hit = detect(Interaction::Single(a), &near, cfg).map_err(|e| match e {
            Error::IntegrationDiverged { step } => ctx_err(step, "boundaries"),
            e => e,
        })?;
        if let Some(d) = hit {
            out.push(NearMissEvent {
                kind: EventKind::VehicleInfrastructure,
                frame_t,
                ego: ta.agent_id.clone(),
                other: d.boundary.unwrap_or_default(),
                t_c: d.t_c,
                ttc: d.t_c,
                corner: d.corner,
                target: d.target,
            });
        }
    }
    sort_events(&mut out);
    Ok(out)
}

/// Orders events by frame, ego, counterpart and kind.
pub fn sort_events(events: &mut [NearMissEvent]) {
    events.sort_by(|a, b| {
        a.frame_t
            .total_cmp(&b.frame_t)
            .then_with(|| a.ego.cmp(&b.ego))
            .then_with(|| a.other.cmp(&b.other))
            .then_with(|| a.kind.cmp(&b.kind))
    });
}

/// Detects near misses at every observed frame of the scenario.
pub fn scan_scenario(
    index: &ScenarioIndex<'_>,
    boundaries: &[BoundaryPolyline],
    cfg: &DetectionConfig,
) -> Result<Vec<NearMissEvent>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for key in index.frame_keys() {
        out.extend(scan_frame(index, key, boundaries, cfg)?);
    }
    Ok(out)
}

/// Interaction descriptors of an event at its initiating frame, used as
/// block covariates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventContext {
    /// Ego centre position.
    pub x: f64,
    pub y: f64,
    /// Relative velocity magnitude (V–V) or ego speed (V–I), m/s.
    pub rel_speed: f64,
    /// Ego minus other acceleration (V–V) or ego acceleration (V–I), m/s².
    pub rel_accel: f64,
    /// Centre distance (V–V) or distance to the nearest boundary vertex (V–I), m.
    pub rel_distance: f64,
    /// Ego jerk magnitude, m/s³.
    pub jerk: f64,
    /// Absolute heading difference to the other vehicle or the boundary, rad.
    pub heading_diff: f64,
    /// Absolute steering difference (V–V) or ego steering magnitude (V–I), rad.
    pub steer_diff: f64,
    /// Number of vehicles observed at the frame.
    pub volume: f64,
    /// 1 when the ego is turning, else 0.
    pub turning: f64,
}

fn jerk_at(track: &ProcessedTrack, i: usize) -> f64 {
    let f = &track.frames;
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
    ((f[b].accel - f[a].accel) / (f[b].t - f[a].t)).abs()
}

/// Recomputes the covariate context of an event from the tracks and
/// boundaries it was detected on.
pub fn describe_event(
    index: &ScenarioIndex<'_>,
    event: &NearMissEvent,
    boundaries: &[BoundaryPolyline],
) -> Result<EventContext> {
    let missing = |who: &str| Error::InvalidConfig(format!("event at t={} references unknown {who}", event.frame_t));
    let (te, fe) = index.lookup(&event.ego, event.frame_t).ok_or_else(|| missing(&event.ego))?;
    let e = &te.frames[fe];
    let volume = index.present(index.key_of(event.frame_t)).count() as f64;
    let mut ctx = EventContext {
        x: e.x,
        y: e.y,
        jerk: jerk_at(te, fe),
        volume,
        turning: if e.yaw_rate.abs() > TURNING_YAW_RATE { 1.0 } else { 0.0 },
        ..EventContext::default()
    };
    match event.kind {
        EventKind::VehicleVehicle => {
            let (to, fo) = index.lookup(&event.other, event.frame_t).ok_or_else(|| missing(&event.other))?;
            let o = &to.frames[fo];
            let (se, ce) = e.heading.sin_cos();
            let (so, co) = o.heading.sin_cos();
            ctx.rel_speed = (e.speed * ce - o.speed * co).hypot(e.speed * se - o.speed * so);
            ctx.rel_accel = e.accel - o.accel;
            ctx.rel_distance = centre(e).distance(&centre(o));
            ctx.heading_diff = wrap_angle(e.heading - o.heading).abs();
            ctx.steer_diff = (e.steer - o.steer).abs();
        }
        EventKind::VehicleInfrastructure => {
            let b = boundaries.iter().find(|b| b.id == event.other).ok_or_else(|| missing(&event.other))?;
            let (vi, dist) = b.nearest_vertex(&centre(e));
            // Direction of travel relative to an undirected edge, in [0, π/2].
            let rel = wrap_angle(e.heading - b.direction_at(vi)).abs();
            ctx.rel_speed = e.speed;
            ctx.rel_accel = e.accel;
            ctx.rel_distance = dist;
            ctx.heading_diff = rel.min(core::f64::consts::PI - rel);
            ctx.steer_diff = e.steer.abs();
        }
    }
    Ok(ctx)
}
