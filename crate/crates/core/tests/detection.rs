use corisk_core::detection::{
    detect, scan_scenario, Agent, BoundaryKind, BoundaryPolyline, DetectionConfig, EventKind, Interaction,
    ScenarioIndex,
};
use corisk_core::dynamics::{ControlInput, IntegrationConfig, VehicleSpec, VehicleState};
use corisk_core::geometry::Point;
use corisk_core::kinematics::{derive_dynamics, RawFrame, RawTrack};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agent(id: &str, s: VehicleState, c: ControlInput) -> Agent<'_> {
    Agent { id, state: s, control: c, spec: VehicleSpec::default() }
}

fn pair_tc(a: Agent<'_>, b: Agent<'_>, cfg: &DetectionConfig) -> Option<f64> {
    detect(Interaction::Pair(a, b), &[], cfg).unwrap().map(|d| d.t_c)
}

#[test]
fn coarse_grid_matches_fine_grid_on_closing_pairs() {
    let coarse = DetectionConfig::default();
    let fine = DetectionConfig { horizon: IntegrationConfig::new(0.01, 300).unwrap(), ..coarse };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    for _ in 0..20 {
        let v: f64 = rng.random_range(6.0..15.0);
        let closing: f64 = rng.random_range(0.5..5.0);
        let gap: f64 = rng.random_range(4.6..16.0);
        let lateral: f64 = rng.random_range(-0.25..0.25);
        // The proximity rule compares global-axis gaps, so the closed form
        // below holds for axis-aligned travel.
        let heading = std::f64::consts::FRAC_PI_2 * rng.random_range(-1..3) as f64;
        let (s, c) = heading.sin_cos();
        let leader = VehicleState::new(gap * c - lateral * s, gap * s + lateral * c, heading, v - closing);
        let follower = VehicleState::new(0.0, 0.0, heading, v);
        let none = ControlInput::new(0.0, 0.0);
        let a = pair_tc(agent("f", follower, none), agent("l", leader, none), &coarse);
        let b = pair_tc(agent("f", follower, none), agent("l", leader, none), &fine);
        assert_eq!(a.is_some(), b.is_some(), "gap {gap} closing {closing}");
        if let (Some(a), Some(b)) = (a, b) {
            hits += 1;
            assert!((a - b).abs() <= 0.1 + 1e-9, "{a} vs {b}");
            // Bumper gap minus tolerance over closing speed.
            let analytic = (gap - 4.5 - coarse.epsilon) / closing;
            assert!((b - analytic).abs() <= 0.01 + 1e-9, "{b} vs {analytic}");
        }
    }
    assert!(hits >= 10);
}

#[test]
fn head_on_scenario_one_event_per_frame() {
    let spec = VehicleSpec::default();
    let mk = |id: &str, x0: f64, v: f64| {
        let frames = (0..=15)
            .map(|i| {
                let t = i as f64 * 0.1;
                RawFrame { t, x: x0 + v * t, y: 0.0, vx: v, vy: 0.0 }
            })
            .collect();
        derive_dynamics(&RawTrack::new(id, frames).unwrap(), spec)
    };
    // Facing bumpers 20 m apart, closing at 10 m/s.
    let tracks = vec![mk("a", 0.0, 5.0), mk("b", 24.5, -5.0)];
    let index = ScenarioIndex::new(&tracks).unwrap();
    let events = scan_scenario(&index, &[], &DetectionConfig::default()).unwrap();
    assert_eq!(events.len(), 16);
    for (i, e) in events.iter().enumerate() {
        let t = i as f64 * 0.1;
        assert_eq!(e.kind, EventKind::VehicleVehicle);
        assert!((e.frame_t - t).abs() < 1e-9);
        assert_eq!((e.ego.as_str(), e.other.as_str()), ("a", "b"));
        assert!((e.t_c - (20.0 - 10.0 * t) / 10.0).abs() <= 0.1 + 1e-9, "{} at {t}", e.t_c);
    }
}

fn state() -> impl Strategy<Value = VehicleState> {
    (-12.0..12.0f64, -12.0..12.0f64, -3.2..3.2f64, 0.0..15.0f64).prop_map(|(x, y, h, v)| VehicleState::new(x, y, h, v))
}

fn control() -> impl Strategy<Value = ControlInput> {
    (-3.0..2.0f64, -0.3..0.3f64).prop_map(|(a, d)| ControlInput::new(a, d))
}

fn wall() -> BoundaryPolyline {
    BoundaryPolyline::new("w", BoundaryKind::Barrier, vec![Point::new(-20.0, 9.0), Point::new(20.0, 9.0)])
        .unwrap()
        .densify(0.25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pair_order_does_not_change_tc(a in state(), b in state(), ca in control(), cb in control()) {
        let cfg = DetectionConfig::default();
        let ab = detect(Interaction::Pair(agent("a", a, ca), agent("b", b, cb)), &[], &cfg).unwrap();
        let ba = detect(Interaction::Pair(agent("b", b, cb), agent("a", a, ca)), &[], &cfg).unwrap();
        prop_assert_eq!(ab.as_ref().map(|d| d.t_c), ba.as_ref().map(|d| d.t_c));
        if let Some(d) = ab {
            prop_assert!(d.t_c > 0.0 && d.t_c <= cfg.horizon.horizon() + 1e-12);
        }
    }

    #[test]
    fn larger_epsilon_detects_no_later(a in state(), b in state(), ca in control(), cb in control(), e1 in 0.05..0.6f64, extra in 0.0..0.6f64) {
        let c1 = DetectionConfig { epsilon: e1, ..Default::default() };
        let c2 = DetectionConfig { epsilon: e1 + extra, ..Default::default() };
        let w = wall();
        for bounds in [vec![], vec![&w]] {
            let run = |cfg: &DetectionConfig| {
                let pair = pair_tc(agent("a", a, ca), agent("b", b, cb), cfg);
                let single = detect(Interaction::Single(agent("a", a, ca)), &bounds, cfg).unwrap().map(|d| d.t_c);
                (pair, single)
            };
            let (p1, s1) = run(&c1);
            let (p2, s2) = run(&c2);
            for (x1, x2) in [(p1, p2), (s1, s2)] {
                if let Some(t1) = x1 {
                    prop_assert!(x2.is_some_and(|t2| t2 <= t1));
                }
            }
        }
    }

    #[test]
    fn translation_leaves_events_unchanged(a in state(), b in state(), ca in control(), cb in control(), dx in -64i32..64, dy in -64i32..64) {
        let cfg = DetectionConfig::default();
        let (dx, dy) = (dx as f64, dy as f64);
        let shift = |s: VehicleState| VehicleState::new(s.x + dx, s.y + dy, s.heading, s.speed);
        let w = wall();
        let moved = BoundaryPolyline::new(
            "w",
            BoundaryKind::Barrier,
            w.points().iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
        ).unwrap();
        let key = |d: Option<corisk_core::detection::Detection>| d.map(|d| (d.kind, d.step, d.vehicle, d.corner, d.target));
        let p0 = key(detect(Interaction::Pair(agent("a", a, ca), agent("b", b, cb)), &[], &cfg).unwrap());
        let p1 = key(detect(Interaction::Pair(agent("a", shift(a), ca), agent("b", shift(b), cb)), &[], &cfg).unwrap());
        prop_assert_eq!(p0, p1);
        let s0 = key(detect(Interaction::Single(agent("a", a, ca)), &[&w], &cfg).unwrap());
        let s1 = key(detect(Interaction::Single(agent("a", shift(a), ca)), &[&moved], &cfg).unwrap());
        prop_assert_eq!(s0, s1);
    }
}
