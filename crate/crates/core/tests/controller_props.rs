use dpdrive::controller::{
    abs, accel, agent_state, control_step, flanks, get_offset, steer_unclamped, tcs, AgentState, AgentStateKind,
    ControllerState,
};
use dpdrive::sensors::{Indicators, OpponentReading};
use dpdrive::{ControllerParams, Role, VehicleState};
use proptest::prelude::*;

fn me(speed: f64, lateral: f64, heading: f64) -> VehicleState {
    VehicleState {
        s: 0.0,
        distance: 0.0,
        lateral,
        yaw_rel: 0.0,
        heading,
        speed,
        driven_wheel_speed: speed,
        wheel_avg_speed: speed,
        damage: 0,
        role: Role::Host,
    }
}

fn reading_strategy() -> impl Strategy<Value = OpponentReading<f64>> {
    (-90.0..90.0f64, -7.0..7.0f64, -4.0..4.0f64, 0.0..30.0f64, any::<bool>()).prop_map(|(d, lat, yaw, speed, same)| {
        OpponentReading {
            id: 0,
            d_exact: d,
            lane_index: 2,
            to_middle: lat,
            yaw,
            speed,
            same_lane: same,
        }
    })
}

fn readings_strategy() -> impl Strategy<Value = Vec<OpponentReading<f64>>> {
    prop::collection::vec(reading_strategy(), 0..6).prop_map(|mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.id = i + 1;
        }
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn commands_stay_in_range(
        angle in -4.0..4.0f64,
        to_middle in -20.0..20.0f64,
        ds in prop::array::uniform3(0.0..60.0f64),
        speed in 0.0..40.0f64,
        driven_extra in -5.0..20.0f64,
        wheel_deficit in -5.0..20.0f64,
        heading in -10.0..10.0f64,
        offset in -4.0..4.0f64,
        cap in 0.0..30.0f64,
        readings in readings_strategy(),
    ) {
        let mut v = me(speed, to_middle, heading);
        v.driven_wheel_speed = (speed + driven_extra).max(0.0);
        v.wheel_avg_speed = (speed - wheel_deficit).max(0.0);
        let mut cs = ControllerState::new(ControllerParams::default(), cap);
        cs.offset = offset;
        let ind = Indicators { angle, to_middle, d1: ds[0], d2: ds[1], d3: ds[2] };
        for _ in 0..3 {
            let c = control_step(&ind, &readings, &v, &mut cs).command;
            prop_assert!((-1.0..=1.0).contains(&c.steer));
            prop_assert!((0.0..=1.0).contains(&c.accel));
            prop_assert!((0.0..=1.0).contains(&c.brake));
            prop_assert!(cs.offset.abs() <= 4.0);
        }
    }

    #[test]
    fn tcs_nonincreasing_in_slip(a in 0.0..1.0f64, s1 in 2.0..30.0f64, s2 in 2.0..30.0f64) {
        let p = ControllerParams::default();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(tcs(a, hi, &p) <= tcs(a, lo, &p));
    }

    #[test]
    fn abs_nonincreasing_in_slip(b in 0.0..1.0f64, v in 3.01..40.0f64, s1 in 2.0..30.0f64, s2 in 2.0..30.0f64) {
        let p = ControllerParams::default();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(abs(b, v, v - hi, &p) <= abs(b, v, v - lo, &p));
    }

    #[test]
    fn accel_nonincreasing_in_wheel_spin(v in 0.0..30.0f64, allowed in 0.0..30.0f64, x in 2.0..20.0f64, y in 2.0..20.0f64) {
        let p = ControllerParams::default();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(accel(v, allowed, v + hi, &p) <= accel(v, allowed, v + lo, &p));
    }

    #[test]
    fn offset_contracts_toward_zero_when_clear(start in -4.0..4.0f64, step in 0.01..1.0f64) {
        let p = ControllerParams {
            offset_step: step,
            ..Default::default()
        };
        let mut cs = ControllerState::new(p, 20.0);
        cs.offset = start;
        let before = cs.offset.abs();
        let after = get_offset(&mut cs, &AgentState::clear(), 60.0, 60.0, 60.0).abs();
        prop_assert!(after <= (before - step).max(0.0) + 1e-12);
    }

    #[test]
    fn offset_contracts_toward_constant_lane_target(start in -4.0..4.0f64, left_leader in any::<bool>()) {
        // a leader fixed on one side drives the offset to the opposite clamp
        let p = ControllerParams::default();
        let target = if left_leader { -4.0 } else { 4.0 };
        let leader = OpponentReading {
            id: 1,
            d_exact: 30.0,
            lane_index: if left_leader { 1 } else { 3 },
            to_middle: -target,
            yaw: 0.0,
            speed: 10.0,
            same_lane: false,
        };
        let st = agent_state(&[leader], &me(10.0, 0.0, 0.0), &p);
        prop_assert_eq!(st.value, AgentStateKind::Leader);
        let mut cs = ControllerState::new(p, 20.0);
        cs.offset = start;
        for _ in 0..200 {
            let before = (cs.offset - target).abs();
            let after = (get_offset(&mut cs, &st, 60.0, 60.0, 60.0) - target).abs();
            prop_assert!(after <= (before - p.offset_step).max(0.0) + 1e-12);
        }
        prop_assert!((cs.offset - target).abs() < 1e-9);
    }

    #[test]
    fn steer_middle_branch_slope(angle in -1.0..1.0f64, offset in -4.0..4.0f64, err in -3.9..3.9f64) {
        let p = ControllerParams::default();
        let h = 1e-4;
        let x = offset + err;
        let slope = (steer_unclamped(angle, x + h, offset, &p) - steer_unclamped(angle, x - h, offset, &p)) / (2.0 * h);
        let expected = -2.0 / (13.0 * 0.366);
        prop_assert!((slope - expected).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn steer_outer_branches_affine(angle in -1.0..1.0f64, offset in -4.0..4.0f64, err in 4.1..12.0f64, left in any::<bool>()) {
        let p = ControllerParams::default();
        let sign = if left { 1.0 } else { -1.0 };
        let x = offset + sign * err;
        let h = 1e-4;
        let slope = (steer_unclamped(angle, x + h, offset, &p) - steer_unclamped(angle, x - h, offset, &p)) / (2.0 * h);
        // same slope as the middle branch: the excess beyond a lane width
        // replaces the full error in the second correction
        prop_assert!((slope + 2.0 / (13.0 * 0.366)).abs() < 1e-6);
        // and the outer branch sits one lane width of correction closer to zero
        let mid_line = (angle - 2.0 * (x - offset) / 13.0) / 0.366;
        let jump = steer_unclamped(angle, x, offset, &p) - mid_line;
        prop_assert!((jump - sign * 4.0 / 13.0 / 0.366).abs() < 1e-9);
    }

    #[test]
    fn classification_is_deterministic_and_total(readings in readings_strategy(), speed in 0.0..30.0f64) {
        let p = ControllerParams::default();
        let v = me(speed, 0.0, 0.0);
        let a = agent_state(&readings, &v, &p);
        let b = agent_state(&readings, &v, &p);
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.focus.is_none(), a.value == AgentStateKind::Clear);
        // independent of reading order
        let mut rev = readings.clone();
        rev.reverse();
        let c = agent_state(&rev, &v, &p);
        prop_assert_eq!(c.value, a.value);
        prop_assert_eq!(c.focus.map(|f| f.d_exact.abs()), a.focus.map(|f| f.d_exact.abs()));
    }

    #[test]
    fn flanks_only_see_adjacent_bands(readings in readings_strategy(), lat in -4.0..4.0f64) {
        let p = ControllerParams::default();
        let f = flanks(&readings, &me(15.0, lat, 0.0), &p);
        let near_left = readings.iter().any(|r| {
            let side = r.to_middle - lat;
            side > 1.0 && side < 6.0 && r.d_exact.abs() < 60.0
        });
        let near_right = readings.iter().any(|r| {
            let side = r.to_middle - lat;
            side < -1.0 && side > -6.0 && r.d_exact.abs() < 60.0
        });
        prop_assert!(!f.left || near_left);
        prop_assert!(!f.right || near_right);
    }
}

#[test]
fn tcs_and_abs_monotone_on_sorted_grids() {
    let p = ControllerParams::default();
    let grid: Vec<f64> = (0..=2000).map(|i| 2.0 + i as f64 * 0.01).collect();
    for a in [0.0, 0.2, 0.5, 0.9, 1.0] {
        let out: Vec<f64> = grid.iter().map(|&s| tcs(a, s, &p)).collect();
        assert!(out.windows(2).all(|w| w[1] <= w[0]));
    }
    for b in [0.0, 0.3, 0.7, 1.0] {
        let out: Vec<f64> = grid.iter().map(|&s| abs(b, 25.0, 25.0 - s, &p)).collect();
        assert!(out.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn leader_overtake_ramps_offset_to_lane() {
    let p = ControllerParams::default();
    let slow = OpponentReading {
        id: 1,
        d_exact: 40.0,
        lane_index: 2,
        to_middle: 0.0,
        yaw: 0.0,
        speed: 10.0,
        same_lane: true,
    };
    let v = me(12.0, 0.0, 0.0);
    let mut cs = ControllerState::new(p, 20.0);
    let ind = Indicators {
        angle: 0.0,
        to_middle: 0.0,
        d1: 60.0,
        d2: 5.0,
        d3: 60.0,
    };
    let mut last = 0.0;
    for _ in 0..60 {
        let out = control_step(&ind, &[slow], &v, &mut cs);
        assert_eq!(out.agent_state.value, AgentStateKind::Leader);
        assert!(out.offset >= last);
        last = out.offset;
    }
    assert_eq!(last, 4.0);
}

#[test]
fn no_lane_change_across_a_car_that_would_have_to_brake() {
    let p = ControllerParams::default();
    let leader = OpponentReading {
        id: 1,
        d_exact: 30.0,
        lane_index: 2,
        to_middle: 0.0,
        yaw: 0.0,
        speed: 10.0,
        same_lane: true,
    };
    let fast_behind_left = OpponentReading {
        id: 2,
        d_exact: -12.0,
        lane_index: 1,
        to_middle: 4.0,
        yaw: 0.0,
        speed: 20.0,
        same_lane: false,
    };
    let v = me(12.0, 0.0, 0.0);
    let st = agent_state(&[leader, fast_behind_left], &v, &p);
    assert!(st.flanks.left && !st.flanks.right);
    let mut cs = ControllerState::new(p, 20.0);
    assert_eq!(get_offset(&mut cs, &st, 60.0, 5.0, 60.0), 0.0);
    // far enough back, the move goes ahead
    let far = OpponentReading {
        d_exact: -40.0,
        ..fast_behind_left
    };
    let st = agent_state(&[leader, far], &v, &p);
    assert!(!st.flanks.left);
    assert_eq!(get_offset(&mut cs, &st, 60.0, 5.0, 60.0), p.offset_step);
}

#[test]
fn ablation_ignores_neighbors() {
    let p = ControllerParams::default();
    let blocker = OpponentReading {
        id: 1,
        d_exact: 8.0,
        lane_index: 2,
        to_middle: 0.0,
        yaw: 0.0,
        speed: 0.0,
        same_lane: true,
    };
    let v = me(15.0, 0.0, 0.0);
    let ind = Indicators::clear();
    let mut on = ControllerState::new(p, 20.0);
    let mut off = ControllerState::new(p, 20.0);
    off.use_agent_state = false;
    let a = control_step(&ind, &[blocker], &v, &mut on);
    let b = control_step(&ind, &[blocker], &v, &mut off);
    assert_eq!(a.agent_state.value, AgentStateKind::Blocked);
    assert_eq!(a.command.brake, 1.0);
    assert_eq!(b.agent_state.value, AgentStateKind::Clear);
    assert_eq!(b.command.brake, 0.0);
}
