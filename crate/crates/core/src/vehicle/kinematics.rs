use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{Position, Tick, TICK_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Position,
    /// m/s
    pub speed: f64,
    /// radians in [0, 2π)
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    pub v_max: f64,
    /// Largest speed change per tick, m/s.
    pub accel_step: f64,
    /// Largest heading change per tick, radians.
    pub turn_step: f64,
    pub world_w: f64,
    pub world_h: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            v_max: 70.0,
            accel_step: 0.5,
            turn_step: 0.05,
            world_w: 1000.0,
            world_h: 1000.0,
        }
    }
}

fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

// Mirrors a coordinate back into [0, limit], reporting whether it bounced.
fn reflect(mut v: f64, limit: f64) -> (f64, bool) {
    let mut bounced = false;
    while v < 0.0 || v > limit {
        bounced = !bounced;
        v = if v < 0.0 { -v } else { 2.0 * limit - v };
    }
    (v, bounced)
}

/// Advances a vehicle by `dt` ticks: bounded random walk on speed and
/// heading, straight-line motion, mirror reflection at the world edges.
/// The displacement never exceeds `speed * dt * 0.1 s`.
pub fn step_mobility<R: Rng + ?Sized>(
    v: KinematicState,
    dt: Tick,
    rng: &mut R,
    params: &MobilityParams,
) -> KinematicState {
    debug_assert!(dt >= 1);
    let dspeed = if params.accel_step > 0.0 {
        rng.gen_range(-params.accel_step..=params.accel_step)
    } else {
        0.0
    };
    let dheading = if params.turn_step > 0.0 {
        rng.gen_range(-params.turn_step..=params.turn_step)
    } else {
        0.0
    };
    let speed = (v.speed + dspeed).clamp(0.0, params.v_max);
    let mut heading = normalize_heading(v.heading + dheading);
    let dist = speed * dt as f64 * TICK_SECONDS;
    let (x, bx) = reflect(v.position.x + dist * heading.cos(), params.world_w);
    let (y, by) = reflect(v.position.y + dist * heading.sin(), params.world_h);
    if bx {
        heading = std::f64::consts::PI - heading;
    }
    if by {
        heading = -heading;
    }
    KinematicState {
        position: Position::new(x, y),
        speed,
        heading: normalize_heading(heading),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStreams;

    fn still() -> MobilityParams {
        MobilityParams {
            accel_step: 0.0,
            turn_step: 0.0,
            world_w: 10_000.0,
            world_h: 10_000.0,
            ..MobilityParams::default()
        }
    }

    #[test]
    fn straight_line_kinematics() {
        let s = KinematicState {
            position: Position::new(100.0, 100.0),
            speed: 10.0,
            heading: 0.0,
        };
        let mut rng = RngStreams::fresh(0, "m");
        let n = step_mobility(s, 10, &mut rng, &still());
        assert!((n.position.x - 110.0).abs() < 1e-9);
        assert!((n.position.y - 100.0).abs() < 1e-9);
    }

    #[test]
    fn speed_clamped_at_vmax() {
        let params = MobilityParams {
            accel_step: 5.0,
            ..still()
        };
        let mut rng = RngStreams::fresh(3, "m");
        let mut s = KinematicState {
            position: Position::new(5000.0, 5000.0),
            speed: params.v_max,
            heading: 1.0,
        };
        for _ in 0..200 {
            s = step_mobility(s, 1, &mut rng, &params);
            assert!(s.speed <= params.v_max);
        }
    }

    #[test]
    fn reflection_keeps_vehicle_inside() {
        let params = MobilityParams {
            world_w: 100.0,
            world_h: 100.0,
            ..still()
        };
        let s = KinematicState {
            position: Position::new(99.0, 50.0),
            speed: 50.0,
            heading: 0.0,
        };
        let n = step_mobility(s, 1, &mut RngStreams::fresh(0, "m"), &params);
        assert!((n.position.x - 96.0).abs() < 1e-9);
        assert!((n.heading - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn invariants_hold_over_1000_steps() {
        let params = MobilityParams::default();
        let mut rng = RngStreams::fresh(11, "m");
        let mut s = KinematicState {
            position: Position::new(10.0, 990.0),
            speed: 69.0,
            heading: 6.2,
        };
        for _ in 0..1000 {
            let n = step_mobility(s, 1, &mut rng, &params);
            assert!((0.0..=params.v_max).contains(&n.speed));
            assert!((0.0..TAU).contains(&n.heading));
            assert!(n.position.is_finite());
            assert!((0.0..=params.world_w).contains(&n.position.x));
            assert!((0.0..=params.world_h).contains(&n.position.y));
            assert!(n.position.distance(&s.position) <= n.speed * TICK_SECONDS + 1e-9);
            s = n;
        }
    }
}
