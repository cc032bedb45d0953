/// Simulated time in ticks of 100 ms.
pub type Tick = u64;

pub const TICKS_PER_SECOND: u64 = 10;
pub const TICK_SECONDS: f64 = 0.1;

/// Converts a tick span to seconds.
pub fn seconds(ticks: u64) -> f64 {
    ticks as f64 * TICK_SECONDS
}

/// Monotone simulation clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    tick: Tick,
}

impl SimClock {
    pub fn now(&self) -> Tick {
        self.tick
    }

    /// Moves the clock forward; never backwards.
    pub fn advance_to(&mut self, tick: Tick) {
        debug_assert!(tick >= self.tick, "clock moved backwards");
        self.tick = self.tick.max(tick);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_ticks_per_second() {
        assert_eq!(seconds(TICKS_PER_SECOND), 1.0);
        assert_eq!(seconds(0), 0.0);
        assert!((seconds(3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn clock_only_moves_forward() {
        let mut c = SimClock::default();
        c.advance_to(5);
        assert_eq!(c.now(), 5);
        c.advance_to(5);
        assert_eq!(c.now(), 5);
        c.advance_to(9);
        assert_eq!(c.now(), 9);
    }
}
