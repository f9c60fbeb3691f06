//! Mapping from wall-clock time to logical ticks.

use std::time::Duration;

const NANOS_PER_SEC: u128 = 1_000_000_000;

/// Tick `k` is due once `(k + 1) / rate` seconds have elapsed since start, so
/// after `s` seconds exactly `floor(s * rate)` ticks have run. The pacer only
/// answers "how many"; the caller runs every missing tick in order, which
/// keeps the logical sequence gapless however late it is polled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickPacer {
    rate: u32,
}

impl TickPacer {
    pub fn new(rate: u32) -> Self {
        assert!(rate > 0, "tick rate must be positive");
        TickPacer { rate }
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    /// Number of ticks that should have run after `elapsed`.
    pub fn due(&self, elapsed: Duration) -> u64 {
        let ticks = elapsed.as_nanos() * u128::from(self.rate) / NANOS_PER_SEC;
        u64::try_from(ticks).unwrap_or(u64::MAX)
    }

    /// Elapsed time at which tick `tick` becomes due.
    pub fn deadline(&self, tick: u64) -> Duration {
        let nanos = (u128::from(tick) + 1) * NANOS_PER_SEC;
        let nanos = nanos.div_ceil(u128::from(self.rate));
        Duration::from_nanos(u64::try_from(nanos).unwrap_or(u64::MAX))
    }
}
