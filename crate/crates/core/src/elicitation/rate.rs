use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Time source used for rate limiting and retry backoff.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Virtual clock: `sleep` advances time instantly. Used for tests and dry runs.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    /// Every duration passed to `sleep`, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, duration: Duration) {
        self.slept.lock().unwrap().push(duration);
        self.advance(duration);
    }
}

/// Sliding-window limiter: at most `limit` acquisitions in any half-open
/// window of length `window`.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    stamps: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(limit, Duration::from_secs(60), clock)
    }

    pub fn new(limit: u32, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        RateLimiter {
            limit: limit as usize,
            window,
            clock,
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    /// Block until a slot is free, then take it. Returns the grant time.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().unwrap();
                let now = self.clock.now();
                while stamps
                    .front()
                    .is_some_and(|&t| now.saturating_sub(t) >= self.window)
                {
                    stamps.pop_front();
                }
                if stamps.len() < self.limit {
                    stamps.push_back(now);
                    return now;
                }
                let oldest = *stamps.front().expect("full window is non-empty");
                (oldest + self.window).saturating_sub(now)
            };
            self.clock.sleep(wait.max(Duration::from_micros(1)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn never_exceeds_limit_in_any_window(limit in 1u32..6, gaps in prop::collection::vec(0u64..30_000, 1..60)) {
            let clock = Arc::new(ManualClock::default());
            let limiter = RateLimiter::per_minute(limit, clock.clone());
            let mut grants = Vec::new();
            for gap in gaps {
                clock.advance(Duration::from_millis(gap));
                grants.push(limiter.acquire());
            }
            for (i, &start) in grants.iter().enumerate() {
                let in_window = grants[i..]
                    .iter()
                    .filter(|&&t| t < start + Duration::from_secs(60))
                    .count();
                prop_assert!(in_window <= limit as usize);
            }
        }
    }

    #[test]
    fn waits_for_oldest_to_expire() {
        let clock = Arc::new(ManualClock::default());
        let limiter = RateLimiter::per_minute(2, clock.clone());
        assert_eq!(limiter.acquire(), Duration::ZERO);
        clock.advance(Duration::from_secs(10));
        assert_eq!(limiter.acquire(), Duration::from_secs(10));
        assert_eq!(limiter.acquire(), Duration::from_secs(60));
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(50)]);
    }
}
