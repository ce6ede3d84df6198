use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by all request workers of a process.
///
/// Callers that find the bucket empty reserve a token anyway (driving the
/// balance negative) and sleep until it would have been refilled, so
/// concurrent waiters are served in arrival order at exactly `rate`.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    /// `rate` requests per second with at most `burst` requests issued
    /// back-to-back after an idle period.
    pub fn new(rate: f64, burst: u32) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        let capacity = f64::from(burst.max(1));
        RateLimiter {
            rate,
            capacity,
            state: Mutex::new(Bucket { tokens: capacity, last: Instant::now() }),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Blocks until one request may be issued.
    pub fn acquire(&self) {
        let wait = {
            let mut b = self.state.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let refill = now.duration_since(b.last).as_secs_f64() * self.rate;
            b.tokens = (b.tokens + refill).min(self.capacity);
            b.last = now;
            b.tokens -= 1.0;
            if b.tokens >= 0.0 {
                return;
            }
            Duration::from_secs_f64(-b.tokens / self.rate)
        };
        std::thread::sleep(wait);
    }
}
