use std::future::Future;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};

/// Time source for the scraper. The virtual clock lets tests cover hours of
/// polite scraping in milliseconds.
pub trait Clock: Send + Sync {
    /// Monotonic time since the clock was created.
    fn elapsed(&self) -> Duration;
    fn wall(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration) -> Pin<Box<dyn Future<Output = ()> + Send + '_>>;
}

#[derive(Debug)]
pub struct SystemClock {
    start: tokio::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { start: tokio::time::Instant::now() }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    fn wall(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) -> Pin<Box<dyn Future<Output = ()> + Send + '_>> {
        Box::pin(tokio::time::sleep(d))
    }
}

/// Clock that advances only when slept on.
#[derive(Debug)]
pub struct VirtualClock {
    origin: DateTime<Utc>,
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn new(origin: DateTime<Utc>) -> Self {
        Self { origin, now: Mutex::new(Duration::ZERO) }
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for VirtualClock {
    fn elapsed(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn wall(&self) -> DateTime<Utc> {
        self.origin + chrono::Duration::from_std(self.elapsed()).unwrap_or(chrono::Duration::MAX)
    }

    fn sleep(&self, d: Duration) -> Pin<Box<dyn Future<Output = ()> + Send + '_>> {
        self.advance(d);
        Box::pin(std::future::ready(()))
    }
}

/// Token bucket shared by every request of one client: refills one token
/// per `mean` and holds at most `burst` tokens. Implemented as a generic
/// cell rate algorithm over the theoretical arrival time.
pub struct RateLimiter {
    clock: Arc<dyn Clock>,
    mean: Duration,
    burst: u32,
    tat: tokio::sync::Mutex<Duration>,
}

impl RateLimiter {
    pub const DEFAULT_BURST: u32 = 2;

    pub fn new(clock: Arc<dyn Clock>, mean: Duration) -> Self {
        Self::with_burst(clock, mean, Self::DEFAULT_BURST)
    }

    pub fn with_burst(clock: Arc<dyn Clock>, mean: Duration, burst: u32) -> Self {
        assert!(!mean.is_zero() && burst >= 1, "rate limiter needs a positive interval and burst");
        Self { clock, mean, burst, tat: tokio::sync::Mutex::new(Duration::ZERO) }
    }

    pub fn mean(&self) -> Duration {
        self.mean
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Waits until a token is available and takes it.
    pub async fn acquire(&self) {
        let emit_at = {
            let mut tat = self.tat.lock().await;
            let now = self.clock.elapsed();
            let tolerance = self.mean * (self.burst - 1);
            let emit_at = now.max(tat.saturating_sub(tolerance));
            *tat = (*tat).max(emit_at) + self.mean;
            emit_at
        };
        let now = self.clock.elapsed();
        if emit_at > now {
            self.clock.sleep(emit_at - now).await;
        }
    }
}
