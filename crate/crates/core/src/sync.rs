//! Small synchronization primitives used by the concurrent matchers.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

/// An `f64` stored as its bit pattern in an `AtomicU64`. Loads and stores are
/// individually indivisible.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }

    #[inline]
    pub fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Release)
    }

    /// Atomically adds `delta`, returning the new value.
    pub fn add(&self, delta: f64) -> f64 {
        let mut cur = self.0.load(Ordering::Acquire);
        loop {
            let next = (f64::from_bits(cur) + delta).to_bits();
            match self.0.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return f64::from_bits(next),
                Err(actual) => cur = actual,
            }
        }
    }
}

pub fn zeroed_f64(n: usize) -> Vec<AtomicF64> {
    (0..n).map(|_| AtomicF64::new(0.0)).collect()
}

/// Exclusive lock that only supports non-blocking acquisition; callers own
/// their retry policy.
#[derive(Debug, Default)]
pub struct TryLock(AtomicBool);

impl TryLock {
    pub fn new() -> Self {
        TryLock(AtomicBool::new(false))
    }

    #[inline]
    pub fn try_lock(&self) -> bool {
        !self.0.load(Ordering::Relaxed)
            && self
                .0
                .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
                .is_ok()
    }

    #[inline]
    pub fn unlock(&self) {
        self.0.store(false, Ordering::Release)
    }

    pub fn is_locked(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

/// One attempt at both locks in ascending order. Either both are held on
/// return or neither is.
#[inline]
pub fn try_lock_pair(first: &TryLock, second: &TryLock) -> bool {
    if !first.try_lock() {
        return false;
    }
    if second.try_lock() {
        return true;
    }
    first.unlock();
    false
}

pub const BACKOFF_MIN: Duration = Duration::from_micros(1);
pub const BACKOFF_MAX: Duration = Duration::from_micros(256);

/// Bounded exponential backoff, 1 µs doubling to 256 µs.
#[derive(Debug)]
pub struct Backoff {
    next: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff::new()
    }
}

impl Backoff {
    pub fn new() -> Self {
        Backoff { next: BACKOFF_MIN }
    }

    pub fn current(&self) -> Duration {
        self.next
    }

    pub fn wait(&mut self) {
        let until = Instant::now() + self.next;
        let mut spins = 0u32;
        while Instant::now() < until {
            spins += 1;
            if spins.is_multiple_of(64) {
                thread::yield_now();
            } else {
                std::hint::spin_loop();
            }
        }
        self.next = (self.next * 2).min(BACKOFF_MAX);
    }
}

/// Wall-clock budget shared by all workers of one run. Once tripped it
/// stays tripped, and every worker abandons its remaining work.
#[derive(Debug)]
pub struct Watchdog {
    start: Instant,
    limit: Duration,
    tripped: AtomicBool,
}

/// Marker returned by loops that gave up because the watchdog tripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Aborted;

impl Watchdog {
    pub fn new(seconds: f64) -> Self {
        Watchdog {
            start: Instant::now(),
            limit: Duration::from_secs_f64(seconds),
            tripped: AtomicBool::new(false),
        }
    }

    #[inline]
    pub fn expired(&self) -> bool {
        if self.tripped.load(Ordering::Relaxed) {
            return true;
        }
        if self.start.elapsed() > self.limit {
            self.tripped.store(true, Ordering::Relaxed);
            return true;
        }
        false
    }

    #[inline]
    pub fn check(&self) -> Result<(), Aborted> {
        if self.expired() {
            Err(Aborted)
        } else {
            Ok(())
        }
    }

    pub fn trip(&self) {
        self.tripped.store(true, Ordering::Relaxed);
    }

    pub fn tripped(&self) -> bool {
        self.tripped.load(Ordering::Relaxed)
    }

    pub fn limit_secs(&self) -> f64 {
        self.limit.as_secs_f64()
    }
}
