//! Counting event channel: the in-process analogue of an event descriptor.
//! Signals accumulate; each successful wait consumes one. Many signalers,
//! one waiter. Waiters must re-check their ring after waking — spurious
//! wakeups are allowed by the contract.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Woke,
    TimedOut,
}

struct Inner {
    count: Mutex<u64>,
    cond: Condvar,
}

#[derive(Clone)]
pub struct EventChannel {
    inner: Arc<Inner>,
}

impl EventChannel {
    pub fn new() -> Self {
        EventChannel {
            inner: Arc::new(Inner { count: Mutex::new(0), cond: Condvar::new() }),
        }
    }

    pub fn signal(&self) {
        let mut count = self.inner.count.lock().unwrap();
        *count += 1;
        self.inner.cond.notify_one();
    }

    /// Consume one pending signal, blocking up to `timeout` for it.
    pub fn wait(&self, timeout: Duration) -> WaitOutcome {
        let deadline = Instant::now() + timeout;
        let mut count = self.inner.count.lock().unwrap();
        loop {
            if *count > 0 {
                *count -= 1;
                return WaitOutcome::Woke;
            }
            let now = Instant::now();
            if now >= deadline {
                return WaitOutcome::TimedOut;
            }
            let (guard, _) = self
                .inner
                .cond
                .wait_timeout(count, deadline - now)
                .unwrap();
            count = guard;
        }
    }

    /// Non-blocking variant of `wait`.
    pub fn try_consume(&self) -> WaitOutcome {
        let mut count = self.inner.count.lock().unwrap();
        if *count > 0 {
            *count -= 1;
            WaitOutcome::Woke
        } else {
            WaitOutcome::TimedOut
        }
    }
}

impl Default for EventChannel {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn signal_then_wait_wakes() {
        let ch = EventChannel::new();
        ch.signal();
        assert_eq!(ch.wait(Duration::from_millis(1)), WaitOutcome::Woke);
    }

    #[test]
    fn wait_without_signal_times_out() {
        let ch = EventChannel::new();
        let t0 = std::time::Instant::now();
        assert_eq!(ch.wait(Duration::from_millis(10)), WaitOutcome::TimedOut);
        assert!(t0.elapsed() >= Duration::from_millis(10));
    }

    #[test]
    fn counter_semantics_cap_wakeups() {
        let ch = EventChannel::new();
        let n = 5;
        for _ in 0..n {
            ch.signal();
        }
        let woke = (0..n + 1)
            .filter(|_| ch.wait(Duration::ZERO) == WaitOutcome::Woke)
            .count();
        assert_eq!(woke, n);
    }

    #[test]
    fn cross_thread_wakeup() {
        let ch = EventChannel::new();
        let ch2 = ch.clone();
        let h = std::thread::spawn(move || ch2.wait(Duration::from_secs(5)));
        std::thread::sleep(Duration::from_millis(5));
        ch.signal();
        assert_eq!(h.join().unwrap(), WaitOutcome::Woke);
    }
}
