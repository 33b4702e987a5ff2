use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `limit` acquisitions in any window.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(limit: usize, window: Duration) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        RateLimiter {
            limit,
            window,
            sent: Mutex::new(VecDeque::with_capacity(limit)),
        }
    }

    pub fn per_minute(limit: usize) -> Self {
        RateLimiter::new(limit, Duration::from_secs(60))
    }

    /// Blocks until a dispatch slot is free and claims it.
    pub fn acquire(&self) -> Instant {
        loop {
            let wait = {
                let mut sent = self.sent.lock().expect("limiter lock poisoned");
                let now = Instant::now();
                while sent.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                    sent.pop_front();
                }
                if sent.len() < self.limit {
                    sent.push_back(now);
                    return now;
                }
                self.window - now.duration_since(sent[0])
            };
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn no_window_sees_more_than_limit() {
        let window = Duration::from_millis(150);
        let limiter = Arc::new(RateLimiter::new(3, window));
        let stamps = Arc::new(Mutex::new(Vec::new()));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let (l, s) = (limiter.clone(), stamps.clone());
                thread::spawn(move || {
                    for _ in 0..2 {
                        let t = l.acquire();
                        s.lock().unwrap().push(t);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let mut stamps = stamps.lock().unwrap().clone();
        stamps.sort();
        assert_eq!(stamps.len(), 8);
        for (i, start) in stamps.iter().enumerate() {
            let inside = stamps[i..].iter().filter(|t| t.duration_since(*start) < window).count();
            assert!(inside <= 3, "{inside} dispatches inside one window");
        }
    }
}
