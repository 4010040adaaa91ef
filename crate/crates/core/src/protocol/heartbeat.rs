/// Liveness check for one connection: ping every `interval_ms`, give up after
/// `max_missed` consecutive unanswered pings.
#[derive(Debug, Clone, PartialEq)]
pub struct Heartbeat {
    pub interval_ms: u64,
    pub max_missed: u32,
    next_ping_at: u64,
    outstanding: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeartbeatVerdict {
    /// Nothing to do before `next_ping_at`.
    Idle,
    SendPing,
    Dead,
}

impl Heartbeat {
    pub fn new(now: u64) -> Self {
        Self::with_interval(now, 5000, 2)
    }

    pub fn with_interval(now: u64, interval_ms: u64, max_missed: u32) -> Self {
        Self { interval_ms, max_missed, next_ping_at: now + interval_ms, outstanding: 0 }
    }

    pub fn poll(&mut self, now: u64) -> HeartbeatVerdict {
        if now < self.next_ping_at {
            return HeartbeatVerdict::Idle;
        }
        if self.outstanding >= self.max_missed {
            return HeartbeatVerdict::Dead;
        }
        self.outstanding += 1;
        self.next_ping_at = now + self.interval_ms;
        HeartbeatVerdict::SendPing
    }

    pub fn on_pong(&mut self) {
        self.outstanding = 0;
    }

    pub fn missed(&self) -> u32 {
        self.outstanding
    }
}
