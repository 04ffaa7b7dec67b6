//! Memory budget enforcement.
//!
//! Buffers that scale with block size or input size are allocated under a
//! [`Reservation`]. Requests that would push the in-use total past the limit
//! are refused and counted as violations.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct BudgetTracker {
    limit: u64,
    in_use: AtomicU64,
    peak: AtomicU64,
    violations: AtomicU64,
}

impl BudgetTracker {
    pub fn new(limit: u64) -> Self {
        Self {
            limit,
            in_use: AtomicU64::new(0),
            peak: AtomicU64::new(0),
            violations: AtomicU64::new(0),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn in_use(&self) -> u64 {
        self.in_use.load(Ordering::Acquire)
    }

    pub fn available(&self) -> u64 {
        self.limit.saturating_sub(self.in_use())
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::Acquire)
    }

    /// Number of refused reservations since creation.
    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Acquire)
    }

    pub fn reserve(self: &Arc<Self>, bytes: u64) -> Result<Reservation> {
        self.acquire(bytes)?;
        Ok(Reservation {
            tracker: Arc::clone(self),
            bytes,
        })
    }

    fn acquire(&self, bytes: u64) -> Result<()> {
        let mut cur = self.in_use.load(Ordering::Acquire);
        loop {
            let next = cur + bytes;
            if next > self.limit {
                self.violations.fetch_add(1, Ordering::AcqRel);
                log::warn!(
                    "memory budget refused {bytes} bytes ({cur} of {} in use)",
                    self.limit
                );
                return Err(Error::OverBudget {
                    requested: bytes,
                    in_use: cur,
                    limit: self.limit,
                });
            }
            match self
                .in_use
                .compare_exchange(cur, next, Ordering::AcqRel, Ordering::Acquire)
            {
                Ok(_) => {
                    self.peak.fetch_max(next, Ordering::AcqRel);
                    return Ok(());
                }
                Err(actual) => cur = actual,
            }
        }
    }
}

/// Bytes held against the budget; released on drop.
#[derive(Debug)]
pub struct Reservation {
    tracker: Arc<BudgetTracker>,
    bytes: u64,
}

impl Reservation {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    /// Grow or shrink the reservation in place.
    pub fn resize(&mut self, bytes: u64) -> Result<()> {
        if bytes > self.bytes {
            self.tracker.acquire(bytes - self.bytes)?;
        } else {
            self.tracker
                .in_use
                .fetch_sub(self.bytes - bytes, Ordering::AcqRel);
        }
        self.bytes = bytes;
        Ok(())
    }
}

impl Drop for Reservation {
    fn drop(&mut self) {
        self.tracker.in_use.fetch_sub(self.bytes, Ordering::AcqRel);
    }
}
