//! External-memory substrate: block-oriented arrays, stable multiway merge
//! sort, an external priority queue, memory-budget enforcement and I/O
//! accounting.
//!
//! Everything that touches disk goes through an [`Em`] context. It owns the
//! block/memory configuration, the scratch directory, the [`IoLedger`] and the
//! [`BudgetTracker`]. External arrays only support sequential scans, appends
//! and whole-array sorts.

mod array;
mod budget;
mod ledger;
mod pq;
mod record;
mod sort;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use array::{ArrayReader, ArrayWriter, ExternalArray};
pub use budget::{BudgetTracker, Reservation};
pub use ledger::{IoLedger, IoSnapshot, IoTag};
pub use pq::ExternalPriorityQueue;
pub use record::Record;
pub(crate) use record::{get_u64, put_u64};
pub use sort::{external_sort, MergeHeap};

use crate::error::{Error, Result};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub block_size_bytes: u64,
    pub memory_budget_bytes: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            block_size_bytes: MIB,
            memory_budget_bytes: 1024 * MIB,
        }
    }
}

impl BlockConfig {
    pub fn new(block_size_bytes: u64, memory_budget_bytes: u64) -> Result<Self> {
        let c = Self {
            block_size_bytes,
            memory_budget_bytes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        // Widest record in the crate is the 5-word bucket tuple.
        if self.block_size_bytes < 64 {
            return Err(Error::Config(format!(
                "block size {} is smaller than the widest record",
                self.block_size_bytes
            )));
        }
        if self.memory_budget_bytes < 4 * self.block_size_bytes {
            return Err(Error::Config(format!(
                "memory budget {} must be at least 4 blocks of {} bytes",
                self.memory_budget_bytes, self.block_size_bytes
            )));
        }
        Ok(())
    }

    pub fn elements_per_block(&self, record_size: usize) -> u64 {
        self.block_size_bytes / record_size as u64
    }

    /// `ceil(records * record_size / B)`.
    pub fn blocks_for(&self, records: u64, record_size: usize) -> u64 {
        (records * record_size as u64).div_ceil(self.block_size_bytes)
    }
}

static JOB_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Handle to one external-memory context. Cheap to clone.
#[derive(Clone)]
pub struct Em {
    inner: Arc<EmInner>,
}

struct EmInner {
    config: BlockConfig,
    scratch: PathBuf,
    ledger: IoLedger,
    budget: Arc<BudgetTracker>,
    next_file: AtomicU64,
    keep_scratch: AtomicBool,
}

impl Drop for EmInner {
    fn drop(&mut self) {
        if !self.keep_scratch.load(Ordering::Acquire) {
            let _ = std::fs::remove_dir_all(&self.scratch);
        }
    }
}

impl std::fmt::Debug for Em {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Em")
            .field("config", &self.inner.config)
            .field("scratch", &self.inner.scratch)
            .finish()
    }
}

impl Em {
    /// Creates a context whose scratch files live in a fresh job directory under `scratch_root`.
    pub fn new(config: BlockConfig, scratch_root: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let job = format!(
            "extpart-{}-{}",
            std::process::id(),
            JOB_COUNTER.fetch_add(1, Ordering::Relaxed)
        );
        let scratch = scratch_root.as_ref().join(job);
        std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
        Ok(Self {
            inner: Arc::new(EmInner {
                config,
                scratch,
                ledger: IoLedger::new(),
                budget: Arc::new(BudgetTracker::new(config.memory_budget_bytes)),
                next_file: AtomicU64::new(0),
                keep_scratch: AtomicBool::new(false),
            }),
        })
    }

    /// Context with scratch space under the system temp directory.
    pub fn temp(config: BlockConfig) -> Result<Self> {
        Self::new(config, std::env::temp_dir())
    }

    pub fn config(&self) -> &BlockConfig {
        &self.inner.config
    }

    pub fn block_size(&self) -> u64 {
        self.inner.config.block_size_bytes
    }

    pub fn memory_budget(&self) -> u64 {
        self.inner.config.memory_budget_bytes
    }

    pub fn ledger(&self) -> &IoLedger {
        &self.inner.ledger
    }

    pub fn io_report(&self) -> IoSnapshot {
        self.inner.ledger.snapshot()
    }

    pub fn budget(&self) -> &Arc<BudgetTracker> {
        &self.inner.budget
    }

    pub fn reserve(&self, bytes: u64) -> Result<Reservation> {
        self.inner.budget.reserve(bytes)
    }

    pub fn available(&self) -> u64 {
        self.inner.budget.available()
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.inner.scratch
    }

    /// Leave the scratch directory on disk when the context is dropped.
    pub fn keep_scratch(&self) {
        self.inner.keep_scratch.store(true, Ordering::Release);
    }

    pub(crate) fn new_scratch_path(&self, prefix: &str) -> PathBuf {
        let id = self.inner.next_file.fetch_add(1, Ordering::Relaxed);
        self.inner.scratch.join(format!("{prefix}-{id}.bin"))
    }

    pub fn blocks_for(&self, records: u64, record_size: usize) -> u64 {
        self.inner.config.blocks_for(records, record_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BlockConfig::new(4096, 4 * 4096).is_ok());
        assert!(BlockConfig::new(4096, 4 * 4096 - 1).is_err());
        assert!(BlockConfig::new(8, 1 << 20).is_err());
        let c = BlockConfig::new(1000, 10_000).unwrap();
        assert_eq!(c.elements_per_block(4), 250);
        assert_eq!(c.blocks_for(1000, 4), 4);
        assert_eq!(c.blocks_for(250, 4), 1);
        assert_eq!(c.blocks_for(0, 4), 0);
    }

    #[test]
    fn scratch_removed_on_drop() {
        let root = tempfile::tempdir().unwrap();
        let em = Em::new(BlockConfig::new(4096, 1 << 20).unwrap(), root.path()).unwrap();
        let dir = em.scratch_dir().to_path_buf();
        assert!(dir.exists());
        drop(em);
        assert!(!dir.exists());

        let em = Em::new(BlockConfig::new(4096, 1 << 20).unwrap(), root.path()).unwrap();
        em.keep_scratch();
        let dir = em.scratch_dir().to_path_buf();
        drop(em);
        assert!(dir.exists());
    }
}
