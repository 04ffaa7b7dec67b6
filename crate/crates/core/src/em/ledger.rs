//! Block transfer accounting.
//!
//! Every block moved between an [`ExternalArray`](super::ExternalArray) file and
//! internal memory is charged here, tagged by the kind of traffic that caused it.
//! Counters are logical block transfers, independent of the page cache.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoTag {
    Scan,
    Sort,
    Pq,
}

impl IoTag {
    pub const ALL: [IoTag; 3] = [IoTag::Scan, IoTag::Sort, IoTag::Pq];

    fn index(self) -> usize {
        match self {
            IoTag::Scan => 0,
            IoTag::Sort => 1,
            IoTag::Pq => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IoTag::Scan => "scan",
            IoTag::Sort => "sort",
            IoTag::Pq => "pq",
        }
    }
}

#[derive(Debug, Default)]
pub struct IoLedger {
    reads: [AtomicU64; 3],
    writes: [AtomicU64; 3],
}

impl IoLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_read(&self, tag: IoTag, blocks: u64) {
        self.reads[tag.index()].fetch_add(blocks, Ordering::Relaxed);
    }

    pub fn charge_write(&self, tag: IoTag, blocks: u64) {
        self.writes[tag.index()].fetch_add(blocks, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoSnapshot {
        let load = |a: &[AtomicU64; 3]| {
            [
                a[0].load(Ordering::Relaxed),
                a[1].load(Ordering::Relaxed),
                a[2].load(Ordering::Relaxed),
            ]
        };
        IoSnapshot {
            reads: load(&self.reads),
            writes: load(&self.writes),
        }
    }
}

/// Immutable copy of the ledger counters at one point in time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoSnapshot {
    /// Indexed scan, sort, pq.
    pub reads: [u64; 3],
    pub writes: [u64; 3],
}

impl IoSnapshot {
    pub fn blocks_read(&self) -> u64 {
        self.reads.iter().sum()
    }

    pub fn blocks_written(&self) -> u64 {
        self.writes.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.blocks_read() + self.blocks_written()
    }

    pub fn read(&self, tag: IoTag) -> u64 {
        self.reads[tag.index()]
    }

    pub fn written(&self, tag: IoTag) -> u64 {
        self.writes[tag.index()]
    }

    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &IoSnapshot) -> IoSnapshot {
        let mut d = IoSnapshot::default();
        for i in 0..3 {
            d.reads[i] = self.reads[i] - earlier.reads[i];
            d.writes[i] = self.writes[i] - earlier.writes[i];
        }
        d
    }
}

impl fmt::Display for IoSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "read={} written={}",
            self.blocks_read(),
            self.blocks_written()
        )?;
        for tag in IoTag::ALL {
            write!(
                f,
                " {}={}/{}",
                tag.name(),
                self.read(tag),
                self.written(tag)
            )?;
        }
        Ok(())
    }
}
