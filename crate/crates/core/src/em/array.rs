use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Em, IoTag, Record, Reservation};
use crate::error::{Error, Result};

/// Raw little-endian fixed-size records in one file, no header.
///
/// Only sequential access is offered: scans, appends through an
/// [`ArrayWriter`], and whole-array sorts.
pub struct ExternalArray<R: Record> {
    inner: Arc<ArrayInner>,
    _marker: PhantomData<R>,
}

struct ArrayInner {
    em: Em,
    path: PathBuf,
    len: u64,
    temp: AtomicBool,
}

impl Drop for ArrayInner {
    fn drop(&mut self) {
        if self.temp.load(Ordering::Acquire) {
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

impl<R: Record> Clone for ExternalArray<R> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
            _marker: PhantomData,
        }
    }
}

impl<R: Record> std::fmt::Debug for ExternalArray<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalArray")
            .field("path", &self.inner.path)
            .field("len", &self.inner.len)
            .field("record_size", &R::SIZE)
            .finish()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayMeta {
    record_size: u64,
    length: u64,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

impl<R: Record> ExternalArray<R> {
    pub fn len(&self) -> u64 {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.inner.path
    }

    pub fn em(&self) -> &Em {
        &self.inner.em
    }

    pub fn size_bytes(&self) -> u64 {
        self.inner.len * R::SIZE as u64
    }

    /// Blocks touched by one full scan.
    pub fn blocks(&self) -> u64 {
        self.inner.em.blocks_for(self.inner.len, R::SIZE)
    }

    pub fn writer(em: &Em, tag: IoTag) -> Result<ArrayWriter<R>> {
        ArrayWriter::create(em, em.new_scratch_path("arr"), true, tag)
    }

    /// Writer for a persistent array at `path`; a metadata file is written on finish.
    pub fn writer_at(em: &Em, path: impl Into<PathBuf>, tag: IoTag) -> Result<ArrayWriter<R>> {
        ArrayWriter::create(em, path.into(), false, tag)
    }

    pub fn from_iter<I: IntoIterator<Item = R>>(em: &Em, items: I) -> Result<Self> {
        let mut w = Self::writer(em, IoTag::Scan)?;
        for r in items {
            w.push(r)?;
        }
        w.finish()
    }

    pub fn from_slice(em: &Em, items: &[R]) -> Result<Self> {
        Self::from_iter(em, items.iter().copied())
    }

    /// Opens a persistent array described by its companion metadata file.
    pub fn open(em: &Em, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mp = meta_path(&path);
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: ArrayMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Storage(format!("bad metadata {}: {e}", mp.display())))?;
        if meta.record_size != R::SIZE as u64 {
            return Err(Error::Storage(format!(
                "{} holds {}-byte records, expected {}",
                path.display(),
                meta.record_size,
                R::SIZE
            )));
        }
        let actual = std::fs::metadata(&path)
            .map_err(|e| Error::io(&path, e))?
            .len();
        if actual != meta.length * meta.record_size {
            return Err(Error::Storage(format!(
                "{} is {} bytes, metadata says {} records of {} bytes",
                path.display(),
                actual,
                meta.length,
                meta.record_size
            )));
        }
        Ok(Self::wrap(em, path, meta.length, false))
    }

    fn wrap(em: &Em, path: PathBuf, len: u64, temp: bool) -> Self {
        Self {
            inner: Arc::new(ArrayInner {
                em: em.clone(),
                path,
                len,
                temp: AtomicBool::new(temp),
            }),
            _marker: PhantomData,
        }
    }

    /// Moves (or copies, across file systems) the backing file to `path`
    /// and writes its metadata. The returned array is not deleted on drop.
    pub fn persist(&self, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let from = &self.inner.path;
        if self.inner.temp.load(Ordering::Acquire) && std::fs::rename(from, &path).is_ok() {
            self.inner.temp.store(false, Ordering::Release);
        } else {
            std::fs::copy(from, &path).map_err(|e| Error::io(&path, e))?;
        }
        write_meta::<R>(&path, self.inner.len)?;
        Ok(Self::wrap(&self.inner.em, path, self.inner.len, false))
    }

    pub fn reader(&self, tag: IoTag) -> Result<ArrayReader<R>> {
        ArrayReader::open(self, 0, tag)
    }

    /// Sequential reader starting at record `start`. Used to resume partially
    /// consumed runs; not a random-access primitive.
    pub(crate) fn reader_from(&self, start: u64, tag: IoTag) -> Result<ArrayReader<R>> {
        ArrayReader::open(self, start, tag)
    }

    /// Visits every record in storage order, charging `ceil(N*s/B)` block reads.
    pub fn scan(&self, mut visit: impl FnMut(R) -> Result<()>) -> Result<()> {
        let mut rd = self.reader(IoTag::Scan)?;
        while let Some(r) = rd.next()? {
            visit(r)?;
        }
        Ok(())
    }

    /// Visits the array one resident block at a time. Each slice holds the
    /// records that complete inside one block transfer.
    pub fn scan_blocks(&self, mut visit: impl FnMut(&[R]) -> Result<()>) -> Result<()> {
        let em = &self.inner.em;
        let per_block = em.config().elements_per_block(R::SIZE).max(1) as usize;
        let _res = em.reserve((per_block * R::SIZE) as u64)?;
        let mut rd = self.reader(IoTag::Scan)?;
        let mut block = Vec::with_capacity(per_block + 1);
        let mut chunk = rd.chunks_read();
        while let Some(r) = rd.next()? {
            if rd.chunks_read() != chunk {
                if !block.is_empty() {
                    visit(&block)?;
                    block.clear();
                }
                chunk = rd.chunks_read();
            }
            block.push(r);
        }
        if !block.is_empty() {
            visit(&block)?;
        }
        Ok(())
    }

    /// Reads the whole array into memory. Charged as a scan.
    pub fn to_vec(&self) -> Result<Vec<R>> {
        let mut out = Vec::with_capacity(self.inner.len as usize);
        self.scan(|r| {
            out.push(r);
            Ok(())
        })?;
        Ok(out)
    }
}

fn write_meta<R: Record>(path: &Path, len: u64) -> Result<()> {
    let mp = meta_path(path);
    let meta = ArrayMeta {
        record_size: R::SIZE as u64,
        length: len,
    };
    std::fs::write(&mp, serde_json::to_string(&meta).unwrap()).map_err(|e| Error::io(&mp, e))
}

/// Appends records through a one-block buffer.
pub struct ArrayWriter<R: Record> {
    em: Em,
    path: PathBuf,
    file: Option<File>,
    buf: Vec<u8>,
    filled: usize,
    len: u64,
    temp: bool,
    tag: IoTag,
    _res: Reservation,
    _marker: PhantomData<R>,
}

impl<R: Record> ArrayWriter<R> {
    fn create(em: &Em, path: PathBuf, temp: bool, tag: IoTag) -> Result<Self> {
        let b = em.block_size() as usize;
        if R::SIZE > b {
            return Err(Error::Config(format!(
                "record of {} bytes exceeds block size {b}",
                R::SIZE
            )));
        }
        let res = em.reserve(b as u64)?;
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            em: em.clone(),
            path,
            file: Some(file),
            buf: vec![0u8; b],
            filled: 0,
            len: 0,
            temp,
            tag,
            _res: res,
            _marker: PhantomData,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, r: R) -> Result<()> {
        let b = self.buf.len();
        if self.filled + R::SIZE <= b {
            r.write_le(&mut self.buf[self.filled..self.filled + R::SIZE]);
            self.filled += R::SIZE;
        } else {
            let mut tmp = [0u8; 64];
            let tmp = &mut tmp[..R::SIZE];
            r.write_le(tmp);
            let first = b - self.filled;
            self.buf[self.filled..].copy_from_slice(&tmp[..first]);
            self.filled = b;
            self.flush_block()?;
            self.buf[..R::SIZE - first].copy_from_slice(&tmp[first..]);
            self.filled = R::SIZE - first;
        }
        if self.filled == b {
            self.flush_block()?;
        }
        self.len += 1;
        Ok(())
    }

    fn flush_block(&mut self) -> Result<()> {
        if self.filled == 0 {
            return Ok(());
        }
        let file = self.file.as_mut().expect("writer already finished");
        file.write_all(&self.buf[..self.filled])
            .map_err(|e| Error::io(&self.path, e))?;
        self.em.ledger().charge_write(self.tag, 1);
        self.filled = 0;
        Ok(())
    }

    pub fn finish(mut self) -> Result<ExternalArray<R>> {
        self.flush_block()?;
        let file = self.file.take().expect("writer already finished");
        drop(file);
        if !self.temp {
            write_meta::<R>(&self.path, self.len)?;
        }
        let path = std::mem::take(&mut self.path);
        Ok(ExternalArray::wrap(&self.em, path, self.len, self.temp))
    }
}

impl<R: Record> Drop for ArrayWriter<R> {
    fn drop(&mut self) {
        // Unfinished writer: discard the partial file.
        if self.file.is_some() {
            self.file = None;
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

/// Sequential block reader with a one-block buffer.
pub struct ArrayReader<R: Record> {
    em: Em,
    path: PathBuf,
    file: File,
    buf: Vec<u8>,
    filled: usize,
    pos: usize,
    bytes_left: u64,
    records_left: u64,
    chunks: u64,
    tag: IoTag,
    peeked: Option<R>,
    _res: Reservation,
    _marker: PhantomData<R>,
}

impl<R: Record> ArrayReader<R> {
    fn open(array: &ExternalArray<R>, start: u64, tag: IoTag) -> Result<Self> {
        let em = array.em().clone();
        let path = array.path().to_path_buf();
        let start = start.min(array.len());
        let bytes_left = (array.len() - start) * R::SIZE as u64;
        let b = em.block_size().min(bytes_left.max(R::SIZE as u64)) as usize;
        let res = em.reserve(b as u64)?;
        let mut file = File::open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Storage(format!("backing file {} is missing", path.display()))
            } else {
                Error::io(&path, e)
            }
        })?;
        let actual = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        if actual < array.size_bytes() {
            return Err(Error::Storage(format!(
                "backing file {} truncated: {} of {} bytes",
                path.display(),
                actual,
                array.size_bytes()
            )));
        }
        if start > 0 {
            file.seek(SeekFrom::Start(start * R::SIZE as u64))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            em,
            path,
            file,
            buf: vec![0u8; b],
            filled: 0,
            pos: 0,
            bytes_left,
            records_left: array.len() - start,
            chunks: 0,
            tag,
            peeked: None,
            _res: res,
            _marker: PhantomData,
        })
    }

    /// Records not yet returned by `next`.
    pub fn remaining(&self) -> u64 {
        self.records_left + self.peeked.is_some() as u64
    }

    /// Number of block transfers performed so far.
    pub fn chunks_read(&self) -> u64 {
        self.chunks
    }

    fn refill(&mut self) -> Result<()> {
        let want = (self.buf.len() as u64).min(self.bytes_left) as usize;
        if want == 0 {
            return Err(Error::Storage(format!(
                "unexpected end of {}",
                self.path.display()
            )));
        }
        self.file
            .read_exact(&mut self.buf[..want])
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::Storage(format!("backing file {} truncated", self.path.display()))
                }
                _ => Error::io(&self.path, e),
            })?;
        self.em.ledger().charge_read(self.tag, 1);
        self.bytes_left -= want as u64;
        self.filled = want;
        self.pos = 0;
        self.chunks += 1;
        Ok(())
    }

    fn read_record(&mut self) -> Result<Option<R>> {
        if self.records_left == 0 {
            return Ok(None);
        }
        if self.pos == self.filled {
            self.refill()?;
        }
        let r = if self.pos + R::SIZE <= self.filled {
            let r = R::read_le(&self.buf[self.pos..self.pos + R::SIZE]);
            self.pos += R::SIZE;
            r
        } else {
            let mut tmp = [0u8; 64];
            let head = self.filled - self.pos;
            tmp[..head].copy_from_slice(&self.buf[self.pos..self.filled]);
            self.refill()?;
            let rest = R::SIZE - head;
            tmp[head..R::SIZE].copy_from_slice(&self.buf[..rest]);
            self.pos = rest;
            R::read_le(&tmp[..R::SIZE])
        };
        self.records_left -= 1;
        Ok(Some(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<Option<R>> {
        if let Some(r) = self.peeked.take() {
            return Ok(Some(r));
        }
        self.read_record()
    }

    pub fn peek(&mut self) -> Result<Option<&R>> {
        if self.peeked.is_none() {
            self.peeked = self.read_record()?;
        }
        Ok(self.peeked.as_ref())
    }
}
