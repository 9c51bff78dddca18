//! Block-structured, append-only backing for the sequentially accessed tape
//! streams.
//!
//! Entries are appended into fixed-size blocks. Once a block is full it is
//! sealed and becomes immutable; sealed blocks beyond the in-memory budget are
//! written to disk, oldest first, so the blocks consumed first by a reverse
//! sweep (the newest) stay resident. During interpretation the store is read
//! back strictly last-to-first, loading spilled blocks on demand and, if
//! enabled, prefetching the next-older block on a background thread.
//!
//! Block file layout (one file per block, `<stream>.<index>.blk`):
//!
//! ```text
//! offset 0   8 bytes   magic "ADTPBLK1"
//! offset 8   u64 LE    block index
//! offset 16  n × 8     raw little-endian entries
//! ```

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread::JoinHandle;

use tempfile::TempDir;
use thiserror::Error;

/// Bytes per stream entry.
pub const ENTRY_WIDTH: usize = 8;

/// Default number of entries per block.
pub const DEFAULT_BLOCK_ENTRIES: usize = 65536;

/// Environment variable naming the directory spilled blocks are written under.
pub const SPILL_DIR_ENV: &str = "ADTAPE_SPILL_DIR";

pub const BLOCK_MAGIC: [u8; 8] = *b"ADTPBLK1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid store configuration: {0}")]
    Config(String),
    #[error("store `{0}` is sealed; no further appends")]
    Sealed(&'static str),
    #[error("store `{0}` must be sealed before it is read back")]
    NotSealed(&'static str),
    #[error("cannot create spill directory under {path}: {source}")]
    SpillDir { path: PathBuf, source: io::Error },
    #[error("failed to write block {index} to {path}: {source}")]
    Write {
        index: usize,
        path: PathBuf,
        source: io::Error,
    },
    #[error("failed to read block {index} from {path}: {source}")]
    Read {
        index: usize,
        path: PathBuf,
        source: io::Error,
    },
    #[error("block {index} is corrupt: {reason}")]
    Corrupt { index: usize, reason: String },
}

/// A fixed-width (8-byte) stream entry.
pub trait Entry: Copy + Send + Sync + 'static {
    fn to_le(self) -> [u8; ENTRY_WIDTH];
    fn from_le(bytes: [u8; ENTRY_WIDTH]) -> Self;
}

impl Entry for i64 {
    fn to_le(self) -> [u8; ENTRY_WIDTH] {
        self.to_le_bytes()
    }
    fn from_le(bytes: [u8; ENTRY_WIDTH]) -> Self {
        i64::from_le_bytes(bytes)
    }
}

impl Entry for f64 {
    fn to_le(self) -> [u8; ENTRY_WIDTH] {
        self.to_le_bytes()
    }
    fn from_le(bytes: [u8; ENTRY_WIDTH]) -> Self {
        f64::from_le_bytes(bytes)
    }
}

/// Block size, memory budget and spill location for one store.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    pub block_entries: usize,
    /// Maximum number of blocks held in memory, counting the block currently
    /// being written. `None` keeps everything resident.
    pub budget_blocks: Option<usize>,
    /// Directory for spilled blocks. Falls back to `$ADTAPE_SPILL_DIR`, then
    /// the system temp directory.
    pub spill_dir: Option<PathBuf>,
    pub prefetch: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            block_entries: DEFAULT_BLOCK_ENTRIES,
            budget_blocks: None,
            spill_dir: None,
            prefetch: false,
        }
    }
}

impl StoreConfig {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_budget(block_entries: usize, budget_blocks: usize) -> Self {
        Self {
            block_entries,
            budget_blocks: Some(budget_blocks),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.block_entries == 0 {
            return Err(StoreError::Config(
                "block_entries must be at least 1".into(),
            ));
        }
        if self.budget_blocks == Some(0) {
            return Err(StoreError::Config(
                "budget_blocks must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn resolved_spill_dir(&self) -> PathBuf {
        self.spill_dir
            .clone()
            .or_else(|| std::env::var_os(SPILL_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(std::env::temp_dir)
    }
}

/// Counter snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub blocks_written: u64,
    pub blocks_read: u64,
    pub bytes_spilled: u64,
    pub peak_resident_bytes: u64,
}

enum Block<E> {
    Resident(Vec<E>),
    Spilled { path: PathBuf, len: usize },
}

/// Append-only stream of 8-byte entries in fixed-size blocks.
pub struct BlockStore<E: Entry> {
    stream: &'static str,
    config: StoreConfig,
    blocks: Vec<Block<E>>,
    open: Vec<E>,
    len: usize,
    sealed: bool,
    dir: Option<TempDir>,
    // blocks[..first_resident] are on disk
    first_resident: usize,
    blocks_written: u64,
    bytes_spilled: u64,
    blocks_read: AtomicU64,
    loaded: AtomicUsize,
    peak_blocks: AtomicUsize,
}

impl<E: Entry> std::fmt::Debug for BlockStore<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockStore")
            .field("stream", &self.stream)
            .field("len", &self.len)
            .field("blocks", &self.blocks.len())
            .field("spilled", &self.first_resident)
            .field("sealed", &self.sealed)
            .finish()
    }
}

impl<E: Entry> BlockStore<E> {
    pub fn new(stream: &'static str, config: StoreConfig) -> Result<Self, StoreError> {
        config.validate()?;
        Ok(Self {
            stream,
            open: Vec::new(),
            config,
            blocks: Vec::new(),
            len: 0,
            sealed: false,
            dir: None,
            first_resident: 0,
            blocks_written: 0,
            bytes_spilled: 0,
            blocks_read: AtomicU64::new(0),
            loaded: AtomicUsize::new(0),
            peak_blocks: AtomicUsize::new(0),
        })
    }

    pub fn stream(&self) -> &'static str {
        self.stream
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    /// Number of sealed blocks (the open block is not counted).
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn spilled_blocks(&self) -> usize {
        self.first_resident
    }

    /// Blocks currently held in memory by the store itself, including the
    /// open block.
    pub fn resident_blocks(&self) -> usize {
        self.blocks.len() - self.first_resident + usize::from(!self.open.is_empty())
    }

    #[inline]
    pub fn push(&mut self, entry: E) -> Result<(), StoreError> {
        if self.sealed {
            return Err(StoreError::Sealed(self.stream));
        }
        if self.open.capacity() == 0 {
            self.open.reserve_exact(self.config.block_entries);
            self.note_resident();
        }
        self.open.push(entry);
        self.len += 1;
        if self.open.len() == self.config.block_entries {
            self.close_open_block()?;
        }
        Ok(())
    }

    pub fn append(&mut self, entries: &[E]) -> Result<(), StoreError> {
        if self.sealed {
            return Err(StoreError::Sealed(self.stream));
        }
        for &e in entries {
            self.push(e)?;
        }
        Ok(())
    }

    /// Finish writing. A partially filled open block becomes the last block.
    pub fn seal(&mut self) -> Result<(), StoreError> {
        if self.sealed {
            return Ok(());
        }
        if !self.open.is_empty() {
            self.close_open_block()?;
        }
        self.sealed = true;
        Ok(())
    }

    fn close_open_block(&mut self) -> Result<(), StoreError> {
        let block = std::mem::take(&mut self.open);
        self.blocks.push(Block::Resident(block));
        self.blocks_written += 1;
        if let Some(budget) = self.config.budget_blocks {
            // the next open block counts against the budget as well
            while self.blocks.len() - self.first_resident + 1 > budget {
                self.spill_oldest()?;
            }
        }
        self.note_resident();
        Ok(())
    }

    fn spill_oldest(&mut self) -> Result<(), StoreError> {
        let index = self.first_resident;
        if self.dir.is_none() {
            let base = self.config.resolved_spill_dir();
            fs::create_dir_all(&base).map_err(|source| StoreError::SpillDir {
                path: base.clone(),
                source,
            })?;
            let dir = tempfile::Builder::new()
                .prefix(&format!("adtape-{}-", self.stream))
                .tempdir_in(&base)
                .map_err(|source| StoreError::SpillDir { path: base, source })?;
            self.dir = Some(dir);
        }
        let path = self
            .dir
            .as_ref()
            .expect("spill directory created above")
            .path()
            .join(format!("{}.{}.blk", self.stream, index));
        let Block::Resident(entries) = &self.blocks[index] else {
            unreachable!("blocks past first_resident are resident");
        };
        write_block_file(&path, index, entries).map_err(|source| StoreError::Write {
            index,
            path: path.clone(),
            source,
        })?;
        let len = entries.len();
        self.bytes_spilled += (len * ENTRY_WIDTH) as u64;
        self.blocks[index] = Block::Spilled { path, len };
        self.first_resident += 1;
        Ok(())
    }

    fn note_resident(&self) {
        let now = self.resident_blocks() + self.loaded.load(Ordering::Relaxed);
        self.peak_blocks.fetch_max(now, Ordering::Relaxed);
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            blocks_written: self.blocks_written,
            blocks_read: self.blocks_read.load(Ordering::Relaxed),
            bytes_spilled: self.bytes_spilled,
            peak_resident_bytes: (self.peak_blocks.load(Ordering::Relaxed)
                * self.config.block_entries
                * ENTRY_WIDTH) as u64,
        }
    }

    /// Path of a spilled block, if that block lives on disk.
    pub fn block_path(&self, index: usize) -> Option<&Path> {
        match self.blocks.get(index) {
            Some(Block::Spilled { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// Iterate all entries last to first. The store must be sealed.
    pub fn reverse_iter(&self) -> Result<ReverseEntries<'_, E>, StoreError> {
        if !self.sealed {
            return Err(StoreError::NotSealed(self.stream));
        }
        Ok(ReverseEntries {
            store: self,
            next_block: self.blocks.len(),
            current: Current::Empty,
            pos: 0,
            pending: None,
        })
    }

    /// Read the whole stream in logical order.
    pub fn to_vec(&self) -> Result<Vec<E>, StoreError> {
        let mut out = Vec::with_capacity(self.len);
        for (index, block) in self.blocks.iter().enumerate() {
            match block {
                Block::Resident(entries) => out.extend_from_slice(entries),
                Block::Spilled { path, len } => {
                    out.extend(read_block_file::<E>(path, index, *len)?)
                }
            }
        }
        out.extend_from_slice(&self.open);
        Ok(out)
    }

    fn loaded_guard(&self, entries: Vec<E>) -> Loaded<'_, E> {
        Loaded {
            entries,
            counter: &self.loaded,
        }
    }
}

fn write_block_file<E: Entry>(path: &Path, index: usize, entries: &[E]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&BLOCK_MAGIC)?;
    w.write_all(&(index as u64).to_le_bytes())?;
    for &e in entries {
        w.write_all(&e.to_le())?;
    }
    w.flush()
}

fn read_block_file<E: Entry>(path: &Path, index: usize, len: usize) -> Result<Vec<E>, StoreError> {
    let read_err = |source| StoreError::Read {
        index,
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + len * ENTRY_WIDTH);
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(read_err)?;
    if bytes.len() < HEADER_LEN || bytes[..8] != BLOCK_MAGIC {
        return Err(StoreError::Corrupt {
            index,
            reason: "bad magic".into(),
        });
    }
    let stored_index = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if stored_index != index as u64 {
        return Err(StoreError::Corrupt {
            index,
            reason: format!("header names block {stored_index}"),
        });
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != len * ENTRY_WIDTH {
        return Err(StoreError::Corrupt {
            index,
            reason: format!("expected {} entries, found {} bytes", len, body.len()),
        });
    }
    Ok(body
        .chunks_exact(ENTRY_WIDTH)
        .map(|c| E::from_le(c.try_into().expect("chunk of 8")))
        .collect())
}

/// A block loaded from disk; counts against the store's resident peak while
/// alive.
struct Loaded<'a, E> {
    entries: Vec<E>,
    counter: &'a AtomicUsize,
}

impl<E> Drop for Loaded<'_, E> {
    fn drop(&mut self) {
        self.counter.fetch_sub(1, Ordering::Relaxed);
    }
}

enum Current<'a, E> {
    Empty,
    Borrowed(&'a [E]),
    Owned(Loaded<'a, E>),
}

impl<E> Current<'_, E> {
    #[inline]
    fn slice(&self) -> &[E] {
        match self {
            Current::Empty => &[],
            Current::Borrowed(s) => s,
            Current::Owned(l) => &l.entries,
        }
    }
}

type Prefetch<E> = (usize, JoinHandle<Result<Vec<E>, StoreError>>);

/// Last-to-first reader over a sealed [`BlockStore`].
pub struct ReverseEntries<'a, E: Entry> {
    store: &'a BlockStore<E>,
    next_block: usize,
    current: Current<'a, E>,
    pos: usize,
    pending: Option<Prefetch<E>>,
}

impl<'a, E: Entry> ReverseEntries<'a, E> {
    /// Next entry in reverse order, `Ok(None)` once the stream is exhausted.
    #[inline]
    pub fn next_entry(&mut self) -> Result<Option<E>, StoreError> {
        if self.pos == 0 && !self.advance()? {
            return Ok(None);
        }
        self.pos -= 1;
        Ok(Some(self.current.slice()[self.pos]))
    }

    fn advance(&mut self) -> Result<bool, StoreError> {
        // release the consumed block before loading the next one
        self.current = Current::Empty;
        if self.next_block == 0 {
            return Ok(false);
        }
        let index = self.next_block - 1;
        self.next_block = index;
        let store = self.store;
        self.current = match &store.blocks[index] {
            Block::Resident(entries) => Current::Borrowed(entries),
            Block::Spilled { path, len } => {
                let entries = match self.pending.take() {
                    Some((i, handle)) if i == index => {
                        // counted as loaded when the prefetch was started
                        let loaded = handle.join().unwrap_or_else(|_| {
                            Err(StoreError::Corrupt {
                                index,
                                reason: "prefetch thread panicked".into(),
                            })
                        });
                        match loaded {
                            Ok(v) => v,
                            Err(e) => {
                                store.loaded.fetch_sub(1, Ordering::Relaxed);
                                return Err(e);
                            }
                        }
                    }
                    _ => {
                        store.loaded.fetch_add(1, Ordering::Relaxed);
                        match read_block_file(path, index, *len) {
                            Ok(v) => v,
                            Err(e) => {
                                store.loaded.fetch_sub(1, Ordering::Relaxed);
                                return Err(e);
                            }
                        }
                    }
                };
                store.note_resident();
                Current::Owned(store.loaded_guard(entries))
            }
        };
        store.blocks_read.fetch_add(1, Ordering::Relaxed);
        self.pos = self.current.slice().len();
        if store.config.prefetch && index > 0 {
            if let Block::Spilled { path, len } = &store.blocks[index - 1] {
                let (path, len, next) = (path.clone(), *len, index - 1);
                store.loaded.fetch_add(1, Ordering::Relaxed);
                store.note_resident();
                let handle = std::thread::spawn(move || read_block_file::<E>(&path, next, len));
                self.pending = Some((next, handle));
            }
        }
        Ok(true)
    }
}

impl<E: Entry> Iterator for ReverseEntries<'_, E> {
    type Item = Result<E, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_entry().transpose()
    }
}

impl<E: Entry> Drop for ReverseEntries<'_, E> {
    fn drop(&mut self) {
        if let Some((_, handle)) = self.pending.take() {
            let _ = handle.join();
            self.store.loaded.fetch_sub(1, Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(config: StoreConfig, n: usize) -> BlockStore<i64> {
        let mut store = BlockStore::new("s", config).unwrap();
        for i in 0..n {
            store.push(i as i64).unwrap();
        }
        store.seal().unwrap();
        store
    }

    #[test]
    fn spill_counts_follow_budget() {
        let mut store = BlockStore::<i64>::new("s", StoreConfig::with_budget(8, 1)).unwrap();
        store.append(&(0..21).collect::<Vec<_>>()).unwrap();
        assert_eq!(store.spilled_blocks(), 2);
        assert_eq!(store.resident_blocks(), 1);
        assert_eq!(store.stats().bytes_spilled, 16 * 8);
        store.seal().unwrap();
        assert_eq!(store.stats().blocks_written, 3);
    }

    #[test]
    fn empty_append_is_a_no_op() {
        let mut store = BlockStore::<f64>::new("d", StoreConfig::with_budget(4, 1)).unwrap();
        store.append(&[]).unwrap();
        assert_eq!(store.len(), 0);
        assert_eq!(store.stats(), StoreStats::default());
    }

    #[test]
    fn unbounded_budget_never_spills() {
        let store = filled(
            StoreConfig {
                block_entries: 4,
                ..StoreConfig::default()
            },
            100,
        );
        assert_eq!(store.stats().bytes_spilled, 0);
        assert_eq!(store.num_blocks(), 25);
    }

    #[test]
    fn reverse_of_intro_structure_starts_with_last_result() {
        let s: Vec<i64> = vec![
            0, 0, 1, 1, 1, 1, 2, 2, 0, 2, 3, 3, 1, 4, 4, 1, 5, 5, 0, 2, 6,
        ];
        let mut store = BlockStore::new("s", StoreConfig::with_budget(8, 1)).unwrap();
        store.append(&s).unwrap();
        store.seal().unwrap();
        let rev: Vec<i64> = store.reverse_iter().unwrap().map(Result::unwrap).collect();
        assert_eq!(&rev[..3], &[6, 2, 0]);
        assert_eq!(store.stats().blocks_read, store.stats().blocks_written);
    }

    #[test]
    fn single_entry_store() {
        let store = filled(StoreConfig::with_budget(8, 1), 1);
        let rev: Vec<i64> = store.reverse_iter().unwrap().map(Result::unwrap).collect();
        assert_eq!(rev, vec![0]);
    }

    #[test]
    fn fresh_store_has_zero_counters() {
        let store = BlockStore::<i64>::new("s", StoreConfig::default()).unwrap();
        assert_eq!(store.stats(), StoreStats::default());
    }

    #[test]
    fn unsealed_store_cannot_be_reversed() {
        let store = BlockStore::<i64>::new("s", StoreConfig::default()).unwrap();
        assert!(matches!(
            store.reverse_iter(),
            Err(StoreError::NotSealed("s"))
        ));
    }

    #[test]
    fn sealed_store_rejects_appends() {
        let mut store = filled(StoreConfig::default(), 3);
        assert!(matches!(store.push(1), Err(StoreError::Sealed(_))));
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(BlockStore::<i64>::new("s", StoreConfig::with_budget(8, 0)).is_err());
    }

    #[test]
    fn prefetch_reads_the_same_entries() {
        let mut config = StoreConfig::with_budget(5, 1);
        config.prefetch = true;
        let store = filled(config, 53);
        let rev: Vec<i64> = store.reverse_iter().unwrap().map(Result::unwrap).collect();
        assert_eq!(rev, (0..53).rev().collect::<Vec<_>>());
        // current + one prefetched block + the store's own resident block
        assert!(store.stats().peak_resident_bytes <= (1 + 2) * 5 * 8);
    }

    #[test]
    fn corrupt_block_is_reported_with_index() {
        let store = filled(StoreConfig::with_budget(4, 1), 12);
        let path = store.block_path(1).unwrap().to_path_buf();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 7;
        fs::write(&path, bytes).unwrap();
        let err = store.reverse_iter().unwrap().find_map(Result::err).unwrap();
        assert!(matches!(err, StoreError::Corrupt { index: 1, .. }), "{err}");
    }

    #[test]
    fn missing_block_is_reported_with_index() {
        let store = filled(StoreConfig::with_budget(4, 1), 12);
        fs::remove_file(store.block_path(0).unwrap()).unwrap();
        let err = store.to_vec().unwrap_err();
        assert!(matches!(err, StoreError::Read { index: 0, .. }), "{err}");
    }

    #[test]
    fn block_file_layout() {
        let store = filled(StoreConfig::with_budget(2, 1), 5);
        let bytes = fs::read(store.block_path(1).unwrap()).unwrap();
        assert_eq!(&bytes[..8], b"ADTPBLK1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(i64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(i64::from_le_bytes(bytes[24..32].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 32);
        let name = store.block_path(1).unwrap().file_name().unwrap();
        assert_eq!(name, "s.1.blk");
    }
}
