//! Inodes and their block pointer chains.
//!
//! An inode addresses its data through 10 direct pointers, one single
//! indirect pointer (a block of `P = block_size / 4` data pointers) and one
//! double indirect pointer (a block of `P` pointers to such blocks), for at
//! most `10 + P + P²` logical blocks. Chains are always filled in logical
//! order and never contain holes.

use std::collections::HashSet;

use crate::blockdev::BlockDevice;
use crate::error::{Error, Result};
use crate::layout::{decode_ptr, encode_ptr, read_i32, DiskStructures, Geometry};

pub const DIRECT_POINTERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inode {
    pub file_size: u32,
    pub direct: [Option<u32>; DIRECT_POINTERS],
    pub single_indirect: Option<u32>,
    pub double_indirect: Option<u32>,
}

impl Default for Inode {
    fn default() -> Self {
        Inode {
            file_size: 0,
            direct: [None; DIRECT_POINTERS],
            single_indirect: None,
            double_indirect: None,
        }
    }
}

impl Inode {
    /// The non-null pointers stored in the inode itself.
    pub fn pointers(&self) -> impl Iterator<Item = u32> + '_ {
        self.direct
            .iter()
            .chain([&self.single_indirect, &self.double_indirect])
            .filter_map(|p| *p)
    }
}

/// One in-use flag per inode or per disk block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeList {
    used: Vec<bool>,
}

impl FreeList {
    pub fn new(len: usize) -> Self {
        FreeList { used: vec![false; len] }
    }

    pub fn len(&self) -> usize {
        self.used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.used.is_empty()
    }

    pub fn is_used(&self, index: usize) -> bool {
        self.used[index]
    }

    pub fn mark_used(&mut self, index: usize) {
        self.used[index] = true;
    }

    /// Marks `index` free; freeing an already free entry means two owners
    /// claimed the same block.
    pub fn release(&mut self, index: usize) -> Result<()> {
        match self.used.get_mut(index) {
            Some(slot) if *slot => {
                *slot = false;
                Ok(())
            }
            _ => Err(Error::corrupt(format!("release of free or unknown entry {index}"))),
        }
    }

    /// Takes the lowest free entry.
    pub fn allocate_lowest(&mut self) -> Result<usize> {
        let index = self.first_free().ok_or(Error::Exhausted)?;
        self.used[index] = true;
        Ok(index)
    }

    pub fn first_free(&self) -> Option<usize> {
        self.used.iter().position(|&u| !u)
    }

    pub fn count_used(&self) -> usize {
        self.used.iter().filter(|&&u| u).count()
    }

    pub fn count_free(&self) -> usize {
        self.len() - self.count_used()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.used.iter().copied()
    }
}

impl FromIterator<bool> for FreeList {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        FreeList {
            used: iter.into_iter().collect(),
        }
    }
}

/// Where a logical block's pointer lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPosition {
    Direct(usize),
    Single(usize),
    Double { outer: usize, inner: usize },
}

pub fn max_logical_blocks(geometry: &Geometry) -> u64 {
    let p = u64::from(geometry.pointers_per_block);
    DIRECT_POINTERS as u64 + p + p * p
}

/// Largest representable file: bounded both by the pointer tree and by the
/// signed 32-bit size field.
pub fn max_file_size(geometry: &Geometry) -> u64 {
    (max_logical_blocks(geometry) * u64::from(geometry.block_size)).min(i32::MAX as u64)
}

pub fn locate(logical: u64, geometry: &Geometry) -> Result<BlockPosition> {
    let p = u64::from(geometry.pointers_per_block);
    if logical >= max_logical_blocks(geometry) {
        return Err(Error::FileTooLarge);
    }
    Ok(if logical < DIRECT_POINTERS as u64 {
        BlockPosition::Direct(logical as usize)
    } else if logical < DIRECT_POINTERS as u64 + p {
        BlockPosition::Single((logical - DIRECT_POINTERS as u64) as usize)
    } else {
        let k = logical - DIRECT_POINTERS as u64 - p;
        BlockPosition::Double {
            outer: (k / p) as usize,
            inner: (k % p) as usize,
        }
    })
}

/// Logical blocks owned by a file of `size` bytes; every file owns at least one.
pub fn blocks_for_size(size: u64, block_size: u32) -> u64 {
    size.div_ceil(u64::from(block_size)).max(1)
}

/// Pointer blocks needed to address `logical_blocks` data blocks.
pub fn pointer_blocks_for(logical_blocks: u64, pointers_per_block: u32) -> u64 {
    let p = u64::from(pointers_per_block);
    let direct = DIRECT_POINTERS as u64;
    let mut count = 0;
    if logical_blocks > direct {
        count += 1;
    }
    if logical_blocks > direct + p {
        count += 1 + (logical_blocks - direct - p).div_ceil(p);
    }
    count
}

/// Data plus pointer blocks held by a file of `size` bytes.
pub fn chain_blocks_for_size(size: u64, geometry: &Geometry) -> u64 {
    let n = blocks_for_size(size, geometry.block_size);
    n + pointer_blocks_for(n, geometry.pointers_per_block)
}

/// Additional blocks (data and pointer) needed to grow a file from
/// `old_size` to `new_size`; zero when the file does not grow.
pub fn blocks_required(old_size: u64, new_size: u64, geometry: &Geometry) -> Result<u64> {
    let max = max_file_size(geometry);
    if old_size > max || new_size > max {
        return Err(Error::FileTooLarge);
    }
    let old = chain_blocks_for_size(old_size, geometry);
    let new = chain_blocks_for_size(new_size, geometry);
    Ok(new.saturating_sub(old))
}

/// Census of one inode's chain, in logical order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chain {
    pub data: Vec<u32>,
    pub pointer_blocks: Vec<u32>,
}

/// Pointer-chain operations for one mounted device.
pub struct BlockMap<'a> {
    dev: &'a mut BlockDevice,
    geometry: &'a Geometry,
    freelist: &'a mut FreeList,
}

impl<'a> BlockMap<'a> {
    pub fn new(dev: &'a mut BlockDevice, geometry: &'a Geometry, freelist: &'a mut FreeList) -> Self {
        BlockMap { dev, geometry, freelist }
    }

    fn check(&self, ptr: u32) -> Result<u32> {
        if self.geometry.is_data_block(ptr) {
            Ok(ptr)
        } else {
            Err(Error::corrupt(format!("pointer {ptr} outside the data area")))
        }
    }

    fn allocate(&mut self) -> Result<u32> {
        match self.freelist.allocate_lowest() {
            Ok(b) => Ok(b as u32),
            Err(Error::Exhausted) => Err(Error::DiskFull),
            Err(e) => Err(e),
        }
    }

    fn release(&mut self, ptr: u32) -> Result<()> {
        self.check(ptr)?;
        self.freelist.release(ptr as usize)
    }

    pub fn read_pointer_block(&mut self, block: u32) -> Result<Vec<Option<u32>>> {
        let raw = self.dev.read_block(block)?;
        (0..raw.len())
            .step_by(4)
            .map(|off| match decode_ptr(read_i32(&raw, off))? {
                Some(p) => self.check(p).map(Some),
                None => Ok(None),
            })
            .collect()
    }

    fn write_pointer_block(&mut self, block: u32, entries: &[Option<u32>]) -> Result<()> {
        let raw: Vec<u8> = entries.iter().flat_map(|&p| encode_ptr(p).to_le_bytes()).collect();
        self.dev.write_block(block, &raw)
    }

    fn new_pointer_block(&mut self) -> Result<u32> {
        let block = self.allocate()?;
        let entries = vec![None; self.geometry.pointers_per_block as usize];
        self.write_pointer_block(block, &entries)?;
        Ok(block)
    }

    /// Returns the block in `slot`, allocating one (data or pointer block)
    /// when it is empty and `allocate` is set.
    fn ensure(&mut self, slot: &mut Option<u32>, logical: u64, allocate: bool, pointer: bool) -> Result<u32> {
        match *slot {
            Some(p) => self.check(p),
            None if !allocate => Err(Error::NotAllocated(logical)),
            None => {
                let block = if pointer { self.new_pointer_block()? } else { self.allocate()? };
                *slot = Some(block);
                Ok(block)
            }
        }
    }

    /// Like `ensure`, but for entry `index` of the pointer block `table`.
    fn ensure_entry(&mut self, table: u32, index: usize, logical: u64, allocate: bool, pointer: bool) -> Result<u32> {
        let mut entries = self.read_pointer_block(table)?;
        let was_empty = entries[index].is_none();
        let block = self.ensure(&mut entries[index], logical, allocate, pointer)?;
        if was_empty {
            self.write_pointer_block(table, &entries)?;
        }
        Ok(block)
    }

    /// Maps a logical block of `inode` to its physical block, optionally
    /// allocating missing pointer and data blocks along the way.
    pub fn resolve_block(&mut self, inode: &mut Inode, logical: u64, allocate: bool) -> Result<u32> {
        match locate(logical, self.geometry)? {
            BlockPosition::Direct(i) => self.ensure(&mut inode.direct[i], logical, allocate, false),
            BlockPosition::Single(i) => {
                let table = self.ensure(&mut inode.single_indirect, logical, allocate, true)?;
                self.ensure_entry(table, i, logical, allocate, false)
            }
            BlockPosition::Double { outer, inner } => {
                let root = self.ensure(&mut inode.double_indirect, logical, allocate, true)?;
                let table = self.ensure_entry(root, outer, logical, allocate, true)?;
                self.ensure_entry(table, inner, logical, allocate, false)
            }
        }
    }

    /// Frees every data block at logical index `keep` and beyond, plus any
    /// pointer block left empty. Returns the number of blocks released.
    pub fn truncate_blocks(&mut self, inode: &mut Inode, keep: u64) -> Result<u64> {
        let p = u64::from(self.geometry.pointers_per_block);
        let direct = DIRECT_POINTERS as u64;
        let mut freed = 0;

        for slot in inode.direct.iter_mut().skip(keep.min(direct) as usize) {
            if let Some(block) = slot.take() {
                self.release(block)?;
                freed += 1;
            }
        }

        if let Some(table) = inode.single_indirect {
            let first = keep.saturating_sub(direct).min(p) as usize;
            let mut entries = self.read_pointer_block(table)?;
            let mut changed = false;
            for block in entries[first..].iter_mut().filter_map(Option::take) {
                self.release(block)?;
                freed += 1;
                changed = true;
            }
            if keep <= direct {
                self.release(table)?;
                inode.single_indirect = None;
                freed += 1;
            } else if changed {
                self.write_pointer_block(table, &entries)?;
            }
        }

        if let Some(root) = inode.double_indirect {
            let base = direct + p;
            let mut tables = self.read_pointer_block(root)?;
            let mut root_changed = false;
            for (outer, slot) in tables.iter_mut().enumerate() {
                let Some(table) = *slot else { continue };
                let start = base + outer as u64 * p;
                if keep >= start + p {
                    continue;
                }
                let first = keep.saturating_sub(start) as usize;
                let mut entries = self.read_pointer_block(table)?;
                let mut changed = false;
                for block in entries[first..].iter_mut().filter_map(Option::take) {
                    self.release(block)?;
                    freed += 1;
                    changed = true;
                }
                if first == 0 {
                    self.release(table)?;
                    *slot = None;
                    root_changed = true;
                    freed += 1;
                } else if changed {
                    self.write_pointer_block(table, &entries)?;
                }
            }
            if keep <= base {
                self.release(root)?;
                inode.double_indirect = None;
                freed += 1;
            } else if root_changed {
                self.write_pointer_block(root, &tables)?;
            }
        }
        Ok(freed)
    }

    /// Releases the whole chain of `inode` and blanks it.
    pub fn free_chain(&mut self, inode: &mut Inode) -> Result<u64> {
        let freed = self.truncate_blocks(inode, 0)?;
        *inode = Inode::default();
        Ok(freed)
    }

    /// Walks the chain of `inode` in logical order, rejecting holes.
    pub fn chain(&mut self, inode: &Inode) -> Result<Chain> {
        let mut chain = Chain::default();
        let mut ended = false;
        let mut push = |chain: &mut Chain, ptr: Option<u32>| -> Result<()> {
            match (ptr, ended) {
                (Some(_), true) => Err(Error::corrupt("hole in block chain")),
                (Some(p), false) => {
                    chain.data.push(p);
                    Ok(())
                }
                (None, _) => {
                    ended = true;
                    Ok(())
                }
            }
        };
        for &p in &inode.direct {
            push(&mut chain, p.map(|p| self.check(p)).transpose()?)?;
        }
        match inode.single_indirect {
            Some(table) => {
                chain.pointer_blocks.push(self.check(table)?);
                for p in self.read_pointer_block(table)? {
                    push(&mut chain, p)?;
                }
            }
            None => push(&mut chain, None)?,
        }
        if let Some(root) = inode.double_indirect {
            chain.pointer_blocks.push(self.check(root)?);
            for table in self.read_pointer_block(root)? {
                match table {
                    Some(table) => {
                        chain.pointer_blocks.push(table);
                        for p in self.read_pointer_block(table)? {
                            push(&mut chain, p)?;
                        }
                    }
                    None => {
                        for _ in 0..self.geometry.pointers_per_block {
                            push(&mut chain, None)?;
                        }
                    }
                }
            }
        }
        if chain.pointer_blocks.len() as u64 != pointer_blocks_for(chain.data.len() as u64, self.geometry.pointers_per_block) {
            return Err(Error::corrupt("pointer blocks do not match data block count"));
        }
        Ok(chain)
    }
}

/// Totals from a successful [`audit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditReport {
    pub data_blocks: u64,
    pub pointer_blocks: u64,
}

/// Full-walk consistency check: every in-use inode owns exactly the blocks
/// its size implies, no block has two owners, and the data-block free list
/// marks exactly the metadata blocks plus all owned blocks.
pub fn audit(dev: &mut BlockDevice, structures: &DiskStructures) -> Result<AuditReport> {
    let geometry = *structures.geometry();
    let mut freelist = structures.superblock.datablock_freelist.clone();
    let mut map = BlockMap::new(dev, &geometry, &mut freelist);
    let mut owned = HashSet::new();
    let mut report = AuditReport {
        data_blocks: 0,
        pointer_blocks: 0,
    };
    for (i, inode) in structures.inodes.iter().enumerate() {
        if !structures.superblock.inode_freelist.is_used(i) {
            continue;
        }
        let chain = map.chain(inode)?;
        let expected = blocks_for_size(u64::from(inode.file_size), geometry.block_size);
        if chain.data.len() as u64 != expected {
            return Err(Error::corrupt(format!(
                "inode {i} of size {} owns {} data blocks, expected {expected}",
                inode.file_size,
                chain.data.len()
            )));
        }
        for &b in chain.data.iter().chain(&chain.pointer_blocks) {
            if !owned.insert(b) {
                return Err(Error::corrupt(format!("block {b} has two owners")));
            }
        }
        report.data_blocks += chain.data.len() as u64;
        report.pointer_blocks += chain.pointer_blocks.len() as u64;
    }
    for b in 0..geometry.disk_blocks {
        let expect_used = b < geometry.data_start || owned.contains(&b);
        if structures.superblock.datablock_freelist.is_used(b as usize) != expect_used {
            return Err(Error::corrupt(format!("free list disagrees with ownership at block {b}")));
        }
    }
    Ok(report)
}
