//! Bit-exact on-disk format.
//!
//! An image is laid out as consecutive block-aligned regions:
//!
//! | blocks                      | contents                         |
//! |-----------------------------|----------------------------------|
//! | `[0, sb_blocks)`            | superblock                       |
//! | `[sb_blocks, inode_start)`  | file-to-inode map                |
//! | `[inode_start, data_start)` | inode table                      |
//! | `[data_start, disk_blocks)` | data and pointer blocks          |
//!
//! All integers are little-endian. Superblock byte map:
//!
//! | offset | size | field                                    |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `"VFSD"`                           |
//! | 4      | 4    | version (u32, = 1)                       |
//! | 8..44  | 4×9  | block_size, disk_blocks, no_of_inodes, sb_blocks, map_blocks, inode_start, inode_blocks, data_start, available_blocks (i32) |
//! | 44     | 1    | auth enabled (0/1)                       |
//! | 45     | 32   | username, zero padded                    |
//! | 77     | 8    | salt (u64)                               |
//! | 85     | 8    | password hash (u64)                      |
//! | 93     | 4    | KDF iterations (u32)                     |
//! | 97     | N    | inode free list, one byte per inode      |
//! | 97+N   | D    | data block free list, one byte per block |
//!
//! Inodes are 52 bytes: file size then 12 pointers, 13 × i32. Map entries are
//! 36 bytes: a 32-byte zero-padded name then the inode index as i32, -1 when
//! the slot is free. Pointers use -1 for "no block".

use std::collections::HashSet;

use crate::blockdev::{check_device_bounds, BlockDevice};
use crate::error::{Error, Result};
use crate::inode::{FreeList, Inode, DIRECT_POINTERS};
use crate::security;

pub const MAGIC: [u8; 4] = *b"VFSD";
pub const VERSION: u32 = 1;
/// Magic, version, block size and block count: enough to open the device.
pub const HEADER_PREFIX_LEN: usize = 16;
pub const SUPERBLOCK_FIXED_LEN: usize = 97;
pub const INODE_SIZE: usize = 52;
pub const MAP_ENTRY_SIZE: usize = 36;
pub const NAME_FIELD_LEN: usize = 32;
pub const MAX_NAME_LEN: usize = 30;
pub const AUTH_ITERATIONS: u32 = 10_000;
pub const NULL_PTR: i32 = -1;

pub const DEFAULT_BLOCK_SIZE: u32 = 4096;
pub const DEFAULT_DISK_BLOCKS: u32 = 4096;
pub const DEFAULT_INODES: u32 = 128;

/// Disk shape: the three primary constants plus everything derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub block_size: u32,
    pub disk_blocks: u32,
    pub no_of_inodes: u32,
    pub sb_blocks: u32,
    pub map_blocks: u32,
    pub inode_start: u32,
    pub inode_blocks: u32,
    pub data_start: u32,
    pub available_blocks: u32,
    pub pointers_per_block: u32,
}

fn ceil_div(n: u64, d: u64) -> u64 {
    n.div_ceil(d)
}

fn narrow(v: u64, what: &str) -> Result<u32> {
    i32::try_from(v)
        .map(|v| v as u32)
        .map_err(|_| Error::BadGeometry(format!("{what} ({v}) exceeds the 32-bit signed range")))
}

impl Geometry {
    pub fn compute(block_size: u32, disk_blocks: u32, no_of_inodes: u32) -> Result<Self> {
        check_device_bounds(block_size, disk_blocks)?;
        if no_of_inodes == 0 || no_of_inodes > i32::MAX as u32 {
            return Err(Error::BadGeometry(format!("invalid inode count {no_of_inodes}")));
        }
        let bs = u64::from(block_size);
        let inodes = u64::from(no_of_inodes);
        let sb_bytes = superblock_len(no_of_inodes, disk_blocks) as u64;
        let sb_blocks = ceil_div(sb_bytes, bs);
        let map_blocks = ceil_div(inodes * MAP_ENTRY_SIZE as u64, bs);
        let inode_blocks = ceil_div(inodes * INODE_SIZE as u64, bs);
        let inode_start = sb_blocks + map_blocks;
        let data_start = inode_start + inode_blocks;
        if data_start >= u64::from(disk_blocks) {
            return Err(Error::BadGeometry(format!(
                "metadata needs {data_start} blocks, leaving no data blocks on a {disk_blocks}-block disk"
            )));
        }
        Ok(Geometry {
            block_size,
            disk_blocks,
            no_of_inodes,
            sb_blocks: narrow(sb_blocks, "superblock blocks")?,
            map_blocks: narrow(map_blocks, "map blocks")?,
            inode_start: narrow(inode_start, "inode start")?,
            inode_blocks: narrow(inode_blocks, "inode blocks")?,
            data_start: narrow(data_start, "data start")?,
            available_blocks: disk_blocks - data_start as u32,
            pointers_per_block: block_size / 4,
        })
    }

    pub fn default_disk() -> Self {
        Self::compute(DEFAULT_BLOCK_SIZE, DEFAULT_DISK_BLOCKS, DEFAULT_INODES)
            .expect("default geometry is valid")
    }

    pub fn image_len(&self) -> u64 {
        u64::from(self.block_size) * u64::from(self.disk_blocks)
    }

    pub fn superblock_len(&self) -> usize {
        superblock_len(self.no_of_inodes, self.disk_blocks)
    }

    pub fn is_data_block(&self, block: u32) -> bool {
        block >= self.data_start && block < self.disk_blocks
    }
}

pub fn superblock_len(no_of_inodes: u32, disk_blocks: u32) -> usize {
    SUPERBLOCK_FIXED_LEN + no_of_inodes as usize + disk_blocks as usize
}

pub fn encode_ptr(ptr: Option<u32>) -> i32 {
    match ptr {
        Some(p) => p as i32,
        None => NULL_PTR,
    }
}

pub fn decode_ptr(raw: i32) -> Result<Option<u32>> {
    match raw {
        NULL_PTR => Ok(None),
        p if p >= 0 => Ok(Some(p as u32)),
        p => Err(Error::corrupt(format!("invalid block pointer {p}"))),
    }
}

pub(crate) fn read_i32(bytes: &[u8], offset: usize) -> i32 {
    i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read_u64(bytes: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap())
}

fn read_bool(byte: u8, what: &str) -> Result<bool> {
    match byte {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(Error::corrupt(format!("{what} holds non-boolean byte {b}"))),
    }
}

fn encode_name(name: &str) -> [u8; NAME_FIELD_LEN] {
    let mut field = [0u8; NAME_FIELD_LEN];
    field[..name.len()].copy_from_slice(name.as_bytes());
    field
}

fn decode_name(field: &[u8], what: &str) -> Result<String> {
    let len = field.iter().position(|&b| b == 0).unwrap_or(field.len());
    if field[len..].iter().any(|&b| b != 0) {
        return Err(Error::corrupt(format!("{what} has bytes after its terminator")));
    }
    let name = std::str::from_utf8(&field[..len])
        .map_err(|_| Error::corrupt(format!("{what} is not valid text")))?;
    if name.is_empty() {
        return Ok(String::new());
    }
    security::validate_filename(name)
        .map(str::to_owned)
        .map_err(|e| Error::corrupt(format!("{what}: {e}")))
}

/// Checks magic and version and returns `(block_size, disk_blocks)`.
pub fn parse_header_prefix(bytes: &[u8]) -> Result<(u32, u32)> {
    if bytes.len() < HEADER_PREFIX_LEN {
        return Err(Error::corrupt("superblock header truncated"));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::corrupt("bad magic"));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::corrupt(format!("unsupported version {version}")));
    }
    let block_size = read_i32(bytes, 8);
    let disk_blocks = read_i32(bytes, 12);
    if block_size <= 0 || disk_blocks <= 0 {
        return Err(Error::corrupt("non-positive geometry in header"));
    }
    check_device_bounds(block_size as u32, disk_blocks as u32)
        .map_err(|e| Error::corrupt(e.to_string()))?;
    Ok((block_size as u32, disk_blocks as u32))
}

/// Login record kept in the superblock.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuthRecord {
    pub enabled: bool,
    pub username: String,
    pub salt: u64,
    pub password_hash: u64,
    pub iterations: u32,
}

impl AuthRecord {
    pub fn disabled() -> Self {
        Self::default()
    }

    fn validate(&self) -> Result<()> {
        if self.enabled {
            if self.username.is_empty() {
                return Err(Error::corrupt("auth enabled without a username"));
            }
            if self.iterations != AUTH_ITERATIONS {
                return Err(Error::corrupt(format!("unexpected KDF iterations {}", self.iterations)));
            }
        } else if !self.username.is_empty() || self.password_hash != 0 {
            return Err(Error::corrupt("auth disabled but credentials present"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superblock {
    pub geometry: Geometry,
    pub auth: AuthRecord,
    pub inode_freelist: FreeList,
    pub datablock_freelist: FreeList,
}

impl Superblock {
    /// Superblock of an empty file system: metadata blocks in use, all else free.
    pub fn new(geometry: Geometry) -> Self {
        let mut datablock_freelist = FreeList::new(geometry.disk_blocks as usize);
        for block in 0..geometry.data_start as usize {
            datablock_freelist.mark_used(block);
        }
        Superblock {
            geometry,
            auth: AuthRecord::disabled(),
            inode_freelist: FreeList::new(geometry.no_of_inodes as usize),
            datablock_freelist,
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(g.superblock_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            g.block_size,
            g.disk_blocks,
            g.no_of_inodes,
            g.sb_blocks,
            g.map_blocks,
            g.inode_start,
            g.inode_blocks,
            g.data_start,
            g.available_blocks,
        ] {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
        out.push(self.auth.enabled as u8);
        out.extend_from_slice(&encode_name(&self.auth.username));
        out.extend_from_slice(&self.auth.salt.to_le_bytes());
        out.extend_from_slice(&self.auth.password_hash.to_le_bytes());
        out.extend_from_slice(&self.auth.iterations.to_le_bytes());
        out.extend(self.inode_freelist.iter().map(u8::from));
        out.extend(self.datablock_freelist.iter().map(u8::from));
        debug_assert_eq!(out.len(), g.superblock_len());
        out
    }

    /// Parses a superblock; `bytes` may carry trailing block padding.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let (block_size, disk_blocks) = parse_header_prefix(bytes)?;
        if bytes.len() < SUPERBLOCK_FIXED_LEN {
            return Err(Error::corrupt("superblock truncated"));
        }
        let no_of_inodes = read_i32(bytes, 16);
        if no_of_inodes <= 0 {
            return Err(Error::corrupt(format!("invalid inode count {no_of_inodes}")));
        }
        let geometry = Geometry::compute(block_size, disk_blocks, no_of_inodes as u32)
            .map_err(|e| Error::corrupt(e.to_string()))?;
        let stored = [20, 24, 28, 32, 36, 40].map(|off| read_i32(bytes, off) as u32);
        let derived = [
            geometry.sb_blocks,
            geometry.map_blocks,
            geometry.inode_start,
            geometry.inode_blocks,
            geometry.data_start,
            geometry.available_blocks,
        ];
        if stored != derived {
            return Err(Error::corrupt(format!(
                "stored derived geometry {stored:?} disagrees with recomputed {derived:?}"
            )));
        }
        if bytes.len() < geometry.superblock_len() {
            return Err(Error::corrupt("superblock free lists truncated"));
        }

        let auth = AuthRecord {
            enabled: read_bool(bytes[44], "auth flag")?,
            username: decode_name(&bytes[45..77], "username")?,
            salt: read_u64(bytes, 77),
            password_hash: read_u64(bytes, 85),
            iterations: read_u32(bytes, 93),
        };
        auth.validate()?;

        let inodes_end = SUPERBLOCK_FIXED_LEN + no_of_inodes as usize;
        let inode_freelist = bytes[SUPERBLOCK_FIXED_LEN..inodes_end]
            .iter()
            .map(|&b| read_bool(b, "inode free list"))
            .collect::<Result<FreeList>>()?;
        let datablock_freelist = bytes[inodes_end..inodes_end + disk_blocks as usize]
            .iter()
            .map(|&b| read_bool(b, "data block free list"))
            .collect::<Result<FreeList>>()?;
        if (0..geometry.data_start as usize).any(|i| !datablock_freelist.is_used(i)) {
            return Err(Error::corrupt("metadata block marked free"));
        }
        Ok(Superblock {
            geometry,
            auth,
            inode_freelist,
            datablock_freelist,
        })
    }
}

/// One used slot of the file-to-inode map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileMapEntry {
    pub name: String,
    pub inode: u32,
}

/// The map has one slot per inode; `None` marks a free slot.
pub type FileMap = Vec<Option<FileMapEntry>>;

pub fn serialize_file_map(map: &[Option<FileMapEntry>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(map.len() * MAP_ENTRY_SIZE);
    for slot in map {
        match slot {
            Some(entry) => {
                out.extend_from_slice(&encode_name(&entry.name));
                out.extend_from_slice(&(entry.inode as i32).to_le_bytes());
            }
            None => {
                out.extend_from_slice(&[0u8; NAME_FIELD_LEN]);
                out.extend_from_slice(&NULL_PTR.to_le_bytes());
            }
        }
    }
    out
}

pub fn deserialize_file_map(bytes: &[u8], no_of_inodes: u32) -> Result<FileMap> {
    if bytes.len() != no_of_inodes as usize * MAP_ENTRY_SIZE {
        return Err(Error::corrupt(format!(
            "file map is {} bytes, expected {} entries",
            bytes.len(),
            no_of_inodes
        )));
    }
    let mut names = HashSet::new();
    let mut inodes = HashSet::new();
    bytes
        .chunks_exact(MAP_ENTRY_SIZE)
        .enumerate()
        .map(|(slot, raw)| {
            let name = decode_name(&raw[..NAME_FIELD_LEN], "file map name")?;
            match read_i32(raw, NAME_FIELD_LEN) {
                NULL_PTR if name.is_empty() => Ok(None),
                NULL_PTR => Err(Error::corrupt(format!("free map slot {slot} carries a name"))),
                i if i < 0 || i as u32 >= no_of_inodes => {
                    Err(Error::corrupt(format!("map slot {slot} names inode {i}")))
                }
                _ if name.is_empty() => Err(Error::corrupt(format!("map slot {slot} has no name"))),
                i => {
                    if !names.insert(name.clone()) || !inodes.insert(i) {
                        return Err(Error::corrupt(format!("map slot {slot} duplicates {name}")));
                    }
                    Ok(Some(FileMapEntry { name, inode: i as u32 }))
                }
            }
        })
        .collect()
}

pub fn serialize_inode(inode: &Inode) -> [u8; INODE_SIZE] {
    let mut out = [0u8; INODE_SIZE];
    let words = std::iter::once(inode.file_size as i32)
        .chain(inode.direct.iter().map(|&p| encode_ptr(p)))
        .chain([encode_ptr(inode.single_indirect), encode_ptr(inode.double_indirect)]);
    for (chunk, word) in out.chunks_exact_mut(4).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    out
}

pub fn deserialize_inode(bytes: &[u8]) -> Result<Inode> {
    if bytes.len() != INODE_SIZE {
        return Err(Error::corrupt(format!("inode record is {} bytes", bytes.len())));
    }
    let size = read_i32(bytes, 0);
    if size < 0 {
        return Err(Error::corrupt(format!("negative file size {size}")));
    }
    let mut direct = [None; DIRECT_POINTERS];
    for (i, slot) in direct.iter_mut().enumerate() {
        *slot = decode_ptr(read_i32(bytes, 4 + 4 * i))?;
    }
    Ok(Inode {
        file_size: size as u32,
        direct,
        single_indirect: decode_ptr(read_i32(bytes, 44))?,
        double_indirect: decode_ptr(read_i32(bytes, 48))?,
    })
}

pub fn serialize_inode_table(inodes: &[Inode]) -> Vec<u8> {
    inodes.iter().flat_map(serialize_inode).collect()
}

pub fn deserialize_inode_table(bytes: &[u8], no_of_inodes: u32) -> Result<Vec<Inode>> {
    if bytes.len() != no_of_inodes as usize * INODE_SIZE {
        return Err(Error::corrupt(format!(
            "inode table is {} bytes, expected {} inodes",
            bytes.len(),
            no_of_inodes
        )));
    }
    bytes.chunks_exact(INODE_SIZE).map(deserialize_inode).collect()
}

/// In-memory copies of all metadata regions of an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiskStructures {
    pub superblock: Superblock,
    pub inodes: Vec<Inode>,
    pub file_map: FileMap,
}

impl DiskStructures {
    pub fn empty(geometry: Geometry) -> Self {
        DiskStructures {
            superblock: Superblock::new(geometry),
            inodes: vec![Inode::default(); geometry.no_of_inodes as usize],
            file_map: vec![None; geometry.no_of_inodes as usize],
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.superblock.geometry
    }

    /// Cross-checks the three regions against each other.
    fn validate(&self) -> Result<()> {
        let g = self.geometry();
        let mut referenced = vec![false; g.no_of_inodes as usize];
        for entry in self.file_map.iter().flatten() {
            referenced[entry.inode as usize] = true;
        }
        for (i, inode) in self.inodes.iter().enumerate() {
            let used = self.superblock.inode_freelist.is_used(i);
            if used != referenced[i] {
                return Err(Error::corrupt(format!("inode {i} free-list state disagrees with the file map")));
            }
            if used {
                if inode.direct[0].is_none() {
                    return Err(Error::corrupt(format!("in-use inode {i} owns no data block")));
                }
                if let Some(p) = inode.pointers().find(|&p| !g.is_data_block(p)) {
                    return Err(Error::corrupt(format!("inode {i} points outside the data area: {p}")));
                }
            } else if *inode != Inode::default() {
                return Err(Error::corrupt(format!("free inode {i} is not blank")));
            }
        }
        Ok(())
    }
}

fn write_region(dev: &mut BlockDevice, start: u32, blocks: u32, bytes: &[u8]) -> Result<()> {
    let bs = dev.block_size() as usize;
    debug_assert!(bytes.len() <= blocks as usize * bs);
    let mut buf = vec![0u8; bs];
    for i in 0..blocks as usize {
        buf.fill(0);
        let from = (i * bs).min(bytes.len());
        let to = ((i + 1) * bs).min(bytes.len());
        buf[..to - from].copy_from_slice(&bytes[from..to]);
        dev.write_block(start + i as u32, &buf)?;
    }
    Ok(())
}

fn read_region(dev: &mut BlockDevice, start: u32, blocks: u32) -> Result<Vec<u8>> {
    let bs = dev.block_size() as usize;
    let mut out = vec![0u8; blocks as usize * bs];
    for (i, chunk) in out.chunks_exact_mut(bs).enumerate() {
        dev.read_block_into(start + i as u32, chunk)?;
    }
    Ok(out)
}

fn check_device_matches(dev: &BlockDevice, g: &Geometry) -> Result<()> {
    if dev.block_size() != g.block_size || dev.disk_blocks() != g.disk_blocks {
        return Err(Error::BadGeometry(format!(
            "device is {}×{} but geometry is {}×{}",
            dev.disk_blocks(),
            dev.block_size(),
            g.disk_blocks,
            g.block_size
        )));
    }
    Ok(())
}

/// Writes superblock, file map and inode table to their regions.
pub fn store_structures(dev: &mut BlockDevice, structures: &DiskStructures) -> Result<()> {
    let g = *structures.geometry();
    check_device_matches(dev, &g)?;
    write_region(dev, 0, g.sb_blocks, &structures.superblock.serialize())?;
    write_region(dev, g.sb_blocks, g.map_blocks, &serialize_file_map(&structures.file_map))?;
    write_region(dev, g.inode_start, g.inode_blocks, &serialize_inode_table(&structures.inodes))?;
    Ok(())
}

/// Writes the metadata of an empty file system onto a freshly created device.
pub fn format_disk(dev: &mut BlockDevice, geometry: &Geometry) -> Result<()> {
    store_structures(dev, &DiskStructures::empty(*geometry))?;
    dev.flush()
}

pub fn load_structures(dev: &mut BlockDevice) -> Result<DiskStructures> {
    let first = dev.read_block(0)?;
    let (block_size, disk_blocks) = parse_header_prefix(&first)?;
    let no_of_inodes = read_i32(&first, 16);
    if no_of_inodes <= 0 {
        return Err(Error::corrupt(format!("invalid inode count {no_of_inodes}")));
    }
    let g = Geometry::compute(block_size, disk_blocks, no_of_inodes as u32)
        .map_err(|e| Error::corrupt(e.to_string()))?;
    check_device_matches(dev, &g).map_err(|e| Error::corrupt(e.to_string()))?;

    let superblock = Superblock::deserialize(&read_region(dev, 0, g.sb_blocks)?)?;
    let map_bytes = read_region(dev, g.sb_blocks, g.map_blocks)?;
    let file_map = deserialize_file_map(&map_bytes[..g.no_of_inodes as usize * MAP_ENTRY_SIZE], g.no_of_inodes)?;
    let inode_bytes = read_region(dev, g.inode_start, g.inode_blocks)?;
    let inodes = deserialize_inode_table(&inode_bytes[..g.no_of_inodes as usize * INODE_SIZE], g.no_of_inodes)?;
    let structures = DiskStructures {
        superblock,
        inodes,
        file_map,
    };
    structures.validate()?;
    Ok(structures)
}
