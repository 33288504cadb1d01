//! The mounted file system: session state, the file-descriptor table and the
//! user-visible file operations.
//!
//! Data blocks are written through to the image immediately; the superblock,
//! file map and inode table live in memory and reach the image on
//! [`Mount::sync`] or [`Mount::unmount`]. Every operation checks all its
//! preconditions (including free space) before mutating anything, so a
//! failed operation leaves both memory and image untouched.

use std::fmt;
use std::path::Path;

use crate::blockdev::BlockDevice;
use crate::error::{Error, Result};
use crate::inode::{self, AuditReport, BlockMap};
use crate::layout::{self, AuthRecord, DiskStructures, FileMapEntry, Geometry};
use crate::security::{self, Credentials};

pub const MAX_OPEN_FILES: usize = 32;

/// User-facing strings shown by the shell.
pub mod messages {
    pub const DISK_MOUNTED: &str = "Disk is mounted!!!";
    pub const DISK_UNMOUNTED: &str = "Disk is unmounted!!!";
    pub const FILE_CREATED: &str = "File Successfully Created :)";
    pub const FILE_DELETED: &str = "File Successfully Deleted :)";
    pub const FILE_WRITTEN: &str = "File Written Successfully.";
    pub const FILE_APPENDED: &str = "File Appended Successfully.";
    pub const LIST_FILES_HEADER: &str = "List of All files";
    pub const LIST_OPEN_HEADER: &str = "List of Opened files";

    pub fn opened(name: &str, fd: u32) -> String {
        format!("File {name} opened with file descriptor : {fd}")
    }

    pub fn closed(fd: u32) -> String {
        format!("File descriptor {fd} closed successfully.")
    }

    pub fn bytes_written(n: usize) -> String {
        format!("{n} bytes written.")
    }

    pub fn bytes_read(n: usize) -> String {
        format!("{n} bytes read.")
    }

    pub fn file_entry(name: &str, inode: u32) -> String {
        format!("{name} with inode : {inode}")
    }

    pub fn open_entry(fd: u32, name: &str, mode: super::OpenMode) -> String {
        format!("{name} with file descriptor : {fd} in {mode} mode")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpenMode {
    Read,
    Write,
    Append,
}

impl OpenMode {
    /// Menu numbering: 1 read, 2 write, 3 append.
    pub fn from_choice(choice: u32) -> Result<Self> {
        match choice {
            1 => Ok(OpenMode::Read),
            2 => Ok(OpenMode::Write),
            3 => Ok(OpenMode::Append),
            other => Err(Error::InvalidMode(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpenMode::Read => "read",
            OpenMode::Write => "write",
            OpenMode::Append => "append",
        }
    }
}

impl fmt::Display for OpenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenFile {
    pub fd: u32,
    pub inode: u32,
    pub name: String,
    pub mode: OpenMode,
}

/// Creates a new image at `path` and writes an empty file system onto it.
pub fn create_disk(path: impl AsRef<Path>, geometry: &Geometry) -> Result<()> {
    let mut dev = BlockDevice::create_image(path, geometry.block_size, geometry.disk_blocks)?;
    layout::format_disk(&mut dev, geometry)
}

#[derive(Debug)]
pub struct Mount {
    device: BlockDevice,
    structures: DiskStructures,
    fds: Vec<Option<OpenFile>>,
}

impl Mount {
    /// Loads an image. Disks with a login require matching credentials.
    #[allow(clippy::self_named_constructors)]
    pub fn mount(path: impl AsRef<Path>, credentials: Option<&Credentials>) -> Result<Self> {
        let mut device = BlockDevice::open_image(path)?;
        let structures = layout::load_structures(&mut device)?;
        let auth = &structures.superblock.auth;
        if auth.enabled {
            match credentials {
                None => return Err(Error::AuthRequired),
                Some(c) if !security::verify(auth, c) => return Err(Error::AuthFailed),
                Some(_) => {}
            }
        }
        Ok(Mount {
            device,
            structures,
            fds: vec![None; MAX_OPEN_FILES],
        })
    }

    pub fn geometry(&self) -> &Geometry {
        self.structures.geometry()
    }

    pub fn structures(&self) -> &DiskStructures {
        &self.structures
    }

    pub fn path(&self) -> &Path {
        self.device.path()
    }

    pub fn auth_enabled(&self) -> bool {
        self.structures.superblock.auth.enabled
    }

    pub(crate) fn set_auth_record(&mut self, record: AuthRecord) {
        self.structures.superblock.auth = record;
    }

    /// Writes all in-memory metadata to the image and flushes it.
    pub fn sync(&mut self) -> Result<()> {
        layout::store_structures(&mut self.device, &self.structures)?;
        self.device.flush()
    }

    /// Force-closes every descriptor, then syncs.
    pub fn unmount(mut self) -> Result<()> {
        self.fds.iter_mut().for_each(|slot| *slot = None);
        self.sync()
    }

    /// Runs the full free-list/ownership audit against the current state.
    pub fn audit(&mut self) -> Result<AuditReport> {
        inode::audit(&mut self.device, &self.structures)
    }

    fn lookup(&self, name: &str) -> Option<&FileMapEntry> {
        self.structures.file_map.iter().flatten().find(|e| e.name == name)
    }

    fn lookup_valid(&self, name: &str) -> Result<u32> {
        security::validate_filename(name)?;
        self.lookup(name)
            .map(|e| e.inode)
            .ok_or_else(|| Error::NotFound(name.to_owned()))
    }

    fn is_open(&self, inode: u32) -> bool {
        self.fds.iter().flatten().any(|f| f.inode == inode)
    }

    /// Inode of an existing file that has no open descriptor.
    pub(crate) fn closed_file_inode(&self, name: &str) -> Result<u32> {
        let inode = self.lookup_valid(name)?;
        if self.is_open(inode) {
            return Err(Error::FileOpen(name.to_owned()));
        }
        Ok(inode)
    }

    pub fn file_size(&self, name: &str) -> Result<u32> {
        let inode = self.lookup_valid(name)?;
        Ok(self.structures.inodes[inode as usize].file_size)
    }

    pub fn create_file(&mut self, name: &str) -> Result<u32> {
        security::validate_filename(name)?;
        if self.lookup(name).is_some() {
            return Err(Error::DuplicateName(name.to_owned()));
        }
        let sb = &mut self.structures.superblock;
        let inode = sb.inode_freelist.first_free().ok_or(Error::NoFreeInode)?;
        let slot = self
            .structures
            .file_map
            .iter()
            .position(Option::is_none)
            .ok_or(Error::MapFull)?;
        let block = sb.datablock_freelist.first_free().ok_or(Error::DiskFull)?;

        sb.inode_freelist.mark_used(inode);
        sb.datablock_freelist.mark_used(block);
        let record = &mut self.structures.inodes[inode];
        *record = Default::default();
        record.direct[0] = Some(block as u32);
        self.structures.file_map[slot] = Some(FileMapEntry {
            name: name.to_owned(),
            inode: inode as u32,
        });
        Ok(inode as u32)
    }

    pub fn delete_file(&mut self, name: &str) -> Result<()> {
        let inode = self.closed_file_inode(name)?;
        let geometry = *self.geometry();
        let sb = &mut self.structures.superblock;
        let mut map = BlockMap::new(&mut self.device, &geometry, &mut sb.datablock_freelist);
        map.free_chain(&mut self.structures.inodes[inode as usize])?;
        sb.inode_freelist.release(inode as usize)?;
        for slot in self.structures.file_map.iter_mut() {
            if slot.as_ref().is_some_and(|e| e.inode == inode) {
                *slot = None;
            }
        }
        Ok(())
    }

    pub fn open_file(&mut self, name: &str, mode: OpenMode) -> Result<u32> {
        let inode = self.lookup_valid(name)?;
        if self.is_open(inode) {
            return Err(Error::AlreadyOpen(name.to_owned()));
        }
        let fd = self.fds.iter().position(Option::is_none).ok_or(Error::FdTableFull)?;
        self.fds[fd] = Some(OpenFile {
            fd: fd as u32,
            inode,
            name: name.to_owned(),
            mode,
        });
        Ok(fd as u32)
    }

    fn open_fd(&self, fd: u32) -> Result<&OpenFile> {
        self.fds
            .get(fd as usize)
            .and_then(Option::as_ref)
            .ok_or(Error::BadFd(u64::from(fd)))
    }

    fn fd_in_mode(&self, fd: u32, mode: OpenMode) -> Result<u32> {
        let file = self.open_fd(fd)?;
        if file.mode != mode {
            return Err(Error::WrongMode {
                fd,
                required: mode.as_str(),
            });
        }
        Ok(file.inode)
    }

    pub fn close_file(&mut self, fd: u32) -> Result<()> {
        self.open_fd(fd)?;
        self.fds[fd as usize] = None;
        Ok(())
    }

    pub fn read_file(&mut self, fd: u32) -> Result<Vec<u8>> {
        let inode = self.fd_in_mode(fd, OpenMode::Read)?;
        self.inode_content(inode)
    }

    /// Replaces the whole content of the file with `data`.
    pub fn write_file(&mut self, fd: u32, data: &[u8]) -> Result<usize> {
        let inode = self.fd_in_mode(fd, OpenMode::Write)?;
        self.write_at(inode, 0, data)?;
        Ok(data.len())
    }

    pub fn append_file(&mut self, fd: u32, data: &[u8]) -> Result<usize> {
        let inode = self.fd_in_mode(fd, OpenMode::Append)?;
        let size = u64::from(self.structures.inodes[inode as usize].file_size);
        self.write_at(inode, size, data)?;
        Ok(data.len())
    }

    /// Mapped files sorted by name.
    pub fn list_files(&self) -> Vec<(String, u32)> {
        let mut files: Vec<_> = self
            .structures
            .file_map
            .iter()
            .flatten()
            .map(|e| (e.name.clone(), e.inode))
            .collect();
        files.sort();
        files
    }

    /// Open descriptors in ascending order.
    pub fn list_open_files(&self) -> Vec<OpenFile> {
        self.fds.iter().flatten().cloned().collect()
    }

    pub(crate) fn inode_content(&mut self, inode: u32) -> Result<Vec<u8>> {
        let geometry = *self.geometry();
        let record = &mut self.structures.inodes[inode as usize];
        let size = record.file_size as usize;
        let blocks = {
            let sb = &mut self.structures.superblock;
            let mut map = BlockMap::new(&mut self.device, &geometry, &mut sb.datablock_freelist);
            (0..size.div_ceil(geometry.block_size as usize) as u64)
                .map(|logical| map.resolve_block(record, logical, false))
                .collect::<Result<Vec<_>>>()?
        };
        let mut out = Vec::with_capacity(blocks.len() * geometry.block_size as usize);
        for block in blocks {
            out.extend_from_slice(&self.device.read_block(block)?);
        }
        out.truncate(size);
        Ok(out)
    }

    /// Overwrites the content of `inode` without changing its size.
    pub(crate) fn rewrite_in_place(&mut self, inode: u32, data: &[u8]) -> Result<()> {
        debug_assert_eq!(data.len(), self.structures.inodes[inode as usize].file_size as usize);
        self.write_at(inode, 0, data)
    }

    /// Makes the file content `old[..start] ++ data`. Capacity is checked
    /// before anything changes.
    fn write_at(&mut self, inode: u32, start: u64, data: &[u8]) -> Result<()> {
        let geometry = *self.geometry();
        let bs = u64::from(geometry.block_size);
        let old_size = u64::from(self.structures.inodes[inode as usize].file_size);
        let new_size = start + data.len() as u64;
        let needed = inode::blocks_required(old_size, new_size, &geometry)?;
        let sb = &mut self.structures.superblock;
        if needed > sb.datablock_freelist.count_free() as u64 {
            return Err(Error::DiskFull);
        }

        let record = &mut self.structures.inodes[inode as usize];
        let mut map = BlockMap::new(&mut self.device, &geometry, &mut sb.datablock_freelist);
        let keep = inode::blocks_for_size(new_size, geometry.block_size);
        if keep < inode::blocks_for_size(old_size, geometry.block_size) {
            map.truncate_blocks(record, keep)?;
        }
        let mut blocks = Vec::new();
        let mut pos = start;
        while pos < new_size {
            let logical = pos / bs;
            blocks.push((logical, map.resolve_block(record, logical, true)?));
            pos = (logical + 1) * bs;
        }
        record.file_size = new_size as u32;

        let mut buf = vec![0u8; bs as usize];
        let mut consumed = 0usize;
        for (logical, block) in blocks {
            let block_start = logical * bs;
            let within = start.saturating_sub(block_start) as usize;
            if within > 0 {
                self.device.read_block_into(block, &mut buf)?;
                buf[within..].fill(0);
            } else {
                buf.fill(0);
            }
            let take = (bs as usize - within).min(data.len() - consumed);
            buf[within..within + take].copy_from_slice(&data[consumed..consumed + take]);
            consumed += take;
            self.device.write_block(block, &buf)?;
        }
        debug_assert_eq!(consumed, data.len());
        Ok(())
    }
}
