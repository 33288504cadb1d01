//! A block-addressable disk emulated inside one host file.
//!
//! The host file is dense: its length is always `block_size * disk_blocks`
//! and every access reads or writes exactly one whole block. A device handle
//! has a single owner; opening the same image from two processes at once is
//! not supported.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layout;

pub const MIN_BLOCK_SIZE: u32 = 64;
pub const MIN_DISK_BLOCKS: u32 = 64;

#[derive(Debug)]
pub struct BlockDevice {
    file: File,
    path: PathBuf,
    block_size: u32,
    disk_blocks: u32,
}

pub(crate) fn check_device_bounds(block_size: u32, disk_blocks: u32) -> Result<()> {
    if block_size < MIN_BLOCK_SIZE || !block_size.is_multiple_of(4) {
        return Err(Error::BadGeometry(format!(
            "block size {block_size} must be a multiple of 4 and at least {MIN_BLOCK_SIZE}"
        )));
    }
    if block_size > i32::MAX as u32 {
        return Err(Error::BadGeometry(format!("block size {block_size} too large")));
    }
    if disk_blocks < MIN_DISK_BLOCKS {
        return Err(Error::BadGeometry(format!(
            "disk must have at least {MIN_DISK_BLOCKS} blocks, got {disk_blocks}"
        )));
    }
    if disk_blocks > i32::MAX as u32 {
        return Err(Error::BadGeometry(format!("disk block count {disk_blocks} too large")));
    }
    Ok(())
}

impl BlockDevice {
    /// Creates a new all-zero image, filling it one block-sized buffer at a
    /// time. Fails with `AlreadyExists` if anything already lives at `path`.
    pub fn create_image(path: impl AsRef<Path>, block_size: u32, disk_blocks: u32) -> Result<Self> {
        let path = path.as_ref();
        check_device_bounds(block_size, disk_blocks)?;
        if path.exists() {
            return Err(Error::AlreadyExists(path.display().to_string()));
        }
        let mut file = match OpenOptions::new().read(true).write(true).create_new(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(Error::AlreadyExists(path.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let zeros = vec![0u8; block_size as usize];
        for _ in 0..disk_blocks {
            file.write_all(&zeros)?;
        }
        file.sync_all()?;
        Ok(BlockDevice {
            file,
            path: path.to_path_buf(),
            block_size,
            disk_blocks,
        })
    }

    /// Opens an existing image. The block size and block count come from the
    /// image header and must agree with the host file length.
    pub fn open_image(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = match OpenOptions::new().read(true).write(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(Error::NotFound(path.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let len = file.metadata()?.len();
        let mut header = [0u8; layout::HEADER_PREFIX_LEN];
        if len < header.len() as u64 {
            return Err(Error::corrupt(format!("image is only {len} bytes long")));
        }
        file.read_exact(&mut header)?;
        let (block_size, disk_blocks) = layout::parse_header_prefix(&header)?;
        let expected = u64::from(block_size) * u64::from(disk_blocks);
        if len != expected {
            return Err(Error::corrupt(format!(
                "image length {len} does not match {disk_blocks} blocks of {block_size} bytes"
            )));
        }
        Ok(BlockDevice {
            file,
            path: path.to_path_buf(),
            block_size,
            disk_blocks,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    pub fn disk_blocks(&self) -> u32 {
        self.disk_blocks
    }

    fn seek_to(&mut self, index: u32) -> Result<()> {
        if index >= self.disk_blocks {
            return Err(Error::OutOfRange {
                index: u64::from(index),
                disk_blocks: self.disk_blocks,
            });
        }
        let offset = u64::from(index) * u64::from(self.block_size);
        self.file.seek(SeekFrom::Start(offset))?;
        Ok(())
    }

    pub fn read_block(&mut self, index: u32) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; self.block_size as usize];
        self.read_block_into(index, &mut buf)?;
        Ok(buf)
    }

    pub fn read_block_into(&mut self, index: u32, buf: &mut [u8]) -> Result<()> {
        if buf.len() != self.block_size as usize {
            return Err(Error::WrongLength {
                expected: self.block_size as usize,
                actual: buf.len(),
            });
        }
        self.seek_to(index)?;
        self.file.read_exact(buf)?;
        Ok(())
    }

    pub fn write_block(&mut self, index: u32, bytes: &[u8]) -> Result<()> {
        if bytes.len() != self.block_size as usize {
            return Err(Error::WrongLength {
                expected: self.block_size as usize,
                actual: bytes.len(),
            });
        }
        self.seek_to(index)?;
        self.file.write_all(bytes)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &tempfile::TempDir) -> BlockDevice {
        BlockDevice::create_image(dir.path().join("tiny"), 64, 1024).unwrap()
    }

    #[test]
    fn create_zero_fills_whole_image() {
        let dir = tempfile::tempdir().unwrap();
        let dev = tiny(&dir);
        let bytes = std::fs::read(dev.path()).unwrap();
        assert_eq!(bytes.len(), 65_536);
        assert!(bytes.iter().all(|&b| b == 0));
    }

    #[test]
    fn create_refuses_existing_path() {
        let dir = tempfile::tempdir().unwrap();
        let _dev = tiny(&dir);
        let err = BlockDevice::create_image(dir.path().join("tiny"), 64, 1024).unwrap_err();
        assert_eq!(err.code(), "AlreadyExists");
    }

    #[test]
    fn create_rejects_bad_geometry() {
        let dir = tempfile::tempdir().unwrap();
        for (bs, n) in [(32, 1024), (66, 1024), (64, 63), (0, 0)] {
            let err = BlockDevice::create_image(dir.path().join("x"), bs, n).unwrap_err();
            assert_eq!(err.code(), "BadGeometry", "{bs}/{n}");
        }
        assert!(!dir.path().join("x").exists());
    }

    #[test]
    fn block_io_bounds_and_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let mut dev = tiny(&dir);
        assert_eq!(dev.read_block(100).unwrap(), vec![0u8; 64]);
        dev.write_block(5, &[0xAB; 64]).unwrap();
        assert_eq!(dev.read_block(5).unwrap(), vec![0xAB; 64]);
        assert_eq!(dev.write_block(5, &[0; 10]).unwrap_err().code(), "WrongLength");
        assert_eq!(dev.write_block(1024, &[0; 64]).unwrap_err().code(), "OutOfRange");
        assert_eq!(dev.read_block(1024).unwrap_err().code(), "OutOfRange");
    }

    #[test]
    fn flush_is_idempotent_and_durable() {
        let dir = tempfile::tempdir().unwrap();
        let mut dev = tiny(&dir);
        let before = std::fs::read(dev.path()).unwrap();
        dev.flush().unwrap();
        dev.flush().unwrap();
        assert_eq!(std::fs::read(dev.path()).unwrap(), before);
        dev.write_block(7, &[3; 64]).unwrap();
        dev.flush().unwrap();
        let after = std::fs::read(dev.path()).unwrap();
        assert_eq!(&after[7 * 64..8 * 64], &[3; 64]);
    }

    #[test]
    fn open_rejects_missing_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = BlockDevice::open_image(dir.path().join("nope")).unwrap_err();
        assert_eq!(err.code(), "NotFound");
        let empty = dir.path().join("empty");
        std::fs::write(&empty, b"").unwrap();
        assert_eq!(BlockDevice::open_image(&empty).unwrap_err().code(), "CorruptImage");
    }
}
