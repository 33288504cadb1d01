//! A single-file virtual file system built on inodes.
//!
//! One host file emulates a block device holding a superblock, a
//! file-to-inode map, an inode table and data blocks. Files are addressed
//! through 10 direct pointers, one single indirect and one double indirect
//! pointer.
//!
//! ```no_run
//! use inodefs_core::{create_disk, Geometry, Mount, OpenMode};
//!
//! # fn main() -> inodefs_core::Result<()> {
//! create_disk("disk.img", &Geometry::default_disk())?;
//! let mut fs = Mount::mount("disk.img", None)?;
//! fs.create_file("notes.txt")?;
//! let fd = fs.open_file("notes.txt", OpenMode::Write)?;
//! fs.write_file(fd, b"hello\n")?;
//! fs.unmount()?;
//! # Ok(())
//! # }
//! ```

pub mod blockdev;
pub mod error;
pub mod fscore;
pub mod inode;
pub mod layout;
pub mod security;

pub use blockdev::BlockDevice;
pub use error::{Error, Result};
pub use fscore::{create_disk, messages, Mount, OpenFile, OpenMode, MAX_OPEN_FILES};
pub use inode::{max_logical_blocks, AuditReport, FreeList, Inode};
pub use layout::{AuthRecord, DiskStructures, FileMapEntry, Geometry, Superblock};
pub use security::Credentials;
