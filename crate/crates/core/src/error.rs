use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the file system, from block I/O up to the
/// file-descriptor layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a disk named {0} already exists")]
    AlreadyExists(String),
    #[error("host I/O failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("block {index} out of range (disk has {disk_blocks} blocks)")]
    OutOfRange { index: u64, disk_blocks: u32 },
    #[error("buffer of {actual} bytes does not match block size {expected}")]
    WrongLength { expected: usize, actual: usize },
    #[error("file too large")]
    FileTooLarge,
    #[error("logical block {0} is not allocated")]
    NotAllocated(u64),
    #[error("not enough free data blocks")]
    DiskFull,
    #[error("free list exhausted")]
    Exhausted,
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("a file named {0} already exists")]
    DuplicateName(String),
    #[error("no free inode left")]
    NoFreeInode,
    #[error("file map is full")]
    MapFull,
    #[error("file {0} is open; close it first")]
    FileOpen(String),
    #[error("file {0} is already open")]
    AlreadyOpen(String),
    #[error("file descriptor table is full")]
    FdTableFull,
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("bad file descriptor: {0}")]
    BadFd(u64),
    #[error("file descriptor {fd} is not open in {required} mode")]
    WrongMode { fd: u32, required: &'static str },
    #[error("authentication required")]
    AuthRequired,
    #[error("authentication failed")]
    AuthFailed,
    #[error("invalid credentials: {0}")]
    InvalidCredentials(String),
    #[error("invalid choice: {0:?}")]
    InvalidChoice(String),
}

impl Error {
    /// Stable short name of the error class, independent of its payload.
    pub fn code(&self) -> &'static str {
        match self {
            Error::AlreadyExists(_) => "AlreadyExists",
            Error::IoFailure(_) => "IoFailure",
            Error::BadGeometry(_) => "BadGeometry",
            Error::NotFound(_) => "NotFound",
            Error::CorruptImage(_) => "CorruptImage",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::WrongLength { .. } => "WrongLength",
            Error::FileTooLarge => "FileTooLarge",
            Error::NotAllocated(_) => "NotAllocated",
            Error::DiskFull => "DiskFull",
            Error::Exhausted => "Exhausted",
            Error::InvalidName(_) => "InvalidName",
            Error::DuplicateName(_) => "DuplicateName",
            Error::NoFreeInode => "NoFreeInode",
            Error::MapFull => "MapFull",
            Error::FileOpen(_) => "FileOpen",
            Error::AlreadyOpen(_) => "AlreadyOpen",
            Error::FdTableFull => "FdTableFull",
            Error::InvalidMode(_) => "InvalidMode",
            Error::BadFd(_) => "BadFd",
            Error::WrongMode { .. } => "WrongMode",
            Error::AuthRequired => "AuthRequired",
            Error::AuthFailed => "AuthFailed",
            Error::InvalidCredentials(_) => "InvalidCredentials",
            Error::InvalidChoice(_) => "InvalidChoice",
        }
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptImage(msg.into())
    }
}
