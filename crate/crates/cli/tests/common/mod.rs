//! Reference model of the file system and a random operation driver.
//!
//! The model knows nothing about blocks beyond a census formula it derives
//! on its own: a file of `n` logical blocks costs `n` data blocks, one
//! single-indirect block past 10, and a root plus one table per started
//! group of `P` past `10 + P`.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use inodefs_core::{Geometry, Mount, OpenMode};
use rand::{Rng, RngCore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Create(String),
    Delete(String),
    Open(String, OpenMode),
    Close(u32),
    Read(u32),
    Write(u32, Vec<u8>),
    Append(u32, Vec<u8>),
    List,
    ListOpen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Unit,
    Inode(u32),
    Fd(u32),
    Bytes(Vec<u8>),
    Written(usize),
    Files(Vec<(String, u32)>),
    Open(Vec<(u32, String, OpenMode)>),
    Err(&'static str),
}

#[derive(Debug, Clone)]
struct ModelFile {
    inode: u32,
    data: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Model {
    block_size: u64,
    pointers: u64,
    inodes: u32,
    available: u64,
    max_fds: u32,
    files: BTreeMap<String, ModelFile>,
    fds: BTreeMap<u32, (String, OpenMode)>,
}

fn name_ok(name: &str) -> bool {
    (1..=30).contains(&name.len())
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b))
        && name != "."
        && name != ".."
}

impl Model {
    pub fn new(g: &Geometry) -> Self {
        Model {
            block_size: u64::from(g.block_size),
            pointers: u64::from(g.block_size / 4),
            inodes: g.no_of_inodes,
            available: u64::from(g.available_blocks),
            max_fds: 32,
            files: BTreeMap::new(),
            fds: BTreeMap::new(),
        }
    }

    fn census(&self, size: usize) -> u64 {
        let n = (size as u64).div_ceil(self.block_size).max(1);
        let p = self.pointers;
        let mut total = n;
        if n > 10 {
            total += 1;
        }
        if n > 10 + p {
            total += 1 + (n - 10 - p).div_ceil(p);
        }
        total
    }

    fn max_size(&self) -> usize {
        let p = self.pointers;
        ((10 + p + p * p) * self.block_size).min(i32::MAX as u64) as usize
    }

    pub fn used_blocks(&self) -> u64 {
        self.files.values().map(|f| self.census(f.data.len())).sum()
    }

    pub fn free_blocks(&self) -> u64 {
        self.available - self.used_blocks()
    }

    pub fn contents(&self) -> BTreeMap<String, Vec<u8>> {
        self.files.iter().map(|(k, v)| (k.clone(), v.data.clone())).collect()
    }

    pub fn close_all(&mut self) {
        self.fds.clear();
    }

    fn fd_mode(&self, fd: u32, mode: OpenMode) -> Result<String, &'static str> {
        match self.fds.get(&fd) {
            None => Err("BadFd"),
            Some((_, m)) if *m != mode => Err("WrongMode"),
            Some((name, _)) => Ok(name.clone()),
        }
    }

    fn resize(&mut self, name: &str, content: Vec<u8>) -> Result<(), &'static str> {
        if content.len() > self.max_size() {
            return Err("FileTooLarge");
        }
        let old = self.census(self.files[name].data.len());
        let new = self.census(content.len());
        if new > old && new - old > self.free_blocks() {
            return Err("DiskFull");
        }
        self.files.get_mut(name).unwrap().data = content;
        Ok(())
    }

    pub fn apply(&mut self, op: &Op) -> Outcome {
        match self.step(op) {
            Ok(o) => o,
            Err(code) => Outcome::Err(code),
        }
    }

    fn step(&mut self, op: &Op) -> Result<Outcome, &'static str> {
        match op {
            Op::Create(name) => {
                if !name_ok(name) {
                    return Err("InvalidName");
                }
                if self.files.contains_key(name) {
                    return Err("DuplicateName");
                }
                let inode = (0..self.inodes)
                    .find(|i| self.files.values().all(|f| f.inode != *i))
                    .ok_or("NoFreeInode")?;
                if self.free_blocks() == 0 {
                    return Err("DiskFull");
                }
                self.files.insert(name.clone(), ModelFile { inode, data: Vec::new() });
                Ok(Outcome::Inode(inode))
            }
            Op::Delete(name) => {
                if !name_ok(name) {
                    return Err("InvalidName");
                }
                if !self.files.contains_key(name) {
                    return Err("NotFound");
                }
                if self.fds.values().any(|(n, _)| n == name) {
                    return Err("FileOpen");
                }
                self.files.remove(name);
                Ok(Outcome::Unit)
            }
            Op::Open(name, mode) => {
                if !name_ok(name) {
                    return Err("InvalidName");
                }
                if !self.files.contains_key(name) {
                    return Err("NotFound");
                }
                if self.fds.values().any(|(n, _)| n == name) {
                    return Err("AlreadyOpen");
                }
                let fd = (0..self.max_fds).find(|fd| !self.fds.contains_key(fd)).ok_or("FdTableFull")?;
                self.fds.insert(fd, (name.clone(), *mode));
                Ok(Outcome::Fd(fd))
            }
            Op::Close(fd) => {
                self.fds.remove(fd).ok_or("BadFd")?;
                Ok(Outcome::Unit)
            }
            Op::Read(fd) => {
                let name = self.fd_mode(*fd, OpenMode::Read)?;
                Ok(Outcome::Bytes(self.files[&name].data.clone()))
            }
            Op::Write(fd, data) => {
                let name = self.fd_mode(*fd, OpenMode::Write)?;
                self.resize(&name, data.clone())?;
                Ok(Outcome::Written(data.len()))
            }
            Op::Append(fd, data) => {
                let name = self.fd_mode(*fd, OpenMode::Append)?;
                let mut content = self.files[&name].data.clone();
                content.extend_from_slice(data);
                self.resize(&name, content)?;
                Ok(Outcome::Written(data.len()))
            }
            Op::List => Ok(Outcome::Files(
                self.files.iter().map(|(n, f)| (n.clone(), f.inode)).collect(),
            )),
            Op::ListOpen => Ok(Outcome::Open(
                self.fds.iter().map(|(fd, (n, m))| (*fd, n.clone(), *m)).collect(),
            )),
        }
    }
}

pub fn apply_real(mount: &mut Mount, op: &Op) -> Outcome {
    let result = match op {
        Op::Create(name) => mount.create_file(name).map(Outcome::Inode),
        Op::Delete(name) => mount.delete_file(name).map(|()| Outcome::Unit),
        Op::Open(name, mode) => mount.open_file(name, *mode).map(Outcome::Fd),
        Op::Close(fd) => mount.close_file(*fd).map(|()| Outcome::Unit),
        Op::Read(fd) => mount.read_file(*fd).map(Outcome::Bytes),
        Op::Write(fd, data) => mount.write_file(*fd, data).map(Outcome::Written),
        Op::Append(fd, data) => mount.append_file(*fd, data).map(Outcome::Written),
        Op::List => Ok(Outcome::Files(mount.list_files())),
        Op::ListOpen => Ok(Outcome::Open(
            mount.list_open_files().into_iter().map(|f| (f.fd, f.name, f.mode)).collect(),
        )),
    };
    result.unwrap_or_else(|e| Outcome::Err(e.code()))
}

const NAMES: &[&str] = &[
    "a", "b.txt", "c.c", "main.cpp", "foo.c", "bar.c", "e-1", "f_2", "g", "h", "bad/name", "", "..", "x;rm",
];

fn random_data(rng: &mut impl RngCore) -> Vec<u8> {
    let len = match rng.random_range(0..100) {
        0..45 => rng.random_range(0..200),
        45..65 => rng.random_range(0..3000),
        65..97 => rng.random_range(5000..18_100),
        _ => rng.random_range(18_000..18_200),
    };
    let mut data = vec![0u8; len];
    rng.fill_bytes(&mut data);
    data
}

fn random_mode(rng: &mut impl RngCore) -> OpenMode {
    [OpenMode::Read, OpenMode::Write, OpenMode::Append][rng.random_range(0..3)]
}

pub fn random_op(rng: &mut impl RngCore) -> Op {
    let name = NAMES[rng.random_range(0..NAMES.len())].to_owned();
    let fd = if rng.random_range(0..20) == 0 { 99 } else { rng.random_range(0..3) };
    match rng.random_range(0..100) {
        0..15 => Op::Create(name),
        15..20 => Op::Delete(name),
        20..40 => Op::Open(name, random_mode(rng)),
        40..50 => Op::Close(fd),
        50..64 => Op::Read(fd),
        64..78 => Op::Write(fd, random_data(rng)),
        78..92 => Op::Append(fd, random_data(rng)),
        92..96 => Op::List,
        _ => Op::ListOpen,
    }
}

/// Generates `n` operations that mostly target live files and descriptors,
/// tracking state with a scratch model.
pub fn random_script(rng: &mut impl RngCore, n: usize, g: &Geometry) -> Vec<Op> {
    let mut scratch = Model::new(g);
    let mut ops = Vec::with_capacity(n);
    for _ in 0..n {
        let mut op = random_op(rng);
        let open: Vec<u32> = scratch.fds.keys().copied().collect();
        if !open.is_empty() && rng.random_range(0..10) < 8 {
            let fd = open[rng.random_range(0..open.len())];
            op = match op {
                Op::Close(_) => Op::Close(fd),
                Op::Read(_) => Op::Read(fd),
                Op::Write(_, d) => Op::Write(fd, d),
                Op::Append(_, d) => Op::Append(fd, d),
                other => other,
            };
        }
        scratch.apply(&op);
        ops.push(op);
    }
    ops
}

pub fn tiny_geometry() -> Geometry {
    Geometry::compute(64, 1024, 8).unwrap()
}

/// Checks that a mount holds exactly the model's files and contents.
pub fn assert_matches_model(mount: &mut Mount, model: &Model) -> Result<(), String> {
    let names: Vec<String> = mount.list_files().into_iter().map(|(n, _)| n).collect();
    let expected = model.contents();
    if names != expected.keys().cloned().collect::<Vec<_>>() {
        return Err(format!("file names differ: {names:?} vs {:?}", expected.keys()));
    }
    for (name, data) in &expected {
        let size = mount.file_size(name).map_err(|e| e.to_string())?;
        if size as usize != data.len() {
            return Err(format!("{name}: size {size} vs {}", data.len()));
        }
        let fd = mount.open_file(name, OpenMode::Read).map_err(|e| e.to_string())?;
        let content = mount.read_file(fd).map_err(|e| e.to_string())?;
        mount.close_file(fd).map_err(|e| e.to_string())?;
        if &content != data {
            return Err(format!("{name}: content differs"));
        }
    }
    Ok(())
}

fn outcome_kind(outcome: &Outcome) -> &'static str {
    match outcome {
        Outcome::Err(code) => code,
        _ => "ok",
    }
}

/// Runs `ops` against both the real file system and the model, auditing
/// after every step. Returns the final model and a tally of outcomes by kind.
pub fn run_equivalence(path: &Path, ops: &[Op], mut model: Model) -> Result<(Model, BTreeMap<&'static str, usize>), String> {
    let mut mount = Mount::mount(path, None).map_err(|e| e.to_string())?;
    let mut tally = BTreeMap::new();
    for (step, op) in ops.iter().enumerate() {
        let mutating = matches!(op, Op::Write(..) | Op::Append(..));
        let before = mutating.then(|| std::fs::read(path).unwrap());
        let expected = model.apply(op);
        let got = apply_real(&mut mount, op);
        if got != expected {
            return Err(format!("step {step}: {op:?}\n  real:  {got:?}\n  model: {expected:?}"));
        }
        *tally.entry(outcome_kind(&got)).or_insert(0) += 1;
        if let Outcome::Err(code) = got {
            if let Some(before) = before {
                if std::fs::read(path).unwrap() != before {
                    return Err(format!("step {step}: failed {code} changed the image"));
                }
            }
        }
        let report = mount.audit().map_err(|e| format!("step {step}: audit: {e}"))?;
        if report.data_blocks + report.pointer_blocks != model.used_blocks() {
            return Err(format!("step {step}: block census differs from model"));
        }
    }
    mount.unmount().map_err(|e| e.to_string())?;
    model.close_all();
    Ok((model, tally))
}
