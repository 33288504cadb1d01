use std::fs::File;
use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use inodefs_cli::{Session, ShellConfig};
use inodefs_core::layout::{DEFAULT_BLOCK_SIZE, DEFAULT_DISK_BLOCKS, DEFAULT_INODES};
use inodefs_core::Geometry;

/// Menu-driven shell for single-file inode disk images.
#[derive(Debug, Parser)]
#[command(name = "inodefs", version)]
struct Args {
    /// Read answers from this file instead of the terminal; input lines are
    /// echoed into the output.
    #[arg(long, value_name = "PATH")]
    script: Option<PathBuf>,

    /// Block size for newly created disks.
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: u32,

    /// Block count for newly created disks.
    #[arg(long, default_value_t = DEFAULT_DISK_BLOCKS)]
    disk_blocks: u32,

    /// Inode count for newly created disks.
    #[arg(long, default_value_t = DEFAULT_INODES)]
    inodes: u32,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let geometry = match Geometry::compute(args.block_size, args.disk_blocks, args.inodes) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("inodefs: {e}");
            return ExitCode::from(1);
        }
    };
    let stdout = io::stdout().lock();
    let code = match args.script {
        Some(path) => match File::open(&path) {
            Ok(file) => {
                let config = ShellConfig { geometry, echo: true };
                Session::new(BufReader::new(file), stdout, config).run()
            }
            Err(e) => {
                eprintln!("inodefs: cannot open script {}: {e}", path.display());
                1
            }
        },
        None => {
            let config = ShellConfig { geometry, echo: false };
            Session::new(io::stdin().lock(), stdout, config).run()
        }
    };
    ExitCode::from(code as u8)
}
