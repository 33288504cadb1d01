//! Menu-driven shell over an inodefs disk image.
//!
//! The shell reads one answer per line. At the top level it offers
//! creating, mounting and exiting; once a disk is mounted it offers the file
//! operations until the disk is unmounted. In script mode every line read
//! is echoed to the output, so a transcript shows prompts and answers the
//! way a terminal session would.

use std::io::{self, BufRead, Write};

use inodefs_core::security::{parse_menu_choice, parse_number, validate_disk_path};
use inodefs_core::{create_disk, messages, Credentials, Error, Geometry, Mount, OpenMode};

pub const TOP_MENU: &str = "1 : create disk\n2 : mount disk\n9 : exit\n";

pub const FILE_MENU: &str = "=====\n\
1 : create file\n\
2 : open file\n\
3 : read file\n\
4 : write file\n\
5 : append file\n\
6 : close file\n\
7 : delete file\n\
8 : list of files\n\
9 : list of opened files\n\
10: unmount\n\
=====\n";

pub const MODE_MENU: &str = "1 : read\n2 : write\n3 : append\n";

pub const SENTINEL: &[u8] = b"EOF";

const TOP_CHOICES: &[u32] = &[1, 2, 9];
// 11 (set password) and 12 (encrypt/decrypt) are accepted but not listed.
const FILE_CHOICES: &[u32] = &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
const MODE_CHOICES: &[u32] = &[1, 2, 3];

pub const INVALID_CHOICE: &str = "Invalid choice, please try again.";

/// Text entered for a write or append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextEntry {
    pub content: Vec<u8>,
    /// False when input ended before the sentinel line.
    pub terminated: bool,
}

/// Joins entry lines with `\n`, adding one trailing newline when there is
/// at least one line.
pub fn join_entry_lines(lines: &[Vec<u8>]) -> Vec<u8> {
    let mut content = lines.join(&b'\n');
    if !lines.is_empty() {
        content.push(b'\n');
    }
    content
}

fn strip_terminator(mut line: Vec<u8>) -> Vec<u8> {
    if line.last() == Some(&b'\n') {
        line.pop();
        if line.last() == Some(&b'\r') {
            line.pop();
        }
    }
    line
}

/// Reads lines until one that is exactly `EOF`; the sentinel is dropped.
pub fn read_text_until_sentinel<R: BufRead>(input: &mut R) -> io::Result<TextEntry> {
    let mut lines = Vec::new();
    loop {
        let mut raw = Vec::new();
        if input.read_until(b'\n', &mut raw)? == 0 {
            return Ok(TextEntry {
                content: join_entry_lines(&lines),
                terminated: false,
            });
        }
        let line = strip_terminator(raw);
        if line == SENTINEL {
            return Ok(TextEntry {
                content: join_entry_lines(&lines),
                terminated: true,
            });
        }
        lines.push(line);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShellConfig {
    /// Geometry used by "create disk".
    pub geometry: Geometry,
    /// Echo every input line to the output (script mode).
    pub echo: bool,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig {
            geometry: Geometry::default_disk(),
            echo: false,
        }
    }
}

/// Result of one menu step.
enum Flow {
    Continue,
    Exit,
}

pub struct Session<R, W> {
    input: R,
    output: W,
    config: ShellConfig,
    mount: Option<Mount>,
}

impl<R: BufRead, W: Write> Session<R, W> {
    pub fn new(input: R, output: W, config: ShellConfig) -> Self {
        Session {
            input,
            output,
            config,
            mount: None,
        }
    }

    pub fn into_output(self) -> W {
        self.output
    }

    /// Runs until "exit" or end of input. Returns the process exit code.
    pub fn run(&mut self) -> i32 {
        match self.run_loop() {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(self.output, "Error: {e}");
                let _ = self.output.flush();
                1
            }
        }
    }

    fn run_loop(&mut self) -> io::Result<()> {
        loop {
            let flow = if self.mount.is_some() {
                self.file_menu()?
            } else {
                self.top_menu()?
            };
            if let Flow::Exit = flow {
                break;
            }
        }
        if let Some(mount) = self.mount.take() {
            mount.unmount().map_err(io::Error::other)?;
        }
        self.output.flush()
    }

    fn line(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.output, "{text}")
    }

    fn error(&mut self, err: &Error) -> io::Result<()> {
        writeln!(self.output, "Error: {err}")
    }

    fn read_raw_line(&mut self) -> io::Result<Option<Vec<u8>>> {
        let mut raw = Vec::new();
        if self.input.read_until(b'\n', &mut raw)? == 0 {
            return Ok(None);
        }
        let line = strip_terminator(raw);
        if self.config.echo {
            self.output.write_all(&line)?;
            self.output.write_all(b"\n")?;
        }
        Ok(Some(line))
    }

    /// Prints `prompt` on its own line and reads the answer.
    fn ask(&mut self, prompt: &str) -> io::Result<Option<String>> {
        self.line(prompt)?;
        self.output.flush()?;
        Ok(self
            .read_raw_line()?
            .map(|l| String::from_utf8_lossy(&l).into_owned()))
    }

    fn ask_fd(&mut self, prompt: &str) -> io::Result<Option<Result<u32, Error>>> {
        Ok(self.ask(prompt)?.map(|answer| parse_number(&answer)))
    }

    fn read_entry(&mut self) -> io::Result<TextEntry> {
        let mut lines = Vec::new();
        loop {
            match self.read_raw_line()? {
                None => {
                    self.line("(end of input reached before EOF)")?;
                    return Ok(TextEntry {
                        content: join_entry_lines(&lines),
                        terminated: false,
                    });
                }
                Some(line) if line == SENTINEL => {
                    return Ok(TextEntry {
                        content: join_entry_lines(&lines),
                        terminated: true,
                    })
                }
                Some(line) => lines.push(line),
            }
        }
    }

    fn top_menu(&mut self) -> io::Result<Flow> {
        self.output.write_all(TOP_MENU.as_bytes())?;
        self.output.flush()?;
        let Some(answer) = self.read_raw_line()? else {
            return Ok(Flow::Exit);
        };
        let choice = match parse_menu_choice(&String::from_utf8_lossy(&answer), TOP_CHOICES) {
            Ok(c) => c,
            Err(_) => {
                self.line(INVALID_CHOICE)?;
                return Ok(Flow::Continue);
            }
        };
        match choice {
            1 => self.create_disk(),
            2 => self.mount_disk(),
            _ => Ok(Flow::Exit),
        }
    }

    fn create_disk(&mut self) -> io::Result<Flow> {
        let Some(path) = self.ask("Enter diskname :")? else {
            return Ok(Flow::Exit);
        };
        let result = validate_disk_path(&path).and_then(|p| create_disk(p, &self.config.geometry));
        match result {
            Ok(()) => self.line(&format!("Disk {path} created successfully."))?,
            Err(e) => self.error(&e)?,
        }
        Ok(Flow::Continue)
    }

    fn mount_disk(&mut self) -> io::Result<Flow> {
        let Some(path) = self.ask("Enter diskname :")? else {
            return Ok(Flow::Exit);
        };
        if let Err(e) = validate_disk_path(&path) {
            self.error(&e)?;
            return Ok(Flow::Continue);
        }
        let result = match Mount::mount(&path, None) {
            Err(Error::AuthRequired) => {
                let Some(credentials) = self.ask_credentials("Enter username :", "Enter password :")? else {
                    return Ok(Flow::Exit);
                };
                credentials.and_then(|c| Mount::mount(&path, Some(&c)))
            }
            other => other,
        };
        match result {
            Ok(mount) => {
                self.mount = Some(mount);
                self.line(messages::DISK_MOUNTED)?;
            }
            Err(e) => self.error(&e)?,
        }
        Ok(Flow::Continue)
    }

    fn ask_credentials(&mut self, user_prompt: &str, pass_prompt: &str) -> io::Result<Option<Result<Credentials, Error>>> {
        let Some(user) = self.ask(user_prompt)? else {
            return Ok(None);
        };
        let Some(pass) = self.ask(pass_prompt)? else {
            return Ok(None);
        };
        Ok(Some(Credentials::new(user, pass)))
    }

    fn mount_mut(&mut self) -> &mut Mount {
        self.mount.as_mut().expect("file menu requires a mounted disk")
    }

    fn report<T>(&mut self, result: Result<T, Error>, on_ok: impl FnOnce(T) -> Vec<String>) -> io::Result<()> {
        match result {
            Ok(v) => {
                for line in on_ok(v) {
                    self.line(&line)?;
                }
                Ok(())
            }
            Err(e) => self.error(&e),
        }
    }

    fn file_menu(&mut self) -> io::Result<Flow> {
        self.output.write_all(FILE_MENU.as_bytes())?;
        self.output.flush()?;
        let Some(answer) = self.read_raw_line()? else {
            return Ok(Flow::Exit);
        };
        let choice = match parse_menu_choice(&String::from_utf8_lossy(&answer), FILE_CHOICES) {
            Ok(c) => c,
            Err(_) => {
                self.line(INVALID_CHOICE)?;
                return Ok(Flow::Continue);
            }
        };
        let flow = match choice {
            1 => self.create_file()?,
            2 => self.open_file()?,
            3 => self.read_file()?,
            4 => self.write_file(false)?,
            5 => self.write_file(true)?,
            6 => self.close_file()?,
            7 => self.delete_file()?,
            8 => {
                let files = self.mount_mut().list_files();
                self.line(messages::LIST_FILES_HEADER)?;
                for (name, inode) in files {
                    self.line(&messages::file_entry(&name, inode))?;
                }
                Some(())
            }
            9 => {
                let open = self.mount_mut().list_open_files();
                self.line(messages::LIST_OPEN_HEADER)?;
                for f in open {
                    self.line(&messages::open_entry(f.fd, &f.name, f.mode))?;
                }
                Some(())
            }
            10 => {
                let mount = self.mount.take().expect("mounted");
                match mount.unmount() {
                    Ok(()) => self.line(messages::DISK_UNMOUNTED)?,
                    Err(e) => self.error(&e)?,
                }
                Some(())
            }
            11 => self.set_password()?,
            _ => self.crypt_file()?,
        };
        Ok(match flow {
            Some(()) => Flow::Continue,
            None => Flow::Exit,
        })
    }

    // The per-operation helpers return `None` when input ended mid-dialogue.

    fn create_file(&mut self) -> io::Result<Option<()>> {
        let Some(name) = self.ask("Enter filename to create :")? else {
            return Ok(None);
        };
        let result = self.mount_mut().create_file(&name);
        self.report(result, |_| vec![messages::FILE_CREATED.to_owned()])?;
        Ok(Some(()))
    }

    fn open_file(&mut self) -> io::Result<Option<()>> {
        let Some(name) = self.ask("Enter filename to open :")? else {
            return Ok(None);
        };
        self.output.write_all(MODE_MENU.as_bytes())?;
        let Some(mode) = self.ask("Enter mode :")? else {
            return Ok(None);
        };
        let result = match parse_menu_choice(&mode, MODE_CHOICES) {
            Ok(c) => OpenMode::from_choice(c),
            Err(_) => Err(Error::InvalidMode(mode.trim().to_owned())),
        }
        .and_then(|mode| self.mount_mut().open_file(&name, mode));
        self.report(result, |fd| vec![messages::opened(&name, fd)])?;
        Ok(Some(()))
    }

    fn read_file(&mut self) -> io::Result<Option<()>> {
        let Some(fd) = self.ask_fd("Enter filedescriptor to read :")? else {
            return Ok(None);
        };
        match fd.and_then(|fd| self.mount_mut().read_file(fd)) {
            Ok(content) => {
                self.output.write_all(&content)?;
                if content.last().is_some_and(|&b| b != b'\n') {
                    self.output.write_all(b"\n")?;
                }
                self.line(&messages::bytes_read(content.len()))?;
            }
            Err(e) => self.error(&e)?,
        }
        Ok(Some(()))
    }

    fn write_file(&mut self, append: bool) -> io::Result<Option<()>> {
        let prompt = if append {
            "Enter filedescriptor to append :"
        } else {
            "Enter filedescriptor to write :"
        };
        let Some(fd) = self.ask_fd(prompt)? else {
            return Ok(None);
        };
        // The text is always consumed so it is never mistaken for menu input.
        self.line("Enter file content :")?;
        self.output.flush()?;
        let entry = self.read_entry()?;
        let result = fd.and_then(|fd| {
            let mount = self.mount_mut();
            if append {
                mount.append_file(fd, &entry.content)
            } else {
                mount.write_file(fd, &entry.content)
            }
        });
        let done = if append {
            messages::FILE_APPENDED
        } else {
            messages::FILE_WRITTEN
        };
        self.report(result, |n| vec![messages::bytes_written(n), done.to_owned()])?;
        Ok(entry.terminated.then_some(()))
    }

    fn close_file(&mut self) -> io::Result<Option<()>> {
        let Some(fd) = self.ask_fd("Enter filedescriptor to close :")? else {
            return Ok(None);
        };
        let result = fd.and_then(|fd| self.mount_mut().close_file(fd).map(|()| fd));
        self.report(result, |fd| vec![messages::closed(fd)])?;
        Ok(Some(()))
    }

    fn delete_file(&mut self) -> io::Result<Option<()>> {
        let Some(name) = self.ask("Enter filename to delete :")? else {
            return Ok(None);
        };
        let result = self.mount_mut().delete_file(&name);
        self.report(result, |()| vec![messages::FILE_DELETED.to_owned()])?;
        Ok(Some(()))
    }

    fn set_password(&mut self) -> io::Result<Option<()>> {
        let current = if self.mount_mut().auth_enabled() {
            match self.ask_credentials("Enter current username :", "Enter current password :")? {
                None => return Ok(None),
                Some(Ok(c)) => Some(c),
                Some(Err(_)) => {
                    self.error(&Error::AuthFailed)?;
                    return Ok(Some(()));
                }
            }
        } else {
            None
        };
        let Some(new) = self.ask_credentials("Enter new username :", "Enter new password :")? else {
            return Ok(None);
        };
        let result = new.and_then(|new| {
            let mount = self.mount_mut();
            mount.set_password(&new, current.as_ref())?;
            mount.sync()
        });
        self.report(result, |()| vec!["Password set successfully.".to_owned()])?;
        Ok(Some(()))
    }

    fn crypt_file(&mut self) -> io::Result<Option<()>> {
        let Some(name) = self.ask("Enter filename to encrypt/decrypt :")? else {
            return Ok(None);
        };
        let Some(key) = self.ask("Enter key :")? else {
            return Ok(None);
        };
        let result = self.mount_mut().crypt_file(&name, &key);
        self.report(result, |()| vec![format!("File {name} encrypted/decrypted successfully.")])?;
        Ok(Some(()))
    }
}
