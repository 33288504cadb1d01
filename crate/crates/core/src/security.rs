//! Input validation, login credentials, and per-file encryption.
//!
//! The hash (FNV-1a, 64-bit), the iterated key derivation and the
//! xorshift64* keystream cipher are simple, fully specified and bit-exact.
//! They are NOT cryptographically secure and only demonstrate where such
//! defenses sit in the file system.

use crate::error::{Error, Result};
use crate::fscore::Mount;
use crate::layout::{AuthRecord, AUTH_ITERATIONS, MAX_NAME_LEN};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
pub const KEYSTREAM_ZERO_SEED: u64 = 0x9E37_79B9_7F4A_7C15;
pub const MAX_PASSWORD_LEN: usize = 64;
const MAX_DISK_PATH_LEN: usize = 255;

fn name_char_ok(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')
}

/// Accepts 1 to 30 characters from `[A-Za-z0-9._-]`, except `.` and `..`.
pub fn validate_filename(text: &str) -> Result<&str> {
    let reject = |reason: &str| Err(Error::InvalidName(format!("{text:?}: {reason}")));
    if text.is_empty() {
        return reject("empty");
    }
    if text.chars().count() > MAX_NAME_LEN {
        return reject("longer than 30 characters");
    }
    if let Some(c) = text.chars().find(|&c| !name_char_ok(c)) {
        return reject(&format!("character {c:?} not allowed"));
    }
    if text == "." || text == ".." {
        return reject("reserved name");
    }
    Ok(text)
}

/// Host path of a disk image: same charset as file names plus `/`, with no
/// `..` components.
pub fn validate_disk_path(text: &str) -> Result<&str> {
    let reject = |reason: &str| Err(Error::InvalidName(format!("{text:?}: {reason}")));
    if text.is_empty() {
        return reject("empty");
    }
    if text.len() > MAX_DISK_PATH_LEN {
        return reject("path too long");
    }
    if let Some(c) = text.chars().find(|&c| !(name_char_ok(c) || c == '/')) {
        return reject(&format!("character {c:?} not allowed"));
    }
    if text.split('/').any(|part| part == "..") {
        return reject("parent directory components not allowed");
    }
    if text.ends_with('/') {
        return reject("names a directory");
    }
    Ok(text)
}

/// Parses the language `ws* digit+ ws*` into a number.
pub fn parse_number(text: &str) -> Result<u32> {
    let trimmed = text.trim_matches(|c: char| c.is_ascii_whitespace());
    if trimmed.is_empty() || !trimmed.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::InvalidChoice(text.to_owned()));
    }
    trimmed.parse().map_err(|_| Error::InvalidChoice(text.to_owned()))
}

pub fn parse_menu_choice(text: &str, allowed: &[u32]) -> Result<u32> {
    let choice = parse_number(text)?;
    if allowed.contains(&choice) {
        Ok(choice)
    } else {
        Err(Error::InvalidChoice(text.to_owned()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET_BASIS, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Salted, iterated FNV-1a.
pub fn derive_key(password: &[u8], salt: u64, iterations: u32) -> u64 {
    let mut seed = salt.to_le_bytes().to_vec();
    seed.extend_from_slice(password);
    let mut h = fnv1a64(&seed);
    for _ in 0..iterations {
        h = fnv1a64(&h.to_le_bytes());
    }
    h
}

#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    username: String,
    password: String,
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials")
            .field("username", &self.username)
            .finish_non_exhaustive()
    }
}

impl Credentials {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Result<Self> {
        let username = username.into();
        let password = password.into();
        validate_filename(&username)
            .map_err(|e| Error::InvalidCredentials(format!("username {e}")))?;
        let len = password.chars().count();
        if len == 0 || len > MAX_PASSWORD_LEN {
            return Err(Error::InvalidCredentials(format!(
                "password must be 1 to {MAX_PASSWORD_LEN} characters"
            )));
        }
        Ok(Credentials { username, password })
    }

    pub fn username(&self) -> &str {
        &self.username
    }

    pub fn password(&self) -> &str {
        &self.password
    }
}

impl AuthRecord {
    pub fn from_credentials(credentials: &Credentials, salt: u64) -> Self {
        AuthRecord {
            enabled: true,
            username: credentials.username.clone(),
            salt,
            password_hash: derive_key(credentials.password.as_bytes(), salt, AUTH_ITERATIONS),
            iterations: AUTH_ITERATIONS,
        }
    }
}

/// Checks credentials against a record. Both the username and the hash are
/// always compared. A disabled record matches nothing.
pub fn verify(record: &AuthRecord, credentials: &Credentials) -> bool {
    let hash = derive_key(credentials.password.as_bytes(), record.salt, record.iterations);
    let user_ok = record.username == credentials.username;
    let hash_ok = hash == record.password_hash;
    record.enabled & user_ok & hash_ok
}

/// xorshift64* generator used as the file keystream.
#[derive(Debug, Clone)]
pub struct Keystream {
    state: u64,
}

impl Keystream {
    pub fn from_passphrase(passphrase: &[u8]) -> Self {
        match fnv1a64(passphrase) {
            0 => Keystream { state: KEYSTREAM_ZERO_SEED },
            seed => Keystream { state: seed },
        }
    }

    pub fn next_word(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// XORs `data` with the keystream, eight little-endian bytes per word.
    pub fn apply(&mut self, data: &mut [u8]) {
        for chunk in data.chunks_mut(8) {
            let word = self.next_word().to_le_bytes();
            for (b, k) in chunk.iter_mut().zip(word) {
                *b ^= k;
            }
        }
    }
}

/// Encrypts or decrypts `data` in place; applying it twice with the same
/// passphrase restores the input.
pub fn crypt_bytes(data: &mut [u8], passphrase: &[u8]) {
    Keystream::from_passphrase(passphrase).apply(data);
}

impl Mount {
    /// Enables or changes the login for this disk. Changing an existing
    /// login requires the current credentials. Takes effect on the image at
    /// the next sync or unmount.
    pub fn set_password(&mut self, new: &Credentials, current: Option<&Credentials>) -> Result<()> {
        let record = &self.structures().superblock.auth;
        if record.enabled {
            match current {
                None => return Err(Error::AuthRequired),
                Some(c) if !verify(record, c) => return Err(Error::AuthFailed),
                Some(_) => {}
            }
        }
        let salt = rand::random::<u64>();
        self.set_auth_record(AuthRecord::from_credentials(new, salt));
        Ok(())
    }

    pub fn verify(&self, credentials: &Credentials) -> bool {
        verify(&self.structures().superblock.auth, credentials)
    }

    /// XORs the content of a closed file with the passphrase keystream.
    pub fn crypt_file(&mut self, name: &str, passphrase: &str) -> Result<()> {
        let inode = self.closed_file_inode(name)?;
        let mut content = self.inode_content(inode)?;
        crypt_bytes(&mut content, passphrase.as_bytes());
        self.rewrite_in_place(inode, &content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filename_rules() {
        assert_eq!(validate_filename("main.cpp").unwrap(), "main.cpp");
        assert_eq!(validate_filename(&"a".repeat(30)).unwrap().len(), 30);
        for bad in ["", "a/b", "x;rm", "..", ".", "sp ace", "tab\t", "é", &"a".repeat(31)] {
            assert_eq!(validate_filename(bad).unwrap_err().code(), "InvalidName", "{bad:?}");
        }
    }

    #[test]
    fn disk_path_rules() {
        assert!(validate_disk_path("test/mydisk").is_ok());
        assert!(validate_disk_path("/tmp/x.img").is_ok());
        for bad in ["", "a/../b", "..", "dir/", "a b", "a;b"] {
            assert!(validate_disk_path(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn menu_choice_parsing() {
        assert_eq!(parse_menu_choice(" 2 ", &[1, 2, 9]).unwrap(), 2);
        assert_eq!(parse_menu_choice("10", &(1..=10).collect::<Vec<_>>()).unwrap(), 10);
        assert_eq!(parse_menu_choice("\t9\r", &[1, 2, 9]).unwrap(), 9);
        for bad in ["2; delete", "4 x", "", "  ", "+1", "-1", "3", "1.0", "99999999999999999999"] {
            assert_eq!(parse_menu_choice(bad, &[1, 2, 4, 9]).unwrap_err().code(), "InvalidChoice", "{bad:?}");
        }
    }

    #[test]
    fn fnv_known_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn derive_key_unrolled() {
        let mut seed = 0u64.to_le_bytes().to_vec();
        seed.extend_from_slice(b"pw");
        let expected = fnv1a64(&fnv1a64(&seed).to_le_bytes());
        assert_eq!(derive_key(b"pw", 0, 1), expected);
        assert_eq!(derive_key(b"pw", 0, 0), fnv1a64(&seed));
        assert_eq!(derive_key(b"pw", 7, 10_000), derive_key(b"pw", 7, 10_000));
        assert_ne!(derive_key(b"pw", 7, 10_000), derive_key(b"pw", 8, 10_000));
    }

    #[test]
    fn credentials_bounds() {
        assert!(Credentials::new("alice", "x").is_ok());
        assert!(Credentials::new("alice", "x".repeat(64)).is_ok());
        assert_eq!(Credentials::new("alice", "").unwrap_err().code(), "InvalidCredentials");
        assert_eq!(Credentials::new("alice", "x".repeat(65)).unwrap_err().code(), "InvalidCredentials");
        assert_eq!(Credentials::new("a/b", "x").unwrap_err().code(), "InvalidCredentials");
        assert!(!format!("{:?}", Credentials::new("alice", "hunter2").unwrap()).contains("hunter2"));
    }

    #[test]
    fn verify_checks_both_fields() {
        let good = Credentials::new("alice", "secret").unwrap();
        let record = AuthRecord::from_credentials(&good, 42);
        assert!(verify(&record, &good));
        assert!(!verify(&record, &Credentials::new("alice", "Secret").unwrap()));
        assert!(!verify(&record, &Credentials::new("bob", "secret").unwrap()));
        assert!(!verify(&AuthRecord::disabled(), &good));
    }

    #[test]
    fn keystream_zero_seed_and_involution() {
        let mut ks = Keystream::from_passphrase(b"k");
        assert_eq!(ks.state, fnv1a64(b"k"));
        let first = ks.next_word();
        let mut x = fnv1a64(b"k");
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        assert_eq!(first, x.wrapping_mul(0x2545F4914F6CDD1D));

        let mut data = b"hello, world".to_vec();
        crypt_bytes(&mut data, b"key");
        assert_ne!(data, b"hello, world");
        crypt_bytes(&mut data, b"key");
        assert_eq!(data, b"hello, world");

        let mut empty: Vec<u8> = Vec::new();
        crypt_bytes(&mut empty, b"key");
        assert!(empty.is_empty());
    }
}
