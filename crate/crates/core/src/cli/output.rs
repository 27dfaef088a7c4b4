//! Run directories: lock file, manifest, and small file helpers.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::env::TaskSpec;
use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".ssma-rl.lock";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

/// `git describe` output captured at build time, or the package version.
pub fn version_string() -> String {
    match option_env!("SSMA_RL_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => format!("{} ({d})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the generated pool, so runs can be checked for sharing one.
pub fn pool_hash(tasks: &[TaskSpec]) -> String {
    sha256_hex(
        serde_json::to_string(tasks)
            .expect("tasks serialize")
            .as_bytes(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_file: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub pool_seed: u64,
    pub pool_count: usize,
    pub pool_sha256: String,
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes the resolved configuration and the manifest into `dir`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    seeds: Vec<u64>,
    pool: &[TaskSpec],
) -> Result<()> {
    let text = config.to_toml();
    write_file(&dir.join(CONFIG_FILE), text.as_bytes())?;
    let manifest = Manifest {
        command: command.to_string(),
        version: version_string(),
        config_file: CONFIG_FILE.to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seeds,
        pool_seed: config.pool.seed,
        pool_count: pool.len(),
        pool_sha256: pool_hash(pool),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Runs `f` against a buffered writer on `path`.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            RunLock::acquire(dir.path()),
            Err(Error::Io { .. })
        ));
        drop(lock);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_records_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let pool = cfg.task_pool().unwrap();
        write_manifest(dir.path(), "train", &cfg, vec![0], &pool).unwrap();
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        let text = fs::read(dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(m.config_sha256, sha256_hex(&text));
        assert_eq!(m.pool_count, 48);
        assert_eq!(m.pool_sha256, pool_hash(&pool));
    }
}
