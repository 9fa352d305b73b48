//! Run directories, named by the hash of the effective configuration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

pub const EFFECTIVE_CONFIG: &str = "config.effective.toml";

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("cannot write {}: {e}", path.display()))
}

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// `<parent>/<command>-<hash>`; the hash covers the effective config
    /// without the output location, so the same run lands in the same place.
    pub fn create(parent: &Path, command: &str, cfg: &RunConfig) -> Result<Self, Failure> {
        let mut keyed = cfg.clone();
        keyed.output.dir = PathBuf::new();
        let digest = Sha256::digest(keyed.to_toml().as_bytes());
        let path = parent.join(format!("{command}-{}", &hex::encode(digest)[..16]));
        fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
        let dir = Self { path };
        dir.write_text(EFFECTIVE_CONFIG, &cfg.to_toml())?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path.join(name);
        fs::write(&p, text).map_err(|e| io_error(&p, e))
    }

    pub fn write_json<S: Serialize>(&self, name: &str, value: &S) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(&self.path.join(name), e))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Hands a buffered writer to `f`; used for CSV and field dumps.
    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> snls::Result<()>,
    ) -> Result<(), Failure> {
        let p = self.path.join(name);
        let file = File::create(&p).map_err(|e| io_error(&p, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| io_error(&p, e))?;
        w.flush().map_err(|e| io_error(&p, e))
    }
}
