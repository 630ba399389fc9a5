//! Output directories, manifests and CSV helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::{LabError, LabResult};

pub const MANIFEST: &str = "manifest.txt";
pub const OUT_ENV: &str = "PVE_LAB_OUT";
pub const DEFAULT_OUT_ROOT: &str = "pve-lab-out";

/// First 16 hex digits of the SHA-256 of the command name and its settings.
pub fn config_hash(command: &str, settings: &Settings) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update(b"\n");
    hasher.update(settings.render().as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}

fn manifest_hash(path: &Path) -> LabResult<Option<String>> {
    let file = path.join(MANIFEST);
    if !file.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&file)?;
    Ok(text
        .lines()
        .find_map(|l| l.strip_prefix("config_hash = "))
        .map(|h| h.trim().to_string()))
}

/// Resolve, validate and create the output directory of a run, then write its manifest.
///
/// Without `force`, a directory holding a manifest with a different hash, or
/// holding files but no manifest, is refused.
pub fn prepare_run_dir(
    out: Option<&Path>,
    command: &str,
    settings: &Settings,
    notes: &[String],
    force: bool,
) -> LabResult<PathBuf> {
    let hash = config_hash(command, settings);
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => out_root().join(format!("{command}-{hash}")),
    };
    if dir.exists() && !force {
        match manifest_hash(&dir)? {
            Some(existing) if existing != hash => {
                return Err(LabError::Output(format!(
                    "{} holds a run with config hash {existing} (this run: {hash}); use --force to overwrite",
                    dir.display()
                )))
            }
            None if fs::read_dir(&dir)?.next().is_some() => {
                return Err(LabError::Output(format!(
                    "{} is not empty and has no manifest; use --force to overwrite",
                    dir.display()
                )))
            }
            _ => {}
        }
    }
    fs::create_dir_all(&dir)?;
    let mut text = format!("command = {command}\nconfig_hash = {hash}\nformat = 1\n\n[settings]\n");
    text.push_str(&settings.render());
    if !notes.is_empty() {
        text.push_str("\n[notes]\n");
        for note in notes {
            let _ = writeln!(text, "{note}");
        }
    }
    fs::write(dir.join(MANIFEST), text)?;
    Ok(dir)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// In-memory CSV table written in one go.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> LabResult<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(v: &str) -> Settings {
        let mut s = Settings::default();
        s.push("iters", v);
        s
    }

    #[test]
    fn hash_depends_on_command_and_settings() {
        let a = config_hash("verify", &settings("1"));
        assert_eq!(a.len(), 16);
        assert_eq!(a, config_hash("verify", &settings("1")));
        assert_ne!(a, config_hash("verify", &settings("2")));
        assert_ne!(a, config_hash("trajectories", &settings("1")));
    }

    #[test]
    fn mismatched_rerun_needs_force() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        prepare_run_dir(Some(&dir), "verify", &settings("1"), &[], false).unwrap();
        prepare_run_dir(Some(&dir), "verify", &settings("1"), &[], false).unwrap();
        assert!(prepare_run_dir(Some(&dir), "verify", &settings("2"), &[], false).is_err());
        prepare_run_dir(Some(&dir), "verify", &settings("2"), &[], true).unwrap();
        let text = fs::read_to_string(dir.join(MANIFEST)).unwrap();
        assert!(text.contains(&config_hash("verify", &settings("2"))));
    }

    #[test]
    fn foreign_directory_is_protected() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("notes.txt"), "x").unwrap();
        assert!(prepare_run_dir(Some(tmp.path()), "verify", &settings("1"), &[], false).is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 1e300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
