//! Run manifests: what was run, on which bytes, producing which bytes.

use std::fs;
use std::path::Path;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "tokenmetric";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, without `--threads` and `--manifest`.
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stdout_sha256: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of a directory as the digest of its sorted
/// `name<TAB>sha256` listing (non-recursive).
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        names.retain(|p| p.is_file());
        names.sort();
        let mut listing = String::new();
        for p in names {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            listing.push_str(&format!("{name}\t{}\n", sha256_hex(&fs::read(&p)?)));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
    }
}

/// Drops the flags that must not influence outputs.
pub fn recordable_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip_next = false;
    for a in args {
        if skip_next {
            skip_next = false;
            continue;
        }
        match a.as_str() {
            "--threads" | "--manifest" => skip_next = true,
            s if s.starts_with("--threads=") || s.starts_with("--manifest=") => {}
            _ => out.push(a.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_scheduling_flags() {
        let args: Vec<String> =
            ["chd", "--threads", "4", "--real", "a", "--manifest=m.json", "--seed", "3", "--threads=2"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        assert_eq!(recordable_args(&args), vec!["chd", "--real", "a", "--seed", "3"]);
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
