//! Provenance sidecars: `<output>.prov.txt` next to every raster.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(&bytes) {
        write!(out, "{b:02x}").expect("string write");
    }
    Ok(out)
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".prov.txt");
    PathBuf::from(name)
}

/// Records the tool version, the effective command line and the hashes of
/// inputs and of the output itself.
pub fn write_sidecar(output: &Path, command: &str, inputs: &[&Path]) -> Result<()> {
    let mut text = format!("tool: sob {}\ncommand: {command}\n", env!("CARGO_PKG_VERSION"));
    for input in inputs {
        writeln!(text, "input: {} sha256={}", input.display(), sha256_file(input)?)?;
    }
    writeln!(text, "output: {} sha256={}", output.display(), sha256_file(output)?)?;
    let path = sidecar_path(output);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(sidecar_path(&p), dir.path().join("abc.txt.prov.txt"));
    }
}
