#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/city")
}

/// Copies the fixture config and spec into a fresh directory.
pub fn staged_fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["utn.toml", "city.spec"] {
        fs::copy(fixture_dir().join(f), dir.path().join(f)).unwrap();
    }
    dir
}

pub fn utn(dir: &Path, args: &[&str]) -> i32 {
    let config = dir.join("utn.toml");
    let mut full = vec!["utn".to_string(), "--config".into(), config.display().to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    utn_cli::run(full)
}

/// Relative path -> SHA-256 for every file under `root`, skipping the manifest.
pub fn digests(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.jsonl") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}
