//! Stage artifacts on disk and the run manifest.

use std::sync::Mutex;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use utn_core::seeds;

use crate::config::{LoadedConfig, PipelineConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.jsonl";

/// Everything a command needs: effective config, root seed, hash and output directory.
pub struct Context {
    pub loaded: LoadedConfig,
    pub config: PipelineConfig,
    pub seed: u64,
    pub hash: String,
    pub out: PathBuf,
    written: Mutex<Vec<String>>,
    warnings: Mutex<Vec<String>>,
}

impl Context {
    pub fn new(loaded: LoadedConfig, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        let mut config = loaded.config.clone();
        if let Some(s) = seed {
            config.seed = s;
        }
        let out = out.unwrap_or_else(|| loaded.resolve(&config.out));
        let hash = config.hash();
        Context {
            seed: config.seed,
            loaded,
            config,
            hash,
            out,
            written: Mutex::new(Vec::new()),
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn sub_seed(&self, name: &str) -> u64 {
        seeds::sub_seed(self.seed, name)
    }

    pub fn header(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash, self.seed)
    }

    pub fn warn(&self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.lock().expect("artifact log lock").push(msg);
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("artifact log lock").clone()
    }

    pub fn written(&self) -> Vec<String> {
        self.written.lock().expect("artifact log lock").clone()
    }

    pub fn artifact_path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn put(&self, path: &Path, label: String, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        self.written.lock().expect("artifact log lock").push(label);
        Ok(())
    }

    /// CSV artifact under the output directory, stamped with the config hash.
    pub fn write_csv(&self, rel: &str, body: impl FnOnce(&mut Vec<u8>) -> utn_core::Result<()>) -> CliResult<()> {
        let path = self.artifact_path(rel);
        self.write_csv_at(&path, rel.to_string(), body)
    }

    /// CSV (or plain text) file at an explicit path, stamped with the config hash.
    pub fn write_csv_at(
        &self,
        path: &Path,
        label: String,
        body: impl FnOnce(&mut Vec<u8>) -> utn_core::Result<()>,
    ) -> CliResult<()> {
        let mut bytes = self.header().into_bytes();
        body(&mut bytes)?;
        self.put(path, label, &bytes)
    }

    /// JSON artifact; objects gain `config_hash` and `seed` fields.
    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> CliResult<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config_hash".into(), self.hash.clone().into());
            map.insert("seed".into(), self.seed.into());
        }
        let mut bytes = serde_json::to_vec_pretty(&v)?;
        bytes.push(b'\n');
        self.put(&self.artifact_path(rel), rel.to_string(), &bytes)
    }

    pub fn has(&self, rel: &str) -> bool {
        self.artifact_path(rel).is_file()
    }

    /// Reads an upstream artifact; a missing file names the command producing it.
    pub fn read(&self, rel: &str, producer: &str) -> CliResult<Vec<u8>> {
        let path = self.artifact_path(rel);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                CliError::MissingArtifact { artifact: path.display().to_string(), command: producer.to_string() }
            }
            _ => CliError::Io(e),
        })
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str, producer: &str) -> CliResult<T> {
        Ok(serde_json::from_slice(&self.read(rel, producer)?)?)
    }

    /// Path of a configured input, or `None` when the key is unset.
    pub fn input(&self, value: &Option<String>) -> Option<PathBuf> {
        value.as_deref().map(|p| self.loaded.resolve(p))
    }

    pub fn open_input(&self, key: &str, value: &Option<String>) -> CliResult<Vec<u8>> {
        let path = self
            .input(value)
            .ok_or_else(|| CliError::Validation(vec![format!("inputs.{key} is not set")]))?;
        Ok(fs::read(&path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?)
    }
}

#[derive(Debug, Serialize)]
pub struct ManifestRecord<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub status: &'a str,
    pub exit_code: i32,
    pub started_at: String,
    pub elapsed_ms: u128,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn append_manifest(out: &Path, record: &ManifestRecord<'_>) -> CliResult<()> {
    fs::create_dir_all(out)?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(out.join(MANIFEST))?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}
