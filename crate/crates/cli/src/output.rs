//! Atomic artifact writes and reproducibility sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// Write `bytes` to a temporary sibling, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Render with a writer-based serializer, then write atomically.
pub fn write_with<F>(path: &Path, render: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> tallcrop::Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf).with_context(|| format!("rendering {}", path.display()))?;
    write_atomic(path, &buf)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    artifact: String,
    master_seed: u64,
    config: &'a RunConfig,
}

/// Record the resolved configuration next to an artifact as `<path>.run.json`.
pub fn write_sidecar(path: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let sidecar = Sidecar {
        tool: "tallcrop",
        version: env!("CARGO_PKG_VERSION"),
        command,
        artifact: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        master_seed: config.master_seed,
        config,
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".run.json");
    write_atomic(Path::new(&side), &to_json(&sidecar)?)
}

/// JSON document embedding the resolved configuration with a payload.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub master_seed: u64,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub payload: T,
}

pub fn envelope<'a, T: Serialize>(
    command: &'a str,
    config: &'a RunConfig,
    payload: T,
) -> Envelope<'a, T> {
    Envelope {
        tool: "tallcrop",
        version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed: config.master_seed,
        config,
        payload,
    }
}
