use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

/// Record of one invocation, written as `run.json` in the output directory.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config_hash: Option<String>,
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub encoder: Option<String>,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: String,
    pub artifacts: Vec<PathBuf>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

impl RunMetadata {
    pub fn write(&self, out: &Path) -> std::io::Result<PathBuf> {
        let path = out.join("run.json");
        let mut json = serde_json::to_vec_pretty(self).expect("metadata serializes");
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }
}
