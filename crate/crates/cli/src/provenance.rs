//! What every output records about how it was made.

use histsem_core::digest::{file_sha256, FieldHasher};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    /// Digest of the command's effective settings (paths excluded).
    pub config_digest: String,
    /// Input label to content digest.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        let json = serde_json::to_vec(config).expect("settings serialize");
        let mut h = FieldHasher::new();
        h.field(command).field(json);
        Provenance {
            tool: format!("histsem {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            config_digest: h.finish(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> CliResult<&mut Self> {
        let digest = if path.is_dir() {
            dir_digest(path)?
        } else {
            file_sha256(path).map_err(|e| CliError::io(path, e))?
        };
        self.inputs.insert(label.to_string(), digest);
        Ok(self)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serializes")
    }

    /// One `# key=value` comment line per field, for text reports.
    pub fn comment_lines(&self) -> String {
        let mut out = format!(
            "# tool={}\n# command={}\n# seed={}\n# config_digest={}\n",
            self.tool, self.command, self.seed, self.config_digest
        );
        for (k, v) in &self.inputs {
            out.push_str(&format!("# input.{k}={v}\n"));
        }
        out
    }
}

/// Digest over the names and contents of the regular files directly in
/// `dir`, in name order.
pub fn dir_digest(dir: &Path) -> CliResult<String> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(Result::ok)
        .filter(|e| e.path().is_file())
        .collect();
    entries.sort_by_key(|e| e.file_name());
    let mut h = FieldHasher::new();
    for e in entries {
        let path = e.path();
        h.field(e.file_name().to_string_lossy().as_bytes())
            .field(file_sha256(&path).map_err(|err| CliError::io(&path, err))?);
    }
    Ok(h.finish())
}
