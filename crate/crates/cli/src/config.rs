//! Run configuration: a TOML file with a `[global]` section and one section
//! per subcommand, overlaid by command-line flags.
//!
//! Relative paths in the file are resolved against the file's directory;
//! relative paths given as flags are resolved against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SECTIONS: [&str; 10] =
    ["global", "distort", "label", "features", "train", "score", "eval", "filter", "sweep", "bench"];

/// A structurally invalid config file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, Map<String, Value>>,
    dir: PathBuf,
}

fn to_json(v: toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s),
        toml::Value::Integer(i) => Value::from(i),
        toml::Value::Float(f) if f.is_finite() => Value::from(f),
        toml::Value::Float(f) => Value::String(f.to_string()),
        toml::Value::Boolean(b) => Value::Bool(b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.into_iter().map(to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.into_iter().map(|(k, v)| (k, to_json(v))).collect()),
    }
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
            .with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, dir: &Path) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        let mut sections = BTreeMap::new();
        for (name, value) in table {
            if !SECTIONS.contains(&name.as_str()) {
                let msg = format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", "));
                return Err(ConfigError(msg).into());
            }
            match to_json(value) {
                Value::Object(map) => {
                    sections.insert(name, map);
                }
                _ => return Err(ConfigError(format!("`{name}` must be a table")).into()),
            }
        }
        Ok(ConfigFile { sections, dir: dir.to_path_buf() })
    }

    /// Merges the file's `section` with `overlay` (flags win) and
    /// deserializes the result. Keys named in `path_keys` are resolved
    /// against the config directory when they come from the file.
    pub fn params<T: DeserializeOwned>(&self, section: &str, path_keys: &[&str], overlay: impl Serialize) -> Result<T> {
        let mut merged = self.sections.get(section).cloned().unwrap_or_default();
        for key in path_keys {
            if let Some(Value::String(s)) = merged.get_mut(*key) {
                let p = Path::new(s.as_str());
                if p.is_relative() {
                    *s = self.dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        if let Value::Object(flags) = serde_json::to_value(overlay)? {
            for (k, v) in flags {
                if !v.is_null() {
                    merged.insert(k, v);
                }
            }
        }
        serde_json::from_value(Value::Object(merged)).with_context(|| format!("invalid [{section}] parameters"))
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalParams {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
}

impl Default for GlobalParams {
    fn default() -> Self {
        GlobalParams { seed: 0, out: PathBuf::from("aqua-out"), threads: 0 }
    }
}

/// SHA-256 over the command, seed and content-determining parameters.
/// Path-valued keys are left out so a run can be relocated.
pub fn fingerprint(command: &str, seed: u64, params: &impl Serialize, path_keys: &[&str]) -> Result<String> {
    let mut value = serde_json::to_value(params)?;
    if let Value::Object(map) = &mut value {
        for k in path_keys {
            map.remove(*k);
        }
    }
    let canonical = serde_json::json!({ "command": command, "seed": seed, "params": value });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
}

/// Accepts numbers or the strings `inf`, `-inf`.
pub fn real_vec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(with = "aqua::evaluation::real")] f64);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}
