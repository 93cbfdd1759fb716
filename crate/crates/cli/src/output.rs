use std::fs;
use std::path::Path;

use hybridtrack::config::RunConfig;
use hybridtrack::{Error, Result};
use serde::Serialize;
use serde_json::{Map, Value};

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::from(e).at(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::from(e).at(path))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Every effective config value, keyed by name.
pub fn config_echo(cfg: &RunConfig) -> Value {
    let map: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    Value::Object(map)
}

/// Report header shared by every command.
pub fn header(command: &str, cfg: Option<&RunConfig>) -> Map<String, Value> {
    let mut h = Map::new();
    h.insert("command".into(), command.into());
    h.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    if let Some(cfg) = cfg {
        h.insert("config".into(), config_echo(cfg));
    }
    h
}
