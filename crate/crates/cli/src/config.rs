//! Optional `key = value` settings file. Values given on the command line
//! take precedence.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::Usage;

const KEYS: &[&str] = &["k_y", "k_uv", "d_min", "d_max", "lights", "bind", "timeout", "window", "journal"];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(Usage(format!("config line {}: unknown key '{key}' (known: {})", n + 1, KEYS.join(", "))).into());
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Config { values })
    }

    /// Command-line value, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| Usage(format!("config key {key}: cannot parse '{raw}'")).into()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}
