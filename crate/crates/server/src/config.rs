//! Service configuration.
//!
//! A TOML file, every key of which can be overridden by an environment
//! variable: `PDT_` followed by the key path in upper case with `__`
//! between levels.
//!
//! ```toml
//! bind = "127.0.0.1:8080"          # PDT_BIND
//! idempotency_capacity = 4096      # PDT_IDEMPOTENCY_CAPACITY
//!
//! [store]
//! dir = "pdt-data"                 # PDT_STORE__DIR
//! fsync = true                     # PDT_STORE__FSYNC
//! graph = "graph.def"              # PDT_STORE__GRAPH
//!
//! [params]                         # defaults for graphs without [params]
//! n_i = 10                         # PDT_PARAMS__N_I
//! n_c = 5                          # PDT_PARAMS__N_C
//! n_c_cap = 10                     # PDT_PARAMS__N_C_CAP
//! [params.decay]
//! t_half_secs = 31557600           # PDT_PARAMS__DECAY__T_HALF_SECS
//! t_e0_secs = 5259600              # PDT_PARAMS__DECAY__T_E0_SECS
//! n_half = 8                       # PDT_PARAMS__DECAY__N_HALF
//! n_s_max = 120                    # PDT_PARAMS__DECAY__N_S_MAX
//! ```
//!
//! Override values are read as TOML (`true`, `12`, `"x"`) and fall back to
//! plain strings. Relative paths are taken from the config file's
//! directory.

use std::path::{Path, PathBuf};

use pdt_tracker::GraphParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "PDT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("{var}: {reason}")]
    Env { var: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    /// Remembered request keys; the oldest are forgotten first.
    pub idempotency_capacity: usize,
    pub store: StoreConfig,
    pub params: GraphParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub dir: PathBuf,
    pub fsync: bool,
    /// Graph installed when the store has none; the demo graph otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            idempotency_capacity: 4096,
            store: StoreConfig::default(),
            params: GraphParams::default(),
        }
    }
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { dir: "pdt-data".into(), fsync: true, graph: None }
    }
}

impl Config {
    /// Reads the file, if any, and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source }))
            .transpose()?;
        let mut cfg = Self::from_sources(text.as_deref(), std::env::vars())?;
        if let Some(dir) = path.and_then(Path::parent) {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_sources(
        text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| ConfigError::Parse(e.to_string()))?,
            None => Table::new(),
        };
        let mut vars: Vec<_> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (var, raw) in &vars {
            apply_override(&mut table, var, raw)?;
        }
        Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let names: Vec<&str> = vars.iter().map(|(k, _)| k.as_str()).collect();
            let hint = if names.is_empty() { String::new() } else { format!(" (overrides: {})", names.join(", ")) };
            ConfigError::Parse(format!("{e}{hint}"))
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.store.dir);
        if let Some(g) = &mut self.store.graph {
            resolve(g);
        }
    }
}

fn apply_override(table: &mut Table, var: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |reason: &str| ConfigError::Env { var: var.into(), reason: reason.into() };
    let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(str::to_ascii_lowercase).collect();
    if path.iter().any(String::is_empty) {
        return Err(err("empty key segment"));
    }
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.into()));
    let (last, parents) = path.split_last().expect("at least one segment");
    let mut at = table;
    for key in parents {
        at = at
            .entry(key.clone())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| err(&format!("{key} is not a table")))?;
    }
    at.insert(last.clone(), value);
    Ok(())
}
