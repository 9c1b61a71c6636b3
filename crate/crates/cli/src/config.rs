//! Resolved run settings. Sources, strongest first: command-line flags, the
//! TOML config file, `MEDIAPROFILE_*` environment variables, built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mediaprofile::elicitation::BackendConfig;
use mediaprofile::{AbstainPolicy, CollapsePolicy, Error, TrainConfig, DEFAULT_SEED};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Openai,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    pub kind: BackendKind,
    /// Canned replies for the mock backend, one `<content_hash>.txt` each.
    pub fixtures: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub strict: bool,
    #[serde(flatten)]
    pub request: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub collapse: CollapsePolicy,
    pub abstain: AbstainPolicy,
    pub backend: BackendSettings,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: DEFAULT_SEED,
            collapse: CollapsePolicy::default(),
            abstain: AbstainPolicy::default(),
            backend: BackendSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub fixtures: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub model: Option<String>,
    pub strict: bool,
}

const ENV_KEYS: [(&str, &[&str]); 7] = [
    ("MEDIAPROFILE_SEED", &["seed"]),
    ("MEDIAPROFILE_BACKEND", &["backend", "kind"]),
    ("MEDIAPROFILE_FIXTURES", &["backend", "fixtures"]),
    ("MEDIAPROFILE_CACHE", &["backend", "cache"]),
    ("MEDIAPROFILE_MODEL", &["backend", "model_id"]),
    ("MEDIAPROFILE_ENDPOINT", &["backend", "endpoint"]),
    ("MEDIAPROFILE_RATE_LIMIT", &["backend", "rate_limit"]),
];

fn env_layer(env: &BTreeMap<String, String>) -> Result<Table, Error> {
    let mut table = Table::new();
    for (var, path) in ENV_KEYS {
        let Some(raw) = env.get(var) else { continue };
        let value = match *path.last().unwrap() {
            "seed" | "rate_limit" => Value::Integer(
                raw.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{var}={raw:?} is not an integer")))?,
            ),
            _ => Value::String(raw.clone()),
        };
        insert_path(&mut table, path, value);
    }
    Ok(table)
}

fn insert_path(table: &mut Table, path: &[&str], value: Value) {
    match path {
        [key] => {
            table.insert(key.to_string(), value);
        }
        [head, rest @ ..] => {
            let child = table
                .entry(head.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(t) = child {
                insert_path(t, rest, value);
            }
        }
        [] => {}
    }
}

/// Deep merge; `top` wins on conflicts.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Layer defaults, environment, config file text and flags.
pub fn resolve(
    file: Option<&str>,
    env: &BTreeMap<String, String>,
    flags: &Overrides,
) -> Result<Settings, Error> {
    let mut table = env_layer(env)?;
    if let Some(text) = file {
        let parsed: Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config file: {e}")))?;
        merge(&mut table, parsed);
    }
    let mut s: Settings = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(seed) = flags.seed {
        s.seed = seed;
    }
    if let Some(kind) = flags.backend {
        s.backend.kind = kind;
    }
    if let Some(dir) = &flags.fixtures {
        s.backend.fixtures = Some(dir.clone());
    }
    if let Some(path) = &flags.cache {
        s.backend.cache = Some(path.clone());
    }
    if let Some(model) = &flags.model {
        s.backend.request.model_id = model.clone();
    }
    s.backend.strict |= flags.strict;
    s.train = s.train.with_seed(s.seed);
    s.backend.request.validate()?;
    Ok(s)
}

/// Read the config file (if any) and the process environment.
pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Settings, Error> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?),
        None => None,
    };
    let env: BTreeMap<String, String> = std::env::vars()
        .filter(|(k, _)| k.starts_with("MEDIAPROFILE_"))
        .collect();
    resolve(text.as_deref(), &env, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let s = resolve(None, &BTreeMap::new(), &Overrides::default()).unwrap();
        assert_eq!(s, Settings::default());
        assert_eq!(s.train.split.seed, DEFAULT_SEED);
    }

    #[test]
    fn precedence_flag_file_env() {
        let e = env(&[("MEDIAPROFILE_SEED", "1"), ("MEDIAPROFILE_MODEL", "env-model")]);
        let file = "seed = 2\n[backend]\nrate_limit = 7\n";
        let s = resolve(Some(file), &e, &Overrides::default()).unwrap();
        assert_eq!(s.seed, 2);
        assert_eq!(s.backend.request.model_id, "env-model");
        assert_eq!(s.backend.request.rate_limit, 7);

        let flags = Overrides {
            seed: Some(3),
            ..Overrides::default()
        };
        let s = resolve(Some(file), &e, &flags).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!((s.train.split.seed, s.train.grid.seed), (3, 3));

        let s = resolve(None, &e, &Overrides::default()).unwrap();
        assert_eq!(s.seed, 1);
    }

    #[test]
    fn nested_train_settings() {
        let file = "[train]\ntask = \"bias3\"\nstrategy = \"one-vs-rest\"\n[train.grid]\nc_values = [1.0]\n";
        let s = resolve(Some(file), &BTreeMap::new(), &Overrides::default()).unwrap();
        assert_eq!(s.train.task, mediaprofile::TaskKind::Bias3);
        assert_eq!(s.train.grid.c_values, vec![1.0]);
        assert_eq!(s.train.grid.cv_folds, 5);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let none = BTreeMap::new();
        let flags = Overrides::default();
        assert!(matches!(resolve(Some("sede = 1"), &none, &flags), Err(Error::Config(_))));
        assert!(matches!(resolve(Some("seed = "), &none, &flags), Err(Error::Config(_))));
        assert!(matches!(
            resolve(None, &env(&[("MEDIAPROFILE_SEED", "x")]), &flags),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            resolve(Some("[backend]\nrate_limit = 0"), &none, &flags),
            Err(Error::Config(_))
        ));
    }
}
