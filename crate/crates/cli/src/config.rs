//! Optional JSON defaults. Keys are the long flag names. A key named after
//! a subcommand holds an object of defaults for that subcommand only and
//! overrides top-level keys; command-line flags override both.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{usage, CliError, CliResult};

const COMMANDS: [&str; 6] = ["ingest", "simulate", "emulate", "fit", "replicate", "report"];

pub fn load(path: Option<&Path>) -> CliResult<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage(format!("config {} must hold a JSON object", path.display()))),
        Err(e) => Err(usage(format!("config {}: {e}", path.display()))),
    }
}

/// A flag counts as given unless it is absent, an empty list or an unset switch.
fn given(v: &Value) -> bool {
    !matches!(v, Value::Null | Value::Bool(false)) && !matches!(v, Value::Array(a) if a.is_empty())
}

pub fn merge<T: Serialize + DeserializeOwned>(cli: T, cfg: &Map<String, Value>, command: &str) -> CliResult<T> {
    let mut out = Map::new();
    for (k, v) in cfg {
        if !COMMANDS.contains(&k.as_str()) {
            out.insert(k.clone(), v.clone());
        }
    }
    if let Some(section) = cfg.get(command) {
        let Value::Object(s) = section else {
            return Err(usage(format!("config key {command:?} must hold an object")));
        };
        out.extend(s.clone());
    }
    let Value::Object(flags) = serde_json::to_value(cli).map_err(|e| CliError::Runtime(e.into()))? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in flags {
        if given(&v) {
            out.insert(k, v);
        } else {
            out.entry(k).or_insert(v);
        }
    }
    serde_json::from_value(Value::Object(out)).map_err(|e| usage(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::FitArgs;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        fit: FitArgs,
    }

    #[test]
    fn flags_override_sections_override_top_level() {
        let cfg: Map<String, Value> = serde_json::from_str(
            r#"{"level": 0.9, "population": 1000, "seed": 4, "fit": {"level": 0.8, "fix": ["r0_init=0"]}, "ingest": {"country": "X"}}"#,
        )
        .unwrap();
        let cli = Wrap::parse_from(["x", "--seed", "9"]).fit;
        let m = merge(cli, &cfg, "fit").unwrap();
        assert_eq!(m.level, Some(0.8));
        assert_eq!(m.population, Some(1000.0));
        assert_eq!(m.seed, Some(9));
        assert_eq!(m.fix, vec!["r0_init=0".to_string()]);
    }

    #[test]
    fn unknown_keys_are_ignored_and_bad_types_rejected() {
        let cfg: Map<String, Value> = serde_json::from_str(r#"{"colour": "red"}"#).unwrap();
        assert!(merge(Wrap::parse_from(["x"]).fit, &cfg, "fit").is_ok());
        let cfg: Map<String, Value> = serde_json::from_str(r#"{"level": "high"}"#).unwrap();
        assert!(matches!(merge(Wrap::parse_from(["x"]).fit, &cfg, "fit"), Err(CliError::Usage(_))));
    }
}
