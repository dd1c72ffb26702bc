//! Flat `key = value` config files.
//!
//! Every key uses the same name as its CLI flag (`mode`, `q`, `beta`,
//! `epochs`, `batch-size`, `seed`, `seeds`, `dataset`, `out`, `pre-sn`,
//! `lr`, `momentum`, `hidden`); a flag given on the command line wins
//! over the file. Blank lines and lines starting with `#` or `;` are
//! ignored.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};

pub type ConfigMap = HashMap<String, String>;

pub fn parse_ini(text: &str) -> ConfigMap {
    let mut map = ConfigMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    map
}

pub fn load_config(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    Ok(parse_ini(&text))
}

/// CLI value if present, else the config-file value, else the default.
pub fn resolve<T: FromStr + Clone>(
    cli: Option<T>,
    cfg: &ConfigMap,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = cli {
        return Ok(v);
    }
    if let Some(raw) = cfg.get(key) {
        return raw
            .parse::<T>()
            .map_err(|e| anyhow!("config key '{key}': {e}"));
    }
    Ok(default)
}

/// Same as [`resolve`] but through an explicit parser (for domain enums).
pub fn resolve_with<T>(
    cli: Option<T>,
    cfg: &ConfigMap,
    key: &str,
    default: T,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    if let Some(v) = cli {
        return Ok(v);
    }
    if let Some(raw) = cfg.get(key) {
        return parse(raw).map_err(|e| anyhow!("config key '{key}': {e}"));
    }
    Ok(default)
}

/// Booleans accept `true/false/1/0/yes/no`.
pub fn resolve_flag(cli: bool, cfg: &ConfigMap, key: &str) -> Result<bool> {
    if cli {
        return Ok(true);
    }
    match cfg.get(key).map(|s| s.as_str()) {
        None => Ok(false),
        Some("true") | Some("1") | Some("yes") => Ok(true),
        Some("false") | Some("0") | Some("no") => Ok(false),
        Some(other) => Err(anyhow!("config key '{key}': bad boolean '{other}'")),
    }
}

/// Comma-separated list of widths, e.g. `32,32`.
pub fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("bad hidden width '{part}': {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ini_parsing_skips_comments() {
        let map = parse_ini("# comment\nmode = aon\n\n; other\nq=4\nbatch-size = 16\n");
        assert_eq!(map.get("mode").unwrap(), "aon");
        assert_eq!(map.get("q").unwrap(), "4");
        assert_eq!(map.get("batch-size").unwrap(), "16");
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn cli_overrides_config() {
        let map = parse_ini("epochs = 10");
        assert_eq!(resolve(Some(3usize), &map, "epochs", 1).unwrap(), 3);
        assert_eq!(resolve(None::<usize>, &map, "epochs", 1).unwrap(), 10);
        assert_eq!(resolve(None::<usize>, &map, "seeds", 7).unwrap(), 7);
    }

    #[test]
    fn flags_and_lists() {
        let map = parse_ini("pre-sn = true\nhidden = 16, 8");
        assert!(resolve_flag(false, &map, "pre-sn").unwrap());
        assert!(!resolve_flag(false, &map, "other").unwrap());
        assert!(resolve_flag(true, &ConfigMap::new(), "pre-sn").unwrap());
        assert_eq!(parse_hidden(map.get("hidden").unwrap()).unwrap(), vec![16, 8]);
        assert!(parse_hidden("1,x").is_err());
    }
}
