//! Flat `key=value` configuration files.
//!
//! Keys are the long flag names without the leading dashes; `_` and `-` are
//! interchangeable. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;

/// Keys a configuration file may set.
pub const KEYS: [&str; 11] = [
    "task",
    "morphology",
    "seed",
    "budget",
    "no-pressure-control",
    "out",
    "render",
    "frame-stride",
    "parallelism",
    "genome",
    "server",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
            if values
                .insert(key.clone(), value.trim().to_owned())
                .is_some()
            {
                return Err(format!("line {}: duplicate key `{key}`", i + 1));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn flag(&self, key: &str) -> Result<bool, String> {
        match self.get(key) {
            None => Ok(false),
            Some(v) => parse_bool(v).ok_or_else(|| format!("`{key}` must be true or false")),
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_aliases() {
        let c = ConfigFile::parse("# run\n\ntask = escape\nframe_stride=3\nrender=yes\n").unwrap();
        assert_eq!(c.get("task"), Some("escape"));
        assert_eq!(c.get("frame-stride"), Some("3"));
        assert_eq!(c.flag("render"), Ok(true));
        assert_eq!(c.flag("no-pressure-control"), Ok(false));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(ConfigFile::parse("speed=3")
            .unwrap_err()
            .contains("unknown key"));
        assert!(ConfigFile::parse("seed=1\nseed=2")
            .unwrap_err()
            .contains("duplicate"));
        assert!(ConfigFile::parse("seed").unwrap_err().contains("line 1"));
        assert!(ConfigFile::parse("render=maybe")
            .unwrap()
            .flag("render")
            .is_err());
    }
}
