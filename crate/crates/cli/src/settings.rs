//! Flat `key = value` configuration with command-line overrides. Every value
//! read (including defaults) is recorded so it can be echoed into the
//! manifest and replayed.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    given: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Failure::Usage(format!("config line {}: empty key", n + 1)));
        }
        out.insert(key.to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    /// Layer a config file (lowest), `KEY=VALUE` overrides, then explicit
    /// flag values (highest).
    pub fn from_sources(
        file: Option<&Path>,
        overrides: &[String],
        flags: &[(&str, Option<String>)],
    ) -> Result<Self, Failure> {
        let mut given = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
                parse_flat(&text)?
            }
            None => BTreeMap::new(),
        };
        given.extend(parse_flat(&overrides.join("\n"))?);
        for (k, v) in flags {
            if let Some(v) = v {
                given.insert(k.to_string(), v.clone());
            }
        }
        Ok(Self {
            given,
            used: BTreeMap::new(),
        })
    }

    pub fn from_map(given: BTreeMap<String, String>) -> Self {
        Self {
            given,
            used: BTreeMap::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.given.get(key).cloned();
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.clone());
        }
        v
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr + ToString,
    {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Failure::Usage(format!("invalid value for {key}: {v:?}"))),
            None => {
                self.used.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    /// Optional key with no default; absent keys are not echoed.
    pub fn get_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, Failure> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Failure::Usage(format!("invalid value for {key}: {v:?}")))
            })
            .transpose()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.given.contains_key(key)
    }

    /// Keys given but never read are rejected.
    pub fn check_unused(&self) -> Result<(), Failure> {
        let unknown: Vec<&str> = self
            .given
            .keys()
            .filter(|k| !self.used.contains_key(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Failure::Usage(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }

    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.used
    }

    /// The echo in the same flat format the parser reads.
    pub fn to_flat(&self) -> String {
        self.used.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "# comment\nseed = 3\n\nensemble=10\n").unwrap();
        let mut s = Settings::from_sources(
            Some(&path),
            &["ensemble=20".into()],
            &[("seed", Some("5".into())), ("preset", None)],
        )
        .unwrap();
        assert_eq!(s.get::<u64>("seed", 0).unwrap(), 5);
        assert_eq!(s.get::<usize>("ensemble", 1).unwrap(), 20);
        assert_eq!(s.get::<f64>("tol", 1e-8).unwrap(), 1e-8);
        s.check_unused().unwrap();
        let replay = Settings::from_map(parse_flat(&s.to_flat()).unwrap());
        assert_eq!(replay.given, s.used);
    }

    #[test]
    fn rejects_bad_lines_values_and_unknown_keys() {
        assert!(parse_flat("novalue").is_err());
        assert!(parse_flat("=3").is_err());
        let mut s = Settings::from_map(parse_flat("tol = abc\nfoo = 1").unwrap());
        assert!(s.get::<f64>("tol", 1.0).is_err());
        assert!(matches!(s.check_unused(), Err(Failure::Usage(m)) if m.contains("foo")));
    }
}
