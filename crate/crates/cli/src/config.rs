//! Key-value configuration files with `[section]` headers.
//!
//! ```text
//! # comment
//! [experiment]
//! preset = desk
//! t_list = 2000,5000
//! theta0 = 0.5,0.6,0.7
//! ```
//!
//! Values are plain strings split on `=`; lists are comma-separated. Unknown
//! keys are rejected by the consumers, not the parser.

use std::collections::BTreeMap;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    bail!("line {}: unterminated section header {raw:?}", lineno + 1);
                };
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
            } else if let Some((key, value)) = line.split_once('=') {
                if current.is_empty() {
                    bail!("line {}: key outside any [section]", lineno + 1);
                }
                sections
                    .get_mut(&current)
                    .expect("current section exists")
                    .insert(key.trim().to_string(), value.trim().to_string());
            } else {
                bail!("line {}: expected `key = value`, got {raw:?}", lineno + 1);
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn section(&self, name: &str) -> Section<'_> {
        Section {
            name: name.to_string(),
            entries: self.sections.get(name),
        }
    }
}

pub struct Section<'a> {
    name: String,
    entries: Option<&'a BTreeMap<String, String>>,
}

impl Section<'_> {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.and_then(|m| m.get(key)).map(String::as_str)
    }

    /// Parses an optional scalar value.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => match s.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("[{}] {key} = {s:?}: {e}", self.name),
            },
        }
    }

    /// Scalar value with a default.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Optional comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(s) = self.raw(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for part in s.split(',') {
            match part.trim().parse() {
                Ok(v) => out.push(v),
                Err(e) => bail!("[{}] {key}: bad element {part:?}: {e}", self.name),
            }
        }
        Ok(Some(out))
    }

    /// Comma-separated triple `a,b,c`.
    pub fn get_triple(&self, key: &str) -> Result<Option<(f64, f64, f64)>> {
        let Some(list) = self.get_list::<f64>(key)? else {
            return Ok(None);
        };
        if list.len() != 3 {
            bail!("[{}] {key}: expected three values", self.name);
        }
        Ok(Some((list[0], list[1], list[2])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_lists_and_comments() {
        let cfg = Config::parse(
            "# top comment\n[experiment]\nt_list = 10, 20 # inline\nseed = 7\n\n[mu_sweep]\nmu_values = 0.2,0.5\n",
        )
        .unwrap();
        assert!(cfg.has_section("mu_sweep"));
        let e = cfg.section("experiment");
        assert_eq!(e.get_list::<usize>("t_list").unwrap().unwrap(), vec![10, 20]);
        assert_eq!(e.get_or::<u64>("seed", 0).unwrap(), 7);
        assert_eq!(e.get_or::<u64>("missing", 3).unwrap(), 3);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("key = 1\n").is_err());
        assert!(Config::parse("[a\n").is_err());
        assert!(Config::parse("[a]\nnot a pair\n").is_err());
        let cfg = Config::parse("[a]\nx = abc\n").unwrap();
        assert!(cfg.section("a").get::<f64>("x").is_err());
    }
}
