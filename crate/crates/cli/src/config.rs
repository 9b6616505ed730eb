//! INI-style experiment configuration: `[section]` headers, `key = value` lines, `#` or
//! `;` comments, comma-separated arrays and `;`-separated matrix rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    /// Directory of the config file, for relative paths.
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        let mut current = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Parse(format!("line {}: unterminated section header", no + 1)))?
                    .trim();
                if name.is_empty() || name.contains(['.', '[', ']']) {
                    return Err(CliError::Parse(format!("line {}: invalid section name `{name}`", no + 1)));
                }
                current = name.to_string();
                cfg.sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Parse(format!("line {}: expected `key = value`", no + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) || k.contains('.') {
                return Err(CliError::Parse(format!("line {}: invalid key `{k}`", no + 1)));
            }
            let sec = cfg.sections.entry(current.clone()).or_default();
            if sec.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::Parse(format!("line {}: duplicate key `{k}`", no + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Config::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn split_path(path: &str) -> (&str, &str) {
        path.rsplit_once('.').unwrap_or(("", path))
    }

    /// Set `section.key` (or a top-level `key`).
    pub fn set(&mut self, path: &str, value: impl Into<String>) {
        let (s, k) = Self::split_path(path);
        self.sections.entry(s.to_string()).or_default().insert(k.to_string(), value.into());
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> CliResult<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Parse(format!("override `{spec}` is not of the form section.key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        let (s, k) = Self::split_path(path);
        self.sections.get(s)?.get(k).map(String::as_str)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Sorted `[section]` / `key = value` rendering; the hash input.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (s, kv) in &self.sections {
            if kv.is_empty() {
                continue;
            }
            out.push_str(&format!("[{s}]\n"));
            for (k, v) in kv {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn parse_value<T: std::str::FromStr>(path: &str, v: &str) -> CliResult<T> {
        v.trim()
            .parse()
            .map_err(|_| CliError::invalid(path, format!("cannot parse `{v}`")))
    }

    pub fn str_or<'a>(&'a self, path: &str, default: &'a str) -> &'a str {
        self.get(path).unwrap_or(default)
    }

    pub fn f64_or(&self, path: &str, default: f64) -> CliResult<f64> {
        self.get(path).map_or(Ok(default), |v| Self::parse_value(path, v))
    }

    pub fn f64_req(&self, path: &str) -> CliResult<f64> {
        let v = self.get(path).ok_or_else(|| CliError::invalid(path, "missing"))?;
        Self::parse_value(path, v)
    }

    pub fn usize_or(&self, path: &str, default: usize) -> CliResult<usize> {
        self.get(path).map_or(Ok(default), |v| Self::parse_value(path, v))
    }

    pub fn u64_or(&self, path: &str, default: u64) -> CliResult<u64> {
        self.get(path).map_or(Ok(default), |v| Self::parse_value(path, v))
    }

    pub fn bool_or(&self, path: &str, default: bool) -> CliResult<bool> {
        self.get(path).map_or(Ok(default), |v| Self::parse_value(path, v))
    }

    fn list<T: std::str::FromStr>(path: &str, v: &str) -> CliResult<Vec<T>> {
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|s| Self::parse_value(path, s)).collect()
    }

    pub fn f64_list_or(&self, path: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        self.get(path).map_or(Ok(default.to_vec()), |v| Self::list(path, v))
    }

    /// Integer list; `a..b` (inclusive) ranges are accepted as items.
    pub fn usize_list_or(&self, path: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        let Some(v) = self.get(path) else {
            return Ok(default.to_vec());
        };
        let mut out = Vec::new();
        if v.trim().is_empty() {
            return Ok(out);
        }
        for item in v.split(',') {
            if let Some((a, b)) = item.split_once("..") {
                let a: usize = Self::parse_value(path, a)?;
                let b: usize = Self::parse_value(path, b)?;
                out.extend(a..=b);
            } else {
                out.push(Self::parse_value(path, item)?);
            }
        }
        Ok(out)
    }

    /// Matrix with rows separated by `;` and entries by `,`.
    pub fn matrix(&self, path: &str) -> CliResult<Option<Vec<Vec<f64>>>> {
        let Some(v) = self.get(path) else {
            return Ok(None);
        };
        let rows: Vec<Vec<f64>> = v
            .split(';')
            .filter(|r| !r.trim().is_empty())
            .map(|r| Self::list(path, r))
            .collect::<CliResult<_>>()?;
        if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(CliError::invalid(path, "rows must be nonempty and of equal length"));
        }
        Ok(Some(rows))
    }

    /// Path relative to the config file's directory.
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = PathBuf::from(p);
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_lists_and_matrices() {
        let c = Config::parse("experiment = couple\n# note\n[env]\nkind = finite-markov\ntransition = 0.9, 0.1; 0.2, 0.8\n[run]\nn_grid = 0..3, 10\n").unwrap();
        assert_eq!(c.get("experiment"), Some("couple"));
        assert_eq!(c.matrix("env.transition").unwrap().unwrap(), vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert_eq!(c.usize_list_or("run.n_grid", &[]).unwrap(), vec![0, 1, 2, 3, 10]);
        assert!(c.usize_list_or("run.missing", &[]).unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(Config::parse("[env\n"), Err(CliError::Parse(_))));
        assert!(matches!(Config::parse("novalue\n"), Err(CliError::Parse(_))));
        assert!(matches!(Config::parse("a = 1\na = 2\n"), Err(CliError::Parse(_))));
    }

    #[test]
    fn bad_numbers_are_validation_errors_with_field_path() {
        let c = Config::parse("[run]\nreps = ten\n").unwrap();
        let e = c.usize_or("run.reps", 1).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("run.reps"));
    }

    #[test]
    fn hash_ignores_order_and_comments() {
        let a = Config::parse("[a]\nx = 1\ny = 2\n").unwrap();
        let b = Config::parse("# c\n[a]\ny = 2\nx = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.set("a.x", "3");
        assert_ne!(a.hash(), c.hash());
    }
}
