//! Parameter bindings such as `n=1024;m=512`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concrete values for a kernel's size parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(BTreeMap<String, i64>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: i64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: i64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

impl FromIterator<(String, i64)> for Binding {
    fn from_iter<I: IntoIterator<Item = (String, i64)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Binding {
    type Err = Error;

    /// Accepts `n=1024;m=512` (commas also separate pairs). An empty string is
    /// the empty binding.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = Binding::new();
        for pair in s.split([';', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::Format(format!("binding entry `{pair}` is not name=value"))
            })?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Format(format!(
                    "bad parameter name `{k}` in binding"
                )));
            }
            let v: i64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("binding value for `{k}` is not an integer")))?;
            out.set(k, v);
        }
        Ok(out)
    }
}

/// A work-group shape, written `16x16` or `256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupConfig(pub i64, pub i64);

impl GroupConfig {
    pub fn one_d(size: i64) -> Self {
        GroupConfig(size, 1)
    }

    pub fn threads(&self) -> i64 {
        self.0 * self.1
    }

    /// Constant overrides applied when instantiating a kernel (`gs0`, `gs1`).
    pub fn overrides(&self) -> Vec<(String, i64)> {
        vec![("gs0".to_string(), self.0), ("gs1".to_string(), self.1)]
    }
}

impl fmt::Display for GroupConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 == 1 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{}x{}", self.0, self.1)
        }
    }
}

impl FromStr for GroupConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("group config `{s}` is not `A` or `AxB`"));
        let parts: Vec<&str> = s.trim().split(['x', 'X', '*']).map(str::trim).collect();
        let nums: Vec<i64> = parts
            .iter()
            .map(|p| p.parse::<i64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match nums.as_slice() {
            [a] if *a > 0 => Ok(GroupConfig(*a, 1)),
            [a, b] if *a > 0 && *b > 0 => Ok(GroupConfig(*a, *b)),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_text_form() {
        let b: Binding = "n=1024; m=512".parse().unwrap();
        assert_eq!(b.get("n"), Some(1024));
        assert_eq!(b.get("m"), Some(512));
        assert_eq!(b.to_string(), "m=512;n=1024");
        assert!("".parse::<Binding>().unwrap().is_empty());
        assert!("n".parse::<Binding>().is_err());
        assert!("n=x".parse::<Binding>().is_err());
    }

    #[test]
    fn group_config_text_form() {
        assert_eq!("16x12".parse::<GroupConfig>().unwrap(), GroupConfig(16, 12));
        assert_eq!("256".parse::<GroupConfig>().unwrap(), GroupConfig(256, 1));
        assert_eq!(GroupConfig(256, 1).to_string(), "256");
        assert_eq!(GroupConfig(16, 14).to_string(), "16x14");
        assert!("0x4".parse::<GroupConfig>().is_err());
    }
}
