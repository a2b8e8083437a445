//! String key-value parameters for builtin rates and systems.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordered `key=value` map. Lists use `;` as separator (`matrix=-1;0;0;1`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Params(BTreeMap<String, String>);

impl Params {
    /// Parses `k=v,k2=v2`. Empty input gives an empty map.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::InvalidParameter {
                name: item.to_string(),
                reason: "expected key=value".into(),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Params(map))
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Numeric value, if present.
    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    /// `;`-separated numeric list, if present.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(|c: char| c == ';' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect()
            })
            .transpose()
    }

    /// Fails on keys outside `allowed`.
    pub fn expect_only(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter {
                name: k.clone(),
                reason: format!("unexpected; allowed keys are {allowed:?}"),
            }),
            None => Ok(()),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::InvalidParameter {
        name: key.to_string(),
        reason: format!("`{v}` is not a finite number"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parses_pairs_and_lists() {
        let p = Params::parse("alpha=-2, matrix=1;0;0;-1 ,rate=exponential").unwrap();
        assert_eq!(p.f64("alpha").unwrap(), Some(-2.0));
        assert_eq!(p.list("matrix").unwrap().unwrap(), vec![1.0, 0.0, 0.0, -1.0]);
        assert_eq!(p.get("rate"), Some("exponential"));
        assert!(p.f64("rate").is_err());
        assert!(Params::parse("novalue").is_err());
        assert!(p.expect_only(&["alpha", "matrix"]).is_err());
    }
}
