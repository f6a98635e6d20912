//! `key=value` word lists, as used by the potential and domain spec strings
//! (`kind=quartic a1=1 a2=2`, `family=annulus r_in=0.5 r_out=1.0 h=0.02`).

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KvError {
    #[error("malformed token `{0}` (expected key=value)")]
    Malformed(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("field `{key}`: cannot parse `{value}` as a number")]
    NotANumber { key: String, value: String },
    #[error("unknown field `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Default)]
pub struct KvList {
    entries: BTreeMap<String, String>,
}

impl KvList {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for token in text.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| KvError::Malformed(token.to_string()))?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(KvError::Duplicate(k.to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn str(&self, key: &str) -> Result<&str, KvError> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn num(&self, key: &str) -> Result<f64, KvError> {
        let v = self.str(key)?;
        v.parse().map_err(|_| KvError::NotANumber {
            key: key.to_string(),
            value: v.to_string(),
        })
    }

    pub fn opt_num(&self, key: &str) -> Result<Option<f64>, KvError> {
        match self.entries.contains_key(key) {
            true => self.num(key).map(Some),
            false => Ok(None),
        }
    }

    /// Fails on the first key not in `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<(), KvError> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(KvError::Unknown(k.clone())),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_errors() {
        let kv = KvList::parse("family=annulus r_in=0.5  r_out=1.0").unwrap();
        assert_eq!(kv.str("family").unwrap(), "annulus");
        assert_eq!(kv.num("r_out").unwrap(), 1.0);
        assert_eq!(kv.num("h"), Err(KvError::Missing("h".into())));
        assert!(matches!(KvList::parse("a=1 a=2"), Err(KvError::Duplicate(_))));
        assert!(matches!(KvList::parse("a"), Err(KvError::Malformed(_))));
        assert!(matches!(kv.num("family"), Err(KvError::NotANumber { .. })));
        assert!(matches!(kv.only(&["family", "r_in"]), Err(KvError::Unknown(k)) if k == "r_out"));
    }
}
