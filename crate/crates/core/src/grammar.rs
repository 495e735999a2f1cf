//! The compact `name:key=value,key=value` grammar shared by penalty and
//! method specs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpecString {
    pub name: String,
    params: Vec<(String, String)>,
    source: String,
}

impl SpecString {
    pub fn parse(input: &str) -> Result<Self> {
        let s = input.trim();
        if s.is_empty() {
            return Err(Error::parse(input, "empty spec"));
        }
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (s, None),
        };
        if name.is_empty() {
            return Err(Error::parse(input, "missing name"));
        }
        let mut params: Vec<(String, String)> = Vec::new();
        if let Some(rest) = rest {
            for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| Error::parse(input, format!("expected key=value, got `{item}`")))?;
                let k = k.trim().to_ascii_lowercase();
                if params.iter().any(|(pk, _)| *pk == k) {
                    return Err(Error::parse(input, format!("duplicate key `{k}`")));
                }
                params.push((k, v.trim().to_string()));
            }
        }
        Ok(Self {
            name: name.to_ascii_lowercase(),
            params,
            source: input.to_string(),
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.iter().any(|(k, _)| k == key)
    }

    /// Adds or replaces a parameter.
    pub fn set(&mut self, key: &str, value: String) {
        match self.params.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.params.push((key.to_string(), value)),
        }
    }

    /// Removes and returns a parameter, or `None` when absent.
    pub fn take(&mut self, key: &str) -> Option<String> {
        let idx = self.params.iter().position(|(k, _)| k == key)?;
        Some(self.params.remove(idx).1)
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let parsed = if v.eq_ignore_ascii_case("inf") {
                    f64::INFINITY
                } else {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(&self.source, format!("`{key}` is not a number")))?
                };
                Ok(Some(parsed))
            }
        }
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64> {
        self.take_f64(key)?
            .ok_or_else(|| Error::parse(&self.source, format!("missing `{key}`")))
    }

    pub fn require_usize(&mut self, key: &str) -> Result<usize> {
        let v = self
            .take(key)
            .ok_or_else(|| Error::parse(&self.source, format!("missing `{key}`")))?;
        v.parse::<usize>()
            .map_err(|_| Error::parse(&self.source, format!("`{key}` must be a non-negative integer")))
    }

    /// Fails if any parameter was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.params.first() {
            None => Ok(()),
            Some((k, _)) => Err(Error::parse(
                &self.source,
                format!("unknown key `{k}` for `{}`", self.name),
            )),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_name_and_params() {
        let mut s = SpecString::parse("MCP: a=1, lambda=2").unwrap();
        assert_eq!(s.name, "mcp");
        assert_eq!(s.require_f64("a").unwrap(), 1.0);
        assert_eq!(s.require_f64("lambda").unwrap(), 2.0);
        s.finish().unwrap();
    }

    #[test]
    fn rejects_leftovers_and_garbage() {
        let mut s = SpecString::parse("l1:x=1").unwrap();
        assert!(s.take("y").is_none());
        assert!(s.finish().is_err());
        assert!(SpecString::parse("logsum:eps").is_err());
        assert!(SpecString::parse("logsum:eps=1,eps=2").is_err());
        assert!(SpecString::parse("").is_err());
    }
}
