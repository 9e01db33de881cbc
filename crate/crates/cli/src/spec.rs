//! Experiment specification: the `--param key=value` bag with typed access
//! and strict unknown-key rejection.

use std::collections::BTreeMap;
use std::path::PathBuf;

/// A parsed experiment invocation. Parameters are consumed by the command
/// through the typed getters; any key left over when [`Self::finish`] runs
/// is an error, so misspelled parameters never fall back to defaults
/// silently.
#[derive(Debug)]
pub struct ExperimentSpec {
    pub name: &'static str,
    pub seed: u64,
    pub out: PathBuf,
    params: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn new(
        name: &'static str,
        raw_params: &[String],
        seed: u64,
        out: PathBuf,
    ) -> Result<Self, String> {
        let mut params = BTreeMap::new();
        for raw in raw_params {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| format!("parameter {raw:?} is not of the form key=value"))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(format!("parameter {raw:?} has an empty key"));
            }
            if params.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(format!("parameter {key:?} given more than once"));
            }
        }
        Ok(Self {
            name,
            seed,
            out,
            params,
        })
    }

    /// Remove and return a raw parameter value.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.params.remove(key)
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64, String> {
        match self.params.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|e| format!("parameter {key}={v:?} is not a number: {e}")),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize, String> {
        match self.params.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|e| format!("parameter {key}={v:?} is not a count: {e}")),
        }
    }

    /// Error out if any parameter was never consumed.
    pub fn finish(self) -> Result<(), String> {
        if self.params.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.params.keys().map(String::as_str).collect();
        Err(format!(
            "unknown parameter(s) for {}: {}",
            self.name,
            keys.join(", ")
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(params: &[&str]) -> Result<ExperimentSpec, String> {
        let raw: Vec<String> = params.iter().map(|s| s.to_string()).collect();
        ExperimentSpec::new("test", &raw, 0, PathBuf::from("."))
    }

    #[test]
    fn typed_getters_consume_keys() {
        let mut s = spec(&["kappa=0.25", "trials=7"]).unwrap();
        assert_eq!(s.take_f64("kappa", 0.1).unwrap(), 0.25);
        assert_eq!(s.take_f64("theta", 0.5).unwrap(), 0.5);
        assert_eq!(s.take_usize("trials", 20).unwrap(), 7);
        s.finish().unwrap();
    }

    #[test]
    fn leftover_keys_are_rejected() {
        let s = spec(&["bogus=1"]).unwrap();
        let err = s.finish().unwrap_err();
        assert!(err.contains("bogus"));
    }

    #[test]
    fn malformed_pairs_are_rejected() {
        assert!(spec(&["noequals"]).is_err());
        assert!(spec(&["=5"]).is_err());
        assert!(spec(&["k=1", "k=2"]).is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut s = spec(&["kappa=abc"]).unwrap();
        let err = s.take_f64("kappa", 0.1).unwrap_err();
        assert!(err.contains("kappa"));
    }
}
