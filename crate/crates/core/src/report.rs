//! Verdict records written by every inequality check.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::grid::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl From<&Grid2D> for GridInfo {
    fn from(g: &Grid2D) -> Self {
        GridInfo { nx: g.nx, ny: g.ny, h: g.h }
    }
}

/// One checked inequality: verdict, measured constant, the parameters that
/// attain it, and the grid of parameters swept.
///
/// Maps are ordered, so serializing the same report twice gives the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Descriptive slug of the inequality being tested.
    pub statement: String,
    pub passed: bool,
    /// Smallest constant consistent with every sample; `None` when unbounded.
    #[serde(rename = "empirical_C")]
    pub empirical_c: Option<f64>,
    pub witness: Map<String, Value>,
    pub sweep: Map<String, Value>,
    pub seed: Option<u64>,
    pub grid: Option<GridInfo>,
    pub conventions: Vec<String>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, statement: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            statement: statement.into(),
            passed: false,
            empirical_c: None,
            witness: Map::new(),
            sweep: Map::new(),
            seed: None,
            grid: None,
            conventions: Vec::new(),
            notes: Vec::new(),
            config_hash: None,
        }
    }

    /// Stores a finite constant; infinite or NaN values are recorded as `None`.
    pub fn set_constant(&mut self, c: f64) {
        self.empirical_c = c.is_finite().then_some(c);
    }

    pub fn witness(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.witness.insert(key.to_string(), v.into());
        self
    }

    pub fn sweep(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.sweep.insert(key.to_string(), v.into());
        self
    }

    pub fn convention(&mut self, s: impl Into<String>) -> &mut Self {
        self.conventions.push(s.into());
        self
    }

    pub fn note(&mut self, s: impl Into<String>) -> &mut Self {
        self.notes.push(s.into());
        self
    }

    pub fn with_grid(&mut self, g: &Grid2D) -> &mut Self {
        self.grid = Some(g.into());
        self
    }

    pub fn witness_f64(&self, key: &str) -> Option<f64> {
        self.witness.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// JSON number for finite values, `null` otherwise.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(vs: &[f64]) -> Value {
    Value::Array(vs.iter().map(|&v| num(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape_and_determinism() {
        let mut r = CheckReport::new("demo", "demo-statement");
        r.set_constant(0.5);
        r.witness("b", 2.0).witness("a", num(f64::INFINITY));
        r.with_grid(&Grid2D::new(4, 4, 0.25).unwrap());
        let s = r.to_json();
        assert_eq!(s, r.clone().to_json());
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["empirical_C"], 0.5);
        assert!(v["witness"]["a"].is_null());
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(v.get("config_hash").is_none());
        r.set_constant(f64::NAN);
        assert_eq!(r.empirical_c, None);
    }
}
