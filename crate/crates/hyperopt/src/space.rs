use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{HyperoptError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    #[default]
    Real,
    Integer,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default)]
    pub lower: f64,
    #[serde(default = "one")]
    pub upper: f64,
    #[serde(default)]
    pub scale: Scale,
    #[serde(rename = "type", default)]
    pub kind: ParamKind,
}

fn one() -> f64 {
    1.0
}

impl ParamSpec {
    pub fn real(name: &str, lower: f64, upper: f64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale,
            kind: ParamKind::Real,
        }
    }

    pub fn integer(name: &str, lower: i64, upper: i64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            lower: lower as f64,
            upper: upper as f64,
            scale,
            kind: ParamKind::Integer,
        }
    }

    pub fn boolean(name: &str) -> Self {
        Self {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            scale: Scale::Linear,
            kind: ParamKind::Boolean,
        }
    }

    fn to_unit(&self, x: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (x - self.lower) / (self.upper - self.lower),
            Scale::Log => (x.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        };
        u.clamp(0.0, 1.0)
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let x = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        };
        x.clamp(self.lower, self.upper)
    }

    /// The value at unit coordinate `u`, and `u` moved onto that value
    /// (integers and booleans are snapped).
    pub fn decode(&self, u: f64) -> (Value, f64) {
        match self.kind {
            ParamKind::Real => {
                let x = self.from_unit(u);
                (Value::from(x), u.clamp(0.0, 1.0))
            }
            ParamKind::Integer => {
                let x = self.from_unit(u).round().clamp(self.lower.ceil(), self.upper.floor());
                (Value::from(x as i64), self.to_unit(x))
            }
            ParamKind::Boolean => {
                let b = u >= 0.5;
                (Value::Bool(b), if b { 1.0 } else { 0.0 })
            }
        }
    }
}

/// Ordered parameter list; points live in the unit cube of matching dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let s = Self { params };
        s.validate()?;
        Ok(s)
    }

    pub fn dims(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(HyperoptError::EmptySpace);
        }
        for p in &self.params {
            if p.kind == ParamKind::Boolean {
                continue;
            }
            if !(p.lower < p.upper) || !p.lower.is_finite() || !p.upper.is_finite() {
                return Err(HyperoptError::BadBounds(p.name.clone()));
            }
            if p.scale == Scale::Log && p.lower <= 0.0 {
                return Err(HyperoptError::BadBounds(p.name.clone()));
            }
            if p.kind == ParamKind::Integer && p.lower.ceil() > p.upper.floor() {
                return Err(HyperoptError::BadBounds(p.name.clone()));
            }
        }
        Ok(())
    }

    /// Named values for a unit-cube point, plus the snapped point.
    pub fn decode(&self, point: &[f64]) -> (Map<String, Value>, Vec<f64>) {
        let mut config = Map::new();
        let mut snapped = Vec::with_capacity(point.len());
        for (p, &u) in self.params.iter().zip(point) {
            let (v, s) = p.decode(u);
            config.insert(p.name.clone(), v);
            snapped.push(s);
        }
        (config, snapped)
    }
}
