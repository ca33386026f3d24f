//! Declarative JSON model files.
//!
//! ```json
//! {
//!   "format": "causal-model/v1",
//!   "name": "M_XY",
//!   "variables": [
//!     { "name": "X", "role": "input", "domain": { "range": [1, 10] } },
//!     { "name": "Y", "role": "input", "domain": { "range": [1, 10] } },
//!     { "name": "Z", "role": "input", "domain": { "range": [1, 10] } },
//!     { "name": "P", "role": "intermediate", "domain": { "range": [2, 20] },
//!       "parents": ["X", "Y"], "mechanism": "sum" },
//!     { "name": "O", "role": "output", "domain": { "range": [3, 30] },
//!       "parents": ["P", "Z"], "mechanism": "sum" }
//!   ]
//! }
//! ```
//!
//! Domains are either `{"range": [lo, hi]}` (inclusive integers) or an explicit
//! list of values (`true`/`false`, `"not"`/`"id"`, `"and"`/`"or"`, integers).
//! `mechanism` names an entry of the registry (see
//! [`REGISTERED`](super::mechanism::REGISTERED)), or is `"constant"` with a
//! `value` field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mechanism::Mechanism;
use super::model::{CausalModel, ModelBuilder, Role};
use super::value::{int_domain, Value};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "causal-model/v1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DomainSpec {
    Range { range: [i64; 2] },
    List(Vec<Value>),
}

impl DomainSpec {
    fn values(&self) -> Vec<Value> {
        match self {
            DomainSpec::Range { range } => int_domain(range[0], range[1]),
            DomainSpec::List(v) => v.clone(),
        }
    }

    fn from_values(values: &[Value]) -> Self {
        let ints: Option<Vec<i64>> = values.iter().map(Value::as_int).collect();
        if let Some(ints) = ints {
            let contiguous = ints.windows(2).all(|w| w[1] == w[0] + 1);
            if contiguous && !ints.is_empty() {
                return DomainSpec::Range {
                    range: [ints[0], ints[ints.len() - 1]],
                };
            }
        }
        DomainSpec::List(values.to_vec())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RoleSpec {
    Input,
    Intermediate,
    Output,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub role: RoleSpec,
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub format: String,
    pub name: String,
    pub variables: Vec<VariableSpec>,
}

impl ModelFile {
    pub fn build(&self) -> Result<CausalModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format `{}` (expected `{MODEL_FORMAT}`)",
                self.format
            )));
        }
        let mut b = ModelBuilder::new(self.name.clone());
        for v in &self.variables {
            let domain = v.domain.values();
            if v.role == RoleSpec::Input {
                b = b.input(&v.name, domain);
                continue;
            }
            let mech_name = v
                .mechanism
                .as_deref()
                .ok_or_else(|| Error::InvalidModel(format!("`{}` needs a mechanism", v.name)))?;
            let mech = if mech_name == "constant" {
                let value = v
                    .value
                    .ok_or_else(|| Error::InvalidModel(format!("constant `{}` needs a value", v.name)))?;
                Mechanism::constant(value)
            } else {
                Mechanism::named(mech_name).ok_or_else(|| Error::UnknownMechanism(mech_name.to_string()))?
            };
            let parents: Vec<&str> = v.parents.iter().map(String::as_str).collect();
            b = match v.role {
                RoleSpec::Intermediate => b.intermediate(&v.name, domain, &parents, mech),
                _ => b.output(&v.name, domain, &parents, mech),
            };
        }
        b.build()
    }

    /// Serializable description of a model whose mechanisms are all registered or constant.
    pub fn from_model(model: &CausalModel) -> Result<Self> {
        let vars = model.variables();
        let mut out = Vec::with_capacity(vars.len());
        for v in vars {
            let role = match v.role {
                Role::Input => RoleSpec::Input,
                Role::Intermediate => RoleSpec::Intermediate,
                Role::Output => RoleSpec::Output,
            };
            let (mechanism, value) = if v.role == Role::Input && v.mechanism.is_input() {
                (None, None)
            } else if let Some(c) = v.mechanism.constant_value() {
                (Some("constant".to_string()), Some(c))
            } else if Mechanism::named(v.mechanism.name()).is_some() {
                (Some(v.mechanism.name().to_string()), None)
            } else {
                return Err(Error::UnknownMechanism(format!(
                    "`{}` uses unregistered mechanism `{}`",
                    v.name,
                    v.mechanism.name()
                )));
            };
            out.push(VariableSpec {
                name: v.name.clone(),
                role,
                domain: DomainSpec::from_values(&v.domain),
                parents: v.parents.iter().map(|&p| vars[p].name.clone()).collect(),
                mechanism,
                value,
            });
        }
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            name: model.name().to_string(),
            variables: out,
        })
    }
}

pub fn load_model(path: &Path) -> Result<CausalModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.build()
}

pub fn save_model(model: &CausalModel, path: &Path) -> Result<()> {
    let file = ModelFile::from_model(model)?;
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const XY: &str = r#"{
      "format": "causal-model/v1",
      "name": "M_XY",
      "variables": [
        { "name": "X", "role": "input", "domain": { "range": [1, 10] } },
        { "name": "Y", "role": "input", "domain": { "range": [1, 10] } },
        { "name": "Z", "role": "input", "domain": { "range": [1, 10] } },
        { "name": "P", "role": "intermediate", "domain": { "range": [2, 20] },
          "parents": ["X", "Y"], "mechanism": "sum" },
        { "name": "O", "role": "output", "domain": { "range": [3, 30] },
          "parents": ["P", "Z"], "mechanism": "sum" }
      ]
    }"#;

    #[test]
    fn parses_documented_example() {
        let m: ModelFile = serde_json::from_str(XY).unwrap();
        let model = m.build().unwrap();
        let s = model.solve(&[Value::Int(4), Value::Int(2), Value::Int(8)]).unwrap();
        assert_eq!(s.get("P"), Some(Value::Int(6)));
        assert_eq!(s.get("O"), Some(Value::Int(14)));
        let back = ModelFile::from_model(&model).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_mechanism_and_format() {
        let bad = XY.replace("\"sum\" }\n      ]", "\"mul\" }\n      ]");
        let m: ModelFile = serde_json::from_str(&bad).unwrap();
        assert!(matches!(m.build(), Err(Error::UnknownMechanism(_))));
        let bad = XY.replace("causal-model/v1", "causal-model/v9");
        let m: ModelFile = serde_json::from_str(&bad).unwrap();
        assert!(matches!(m.build(), Err(Error::Format(_))));
    }
}
