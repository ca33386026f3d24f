use std::collections::BTreeMap;

use super::mechanism::Mechanism;
use super::model::CausalModel;
use super::value::Value;
use crate::error::{Error, Result};

/// Replacement of target mechanisms by constants. Empty means identity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HardIntervention {
    targets: BTreeMap<String, Value>,
}

impl HardIntervention {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: impl Into<String>, value: Value) -> Self {
        self.targets.insert(var.into(), value);
        self
    }

    pub fn targets(&self) -> &BTreeMap<String, Value> {
        &self.targets
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Union of two interventions with disjoint targets.
    pub fn union(&self, other: &HardIntervention) -> Result<HardIntervention> {
        let mut targets = self.targets.clone();
        for (k, v) in &other.targets {
            if targets.insert(k.clone(), *v).is_some() {
                return Err(Error::InvalidModel(format!("interventions overlap on `{k}`")));
            }
        }
        Ok(HardIntervention { targets })
    }
}

impl FromIterator<(String, Value)> for HardIntervention {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        Self {
            targets: iter.into_iter().collect(),
        }
    }
}

/// Returns a copy of `model` in which every target is fixed to its value.
pub fn apply_intervention(model: &CausalModel, iv: &HardIntervention) -> Result<CausalModel> {
    let mut replace = BTreeMap::new();
    for (name, value) in &iv.targets {
        let idx = model
            .index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
        let var = &model.variables()[idx];
        if !var.admits(value) {
            return Err(Error::OutOfDomain {
                variable: name.clone(),
                value: value.to_string(),
            });
        }
        replace.insert(idx, Mechanism::constant(*value));
    }
    model.replace_mechanisms(&replace)
}

/// The hard intervention fixing `targets` to the values they take on `source`.
pub fn interchange_intervention(model: &CausalModel, source: &[Value], targets: &[&str]) -> Result<HardIntervention> {
    let solved = model.solve(source)?;
    let values = solved.project(targets)?;
    Ok(targets.iter().map(|t| t.to_string()).zip(values).collect())
}
