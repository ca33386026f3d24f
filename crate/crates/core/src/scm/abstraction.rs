//! Exhaustive checking of constructive abstraction under interchange interventions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::intervention::{apply_intervention, HardIntervention};
use super::model::{CausalModel, Role};
use super::value::Value;
use crate::error::{Error, Result};

type ProjectionFn = dyn Fn(&[Value]) -> Value + Send + Sync;

/// Maps a setting of a low-level cell to a value of its high-level variable.
#[derive(Clone)]
pub struct Projection(Arc<ProjectionFn>);

impl Projection {
    /// Single-variable cell copied verbatim.
    pub fn identity() -> Self {
        Projection(Arc::new(|v: &[Value]| v[0]))
    }

    pub fn from_fn(f: impl Fn(&[Value]) -> Value + Send + Sync + 'static) -> Self {
        Projection(Arc::new(f))
    }

    pub fn apply(&self, v: &[Value]) -> Value {
        (self.0)(v)
    }
}

impl fmt::Debug for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Projection")
    }
}

/// Assignment of each high-level variable to a cell of low-level variables
/// together with a projection of that cell's values.
#[derive(Clone, Debug, Default)]
pub struct Alignment {
    cells: BTreeMap<String, (Vec<String>, Projection)>,
}

impl Alignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Aligns every variable of `model` with the same-named variable.
    pub fn identity(model: &CausalModel) -> Self {
        let mut a = Self::new();
        for v in model.variables() {
            a = a.align(&v.name, &[&v.name], Projection::identity());
        }
        a
    }

    pub fn align(mut self, high: &str, low: &[&str], projection: Projection) -> Self {
        self.cells.insert(
            high.to_string(),
            (low.iter().map(|s| s.to_string()).collect(), projection),
        );
        self
    }

    pub fn cell(&self, high: &str) -> Option<&[String]> {
        self.cells.get(high).map(|(c, _)| c.as_slice())
    }

    fn validate(&self, low: &CausalModel, high: &CausalModel) -> Result<()> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for v in high.variables() {
            let Some((cell, _)) = self.cells.get(&v.name) else {
                return Err(Error::InvalidModel(format!(
                    "alignment does not cover high-level variable `{}`",
                    v.name
                )));
            };
            if cell.is_empty() {
                return Err(Error::InvalidModel(format!("cell of `{}` is empty", v.name)));
            }
            for l in cell {
                if low.index_of(l).is_none() {
                    return Err(Error::UnknownVariable(l.clone()));
                }
                if let Some(prev) = owner.insert(l, &v.name) {
                    return Err(Error::InvalidModel(format!(
                        "low-level `{l}` is aligned with both `{prev}` and `{}`",
                        v.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// τ^π: the high-level setting read off a low-level total setting.
    fn translate(&self, high: &CausalModel, low_setting: &super::model::TotalSetting) -> Result<Vec<Value>> {
        high.variables()
            .iter()
            .map(|v| {
                let (cell, proj) = &self.cells[&v.name];
                let names: Vec<&str> = cell.iter().map(String::as_str).collect();
                Ok(proj.apply(&low_setting.project(&names)?))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub base: Vec<Value>,
    pub source: Vec<Value>,
    pub targets: Vec<String>,
    /// High-level solution under the high-level interchange intervention.
    pub expected: Vec<Value>,
    /// Translation of the low-level solution under the aligned interchange.
    pub translated: Vec<Value>,
}

#[derive(Clone, Debug)]
pub struct AbstractionReport {
    pub holds: bool,
    pub checked: usize,
    pub counterexamples: Vec<Counterexample>,
}

/// Brute-force check that `high` is a constructive abstraction of `low`.
///
/// Enumerates every base input, every source input and every subset of the
/// high-level non-input variables; for each, the interchange intervention on
/// the high-level targets is compared against the interchange on their aligned
/// low-level cells, after translating the low-level solution. The input map is
/// the identity, so both models must declare identical input variables and
/// domains.
pub fn check_constructive_abstraction(
    low: &CausalModel,
    high: &CausalModel,
    align: &Alignment,
    max_counterexamples: usize,
) -> Result<AbstractionReport> {
    if low.input_names() != high.input_names() || low.input_domains() != high.input_domains() {
        return Err(Error::MismatchedInputs(format!(
            "low inputs {:?} vs high inputs {:?}",
            low.input_names(),
            high.input_names()
        )));
    }
    align.validate(low, high)?;

    let targets: Vec<&str> = high
        .variables()
        .iter()
        .filter(|v| v.role != Role::Input)
        .map(|v| v.name.as_str())
        .collect();
    let space = high.input_space();
    let low_solved = space.iter().map(|s| low.solve(s)).collect::<Result<Vec<_>>>()?;
    let high_solved = space.iter().map(|s| high.solve(s)).collect::<Result<Vec<_>>>()?;

    let mut report = AbstractionReport {
        holds: true,
        checked: 0,
        counterexamples: Vec::new(),
    };
    for mask in 0u32..(1 << targets.len()) {
        let chosen: Vec<&str> = (0..targets.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| targets[b])
            .collect();
        let low_cells: Vec<&str> = chosen
            .iter()
            .flat_map(|t| align.cell(t).unwrap().iter().map(String::as_str))
            .collect();
        for (si, _) in space.iter().enumerate() {
            let high_iv: HardIntervention = chosen
                .iter()
                .map(|t| (t.to_string(), high_solved[si].get(t).unwrap()))
                .collect();
            let low_iv: HardIntervention = low_cells
                .iter()
                .map(|t| (t.to_string(), low_solved[si].get(t).unwrap()))
                .collect();
            let high_m = apply_intervention(high, &high_iv)?;
            let low_m = apply_intervention(low, &low_iv)?;
            for base in &space {
                report.checked += 1;
                let expected = high_m.solve(base)?.values().to_vec();
                let translated = align.translate(high, &low_m.solve(base)?)?;
                if expected != translated {
                    report.holds = false;
                    if report.counterexamples.len() < max_counterexamples {
                        report.counterexamples.push(Counterexample {
                            base: base.clone(),
                            source: space[si].clone(),
                            targets: chosen.iter().map(|s| s.to_string()).collect(),
                            expected,
                            translated,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}
